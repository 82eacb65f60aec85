import json
import subprocess
import sys

import pytest

from oscint.cli import DEFAULTS, build_parser, main, parse_config
from oscint.errors import ConfigError


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg, indent=2) + "\n")
    return p


def test_parse_defaults_and_overrides():
    out = parse_config('{"model": {"name": "type_lr", "l": 2, "r": 3}, "seed": 4}')
    cfg = out["config"]
    assert cfg["model"] == {"name": "type_lr", "l": 2, "r": 3, "n": 1}
    assert cfg["lambdas"] == DEFAULTS["lambdas"] and cfg["seed"] == 4
    assert out["raw"] == {"model": {"name": "type_lr", "l": 2, "r": 3}, "seed": 4}


@pytest.mark.parametrize("text,key,line", [
    ('{\n  "model": {"name": "fold2"},\n  "colour": 1\n}', "colour", 3),
    ('{\n  "grid": {\n    "points": 3\n  }\n}', "grid.points", 3),
    ('{\n  "model": {"name": "fold3"}\n}', "model.name", 2),
    ('{\n  "norms": ["l3"]\n}', "norms", 2),
    ('{\n  "lambdas": [32,\n  "model": 1\n}', "lambdas", 3),
    ('{\n  "grid": {"points_per_wavelength": 4}\n}', "grid.points_per_wavelength", 2),
])
def test_config_errors_name_key_and_line(text, key, line):
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert e.value.key == key and e.value.line == line
    assert f"line {line}" in str(e.value)


def test_type_lr_requires_types():
    with pytest.raises(ConfigError):
        parse_config('{"model": {"name": "type_lr", "l": 2}}')


def test_run_writes_outputs_and_echoes_config(tmp_path, capsys):
    cfg = {"model": {"name": "nondegenerate"}, "lambdas": [32, 64, 128, 256],
           "experiments": ["sweep", "bounds-table"], "norms": ["l2", "l1"],
           "output": str(tmp_path / "out")}
    p = _write(tmp_path, cfg)
    assert main(["run", "--config", str(p)]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["config"] == cfg
    assert summary["passed"] is True
    assert summary["results"]["sweep_l2"]["fit"]["slope"] == pytest.approx(-0.5, abs=0.05)
    assert summary["results"]["sweep_l1"]["lambda_spread"] <= 1e-12
    csv1 = (tmp_path / "out" / "results.csv").read_bytes()
    assert csv1.startswith(b"experiment,model,l,r,n,lambda,hbar,norm_kind,value,bound,ratio\n")
    # identical config gives identical bytes, also with a different thread count
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "again"), "--threads", "1"]) == 0
    assert (tmp_path / "again" / "results.csv").read_bytes() == csv1
    assert "PASS sweep_l2" in capsys.readouterr().out


def test_run_failure_exit_code(tmp_path):
    # a zero-width tolerance cannot be met by a measured slope
    cfg = {"model": {"name": "nondegenerate"}, "lambdas": [32, 64, 128, 256],
           "tolerances": {"sweep": 1e-9}, "output": str(tmp_path / "o")}
    assert main(["run", "--config", str(_write(tmp_path, cfg))]) == 1


def test_resolution_error_exit_code(tmp_path, capsys):
    cfg = {"lambdas": [256, 8192], "output": str(tmp_path / "o")}
    assert main(["run", "--config", str(_write(tmp_path, cfg))]) == 2
    assert "advice" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "lamdas": [1]\n}\n')
    assert main(["run", "--config", str(p)]) == 2
    assert "lamdas" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2


def test_bounds_table(capsys):
    assert main(["bounds", "--l", "2", "--r", "3", "--table"]) == 0
    out = capsys.readouterr().out
    assert "3/7" in out and "delta(l,r) = 9/28" in out
    assert main(["bounds", "--l", "1", "--r", "1", "--lam", "64", "--hbar", "1"]) == 0
    assert "regime 1.3" in capsys.readouterr().out


def test_sublevel_and_norm_commands(capsys):
    assert main(["sublevel", "--coeffs=-0.04,0,1", "--r", "2", "--hbar", "0.05"]) == 0
    assert "intervals=2" in capsys.readouterr().out
    assert main(["norm", "--model", "fold2", "--lam", "32", "--kind", "l2", "schur"]) == 0
    out = capsys.readouterr().out
    assert "l2:" in out and "schur:" in out
    assert main(["cotlar", "--lam", "32", "--hbar", "0.5"]) == 0


def test_threads_env_override(tmp_path, monkeypatch):
    from oscint.cli import _threads
    monkeypatch.setenv("OSCINT_THREADS", "3")
    assert _threads({"threads": 8}) == 3
    monkeypatch.delenv("OSCINT_THREADS")
    assert _threads({"threads": 8}) == 8


def test_help_lists_defaults():
    text = build_parser()._subparsers._group_actions[0].choices["run"].format_help()
    assert "points_per_wavelength" in text and "experiments" in text
    r = subprocess.run([sys.executable, "-m", "oscint", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "sublevel" in r.stdout
    r = subprocess.run([sys.executable, "-m", "oscint", "bounds"], capture_output=True, text=True)
    assert r.returncode == 2
