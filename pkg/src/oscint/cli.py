"""Command-line front end: ``oscint run|bounds|sublevel|cotlar|norm``.

Exit status: 0 when every configured target passes, 1 when one fails,
2 for usage, configuration or resource errors.
"""

import argparse
import copy
import json
import os
import re
import sys
from fractions import Fraction

import numpy as np

from . import bounds, lab
from .cotlar import orthogonality_profile
from .errors import BudgetError, ConfigError, FitError, OscintError, ResolutionError
from .opnorm import OperatorSpec, discretize, l1_linf_norms, l2_norm
from .phase import GALLERY, get_model

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

EXPERIMENTS = ("sweep", "theorem11", "theorem12", "damping", "convexity", "cotlar", "sublevel",
               "bounds-table")
NORMS = ("l1", "l2", "linf", "schur")

DEFAULTS = {
    "model": {"name": "fold2", "l": None, "r": None, "n": 1},
    "lambdas": [32, 64, 128, 256, 512, 1024],
    "lambda": 256,
    "hbar": {"j_min": 1, "j_max": 4},
    "grid": {"points_per_wavelength": 8, "max_points": 16384, "lam_cap": 1024},
    "norms": ["l2"],
    "experiments": ["sweep"],
    "tolerances": {"sweep": 0.07, "damping": 0.07, "theorem12": 0.1},
    "output": "results",
    "seed": 0,
    "threads": None,
}

HELP_DEFAULTS = json.dumps(DEFAULTS, indent=2)


def _line_of(text, key):
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _check_keys(given, allowed, text, prefix=""):
    for k in given:
        if k not in allowed:
            raise ConfigError("unknown configuration key", key=prefix + k, line=_line_of(text, k))


def parse_config(text):
    """Parse and validate a JSON run configuration; returns the completed config."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        # name the last key opened before the failure point
        keys = re.findall(r'"([^"]+)"\s*:', text[:e.pos])
        key = keys[-1] if keys else None
        raise ConfigError(f"malformed configuration: {e.msg}", key=key, line=e.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be an object", line=1)
    _check_keys(raw, DEFAULTS, text)
    cfg = copy.deepcopy(DEFAULTS)
    for k, v in raw.items():
        if isinstance(DEFAULTS[k], dict):
            if not isinstance(v, dict):
                raise ConfigError("expected an object", key=k, line=_line_of(text, k))
            _check_keys(v, DEFAULTS[k], text, prefix=k + ".")
            cfg[k].update(v)
        else:
            cfg[k] = v

    def bad(key, msg):
        raise ConfigError(msg, key=key, line=_line_of(text, key.split(".")[-1]))

    m = cfg["model"]
    if m["name"] not in GALLERY:
        bad("model.name", f"unknown model; choose from {', '.join(GALLERY)}")
    if m["n"] not in (1, 2):
        bad("model.n", "n must be 1 or 2")
    if m["name"] == "type_lr":
        for k in ("l", "r"):
            if not isinstance(m[k], int) or m[k] < 1:
                bad("model." + k, "type_lr needs positive integer l and r")
    lams = cfg["lambdas"]
    if not isinstance(lams, list) or not all(isinstance(x, (int, float)) and x > 0 for x in lams):
        bad("lambdas", "lambdas must be a list of positive numbers")
    if not isinstance(cfg["lambda"], (int, float)) or cfg["lambda"] <= 1:
        bad("lambda", "lambda must be a number above 1")
    hb = cfg["hbar"]
    if not all(isinstance(hb[k], int) for k in ("j_min", "j_max")) or hb["j_min"] > hb["j_max"]:
        bad("hbar", "hbar needs integers j_min <= j_max")
    g = cfg["grid"]
    if not (isinstance(g["points_per_wavelength"], (int, float)) and g["points_per_wavelength"] >= 8):
        bad("grid.points_per_wavelength", "points_per_wavelength must be at least 8")
    if not (isinstance(g["max_points"], int) and g["max_points"] > 0):
        bad("grid.max_points", "max_points must be a positive integer")
    if not (isinstance(g["lam_cap"], (int, float)) and g["lam_cap"] > 0):
        bad("grid.lam_cap", "lam_cap must be positive")
    for key, choices in (("norms", NORMS), ("experiments", EXPERIMENTS)):
        v = cfg[key]
        if not isinstance(v, list) or any(x not in choices for x in v):
            bad(key, f"{key} must be a list drawn from {', '.join(choices)}")
    for k, v in cfg["tolerances"].items():
        if not isinstance(v, (int, float)) or v <= 0:
            bad("tolerances." + k, "tolerances must be positive numbers")
    if cfg["threads"] is not None and (not isinstance(cfg["threads"], int) or cfg["threads"] < 1):
        bad("threads", "threads must be a positive integer or null")
    if not isinstance(cfg["seed"], int):
        bad("seed", "seed must be an integer")
    if not isinstance(cfg["output"], str):
        bad("output", "output must be a path string")
    return {"config": cfg, "raw": raw}


def _threads(cfg):
    env = os.environ.get("OSCINT_THREADS")
    if env:
        return max(1, int(env))
    return cfg["threads"] or (os.cpu_count() or 1)


def _grid_kw(cfg):
    g = cfg["grid"]
    return dict(points_per_wavelength=g["points_per_wavelength"], max_points=g["max_points"],
                lam_cap=g["lam_cap"], threads=_threads(cfg))


def _hbars(cfg):
    hb = cfg["hbar"]
    return [2.0 ** -j for j in range(hb["j_min"], hb["j_max"] + 1)]


def random_certified_polynomial(rng, r, degree=5, tries=1000):
    """Random polynomial on [-1, 1] whose r-th derivative keeps one sign; returns (poly, kappa)."""
    from numpy.polynomial import Polynomial
    from .errors import PreconditionError
    from .sublevel import certify_kappa
    for _ in range(tries):
        c = rng.uniform(-1, 1, degree + 1)
        # lift the r-th coefficient so the higher terms cannot flip the sign of h^(r)
        c[r] += rng.choice((-1.0, 1.0)) * rng.uniform(1, 3) * degree ** r
        p = Polynomial(c)
        try:
            return p, certify_kappa(p, (-1.0, 1.0), r)
        except PreconditionError:
            continue
    raise OscintError("could not draw a certified polynomial")


def run_experiments(cfg):
    """Execute the configured experiments; returns (records, summary dict, passed)."""
    m = cfg["model"]
    model = get_model(m["name"], m["l"], m["r"], m["n"])
    gkw = _grid_kw(cfg)
    tol = dict(DEFAULTS["tolerances"], **cfg["tolerances"])
    records, results = [], {}
    l, r = lab._types(model)

    for exp in cfg["experiments"]:
        if exp == "sweep":
            for kind in cfg["norms"]:
                spec = OperatorSpec(model, 1.0)
                if kind == "l2":
                    recs = lab.sweep_lambda(spec, cfg["lambdas"], "l2", grid_kw=gkw)
                    fit = lab.fit_decay(recs, drop_preasymptotic=True)
                    target = lab.lambda_exponent(model)
                    sharp = min(l, r) <= 1
                    ok = abs(fit.slope - target) <= tol["sweep"] if sharp \
                        else fit.slope <= target + tol["sweep"]
                    results[f"sweep_{kind}"] = dict(fit=fit, target=target, tolerance=tol["sweep"],
                                                    two_sided=sharp, passed=bool(ok))
                else:
                    top = spec.with_(lam=float(max(cfg["lambdas"])))
                    grid = discretize(top, cache_bytes=0, **gkw).grid
                    recs = lab.sweep_lambda(spec, cfg["lambdas"], kind, grid=grid,
                                            grid_kw={"threads": gkw["threads"], "cache_bytes": 0})
                    vals = np.array([rc.value for rc in recs])
                    spread = float(np.max(np.abs(vals - vals[0])) / vals[0]) if vals[0] else 0.0
                    ok = spread <= 1e-12 if kind != "l2" else True
                    results[f"sweep_{kind}"] = dict(lambda_spread=spread, passed=bool(ok))
                records += recs
        elif exp == "damping":
            fit = lab.damping_experiment(model, cfg["lambdas"], grid_kw=gkw)
            target = -model.n / 2
            records += fit.records
            results["damping"] = dict(fit=fit, target=target, tolerance=tol["damping"],
                                      passed=bool(abs(fit.slope - target) <= tol["damping"]))
        elif exp == "theorem11":
            lam = float(cfg["lambda"])
            hbs = [h for h in _hbars(cfg) if h >= lam ** -0.5]
            recs, summ = lab.verify_theorem11(model, lam, hbs, grid_kw=gkw)
            records += recs
            summ["passed"] = bool(summ["bounded"] and not summ["max_at_smallest_hbar"])
            results["theorem11"] = summ
        elif exp == "theorem12":
            lams = sorted(cfg["lambdas"])
            recs, summ = lab.l1_linf_experiment(model, _hbars(cfg), lams=(lams[0], lams[-1]),
                                                  grid_kw=gkw)
            records += recs
            t1, t2 = 1.0 / r, 1.0 / l
            ok = (abs(summ["l1"].slope - t1) <= tol["theorem12"]
                  and abs(summ["linf"].slope - t2) <= tol["theorem12"]
                  and summ["invariance"] <= 1e-12)
            results["theorem12"] = dict(l1=summ["l1"], linf=summ["linf"], target_l1=t1,
                                        target_linf=t2, invariance=summ["invariance"],
                                        passed=bool(ok))
        elif exp == "convexity":
            reps = [lab.convexity_check(model, hb, seed=cfg["seed"]) for hb in _hbars(cfg)]
            ok = all(rp["ratio_ok"] and rp["segment_ok"] for rp in reps)
            results["convexity"] = dict(reports=reps, passed=bool(ok))
        elif exp == "cotlar":
            lam = float(cfg["lambda"])
            reps = []
            ok = True
            for hb in _hbars(cfg):
                p = orthogonality_profile(model, lam, hb, grid_kw={"threads": gkw["threads"]})
                for piece in p["pieces"]:
                    ok &= piece["bound"] >= piece["norm"] - 1e-8
                for kind in ("A", "B", "tau"):
                    records.append(lab.ExperimentRecord("cotlar", model.name, l, r, model.n, lam, hb,
                                                        kind, float(p[kind])))
                reps.append({k: v for k, v in p.items() if k != "pieces"})
            results["cotlar"] = dict(profiles=reps, passed=bool(ok))
        elif exp == "sublevel":
            from .sublevel import sublevel_bound, sublevel_set
            rng = np.random.default_rng(cfg["seed"])
            bad = 0
            total = 0
            for i in range(300):
                rr = 1 + i % 3
                poly, kappa = random_certified_polynomial(rng, rr)
                for j in range(1, 11):
                    res = sublevel_set(poly, (-1.0, 1.0), 2.0 ** -j, rr, kappa)
                    total += 1
                    lim = sublevel_bound(rr, kappa, 2.0 ** -j)
                    if res.count > 2 ** (rr - 1) or any(L > lim * (1 + 1e-12) for L in res.lengths):
                        bad += 1
            results["sublevel"] = dict(cases=total, violations=bad, passed=bad == 0)
        elif exp == "bounds-table":
            bad = 0
            for n in (1, 2):
                for ll in range(1, 7):
                    for rr in range(1, 7):
                        for t in bounds.thresholds(ll, rr):
                            lo_reg = bounds.regime_for_s(ll, rr, t)
                            above = [g for g in bounds.REGIMES if g > lo_reg][:1]
                            if above:
                                a1, b1 = bounds.regime_exponents(n, ll, rr, lo_reg)
                                a2, b2 = bounds.regime_exponents(n, ll, rr, above[0])
                                bad += (a1 - t * b1) != (a2 - t * b2)
                        e = bounds.dyadic_sum_exponent(n, ll, rr)
                        bad += abs(e - float(bounds.full_operator_exponent(n, ll, rr))) > 1e-10
                        e = bounds.dyadic_sum_exponent(n, ll, rr, damped=True)
                        bad += abs(e + n / 2) > 1e-10
            results["bounds-table"] = dict(violations=int(bad), passed=bad == 0)
    passed = all(v["passed"] for v in results.values())
    return records, results, passed


def cmd_run(args):
    try:
        with open(args.config) as f:
            text = f.read()
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_USAGE
    parsed = parse_config(text)
    cfg = parsed["config"]
    if args.threads:
        cfg["threads"] = args.threads
    out = args.out or cfg["output"]
    records, results, passed = run_experiments(cfg)
    os.makedirs(out, exist_ok=True)
    lab.write_csv(records, os.path.join(out, "results.csv"))
    lab.write_summary({"config": parsed["raw"], "resolved_config": cfg, "results": results,
                       "passed": passed}, os.path.join(out, "summary.json"))
    for name, res in results.items():
        print(f"{'PASS' if res['passed'] else 'FAIL'} {name}")
    if not passed:
        failed = [k for k, v in results.items() if not v["passed"]]
        print(f"failed targets: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PASS


def _fmt(q):
    return str(q) if isinstance(q, Fraction) else f"{q:.6g}"


def cmd_bounds(args):
    l, r, n = args.l, args.r, args.n
    if args.table or args.lam is None:
        print(f"regimes for n={n}, (l, r)=({l}, {r}); hbar = lam^-s")
        print(f"{'regime':>6} {'s from':>8} {'s to':>8} {'lam exp':>9} {'hbar exp':>9} {'exponent range':>18}")
        for row in bounds.regime_table(n, l, r):
            rng = f"{_fmt(row['exp_from'])}..{_fmt(row['exp_to'])}"
            tag = "  (empty)" if row["empty"] else ""
            print(f"{row['regime']:>6} {_fmt(row['s_from']):>8} {_fmt(row['s_to']):>8} "
                  f"{_fmt(row['lam_exp']):>9} {_fmt(row['hbar_exp']):>9} {rng:>18}{tag}")
        print(f"delta(l,r) = {bounds.delta_loss(l, r)}   delta_opt(l,r) = {bounds.delta_opt(l, r)}")
        print(f"full-operator exponent -n/2 + delta = {bounds.full_operator_exponent(n, l, r)}")
        c4 = bounds.corollary4_range(r)
        print(f"L^p gain for one-sided type r={r}: 1 <= p < {c4['p_lower']} or {c4['p_upper']} < p, "
              f"exponent {c4['exponent']} (log factor at the endpoints)")
    if args.lam is not None:
        hb = args.hbar if args.hbar is not None else 1.0
        b = bounds.theorem11_bound(n, l, r, args.lam, hb)
        print(f"lam={args.lam:g} hbar={hb:g}: regime {b.regime}, bound lam^{b.lam_exp} hbar^{b.hbar_exp}"
              f" = {b.value:.6g}")
    return EXIT_PASS


def cmd_sublevel(args):
    from .sublevel import certify_kappa, sublevel_bound, sublevel_set
    coeffs = [float(c) for c in args.coeffs.split(",")]
    from numpy.polynomial import Polynomial
    h = Polynomial(coeffs)
    I = (args.interval[0], args.interval[1])
    kappa = args.kappa if args.kappa is not None else certify_kappa(h, I, args.r)
    res = sublevel_set(h, I, args.hbar, args.r, kappa)
    print(f"kappa={kappa:.6g}  bound per interval={sublevel_bound(args.r, kappa, args.hbar):.6g}")
    for a, b, sig in res.intervals:
        lab_ = "".join("+" if s > 0 else "-" for s in sig) or "()"
        print(f"  [{a:.10g}, {b:.10g}]  length={b - a:.6g}  sigma={lab_}")
    print(f"intervals={res.count} (max {2 ** (args.r - 1)})  measure={res.measure:.6g}")
    return EXIT_PASS


def cmd_cotlar(args):
    model = get_model(args.model, args.l, args.r, 1)
    p = orthogonality_profile(model, args.lam, args.hbar, sign=args.sign,
                              localization="full" if args.full else "shell")
    for k in ("model", "lam", "hbar", "blocks", "A", "B", "tau", "tau_formula", "A_over_tau",
              "B_over_tau", "x_span", "operator_norm"):
        print(f"{k:>14}: {p[k]}")
    for k, v in p["predictions"].items():
        print(f"{'pred ' + k:>14}: {v:.6g}")
    for piece in p["pieces"]:
        print(f"  piece right={piece['right']} left={piece['left']} blocks={piece['blocks']} "
              f"sqrt(AB)={piece['bound']:.6g} norm={piece['norm']:.6g}")
    return EXIT_PASS


def cmd_norm(args):
    model = get_model(args.model, args.l, args.r, args.n)
    spec = OperatorSpec(model, args.lam, args.localization, hbar=args.hbar, sign=args.sign,
                        damping=args.damping)
    op = discretize(spec, points_per_wavelength=args.ppw, max_points=args.max_points,
                    lam_cap=args.lam_cap)
    print(f"grid {op.shape[0]}x{op.shape[1]}")
    for kind in args.kind:
        if kind == "l2":
            v = l2_norm(op)
        else:
            a, b = l1_linf_norms(op)
            v = {"l1": a, "linf": b, "schur": float(np.sqrt(a * b))}[kind]
        print(f"{kind}: {v:.10g}")
    return EXIT_PASS


def build_parser():
    p = argparse.ArgumentParser(prog="oscint", description="Oscillatory integral operator laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run experiments from a JSON config",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog="configuration keys and defaults:\n" + HELP_DEFAULTS)
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="output directory (overrides config 'output')")
    r.add_argument("--threads", type=int, default=None)
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bounds", help="exponent tables")
    b.add_argument("--l", type=int, required=True)
    b.add_argument("--r", type=int, required=True)
    b.add_argument("--n", type=int, default=1)
    b.add_argument("--table", action="store_true")
    b.add_argument("--lam", type=float, default=None)
    b.add_argument("--hbar", type=float, default=None)
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("sublevel", help="sublevel-set decomposition of a polynomial")
    s.add_argument("--coeffs", required=True,
                   help="comma-separated coefficients, constant term first "
                        "(write --coeffs=-1,0,1 when the first is negative)")
    s.add_argument("--interval", type=float, nargs=2, default=(-1.0, 1.0))
    s.add_argument("--r", type=int, required=True)
    s.add_argument("--hbar", type=float, required=True)
    s.add_argument("--kappa", type=float, default=None)
    s.set_defaults(func=cmd_sublevel)

    c = sub.add_parser("cotlar", help="almost-orthogonality profile of a block family")
    c.add_argument("--model", choices=GALLERY, default="fold2")
    c.add_argument("--l", type=int)
    c.add_argument("--r", type=int)
    c.add_argument("--lam", type=float, default=64.0)
    c.add_argument("--hbar", type=float, default=0.125)
    c.add_argument("--sign", type=int, choices=(1, -1), default=1)
    c.add_argument("--full", action="store_true", help="window the full operator instead of a shell")
    c.set_defaults(func=cmd_cotlar)

    n = sub.add_parser("norm", help="norms of a single operator")
    n.add_argument("--model", choices=GALLERY, default="fold2")
    n.add_argument("--l", type=int)
    n.add_argument("--r", type=int)
    n.add_argument("--n", type=int, default=1)
    n.add_argument("--lam", type=float, required=True)
    n.add_argument("--localization", choices=("full", "shell", "bar"), default="full")
    n.add_argument("--hbar", type=float)
    n.add_argument("--sign", type=int, choices=(1, -1), default=1)
    n.add_argument("--damping", action="store_true")
    n.add_argument("--kind", nargs="+", choices=NORMS, default=["l2"])
    n.add_argument("--ppw", type=float, default=8)
    n.add_argument("--max-points", type=int, default=16384)
    n.add_argument("--lam-cap", type=float, default=1024)
    n.set_defaults(func=cmd_norm)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ResolutionError, BudgetError) as e:
        print(f"resource error: {e}\nadvice: lower the largest lambda or raise grid.max_points "
              "and grid.lam_cap", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, FitError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OscintError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
