"""Experiments: lambda and hbar sweeps, fits, damping, convexity checks, persistence."""

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bounds
from .cutoffs import shell_cutoff
from .errors import FitError, OutOfTheoryError, SamplingError
from .opnorm import OperatorSpec, discretize, l1_linf_norms, l2_norm
from .phase import h_along_segment

CSV_COLUMNS = ["experiment", "model", "l", "r", "n", "lambda", "hbar", "norm_kind",
               "value", "bound", "ratio"]


@dataclass
class ExperimentRecord:
    experiment: str
    model: str
    l: int
    r: int
    n: int
    lam: float
    hbar: float
    norm_kind: str
    value: float
    bound: float = None
    ratio: float = None

    def __post_init__(self):
        if self.bound is not None and self.bound > 0 and self.ratio is None:
            self.ratio = self.value / self.bound

    def key(self):
        return (self.experiment, self.model, self.norm_kind, self.lam,
                -1.0 if self.hbar is None else self.hbar)

    def row(self):
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)
        return [fmt(v) for v in (self.experiment, self.model, self.l, self.r, self.n, self.lam,
                                 self.hbar, self.norm_kind, self.value, self.bound, self.ratio)]


@dataclass
class DecayFit:
    slope: float
    intercept: float
    r2: float
    stderr: float
    samples: list
    excluded: list = field(default_factory=list)
    param: str = "lambda"

    def summary(self):
        return dict(slope=self.slope, intercept=self.intercept, r2=self.r2, stderr=self.stderr,
                    param=self.param, samples=[list(s) for s in self.samples],
                    excluded=[list(s) for s in self.excluded])


def _ols(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope, icpt = float(coef[0]), float(coef[1])
    resid = y - (slope * x + icpt)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    r2 = min(max(r2, 0.0), 1.0)
    dof = len(x) - 2
    sxx = float(((x - x.mean()) ** 2).sum())
    stderr = float(np.sqrt(ss_res / dof / sxx)) if dof > 0 and sxx > 0 else 0.0
    return slope, icpt, r2, stderr


def fit_decay(data, param="lambda", drop_preasymptotic=False, min_samples=4):
    """Least squares of log2(value) on log2(parameter).

    ``data``: ExperimentRecords or (parameter, value) pairs.  With
    ``drop_preasymptotic`` the two smallest parameters are excluded when the
    full fit has R^2 < 0.99; the exclusion is recorded on the result.
    """
    pairs = []
    for d in data:
        if isinstance(d, ExperimentRecord):
            pairs.append((d.lam if param == "lambda" else d.hbar, d.value))
        else:
            pairs.append((float(d[0]), float(d[1])))
    pairs.sort()
    if len(pairs) < min_samples:
        raise FitError(f"need at least {min_samples} samples, got {len(pairs)}")
    for p, v in pairs:
        if not (v > 0 and p > 0 and np.isfinite(v)):
            raise FitError(f"nonpositive or invalid sample ({p}, {v})")
    x = np.log2([p for p, _ in pairs])
    y = np.log2([v for _, v in pairs])
    slope, icpt, r2, se = _ols(x, y)
    excluded = []
    if drop_preasymptotic and r2 < 0.99 and len(pairs) - 2 >= min_samples:
        excluded = pairs[:2]
        pairs = pairs[2:]
        slope, icpt, r2, se = _ols(x[2:], y[2:])
    return DecayFit(slope, icpt, r2, se, pairs, excluded, param)


def _types(model):
    l, r = model.params.get("l"), model.params.get("r")
    if l is None or r is None:
        from .phase import detect_types
        t = detect_types(model)
        l, r = t.l, t.r
    return int(l), int(r)


def lambda_exponent(model, damping=False):
    """Predicted lam-exponent of the full operator norm."""
    if damping:
        return -model.n / 2
    l, r = _types(model)
    return float(bounds.full_operator_exponent(model.n, l, r))


def measure(op, kind, rel_tol=1e-4):
    if kind == "l2":
        return l2_norm(op, rel_tol=rel_tol)
    a, b = l1_linf_norms(op)
    if kind == "l1":
        return a
    if kind == "linf":
        return b
    if kind == "schur":
        return float(np.sqrt(a * b))
    raise ValueError(f"unknown norm kind {kind!r}")


def sweep_lambda(spec, lambdas, norm_kind="l2", experiment="sweep", grid=None, grid_kw=None,
                 rel_tol=1e-4):
    """One record per lambda; ``grid`` pins a common grid (for lambda-invariance checks)."""
    grid_kw = dict(grid_kw or {})
    model = spec.model
    l, r = _types(model)
    out = []
    for lam in sorted(lambdas):
        s = spec.with_(lam=float(lam))
        op = discretize(s, grid=grid, **grid_kw)
        value = measure(op, norm_kind, rel_tol)
        bound = None
        if norm_kind == "l2" and not s.localized and lam > 0:
            bound = float(lam) ** lambda_exponent(model, s.damping)
        out.append(ExperimentRecord(experiment, model.name, l, r, model.n, float(lam), s.hbar,
                                    norm_kind, float(value), bound))
        del op
    return out


def verify_theorem11(model, lam, hbars, signs=(1, -1), include_bar=True, grid_kw=None,
                     rel_tol=1e-4):
    """Shell norms against the regime bounds; returns (records, summary)."""
    grid_kw = dict(grid_kw or {})
    l, r = _types(model)
    n = model.n
    floor = lam ** -0.5
    for hb in hbars:
        if hb < floor * (1 - 1e-12):
            raise OutOfTheoryError(f"hbar={hb:g} is below lam^(-1/2)={floor:g}")
    recs = []
    for hb in sorted(hbars, reverse=True):
        vals = []
        for sg in signs:
            op = discretize(OperatorSpec(model, lam, "shell", hbar=hb, sign=sg), **grid_kw)
            vals.append(l2_norm(op, rel_tol=rel_tol))
        b = bounds.theorem11_bound(n, l, r, lam, hb)
        rec = ExperimentRecord("theorem11", model.name, l, r, n, float(lam), float(hb),
                               "l2", float(max(vals)), b.value)
        rec.regime = b.regime
        recs.append(rec)
    ratios = np.array([rc.ratio for rc in recs])
    summary = dict(model=model.name, lam=float(lam), C=float(ratios.max()),
                   regimes=sorted({rc.regime for rc in recs}),
                   last_ratio=float(ratios[-1]),
                   bounded=bool(np.all(np.isfinite(ratios))),
                   max_at_smallest_hbar=bool(np.argmax(ratios) == len(ratios) - 1))
    if include_bar:
        op = discretize(OperatorSpec(model, lam, "bar", hbar=floor), **grid_kw)
        v = l2_norm(op, rel_tol=rel_tol)
        bb = bounds.bar_bound(n, l, r, lam, floor)
        rec = ExperimentRecord("theorem11_bar", model.name, l, r, n, float(lam), float(floor),
                               "l2", float(v), bb.value)
        rec.regime = "1.6"
        recs.append(rec)
        summary["bar_ratio"] = rec.ratio
    return recs, summary


def l1_linf_experiment(model, hbars, lams=(16.0, 1024.0), sign=1, grid_kw=None):
    """L1 and L-infinity shell norms per hbar, all lambdas on one grid per hbar."""
    grid_kw = dict(grid_kw or {})
    l, r = _types(model)
    recs = []
    invariance = 0.0
    for hb in sorted(hbars):
        top = OperatorSpec(model, max(lams), "shell", hbar=hb, sign=sign)
        grid = discretize(top, cache_bytes=0, **grid_kw).grid
        seen = None
        for lam in sorted(lams):
            op = discretize(top.with_(lam=float(lam)), grid=grid, cache_bytes=0)
            a, b = l1_linf_norms(op)
            if seen is None:
                seen = (a, b)
            else:
                invariance = max(invariance, abs(a - seen[0]) / seen[0], abs(b - seen[1]) / seen[1])
            ba, bb = bounds.theorem12_bound(l, r, hb)
            recs.append(ExperimentRecord("theorem12", model.name, l, r, model.n, float(lam),
                                         float(hb), "l1", a, ba))
            recs.append(ExperimentRecord("theorem12", model.name, l, r, model.n, float(lam),
                                         float(hb), "linf", b, bb))
    lam0 = min(lams)
    fit1 = fit_decay([rc for rc in recs if rc.norm_kind == "l1" and rc.lam == lam0], param="hbar")
    fit2 = fit_decay([rc for rc in recs if rc.norm_kind == "linf" and rc.lam == lam0], param="hbar")
    return recs, dict(l1=fit1, linf=fit2, invariance=invariance)


def damping_experiment(model, lambdas, grid_kw=None, rel_tol=1e-4):
    """Fitted lam-slope of the damped full operator (amplitude psi * h)."""
    recs = sweep_lambda(OperatorSpec(model, 1.0, damping=True), lambdas, "l2",
                        experiment="damping", grid_kw=grid_kw, rel_tol=rel_tol)
    fit = fit_decay(recs, drop_preasymptotic=True)
    fit.records = recs
    return fit


def _runs(mask):
    """(start, stop) index runs of True values."""
    d = np.diff(np.concatenate([[0], mask.astype(int), [0]]))
    return list(zip(np.nonzero(d == 1)[0], np.nonzero(d == -1)[0]))


def convexity_check(model, hbar, n_pairs=200, sign=1, seed=0, max_tries=50, fine=4001,
                    segment_samples=65):
    """Convexity ratio and segment minimum of h for pairs in one piece of the shell.

    Pairs (x, theta), (y, theta) are drawn from the same connected run of the
    shell support {beta(h/hbar) > 0, psi > 0} at fixed theta (n = 1).
    """
    if model.n != 1:
        raise NotImplementedError("convexity pairs are sampled for n = 1")
    rng = np.random.default_rng(seed)
    lo, hi = model.support_lower, model.support_upper
    xs = np.linspace(lo[0], hi[0], fine)
    ratios, hmins = [], []
    skipped = 0
    tries = 0
    while len(ratios) < n_pairs:
        tries += 1
        if tries > max_tries * n_pairs:
            raise SamplingError(f"collected only {len(ratios)} of {n_pairs} pairs")
        th = rng.uniform(lo[1], hi[1])
        P = np.stack([xs, np.full_like(xs, th)], axis=1)
        w = shell_cutoff(model.h(P) / hbar, sign) * model.amplitude(P)
        runs = [(a, b) for a, b in _runs(w > 0) if b - a >= 2]
        if not runs:
            continue
        a, b = runs[rng.integers(len(runs))]
        i, j = sorted(rng.integers(a, b, size=2))
        if i == j:
            skipped += 1
            continue
        x, y = xs[i], xs[j]
        # re-draw unless both endpoints are genuinely inside the piece
        ends = np.array([[x, th], [y, th]])
        if np.any(shell_cutoff(model.h(ends) / hbar, sign) * model.amplitude(ends) <= 0):
            continue
        Sth = model.derivative((0, 1), ends)
        ratios.append(abs(Sth[0] - Sth[1]) / (hbar * (y - x)))
        _, hv = h_along_segment(model, ends[0], y - x, order=0, num=segment_samples)
        hmins.append(float(np.min(sign * hv)))
    ratios = np.array(ratios)
    hmins = np.array(hmins)
    return dict(model=model.name, hbar=float(hbar), pairs=len(ratios), skipped=skipped,
                min_ratio=float(ratios.min()), min_segment_h=float(hmins.min()),
                min_segment_h_over_hbar=float(hmins.min() / hbar),
                segment_ok=bool(np.all(hmins >= hbar / 4)), ratio_ok=bool(ratios.min() > 0))


# -- persistence -------------------------------------------------------------------

def records_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rc in sorted(records, key=ExperimentRecord.key):
        w.writerow(rc.row())
    return buf.getvalue()


def write_csv(records, path):
    with open(path, "w", newline="") as f:
        f.write(records_csv(records))


def _jsonable(o):
    if isinstance(o, DecayFit):
        return o.summary()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "numerator") and hasattr(o, "denominator"):
        return str(o)
    raise TypeError(f"not serializable: {type(o)}")


def write_summary(summary, path):
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True, default=_jsonable)
        f.write("\n")
