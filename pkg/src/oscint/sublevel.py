"""Sublevel sets {|h| < hbar} of one-variable functions with a nonvanishing r-th derivative.

If |h^(r)| >= kappa on I, the interval splits into at most 2^(r-1) pieces on
which h', ..., h^(r-1) keep fixed signs.  Each piece is found by isolating the
single root of h^(j) on a piece where h^(j+1) has a fixed sign, working down
from j = r-1.  On each piece h is monotone, so its intersection with the
sublevel set is one interval.
"""

from dataclasses import dataclass, field
from math import factorial

import numpy as np
from numpy.polynomial import Polynomial

from .errors import PreconditionError


@dataclass
class SublevelResult:
    intervals: list            # (left, right, sigma)
    hbar: float
    r: int
    kappa: float
    pieces: list = field(default_factory=list)

    @property
    def measure(self):
        return float(sum(b - a for a, b, _ in self.intervals))

    @property
    def count(self):
        return len(self.intervals)

    @property
    def lengths(self):
        return [b - a for a, b, _ in self.intervals]


def as_function(h):
    """Accept a numpy Polynomial or a coefficient sequence (lowest degree first)."""
    if isinstance(h, Polynomial):
        return h
    if hasattr(h, "deriv") and callable(h):
        return h
    return Polynomial(np.asarray(h, dtype=float))


def _bisect(f, a, b, fa, iters=200):
    """Root of a monotone f with a sign change on [a, b]."""
    for _ in range(iters):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        fm = f(m)
        if fm == 0.0:
            return m
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def _sign(v):
    return 1 if v >= 0 else -1


def check_derivative_bound(h, I, r, kappa=None, samples=1000):
    d = h.deriv(r)
    t = np.linspace(I[0], I[1], samples)
    v = d(t)
    if kappa is None:
        if np.any(v == 0) or (np.any(v > 0) and np.any(v < 0)):
            raise PreconditionError(f"h^({r}) vanishes on [{I[0]}, {I[1]}]")
        # catches zeros that touch without a sign change
        certify_kappa(h, I, r)
        return
    if np.min(np.abs(v)) < kappa * (1 - 1e-9):
        raise PreconditionError(
            f"|h^({r})| drops to {np.min(np.abs(v)):.3g} < kappa={kappa:.3g} on the sample grid")
    if np.any(v > 0) and np.any(v < 0):
        raise PreconditionError(f"h^({r}) changes sign on the interval")


def sign_intervals(h, I, r, kappa=None, check_samples=1000):
    """Pieces of I with fixed signs of h', ..., h^(r-1), as (a, b, sigma) sorted by a."""
    h = as_function(h)
    a, b = float(I[0]), float(I[1])
    if not a < b:
        raise ValueError("interval must have positive length")
    r = int(r)
    if r < 1:
        raise ValueError("r must be at least 1")
    check_derivative_bound(h, (a, b), r, kappa, check_samples)
    derivs = [h.deriv(j) for j in range(r)]      # derivs[j] = h^(j)
    pieces = [(a, b, ())]
    for j in range(r - 1, 0, -1):
        # h^(j) is monotone on every current piece
        d = derivs[j]
        nxt = []
        for lo, hi, sig in pieces:
            flo, fhi = d(lo), d(hi)
            if flo * fhi < 0:
                c = _bisect(d, lo, hi, flo)
                nxt.append((lo, c, (_sign(flo),) + sig))
                nxt.append((c, hi, (_sign(fhi),) + sig))
            else:
                mid = d(0.5 * (lo + hi))
                nxt.append((lo, hi, (_sign(mid),) + sig))
        pieces = nxt
    return sorted(pieces)


def _crossing(f, lo, hi, target, increasing):
    """Point in [lo, hi] where a monotone f crosses target (clamped to the ends)."""
    g = (lambda t: f(t) - target) if increasing else (lambda t: target - f(t))
    glo, ghi = g(lo), g(hi)
    if glo >= 0:
        return lo
    if ghi <= 0:
        return hi
    return _bisect(g, lo, hi, glo)


def sublevel_set(h, I, hbar, r, kappa=None, check_samples=1000):
    """{t in I : |h(t)| < hbar} as at most 2^(r-1) intervals, one per sign piece."""
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    h = as_function(h)
    pieces = sign_intervals(h, I, r, kappa, check_samples)
    d1 = h.deriv(1)
    out = []
    for lo, hi, sig in pieces:
        if r >= 2:
            increasing = sig[0] > 0
        else:
            increasing = d1(0.5 * (lo + hi)) >= 0
        a = _crossing(h, lo, hi, -hbar if increasing else hbar, increasing)
        b = _crossing(h, lo, hi, hbar if increasing else -hbar, increasing)
        if b > a:
            out.append((a, b, sig))
    return SublevelResult(out, float(hbar), int(r), kappa, pieces=pieces)


def sublevel_bound(r, kappa, hbar):
    """(2 r! / kappa)^(1/r) hbar^(1/r)."""
    if r < 1 or kappa <= 0 or hbar <= 0:
        raise ValueError("need r >= 1, kappa > 0, hbar > 0")
    return (2.0 * factorial(int(r)) / kappa) ** (1.0 / r) * hbar ** (1.0 / r)


def certify_kappa(h, I, r, grid=10_000):
    """Lower bound for |h^(r)| on I: grid minimum refined by one Newton step."""
    h = as_function(h)
    d = h.deriv(r)
    t = np.linspace(I[0], I[1], grid)
    v = np.abs(d(t))
    i = int(np.argmin(v))
    kappa = float(v[i])
    d1, d2 = d.deriv(1), d.deriv(2)
    t0 = t[i]
    # one Newton step on the stationarity condition of |h^(r)|
    if 0 < i < grid - 1 and d2(t0) != 0:
        t1 = float(np.clip(t0 - d1(t0) / d2(t0), I[0], I[1]))
        kappa = min(kappa, float(abs(d(t1))))
    if kappa < 1e-12 * max(float(np.max(v)), 1e-300):
        kappa = 0.0
    if np.any(d(t) > 0) and np.any(d(t) < 0):
        kappa = 0.0
    if kappa <= 0:
        raise PreconditionError(f"h^({r}) vanishes on the interval; no positive kappa")
    return kappa


def measure_by_sampling(h, I, hbar, samples=100_000):
    """Dense-sampling estimate of |{|h| < hbar}| (midpoint cells)."""
    h = as_function(h)
    a, b = I
    dt = (b - a) / samples
    t = a + dt * (np.arange(samples) + 0.5)
    return float(np.count_nonzero(np.abs(h(t)) < hbar) * dt), dt
