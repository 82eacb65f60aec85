"""Smooth cutoffs: bumps, dyadic shells, sign partitions and fine windows."""

from dataclasses import dataclass
from itertools import product

import numpy as np

_UNDERFLOW = 700.0


def _edge(u):
    """exp(-1/u) for u > 0, else 0; underflow clamped to exactly 0."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 1.0 / _UNDERFLOW
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, and step(u) + step(1-u) = 1."""
    u = np.asarray(u, dtype=float)
    a = _edge(u)
    b = _edge(1.0 - u)
    return a / (a + b)


@dataclass(frozen=True)
class BumpSpec:
    """Even bump equal to 1 on [-a, a] and vanishing outside (-b, b)."""

    a: float
    b: float

    def __call__(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        return smooth_step((self.b - t) / (self.b - self.a))

    def reflected(self, t):
        """Complementary transition: 1 - phi(t) for |t|, evaluated without cancellation."""
        t = np.abs(np.asarray(t, dtype=float))
        return smooth_step((t - self.a) / (self.b - self.a))


def make_bump(a, b):
    if not (0 < a < b):
        raise ValueError(f"need 0 < a < b, got a={a}, b={b}")
    return BumpSpec(float(a), float(b))


# dyadic pieces: beta(s) = phi(s) - phi(2s) lives on 1/2 <= |s| <= 2
PHI = make_bump(1.0, 2.0)


def beta(s):
    s = np.asarray(s, dtype=float)
    return PHI(s) - PHI(2.0 * s)


def shell_cutoff(s, sign=1):
    """One-sided shell weight beta(sign * s) restricted to sign * s > 0."""
    s = sign * np.asarray(s, dtype=float)
    return np.where(s > 0, beta(s), 0.0)


def bar_cutoff(s):
    return PHI(s)


def dyadic_weights(t, J):
    """(phi(t), [beta(2^-j t) for j = 1..J]); they sum to phi(2^-J t)."""
    if J < 1:
        raise ValueError("J must be at least 1")
    t = np.asarray(t, dtype=float)
    return PHI(t), [beta(t * 2.0 ** -j) for j in range(1, J + 1)]


def rho(t):
    """rho(t) + rho(-t) = 1, rho = 0 for t <= -1, rho = 1 for t >= 1."""
    return smooth_step((np.asarray(t, dtype=float) + 1.0) / 2.0)


@dataclass(frozen=True)
class SignPattern:
    side: str
    signs: tuple

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        if any(s not in (1, -1) for s in self.signs):
            raise ValueError("signs must be +1 or -1")

    @property
    def m(self):
        return len(self.signs) + 1

    def label(self):
        return "".join("+" if s > 0 else "-" for s in self.signs) or "()"


def enumerate_patterns(side, m):
    """All 2^(m-1) sign patterns for a side of type m."""
    if m < 1:
        return [SignPattern(side, ())]
    return [SignPattern(side, s) for s in product((1, -1), repeat=m - 1)]


def sign_weight(model, p, hbar, pattern):
    """prod_j rho(sigma_j K^j h(p) / hbar) for j = 1..m-1."""
    from .phase import field_power

    p = np.asarray(p, dtype=float)
    w = np.ones(p.shape[:-1])
    for j, s in enumerate(pattern.signs, start=1):
        w = w * rho(s * field_power(model, p, j, pattern.side) / hbar)
    return w


# -- fine windows ---------------------------------------------------------------

CHI0 = make_bump(0.5, 1.0)


def chi(s):
    """Bump on (-1, 1) whose integer translates sum to one."""
    s = np.asarray(s, dtype=float)
    f = np.floor(s)
    period = sum(CHI0(s - (f + k)) for k in (-1, 0, 1, 2))
    return CHI0(s) / period


@dataclass(frozen=True, order=True)
class BlockIndex:
    X: tuple
    Theta: tuple


def right_coords(model, p):
    """(eta', x_n): eta' = S_{theta'} is empty in one dimension."""
    p = np.asarray(p, dtype=float)
    if model.n == 1:
        return p[..., :1]
    return np.stack([model.derivative((0, 0, 1, 0), p), p[..., 1]], axis=-1)


def left_coords(model, p):
    """(xi', theta_n) with xi' = S_{x'}."""
    p = np.asarray(p, dtype=float)
    if model.n == 1:
        return p[..., 1:]
    return np.stack([model.derivative((1, 0, 0, 0), p), p[..., 3]], axis=-1)


def right_window(model, p, hbar, X):
    c = right_coords(model, p)
    return np.prod(chi(c / hbar - np.asarray(X, dtype=float)), axis=-1)


def left_window(model, p, hbar, Theta):
    c = left_coords(model, p)
    return np.prod(chi(c / hbar - np.asarray(Theta, dtype=float)), axis=-1)


def fine_window(model, p, hbar, idx):
    return right_window(model, p, hbar, idx.X) * left_window(model, p, hbar, idx.Theta)


def covering_indices(lo, hi, hbar):
    """Integers k with chi(v/hbar - k) != 0 for some v in (lo, hi)."""
    k0 = int(np.floor(lo / hbar - 1.0)) + 1
    k1 = int(np.ceil(hi / hbar + 1.0)) - 1
    return list(range(k0, k1 + 1))


def active_blocks(model, hbar):
    """Block indices whose windows can meet the amplitude support (n = 1)."""
    if model.n != 1:
        raise NotImplementedError("window enumeration by box is provided for n = 1")
    lo, hi = model.support_lower, model.support_upper
    xs = covering_indices(lo[0], hi[0], hbar)
    ts = covering_indices(lo[1], hi[1], hbar)
    return [BlockIndex((X,), (T,)) for X in xs for T in ts]
