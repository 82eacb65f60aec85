"""Exponent formulas for the norm bounds, in exact rational arithmetic.

Throughout, hbar = lam^(-s); a bound lam^a hbar^b then has lam-exponent a - s b.
"""

from dataclasses import dataclass
from fractions import Fraction as Fr
from math import log

from .errors import OutOfTheoryError, UndefinedProfileError

REGIMES = ("1.3", "1.4", "1.5", "1.6")


@dataclass(frozen=True)
class RegimeBound:
    regime: str
    lam_exp: Fr
    hbar_exp: Fr
    value: float = None

    def exponent(self, s):
        """lam-exponent of the bound when hbar = lam^(-s)."""
        return self.lam_exp - Fr(s) * self.hbar_exp


def _kK(l, r):
    if l < 1 or r < 1:
        raise ValueError("types must be at least 1")
    return min(l, r), max(l, r)


def thresholds(l, r):
    """s-values of the regime boundaries: 1/3, (2+1/k)^-1, (2+1/K)^-1."""
    k, K = _kK(l, r)
    return Fr(1, 3), 1 / (2 + Fr(1, k)), 1 / (2 + Fr(1, K))


def regime_exponents(n, l, r, regime):
    """(lam exponent, hbar exponent) of one of the four shell bounds."""
    k, K = _kK(l, r)
    n = Fr(n)
    if regime == "1.3":
        return -n / 2, Fr(-1, 2)
    if regime == "1.4":
        return -(n + 1) / 2, Fr(-2)
    if regime == "1.5":
        return -n / 2, -1 + Fr(1, 2 * k)
    if regime == "1.6":
        return -(n - 1) / 2, Fr(1, 2 * k) + Fr(1, 2 * K)
    raise ValueError(f"unknown regime {regime!r}")


def regime_for_s(l, r, s):
    """Regime at hbar = lam^(-s); ties go to the lower regime id."""
    s = Fr(s)
    t1, t2, t3 = thresholds(l, r)
    if s > Fr(1, 2):
        raise OutOfTheoryError(f"hbar = lam^-{s} lies below lam^-1/2")
    if s <= t1:
        return "1.3"
    if s <= t2:
        return "1.4"
    if s <= t3:
        return "1.5"
    return "1.6"


def shell_exponent(n, l, r, s):
    """Exact lam-exponent of the shell bound at hbar = lam^(-s) (s <= 0 extends 1.3)."""
    reg = regime_for_s(l, r, s)
    a, b = regime_exponents(n, l, r, reg)
    return reg, a - Fr(s) * b


def theorem11_bound(n, l, r, lam, hbar, tol=1e-12):
    """Shell bound for given lam > 1 and hbar >= lam^(-1/2)."""
    if lam <= 1:
        raise ValueError("lambda must exceed 1")
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    s = -log(hbar) / log(lam)
    if s > 0.5 + tol:
        raise OutOfTheoryError(f"hbar={hbar:g} is below lam^(-1/2)={lam ** -0.5:g}")
    t1, t2, t3 = (float(t) for t in thresholds(l, r))
    # floating s: snap within tol onto a threshold so ties resolve downward
    if s <= t1 + tol:
        reg = "1.3"
    elif s <= t2 + tol:
        reg = "1.4"
    elif s <= t3 + tol:
        reg = "1.5"
    else:
        reg = "1.6"
    a, b = regime_exponents(n, l, r, reg)
    return RegimeBound(reg, a, b, float(lam ** float(a) * hbar ** float(b)))


def bar_bound(n, l, r, lam, hbar):
    """The 1.6 shape evaluated for the bar operator at hbar."""
    a, b = regime_exponents(n, l, r, "1.6")
    return RegimeBound("1.6", a, b, float(lam ** float(a) * hbar ** float(b)))


def delta_loss(l, r):
    """Loss of decay of the full operator: 1/2 (1 - 1/(2k)) (1 + 1/(2K))^-1."""
    if l < 0 or r < 0:
        raise ValueError("types must be nonnegative")
    if l == 0 and r == 0:
        return Fr(0)
    if l == 0 or r == 0:
        raise UndefinedProfileError(f"profile ({l}, {r}) has exactly one zero type")
    k, K = min(l, r), max(l, r)
    return Fr(1, 2) * (1 - Fr(1, 2 * k)) / (1 + Fr(1, 2 * K))


def delta_opt(l, r):
    """1/2 (1 + 1/l + 1/r)^-1."""
    if l < 0 or r < 0:
        raise ValueError("types must be nonnegative")
    if l == 0 and r == 0:
        return Fr(0)
    if l == 0 or r == 0:
        raise UndefinedProfileError(f"profile ({l}, {r}) has exactly one zero type")
    return Fr(1, 2) / (1 + Fr(1, l) + Fr(1, r))


def theorem12_bound(l, r, hbar):
    """(hbar^(1/r), hbar^(1/l)): L1 and L-infinity bound shapes of the shell operator."""
    if l < 1 or r < 1:
        raise ValueError("types must be at least 1")
    return hbar ** (1.0 / r), hbar ** (1.0 / l)


def corollary4_range(r):
    """Range endpoints and decay gain of the L^p estimates for a one-sided type r."""
    if r < 1:
        raise ValueError("r must be at least 1")
    return dict(p_lower=Fr(r + 2, r + 1), p_upper=Fr(3), exponent=1 / (4 + Fr(2, r)),
                endpoint_log_factor=True)


# -- dyadic sums ------------------------------------------------------------------

def optimal_cut(l, r):
    """s at which to stop the shells and switch to the bar piece."""
    return thresholds(l, r)[2]


def _log2_geometric(a, b, M, j0, j1):
    """log2 of sum_{j=j0}^{j1} 2^(M a + j b), summed in closed form."""
    if j1 < j0:
        return float("-inf")
    count = j1 - j0 + 1
    a, b = float(a), float(b)
    top = max(j0 * b, j1 * b)
    if b == 0:
        return M * a + log(count, 2)
    # sum 2^(j b) = 2^top * (1 - 2^(-|b| count)) / (1 - 2^(-|b|))
    q = 2.0 ** (-abs(b))
    return M * a + top + log((1 - q ** count) / (1 - q), 2)


def _logsumexp2(vals):
    vals = [v for v in vals if v != float("-inf")]
    m = max(vals)
    return m + log(sum(2.0 ** (v - m) for v in vals), 2)


def dyadic_sum_exponent(n, l, r, M=2 ** 50, cut=None, damped=False):
    """Numerical lam-exponent of the dyadic sum of shell bounds plus the bar term.

    lam = 2^M, hbar_j = 2^-j for 0 <= j < J with 2^-J the cut-off.  The sum over
    each regime is a geometric series, summed in closed form in log2 space.
    Undamped: shells down to the cut plus the 1.6 shape at the cut.  Damped:
    hbar-weighted shells down to lam^(-1/2) plus lam^(-1/2) times 1.6 there.
    """
    if damped:
        cut = Fr(1, 2)
    elif cut is None:
        cut = optimal_cut(l, r)
    J = int(Fr(cut) * M)
    t1, t2, t3 = thresholds(l, r)
    bounds = [(Fr(0), t1, "1.3"), (t1, t2, "1.4"), (t2, t3, "1.5"), (t3, Fr(1, 2), "1.6")]
    logs = []
    for lo, hi, reg in bounds:
        # j ranges over shells whose s = j/M lies in (lo, hi] (j = 0 belongs to 1.3)
        j0 = 0 if reg == "1.3" else int(lo * M) + 1
        j1 = min(int(hi * M), J - 1)
        a, b = regime_exponents(n, l, r, reg)
        # hbar^b = 2^(-j b); damping multiplies by hbar = 2^-j
        c = -b - (1 if damped else 0)
        logs.append(_log2_geometric(a, c, M, j0, j1))
    a, b = regime_exponents(n, l, r, "1.6")
    extra = -1 if damped else 0
    logs.append(float(M * a - J * b + J * extra))
    return _logsumexp2(logs) / M


def full_operator_exponent(n, l, r):
    return -Fr(n, 2) + delta_loss(l, r)


def regime_table(n, l, r):
    """Rows (regime, s-range, lam exponent, hbar exponent) for display."""
    t1, t2, t3 = thresholds(l, r)
    edges = [(Fr(0), t1), (t1, t2), (t2, t3), (t3, Fr(1, 2))]
    rows = []
    for reg, (lo, hi) in zip(REGIMES, edges):
        a, b = regime_exponents(n, l, r, reg)
        rows.append(dict(regime=reg, s_from=lo, s_to=hi, lam_exp=a, hbar_exp=b,
                         exp_from=a - lo * b, exp_to=a - hi * b, empty=hi <= lo))
    return rows
