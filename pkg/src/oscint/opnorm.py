"""Quadrature discretization of oscillatory integral operators and their norms.

The kernel is K(x, theta) = exp(i lam S) psi * (cutoffs) * (optional h).  A
uniform midpoint grid covers the amplitude support; the operator applied to
grid values u is sum_j K(x_i, theta_j) u_j dtheta^n.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cutoffs import PHI, SignPattern, bar_cutoff, rho, shell_cutoff
from .errors import IterationError, ResolutionError

LAM_CAP = 2.0 ** 10
MAX_POINTS = 16384              # grid points per side (product over axes)
CACHE_BYTES = 2 * 1024 ** 3     # store the full kernel when it fits
CHUNK_BYTES = 64 * 1024 ** 2
MIN_POINTS = 32


def default_threads():
    env = os.environ.get("OSCINT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class OperatorSpec:
    """A phase model plus lambda, localization and damping."""

    model: object
    lam: float
    localization: str = "full"          # full | shell | bar
    hbar: float = None
    sign: int = 1
    damping: bool = False
    right_pattern: SignPattern = None
    left_pattern: SignPattern = None

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be a nonnegative number, got {self.lam}")
        if self.localization not in ("full", "shell", "bar"):
            raise ValueError(f"unknown localization {self.localization!r}")
        if self.localization == "shell":
            if self.sign not in (1, -1):
                raise ValueError("shell localization needs sign +1 or -1")
            if self.hbar is None or not (0 < self.hbar <= 1):
                raise ValueError(f"shell localization needs hbar in (0, 1], got {self.hbar}")
        if self.localization == "bar" and (self.hbar is None or self.hbar <= 0):
            raise ValueError("bar localization needs hbar > 0")
        for pat, side in ((self.right_pattern, "right"), (self.left_pattern, "left")):
            if pat is not None and pat.side != side:
                raise ValueError(f"{side} pattern has side {pat.side!r}")

    def with_(self, **kw):
        return replace(self, **kw)

    @property
    def localized(self):
        return self.localization != "full"


@dataclass(frozen=True, eq=False)
class Grid:
    """Tensor midpoint grids on x and theta boxes."""

    x_axes: tuple
    theta_axes: tuple

    @staticmethod
    def midpoints(lo, hi, N):
        d = (hi - lo) / N
        return lo + d * (np.arange(N) + 0.5)

    @classmethod
    def on_box(cls, lower, upper, n, counts):
        counts = list(counts)
        axes = [cls.midpoints(lower[k], upper[k], counts[k]) for k in range(2 * n)]
        return cls(tuple(axes[:n]), tuple(axes[n:]))

    @staticmethod
    def _spacing(axes):
        return float(np.prod([a[1] - a[0] if len(a) > 1 else 1.0 for a in axes]))

    @property
    def dx(self):
        return self._spacing(self.x_axes)

    @property
    def dtheta(self):
        return self._spacing(self.theta_axes)

    @staticmethod
    def _points(axes):
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def x_points(self):
        return self._points(self.x_axes)

    @property
    def theta_points(self):
        return self._points(self.theta_axes)

    @property
    def shape(self):
        return (int(np.prod([len(a) for a in self.x_axes])),
                int(np.prod([len(a) for a in self.theta_axes])))

    def same_as(self, other):
        return all(np.array_equal(a, b) for a, b in zip(self.x_axes + self.theta_axes,
                                                         other.x_axes + other.theta_axes))


def required_points(spec, points_per_wavelength=8, points_per_cutoff=2):
    """Points per axis needed to resolve the phase and the cutoffs."""
    model = spec.model
    lo, hi = model.support_lower, model.support_upper
    widths = hi - lo
    delta = np.inf
    if spec.lam > 0:
        G = model.mixed_gradient_bound()
        if G > 0:
            delta = 2 * np.pi / (points_per_wavelength * spec.lam * G)
    if spec.localized or spec.right_pattern is not None or spec.left_pattern is not None:
        Gh = max(model.h_gradient_bound(), 1e-300)
        delta = min(delta, spec.hbar / (2 * points_per_cutoff * Gh))
    counts = np.maximum(MIN_POINTS, np.ceil(widths / delta)).astype(int)
    return counts


class DiscretizedOperator:
    """Matrix-free kernel with optional caching of the full matrix."""

    def __init__(self, spec, grid, cache_bytes=CACHE_BYTES, threads=None):
        self.spec = spec
        self.grid = grid
        self.threads = default_threads() if threads is None else max(1, int(threads))
        model = spec.model
        self.n = model.n
        self.xp = grid.x_points
        self.tp = grid.theta_points
        self.shape = (len(self.xp), len(self.tp))
        self.dx = grid.dx
        self.dtheta = grid.dtheta
        self.weight = np.sqrt(self.dx * self.dtheta)
        n = self.n
        c, w = model.center, model.halfwidth
        from .phase import _AMP
        self._ampx = np.prod(_AMP((self.xp - c[:n]) / w[:n]), axis=1)
        self._ampt = np.prod(_AMP((self.tp - c[n:]) / w[n:]), axis=1)
        rows = max(1, CHUNK_BYTES // (48 * self.shape[1]))
        self.chunks = [(a, min(a + rows, self.shape[0])) for a in range(0, self.shape[0], rows)]
        self._cache = None
        nbytes = 16 * self.shape[0] * self.shape[1]
        if nbytes <= cache_bytes:
            self._cache = self._assemble()

    # -- kernel evaluation --------------------------------------------------
    def _outer(self, poly, xs, func):
        if poly is not None:
            return poly.outer(xs, self.tp, self.n)
        P = np.concatenate([np.repeat(xs[:, None, :], len(self.tp), axis=1),
                            np.repeat(self.tp[None, :, :], len(xs), axis=0)], axis=-1)
        return func(P)

    def _points(self, xs):
        return np.concatenate([np.repeat(xs[:, None, :], len(self.tp), axis=1),
                               np.repeat(self.tp[None, :, :], len(xs), axis=0)], axis=-1)

    def envelope(self, a, b):
        """Non-oscillatory factor: amplitude times cutoffs and damping, rows a:b."""
        spec, model = self.spec, self.spec.model
        xs = self.xp[a:b]
        E = np.multiply.outer(self._ampx[a:b], self._ampt)
        need_h = spec.localized or spec.damping
        if need_h:
            H = self._outer(model.h_poly, xs, model.h)
            if spec.localization == "shell":
                E *= shell_cutoff(H / spec.hbar, spec.sign)
            elif spec.localization == "bar":
                E *= bar_cutoff(H / spec.hbar)
            if spec.damping:
                E *= H
        for pat in (spec.right_pattern, spec.left_pattern):
            if pat is None or not pat.signs:
                continue
            E *= self._sign_matrix(xs, pat)
        return E

    def _sign_matrix(self, xs, pat):
        from .cutoffs import sign_weight
        model, hbar = self.spec.model, self.spec.hbar
        if self.n == 1 and model.h_poly is not None:
            W = np.ones((len(xs), len(self.tp)))
            k = 0 if pat.side == "right" else 1
            for j, s in enumerate(pat.signs, start=1):
                a = [0, 0]
                a[k] = j
                W *= rho(s * model.h_poly.deriv(a).outer(xs, self.tp, 1) / hbar)
            return W
        return sign_weight(model, self._points(xs), hbar, pat)

    def phase(self, a, b):
        model = self.spec.model
        return self._outer(model.poly, self.xp[a:b], model.S)

    def _block(self, a, b):
        K = self.envelope(a, b).astype(complex)
        if self.spec.lam != 0:
            K *= np.exp(1j * self.spec.lam * self.phase(a, b))
        return K

    def _assemble(self):
        K = np.empty(self.shape, dtype=complex)

        def fill(ab):
            a, b = ab
            K[a:b] = self._block(a, b)

        self._map(fill, self.chunks)
        return K

    def _map(self, fn, items):
        if self.threads == 1 or len(items) == 1:
            return [fn(it) for it in items]
        with ThreadPoolExecutor(self.threads) as ex:
            return list(ex.map(fn, items))

    def rows(self, a, b):
        if self._cache is not None:
            return self._cache[a:b]
        return self._block(a, b)

    @property
    def cached(self):
        return self._cache is not None

    def kernel(self):
        """Full kernel matrix K(x_i, theta_j) (unweighted)."""
        if self._cache is not None:
            return self._cache
        return self._assemble()

    def matrix(self):
        """Weighted matrix whose spectral norm approximates the L2 operator norm."""
        return self.weight * self.kernel()

    # -- application ----------------------------------------------------------
    def matvec(self, u):
        u = np.asarray(u)
        parts = self._map(lambda ab: (ab, self.rows(*ab) @ u), self.chunks)
        out = np.empty(self.shape[0], dtype=complex)
        for (a, b), y in parts:
            out[a:b] = y
        return out * self.dtheta

    def rmatvec(self, v):
        v = np.asarray(v)
        parts = self._map(lambda ab: (v[ab[0]:ab[1]].conj() @ self.rows(*ab)).conj(), self.chunks)
        return tree_sum(parts) * self.dx

    def normal_apply(self, v):
        """M^H M v for the weighted matrix M, in one pass over row chunks."""
        if self._cache is not None:
            y = self._cache @ v
            return (y.conj().T @ self._cache).conj().T * self.weight ** 2

        def part(ab):
            R = self._block(*ab)
            y = R @ v
            return (y.conj().T @ R).conj().T

        return tree_sum(self._map(part, self.chunks)) * self.weight ** 2

    def abs_sums(self):
        """Row sums and column sums of |K|."""
        def part(ab):
            A = np.abs(self.rows(*ab))
            return A.sum(axis=1), A.sum(axis=0)

        parts = self._map(part, self.chunks)
        rows = np.concatenate([p[0] for p in parts])
        cols = tree_sum([p[1] for p in parts])
        return rows, cols


def tree_sum(parts):
    """Pairwise reduction in a fixed order, so results do not depend on scheduling."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to sum")
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def lam_cap_for(spec, points_per_wavelength=8, max_points=MAX_POINTS):
    """Largest dyadic lambda whose grid fits the point budget."""
    lam = 1.0
    while lam < 2.0 ** 30:
        nxt = spec.with_(lam=2 * lam)
        if np.prod(required_points(nxt, points_per_wavelength)[: spec.model.n]) > max_points:
            break
        lam *= 2
    return lam


def discretize(spec, points_per_wavelength=8, max_points=MAX_POINTS, lam_cap=LAM_CAP,
               grid=None, n_points=None, points_per_cutoff=2, cache_bytes=CACHE_BYTES,
               threads=None):
    """Build the quadrature operator for ``spec``.

    ``grid`` or ``n_points`` (per axis) override the automatic sizing, which
    is the way to compare operators on an identical grid.
    """
    model = spec.model
    n = model.n
    if spec.lam > lam_cap:
        raise ResolutionError(f"lambda={spec.lam:g} exceeds the lambda cap {lam_cap:g}; "
                              "raise lam_cap (and max_points) to go further")
    if grid is None:
        if n_points is not None:
            counts = np.broadcast_to(np.asarray(n_points, dtype=int), (2 * n,))
        else:
            counts = required_points(spec, points_per_wavelength, points_per_cutoff)
        side = max(int(np.prod(counts[:n])), int(np.prod(counts[n:])))
        if side > max_points:
            cap = lam_cap_for(spec, points_per_wavelength, max_points)
            raise ResolutionError(
                f"lambda={spec.lam:g} needs {side} grid points per side, above max_points="
                f"{max_points}; the lambda cap for this model at {points_per_wavelength} points "
                f"per wavelength is about {cap:g}")
        grid = Grid.on_box(model.support_lower, model.support_upper, n, counts)
    return DiscretizedOperator(spec, grid, cache_bytes=cache_bytes, threads=threads)


# -- norms ------------------------------------------------------------------------

def _start_block(size, block, seed):
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((size, block)) + 1j * rng.standard_normal((size, block))
    if block == 1:
        return V / np.linalg.norm(V)
    return np.linalg.qr(V)[0]


def l2_norm(op, rel_tol=1e-4, max_iter=2000, seed=0, block=1, return_iterations=False):
    """Largest singular value by power iteration on the adjoint composition.

    ``op`` is a DiscretizedOperator (weighted so the value approximates the
    continuum L2 norm) or a plain matrix.  ``block > 1`` iterates a subspace
    and takes the Rayleigh-Ritz value, which helps on clustered spectra.
    """
    if isinstance(op, DiscretizedOperator):
        apply, size = op.normal_apply, op.shape[1]
    else:
        M = np.asarray(op)
        apply, size = (lambda v: M.conj().T @ (M @ v)), M.shape[1]
    if size == 0:
        return (0.0, 0) if return_iterations else 0.0
    block = max(1, min(int(block), size))
    V = _start_block(size, block, seed)
    mu_prev = None
    gap = np.inf
    mu = 0.0
    for it in range(1, max_iter + 1):
        Z = apply(V)
        if not np.any(Z):
            return (0.0, it) if return_iterations else 0.0
        H = V.conj().T @ Z
        mu = float(np.max(np.linalg.eigvalsh(0.5 * (H + H.conj().T)))) if block > 1 else float(np.real(H[0, 0]))
        if mu_prev is not None:
            gap = abs(mu - mu_prev)
            if gap <= rel_tol * abs(mu):
                val = float(np.sqrt(max(mu, 0.0)))
                return (val, it) if return_iterations else val
        mu_prev = mu
        V = Z / np.linalg.norm(Z) if block == 1 else np.linalg.qr(Z)[0]
    raise IterationError(f"power iteration did not converge in {max_iter} iterations; "
                         f"last gap {gap:.3e} relative {gap / max(abs(mu), 1e-300):.3e}", gap=gap)


def batched_l2_norm(stack, rel_tol=1e-13, max_iter=400, seed=0, squarings=6):
    """Spectral norms of a stack of small matrices (B, m, k) by power iteration.

    Plain iteration with G = M^H M first; entries still unconverged after
    ``max_iter`` steps continue with G^(2^squarings), which shortens the
    iteration on clustered spectra.  The Rayleigh quotient always uses G.
    """
    M = np.asarray(stack)
    if M.ndim != 3:
        raise ValueError("expected a stack of matrices")
    B, m, k = M.shape
    out = np.zeros(B)
    if B == 0 or k == 0 or m == 0:
        return out
    scale = np.max(np.abs(M), axis=(1, 2))
    live = np.nonzero(scale > 0)[0]
    if live.size == 0:
        return out
    Mn = M[live] / scale[live][:, None, None]
    G = np.conj(np.swapaxes(Mn, 1, 2)) @ Mn
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((len(G), k)) + 1j * rng.standard_normal((len(G), k))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    mu = np.real(np.einsum("bi,bij,bj->b", v.conj(), G, v))
    result = np.zeros(len(G))
    todo = np.arange(len(G))
    P = None
    for stage in range(2):
        for _ in range(max_iter):
            Ps = G[todo] if P is None else P
            w = np.einsum("bij,bj->bi", Ps, v[todo])
            w /= np.maximum(np.linalg.norm(w, axis=1, keepdims=True), 1e-300)
            v[todo] = w
            new = np.real(np.einsum("bi,bij,bj->b", w.conj(), G[todo], w))
            done = np.abs(new - mu[todo]) <= rel_tol * np.abs(new)
            mu[todo] = new
            result[todo[done]] = new[done]
            keep = ~done
            todo = todo[keep]
            if P is not None:
                P = P[keep]
            if todo.size == 0:
                break
        if todo.size == 0:
            break
        if stage == 0:
            P = G[todo]
            for _ in range(squarings):
                P = P @ P
                P = P / np.maximum(np.real(np.trace(P, axis1=1, axis2=2)), 1e-300)[:, None, None]
    if todo.size:
        raise IterationError(f"batched power iteration left {todo.size} matrices unconverged",
                             gap=float(np.max(np.abs(mu[todo]))))
    out[live] = np.sqrt(np.maximum(result, 0.0)) * scale[live]
    return out


def l1_norm(op):
    """sup over columns of sum_i |K| dx^n: the L1 -> L1 norm of the discretized kernel."""
    _, cols = op.abs_sums()
    return float(cols.max() * op.dx) if cols.size else 0.0


def linf_norm(op):
    """sup over rows of sum_j |K| dtheta^n."""
    rows, _ = op.abs_sums()
    return float(rows.max() * op.dtheta) if rows.size else 0.0


def l1_linf_norms(op):
    rows, cols = op.abs_sums()
    return float(cols.max() * op.dx), float(rows.max() * op.dtheta)


def schur_bound(op):
    a, b = l1_linf_norms(op)
    return float(np.sqrt(a * b))


def interpolate_bound(norm1, norm2, norm_inf, p):
    """Riesz-Thorin bound for the L^p -> L^p norm from the 1, 2 and infinity norms."""
    p = float(p)
    if not (p >= 1):
        raise ValueError(f"p must lie in [1, inf], got {p}")
    if min(norm1, norm2, norm_inf) < 0:
        raise ValueError("norms must be nonnegative")
    if p == 2:
        return float(norm2)
    if p == 1:
        return float(norm1)
    if np.isinf(p):
        return float(norm_inf)
    if p < 2:
        return float(norm1 ** (2 / p - 1) * norm2 ** (2 - 2 / p))
    return float(norm_inf ** (1 - 2 / p) * norm2 ** (2 / p))
