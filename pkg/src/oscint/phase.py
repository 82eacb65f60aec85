"""Phase models S(x, theta) and the geometry of their critical set.

Points are arrays whose trailing axis holds ``(x_1..x_n, theta_1..theta_n)``.
For ``n == 2`` the first coordinates are the "primed" block and the last
coordinate of each group is the distinguished one, so ``x = (x', x_n)``.
"""

from dataclasses import dataclass, field
from functools import cached_property
from math import factorial

import numpy as np

from .errors import DomainError, InfiniteTypeError, PreconditionError
from .polynomial import Poly
from .cutoffs import make_bump

EPS = np.finfo(float).eps

# amplitude profile: 1 on the middle half of each box side, 0 beyond 90% of it
AMP_INNER, AMP_OUTER = 0.5, 0.9
_AMP = make_bump(AMP_INNER, AMP_OUTER)

# integral curves can bend strongly, so derivatives along them use a wider stencil
FIELD_ACCURACY = 4


def central_stencil(m, accuracy=2):
    """Offsets and weights of the central stencil for d^m/dt^m with error O(step^accuracy)."""
    if m == 0:
        return np.array([0.0]), np.array([1.0])
    p = (m + 1) // 2 + accuracy // 2 - 1
    offsets = np.arange(-p, p + 1, dtype=float)
    V = np.vander(offsets, increasing=True).T
    rhs = np.zeros(len(offsets))
    rhs[m] = factorial(m)
    return offsets, np.linalg.solve(V, rhs)


def fd_step(order, scale, accuracy=2):
    return EPS ** (1.0 / (order + accuracy)) * scale


@dataclass(frozen=True, eq=False)
class PhaseModel:
    """Phase S on the box ``center +- halfwidth`` with a tensor bump amplitude.

    Polynomial models carry ``poly`` and get exact derivatives; otherwise
    ``func`` is evaluated and differentiated by central differences.
    """

    name: str
    n: int
    center: np.ndarray
    halfwidth: np.ndarray
    poly: Poly = None
    func: object = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("only n = 1 and n = 2 are supported")
        c = np.asarray(self.center, dtype=float).reshape(2 * self.n)
        w = np.asarray(self.halfwidth, dtype=float).reshape(2 * self.n)
        if np.any(w <= 0):
            raise ValueError("halfwidths must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "halfwidth", w)
        if (self.poly is None) == (self.func is None):
            raise ValueError("exactly one of poly / func must be given")
        if self.poly is not None and self.poly.nvars != 2 * self.n:
            raise ValueError("polynomial has the wrong number of variables")

    # -- box and amplitude -------------------------------------------------
    @property
    def lower(self):
        return self.center - self.halfwidth

    @property
    def upper(self):
        return self.center + self.halfwidth

    @property
    def support_lower(self):
        return self.center - AMP_OUTER * self.halfwidth

    @property
    def support_upper(self):
        return self.center + AMP_OUTER * self.halfwidth

    def contains(self, p):
        p = np.asarray(p, dtype=float)
        return np.all((p >= self.lower) & (p <= self.upper), axis=-1)

    def check_domain(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != 2 * self.n:
            raise DomainError(f"points must have {2 * self.n} coordinates, got shape {p.shape}")
        if not np.all(self.contains(p)):
            raise DomainError(f"point outside the domain box of model {self.name!r}")
        return p

    def amplitude_factors(self, p):
        """Per-coordinate bump factors, shape (..., 2n)."""
        u = (np.asarray(p, dtype=float) - self.center) / self.halfwidth
        return _AMP(u)

    def amplitude(self, p):
        return np.prod(self.amplitude_factors(p), axis=-1)

    # -- phase and derivatives ---------------------------------------------
    def S(self, p):
        p = np.asarray(p, dtype=float)
        if self.poly is not None:
            return self.poly(p)
        return np.asarray(self.func(p), dtype=float)

    def derivative(self, alpha, p):
        alpha = tuple(int(a) for a in alpha)
        if self.poly is not None:
            return self.poly.deriv(alpha)(np.asarray(p, dtype=float))
        return self.fd_derivative(alpha, p)

    def fd_derivative(self, alpha, p, func=None):
        """Tensor-product central differences of ``func`` (default S)."""
        func = self.S if func is None else func
        p = np.asarray(p, dtype=float)
        order = sum(alpha)
        steps = fd_step(order, 2 * self.halfwidth)
        comps = [central_stencil(a) for a in alpha]
        out = np.zeros(p.shape[:-1])
        grids = np.meshgrid(*[np.arange(len(o)) for o, _ in comps], indexing="ij")
        for idx in zip(*[g.ravel() for g in grids]):
            w = 1.0
            shift = np.zeros(2 * self.n)
            for k, i in enumerate(idx):
                offs, wts = comps[k]
                w *= wts[i] / steps[k] ** alpha[k]
                shift[k] = offs[i] * steps[k]
            if w != 0.0:
                out = out + w * func(p + shift)
        return out

    def gradient(self, p):
        e = np.eye(2 * self.n, dtype=int)
        return np.stack([self.derivative(e[k], p) for k in range(2 * self.n)], axis=-1)

    def mixed_alpha(self, i, j):
        a = [0] * (2 * self.n)
        a[i] += 1
        a[self.n + j] += 1
        return tuple(a)

    def mixed_hessian(self, p):
        p = np.asarray(p, dtype=float)
        n = self.n
        M = np.empty(p.shape[:-1] + (n, n))
        for i in range(n):
            for j in range(n):
                M[..., i, j] = self.derivative(self.mixed_alpha(i, j), p)
        return M

    @cached_property
    def h_poly(self):
        """det S_{x theta} as a polynomial, for polynomial models."""
        if self.poly is None:
            return None
        d = [[self.poly.deriv(self.mixed_alpha(i, j)) for j in range(self.n)] for i in range(self.n)]
        if self.n == 1:
            return d[0][0]
        return d[0][0] * d[1][1] - d[0][1] * d[1][0]

    def h(self, p):
        p = np.asarray(p, dtype=float)
        if self.h_poly is not None:
            return self.h_poly(p)
        M = self.mixed_hessian(p)
        return M[..., 0, 0] if self.n == 1 else np.linalg.det(M)

    def transposed(self):
        """Model with the roles of x and theta exchanged: S'(x, theta) = S(theta, x)."""
        n = self.n
        order = list(range(n, 2 * n)) + list(range(n))
        center = self.center[order]
        hw = self.halfwidth[order]
        params = dict(self.params)
        if "l" in params or "r" in params:
            params["l"], params["r"] = params.get("r"), params.get("l")
        if self.poly is not None:
            return PhaseModel(self.name + "^T", n, center, hw, poly=self.poly.permuted(order), params=params)
        f = self.func
        return PhaseModel(self.name + "^T", n, center, hw,
                          func=lambda p: f(np.asarray(p)[..., order]), params=params)

    # -- grid sizing -------------------------------------------------------
    def mixed_gradient_bound(self, samples=None):
        """max |grad R| over the box for R(x,t) = S(x,t) - S(x,t0) - S(x0,t) + S(x0,t0).

        R differs from S by functions of x alone and theta alone, i.e. by
        unimodular diagonal factors that leave every operator norm unchanged,
        so only R's oscillation has to be resolved by the quadrature.
        """
        n = self.n
        if samples is None:
            samples = 65 if n == 1 else 13
        axes = [np.linspace(lo, hi, samples) for lo, hi in zip(self.support_lower, self.support_upper)]
        p = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2 * n)
        g = self.gradient(p)
        px0 = p.copy()
        px0[:, n:] = self.center[n:]
        p0t = p.copy()
        p0t[:, :n] = self.center[:n]
        gx = g[:, :n] - self.gradient(px0)[:, :n]
        gt = g[:, n:] - self.gradient(p0t)[:, n:]
        return float(np.sqrt(np.max(np.sum(gx ** 2, axis=1) + np.sum(gt ** 2, axis=1))))

    def h_gradient_bound(self, samples=None):
        n = self.n
        if samples is None:
            samples = 65 if n == 1 else 13
        axes = [np.linspace(lo, hi, samples) for lo, hi in zip(self.support_lower, self.support_upper)]
        p = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2 * n)
        if self.h_poly is not None:
            g = np.stack([self.h_poly.deriv(np.eye(2 * n, dtype=int)[k])(p) for k in range(2 * n)], axis=-1)
        else:
            g = np.stack([self.fd_derivative(np.eye(2 * n, dtype=int)[k], p, func=self.h)
                          for k in range(2 * n)], axis=-1)
        return float(np.sqrt(np.max(np.sum(g ** 2, axis=1))))

    def h_scale(self, samples=None):
        n = self.n
        if samples is None:
            samples = 65 if n == 1 else 13
        axes = [np.linspace(lo, hi, samples) for lo, hi in zip(self.support_lower, self.support_upper)]
        p = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2 * n)
        return float(np.max(np.abs(self.h(p))))


# -- gallery ------------------------------------------------------------------

def _vars(nvars):
    return [Poly.var(k, nvars) for k in range(nvars)]


def nondegenerate():
    x, t = _vars(2)
    return PhaseModel("nondegenerate", 1, [0.0, 0.0], [1.0, 1.0], poly=x * t,
                      params={"l": 0, "r": 0})


def fold2():
    """Two-sided fold; the box is centred on the fold point (1/4, -1/4)."""
    x, t = _vars(2)
    S = x * t + (x - t) ** 3 * (1.0 / 3.0)
    return PhaseModel("fold2", 1, [0.25, -0.25], [1.0, 1.0], poly=S, params={"l": 1, "r": 1})


def type_lr(l, r):
    """h = x^r - theta^l: type (l, r) at the origin."""
    l, r = int(l), int(r)
    if l < 1 or r < 1:
        raise ValueError("type_lr needs l, r >= 1")
    x, t = _vars(2)
    S = x ** (r + 1) * t * (1.0 / (r + 1)) - x * t ** (l + 1) * (1.0 / (l + 1))
    return PhaseModel(f"type_lr({l},{r})", 1, [0.0, 0.0], [1.0, 1.0], poly=S,
                      params={"l": l, "r": r})


def lift_2d(base, shear=(0.5, 0.25), warp=0.0):
    """Two-dimensional model (x1 + a x2)(t1 + b t2) + warp x1^2 t1^2 + F(x2, t2).

    F is the one-dimensional phase of ``base``.  The transverse bilinear block
    keeps S_{x1 t1} invertible; ``warp`` bends the kernel-field integral curves.
    """
    a, b = shear
    x1, x2, t1, t2 = _vars(4)
    # F(x2, t2): substitute into the base polynomial
    F = Poly.const(0.0, 4)
    for (ex, et), c in base.poly.terms.items():
        F = F + c * x2 ** ex * t2 ** et
    S = (x1 + a * x2) * (t1 + b * t2) + warp * x1 ** 2 * t1 ** 2 + F
    c = base.center
    w = base.halfwidth
    name = f"{base.name}_2d" + (f"_warp{warp:g}" if warp else "")
    params = dict(base.params, shear=(a, b), warp=warp)
    return PhaseModel(name, 2, [0.0, c[0], 0.0, c[1]], [1.0, w[0], 1.0, w[1]], poly=S, params=params)


def from_callable(name, n, S, center, halfwidth, **params):
    """Model from an arbitrary smooth callable; derivatives by finite differences."""
    return PhaseModel(name, n, center, halfwidth, func=S, params=params)


GALLERY = ("nondegenerate", "fold2", "type_lr")


def get_model(name, l=None, r=None, n=1, warp=0.0):
    if name == "nondegenerate":
        base = nondegenerate()
    elif name == "fold2":
        base = fold2()
    elif name == "type_lr":
        if l is None or r is None:
            raise ValueError("type_lr needs integer parameters l and r")
        base = type_lr(l, r)
    else:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(GALLERY)}")
    if n == 1:
        return base
    if n == 2:
        return lift_2d(base, warp=warp)
    raise ValueError("n must be 1 or 2")


# -- differential geometry -----------------------------------------------------

def mixed_hessian(model, p):
    p = model.check_domain(p)
    return model.mixed_hessian(p)


def h_det(model, p):
    p = model.check_domain(p)
    return model.h(p)


def _primed_block(model, p):
    M = model.mixed_hessian(p)
    n = model.n
    Mp = M[..., : n - 1, : n - 1]
    det = np.linalg.det(Mp)
    if np.any(np.abs(det) < 1e-10):
        raise PreconditionError("primed block S_{x'theta'} is singular")
    return M, Mp


def kernel_fields(model, p):
    """Coefficient vectors (over d/dx, d/dtheta) of K_R and K_L at p."""
    p = model.check_domain(p)
    n = model.n
    KR = np.zeros(p.shape[:-1] + (2 * n,))
    KL = np.zeros_like(KR)
    KR[..., n - 1] = 1.0
    KL[..., 2 * n - 1] = 1.0
    if n == 1:
        return KR, KL
    M, Mp = _primed_block(model, p)
    s = M[..., n - 1, : n - 1]          # S_{x_n theta'}
    t = M[..., : n - 1, n - 1]          # S_{x' theta_n}
    c = np.linalg.solve(np.swapaxes(Mp, -1, -2), s[..., None])[..., 0]
    d = np.linalg.solve(Mp, t[..., None])[..., 0]
    KR[..., : n - 1] = -c
    KL[..., n:2 * n - 1] = -d
    return KR, KL


def pushforward_defect(model, p):
    """|d pi_R(K_R)| and |d pi_L(K_L)|; both vanish on the critical set."""
    KR, KL = kernel_fields(model, p)
    M = model.mixed_hessian(p)
    # pi_R = (theta, S_theta): theta is fixed along K_R, S_theta changes by M^T K_R[x]
    n = model.n
    dR = np.einsum("...ij,...i->...j", M, KR[..., :n])
    dL = np.einsum("...ij,...j->...i", M, KL[..., n:])
    return np.linalg.norm(dR, axis=-1), np.linalg.norm(dL, axis=-1)


def _side_index(model, side):
    if side not in ("right", "left"):
        raise ValueError("side must be 'right' or 'left'")
    return model.n - 1 if side == "right" else 2 * model.n - 1


def curve_points(model, p, t, side="right"):
    """Points on the integral curve of K_R (or K_L) through p at parameter values t.

    The right curve moves x_n with theta and eta' = S_{theta'} frozen; the left
    curve moves theta_n with x and xi' = S_{x'} frozen.  Shapes: p (..., 2n),
    t broadcastable against p's leading shape.
    """
    p = np.asarray(p, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(p.shape[:-1], t.shape)
    q = np.broadcast_to(p, shape + p.shape[-1:]).copy()
    t = np.broadcast_to(t, shape)
    n = model.n
    k = _side_index(model, side)
    if n == 1:
        q[..., k] += t
        return q
    # n == 2: solve for the primed coordinate keeping the frozen momentum
    if side == "right":
        free, alpha = 0, (0, 0, 1, 0)        # S_{theta1}, differentiate in x1
        dfree = (1, 0, 1, 0)
    else:
        free, alpha = 2, (1, 0, 0, 0)        # S_{x1}, differentiate in theta1
        dfree = (1, 0, 1, 0)
    target = model.derivative(alpha, q)
    KR, KL = kernel_fields(model, np.clip(q, model.lower, model.upper))
    K = KR if side == "right" else KL
    q[..., k] += t
    q[..., free] += K[..., free] * t
    for _ in range(30):
        f = model.derivative(alpha, q) - target
        df = model.derivative(dfree, q)
        step = f / df
        q[..., free] -= step
        if np.all(np.abs(step) < 1e-15 * (1 + np.abs(q[..., free]))):
            break
    return q


def field_power(model, p, j, side="right", func=None):
    """K^j applied to ``func`` (default h) at p.

    For one-dimensional polynomial models this is an exact partial derivative;
    otherwise it is the j-th t-derivative along the field's integral curve,
    by fourth-order central differences with step eps^(1/(j+4)) times the domain size.
    """
    p = np.asarray(p, dtype=float)
    n = model.n
    k = _side_index(model, side)
    if func is None:
        if j == 0:
            return model.h(p)
        if n == 1 and model.h_poly is not None:
            a = [0, 0]
            a[k] = j
            return model.h_poly.deriv(a)(p)
        func = model.h
    elif j == 0:
        return func(p)
    scale = 2 * model.halfwidth[k]
    step = fd_step(j, scale, FIELD_ACCURACY)
    offs, wts = central_stencil(j, FIELD_ACCURACY)
    out = np.zeros(p.shape[:-1])
    for o, w in zip(offs, wts):
        if w != 0.0:
            out = out + w * func(curve_points(model, p, o * step, side))
    return out / step ** j


def momentum_identity_sides(model, p):
    """Both sides of (d/dx_n at frozen eta') eta_n * det S_{x'theta'} = h."""
    p = np.asarray(p, dtype=float)
    n = model.n
    e = [0] * (2 * n)
    e[2 * n - 1] = 1
    eta_n = lambda q: model.derivative(e, q)
    lhs = field_power(model, p, 1, "right", func=eta_n)
    if n == 2:
        lhs = lhs * model.derivative((1, 0, 1, 0), p)
    return lhs, model.h(p)


# -- type detection -------------------------------------------------------------

@dataclass
class TypeProfile:
    """Detected left/right types with lower bounds on the controlling derivatives."""

    l: int
    r: int
    kappa_left: float
    kappa_right: float
    sample_points: np.ndarray          # points of Sigma where (l, r) were attained
    sigma_points: np.ndarray = None    # every located point of Sigma
    left_orders: np.ndarray = None
    right_orders: np.ndarray = None
    threshold: float = 0.0
    degenerate: bool = False           # kappa close to the detection threshold

    @property
    def k(self):
        return min(self.l, self.r)

    @property
    def K(self):
        return max(self.l, self.r)

    @property
    def nondegenerate(self):
        return self.l == 0 and self.r == 0


def _bracket_roots(model, lines=None, samples=401):
    """Sign-change bracketing of h along coordinate lines, then bisection."""
    n = model.n
    if lines is None:
        lines = 41 if n == 1 else 9
    lo, hi = model.lower, model.upper
    shrink = 1e-9 * model.halfwidth
    found = []
    for axis in range(2 * n):
        others = [k for k in range(2 * n) if k != axis]
        mesh = np.meshgrid(*[np.linspace(lo[k] + shrink[k], hi[k] - shrink[k], lines) for k in others],
                           indexing="ij")
        base = np.zeros((mesh[0].size if others else 1, 2 * n))
        for m, k in zip(mesh, others):
            base[:, k] = m.ravel()
        ts = np.linspace(lo[axis], hi[axis], samples)
        pts = np.repeat(base[:, None, :], samples, axis=1)
        pts[:, :, axis] = ts
        hv = model.h(pts)
        zero = hv == 0.0
        # exact zeros at sample points
        li, si = np.nonzero(zero)
        if li.size:
            found.append(pts[li, si])
        change = (hv[:, :-1] * hv[:, 1:] < 0)
        li, si = np.nonzero(change)
        if li.size == 0:
            continue
        a = ts[si].copy()
        b = ts[si + 1].copy()
        q = base[li].copy()
        fa = hv[li, si]
        while np.max(b - a) > 1e-12:
            mid = 0.5 * (a + b)
            q[:, axis] = mid
            fm = model.h(q)
            left = np.sign(fm) == np.sign(fa)
            a = np.where(left, mid, a)
            fa = np.where(left, fm, fa)
            b = np.where(left, b, mid)
        q[:, axis] = 0.5 * (a + b)
        found.append(q)
    if not found:
        return np.zeros((0, 2 * n))
    return np.concatenate(found, axis=0)


def _orders(model, pts, side, k_max, thr):
    orders = np.zeros(len(pts), dtype=int)
    vals = np.zeros(len(pts))
    pending = np.ones(len(pts), dtype=bool)
    for j in range(1, k_max + 1):
        if not pending.any():
            break
        v = np.abs(field_power(model, pts[pending], j, side))
        hit = v >= thr
        idx = np.nonzero(pending)[0]
        orders[idx[hit]] = j
        vals[idx[hit]] = v[hit]
        pending[idx[hit]] = False
    if pending.any():
        raise InfiniteTypeError(
            f"{side} type exceeds k_max={k_max} at {int(pending.sum())} point(s) of Sigma, "
            f"e.g. {pts[pending][0]}")
    return orders, vals


def detect_types(model, k_max=6, threshold_rel=1e-4, lines=None, samples=401):
    """Left/right types of the model on its critical set inside the domain box."""
    pts = _bracket_roots(model, lines, samples)
    thr = threshold_rel * model.h_scale()
    if len(pts) == 0:
        return TypeProfile(0, 0, np.inf, np.inf, np.zeros((0, 2 * model.n)),
                           sigma_points=pts, threshold=thr)
    ro, rv = _orders(model, pts, "right", k_max, thr)
    lo, lv = _orders(model, pts, "left", k_max, thr)
    r, l = int(ro.max()), int(lo.max())
    kr = float(rv[ro == r].min())
    kl = float(lv[lo == l].min())
    attained = pts[(ro == r) | (lo == l)]
    degenerate = bool(min(rv.min(), lv.min()) < 10 * thr)
    return TypeProfile(l, r, kl, kr, attained, sigma_points=pts, left_orders=lo,
                       right_orders=ro, threshold=thr, degenerate=degenerate)


def h_along_segment(model, start, length, order=0, side="right", num=101):
    """Sample t -> (d/dt)^j h along the K-curve from ``start`` over ``[0, length]``.

    ``d/dt`` moves x_n (right) or theta_n (left) with the conjugate primed
    momentum frozen.  Returns ``(t, values)``.
    """
    start = model.check_domain(start)
    t = np.linspace(0.0, float(length), num)
    pts = curve_points(model, start, t, side)
    model.check_domain(pts)
    return t, field_power(model, pts, order, side)
