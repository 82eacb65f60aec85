"""Almost-orthogonality bookkeeping: Gram tables, the sqrt(A B) bound, block families."""

from dataclasses import dataclass, field

import numpy as np

from .cutoffs import BlockIndex, chi, covering_indices, enumerate_patterns
from .errors import BudgetError, GridMismatchError
from .opnorm import DiscretizedOperator, OperatorSpec, batched_l2_norm, discretize, l2_norm

MAX_BLOCKS = 4000
_BATCH_BYTES = 128 * 1024 ** 2


@dataclass
class Piece:
    """A block of a discretized operator: ``data`` occupies rows/cols starting at r0/c0."""

    index: object
    r0: int
    c0: int
    data: np.ndarray

    @property
    def rows(self):
        return range(self.r0, self.r0 + self.data.shape[0])

    @property
    def cols(self):
        return range(self.c0, self.c0 + self.data.shape[1])


@dataclass
class BlockFamily:
    pieces: list
    shape: tuple
    hbar: float = None
    spec: object = None
    dropped: int = 0

    def __len__(self):
        return len(self.pieces)

    def reassemble(self):
        M = np.zeros(self.shape, dtype=complex)
        for p in self.pieces:
            R, C = p.data.shape
            M[p.r0:p.r0 + R, p.c0:p.c0 + C] += p.data
        return M


@dataclass
class GramTables:
    a: np.ndarray
    b: np.ndarray
    A: float
    B: float
    tau: float
    norms: np.ndarray = field(default=None)


def _as_pieces(family):
    if isinstance(family, BlockFamily):
        return family.pieces, family.shape
    family = list(family)
    if not family:
        raise ValueError("empty family")
    if all(isinstance(f, Piece) for f in family):
        shape = (max(p.r0 + p.data.shape[0] for p in family), max(p.c0 + p.data.shape[1] for p in family))
        return family, shape
    mats = []
    grid0 = None
    for f in family:
        if isinstance(f, DiscretizedOperator):
            if grid0 is None:
                grid0 = f.grid
            elif not grid0.same_as(f.grid):
                raise GridMismatchError("family members are discretized on different grids")
            mats.append(f.matrix())
        else:
            mats.append(np.asarray(f, dtype=complex))
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise GridMismatchError(f"family members have different shapes: {sorted({m.shape for m in mats})}")
    return [Piece(i, 0, 0, m) for i, m in enumerate(mats)], shape


def _overlap(a0, alen, b0, blen):
    lo = max(a0, b0)
    hi = min(a0 + alen, b0 + blen)
    return lo, hi


def _product_norms(pieces, pairs, kind, rel_tol):
    """Norms of P_i^H P_j (kind 'a') or P_i P_j^H (kind 'b') for the given pairs."""
    if not pairs:
        return np.zeros(0)
    # group by the shapes of the overlap products so they can be batched
    groups = {}
    for n, (i, j) in enumerate(pairs):
        pi, pj = pieces[i], pieces[j]
        if kind == "a":
            lo, hi = _overlap(pi.r0, pi.data.shape[0], pj.r0, pj.data.shape[0])
            key = (hi - lo, pi.data.shape[1], pj.data.shape[1])
        else:
            lo, hi = _overlap(pi.c0, pi.data.shape[1], pj.c0, pj.data.shape[1])
            key = (hi - lo, pi.data.shape[0], pj.data.shape[0])
        groups.setdefault(key, []).append((n, i, j, lo, hi))
    out = np.zeros(len(pairs))
    for key, items in sorted(groups.items()):
        L, di, dj = key
        per = max(1, _BATCH_BYTES // (16 * (L * (di + dj) + di * dj + dj * dj)))
        for s in range(0, len(items), per):
            batch = items[s:s + per]
            X = np.empty((len(batch), L, di), dtype=complex)
            Y = np.empty((len(batch), L, dj), dtype=complex)
            for t, (_, i, j, lo, hi) in enumerate(batch):
                pi, pj = pieces[i], pieces[j]
                if kind == "a":
                    X[t] = pi.data[lo - pi.r0:hi - pi.r0, :]
                    Y[t] = pj.data[lo - pj.r0:hi - pj.r0, :]
                else:
                    X[t] = pi.data[:, lo - pi.c0:hi - pi.c0].T
                    Y[t] = pj.data[:, lo - pj.c0:hi - pj.c0].T
            # a: X^H Y ; b: P_i P_j^H = (Xt)^T conj(Yt) -> same norm as X^H Y up to conjugation
            prod = np.conj(np.swapaxes(X, 1, 2)) @ Y
            vals = batched_l2_norm(prod, rel_tol=rel_tol)
            for t, (n, *_rest) in enumerate(batch):
                out[n] = vals[t]
    return out


def gram_tables(family, rel_tol=1e-13, max_distance=None):
    """a(i,j) = |T_i^* T_j|, b(i,j) = |T_i T_j^*| and the sup-sums A, B.

    a(i, j) vanishes exactly when the row (x) supports are disjoint and b(i, j)
    when the column (theta) supports are; such pairs are never multiplied.
    ``max_distance`` optionally skips block pairs whose indices differ by more.
    """
    pieces, _ = _as_pieces(family)
    m = len(pieces)
    pairs_a, pairs_b = [], []
    for i in range(m):
        pi = pieces[i]
        for j in range(i, m):
            pj = pieces[j]
            if max_distance is not None and isinstance(pi.index, BlockIndex):
                d = max(abs(u - v) for u, v in zip(pi.index.X + pi.index.Theta, pj.index.X + pj.index.Theta))
                if d > max_distance:
                    continue
            lo, hi = _overlap(pi.r0, pi.data.shape[0], pj.r0, pj.data.shape[0])
            if hi > lo:
                pairs_a.append((i, j))
            lo, hi = _overlap(pi.c0, pi.data.shape[1], pj.c0, pj.data.shape[1])
            if hi > lo:
                pairs_b.append((i, j))
    a = np.zeros((m, m))
    b = np.zeros((m, m))
    for table, pairs, kind in ((a, pairs_a, "a"), (b, pairs_b, "b")):
        vals = _product_norms(pieces, pairs, kind, rel_tol)
        for (i, j), v in zip(pairs, vals):
            table[i, j] = table[j, i] = v
    A = float(np.max(np.sum(np.sqrt(a), axis=1))) if m else 0.0
    B = float(np.max(np.sum(np.sqrt(b), axis=1))) if m else 0.0
    norms = np.sqrt(np.diag(a))
    return GramTables(a, b, A, B, float(norms.max()) if m else 0.0, norms)


def cotlar_bound(tables):
    return float(np.sqrt(tables.A * tables.B))


# -- block decomposition ----------------------------------------------------------

def _window_rows(nodes, hbar, k):
    w = chi(nodes / hbar - k)
    nz = np.nonzero(w)[0]
    if nz.size == 0:
        return None
    a, b = int(nz[0]), int(nz[-1]) + 1
    return a, b, w[a:b]


def block_decompose(op, max_blocks=MAX_BLOCKS, keep_zero=False, hbar=None):
    """Split an operator into pieces kernel * chi(x/hbar - X) chi(theta/hbar - Theta).

    Normally ``op`` is a shell operator and the window scale is its hbar; any
    other operator needs the scale passed explicitly.

    The pieces are weighted like ``op.matrix()`` so their spectral norms
    approximate continuum L2 norms; by the partition of unity they sum to it.
    """
    spec = op.spec
    if op.n != 1:
        raise NotImplementedError("block decomposition is implemented for n = 1")
    hbar = spec.hbar if hbar is None else hbar
    if hbar is None:
        raise ValueError("window scale hbar is needed for a full operator")
    xs = op.grid.x_axes[0]
    ts = op.grid.theta_axes[0]
    Xs = covering_indices(xs[0], xs[-1], hbar)
    Ts = covering_indices(ts[0], ts[-1], hbar)
    if len(Xs) * len(Ts) > max_blocks:
        raise BudgetError(f"{len(Xs) * len(Ts)} candidate blocks exceed max_blocks={max_blocks}")
    K = op.matrix()
    rws = {X: _window_rows(xs, hbar, X) for X in Xs}
    cls = {T: _window_rows(ts, hbar, T) for T in Ts}
    pieces = []
    dropped = 0
    for X in Xs:
        rw = rws[X]
        if rw is None:
            continue
        ra, rb, wr = rw
        for T in Ts:
            cw = cls[T]
            if cw is None:
                continue
            ca, cb, wc = cw
            data = K[ra:rb, ca:cb] * np.multiply.outer(wr, wc)
            if not keep_zero and not np.any(data):
                dropped += 1
                continue
            pieces.append(Piece(BlockIndex((X,), (T,)), ra, ca, data))
    return BlockFamily(pieces, K.shape, hbar=hbar, spec=spec, dropped=dropped)


def x_span(family):
    """Largest number of consecutive-range X indices carrying pieces in one Theta column."""
    cols = {}
    for p in family.pieces:
        cols.setdefault(p.index.Theta, []).append(p.index.X[0])
    if not cols:
        return 0
    return max(max(v) - min(v) + 1 for v in cols.values())


def _lab(p):
    return "" if p is None else p.label()


def pattern_pairs(l, r):
    return [(sr, sl) for sr in enumerate_patterns("right", r) for sl in enumerate_patterns("left", l)]


def orthogonality_profile(model, lam, hbar, sign=1, profile=None, max_blocks=MAX_BLOCKS,
                          grid_kw=None, rel_tol=1e-13, localization="shell"):
    """Empirical A, B over the block families of every sign-pattern piece of a shell.

    ``localization="full"`` windows the whole operator at scale hbar instead,
    which is the meaningful family when h never vanishes.
    """
    grid_kw = dict(grid_kw or {})
    if profile is None:
        l, r = model.params.get("l"), model.params.get("r")
        if not l or not r:
            from .phase import detect_types
            t = detect_types(model)
            l, r = t.l, t.r
    else:
        l, r = profile
    if localization == "shell":
        base = OperatorSpec(model, lam, "shell", hbar=hbar, sign=sign)
    else:
        base = OperatorSpec(model, lam)
    shell_op = discretize(base, **grid_kw)
    grid = shell_op.grid
    rows = []
    pairs = pattern_pairs(max(l, 1), max(r, 1)) if localization == "shell" else [(None, None)]
    for sr, sl in pairs:
        spec = base.with_(right_pattern=sr, left_pattern=sl)
        op = discretize(spec, grid=grid, **{k: v for k, v in grid_kw.items()
                                             if k in ("cache_bytes", "threads")})
        fam = block_decompose(op, max_blocks=max_blocks, hbar=hbar)
        if len(fam) == 0:
            rows.append(dict(right=_lab(sr), left=_lab(sl), blocks=0, A=0.0, B=0.0, tau=0.0,
                             bound=0.0, norm=0.0, x_span=0))
            continue
        tab = gram_tables(fam, rel_tol=rel_tol)
        rows.append(dict(right=_lab(sr), left=_lab(sl), blocks=len(fam), A=tab.A, B=tab.B,
                         tau=tab.tau, bound=cotlar_bound(tab),
                         norm=l2_norm(fam.reassemble(), rel_tol=1e-12, block=8), x_span=x_span(fam)))
    n = model.n
    tau_formula = float(np.sqrt(min(lam ** -n / hbar, lam ** (-n + 1) * hbar ** 2)))
    A = max(rw["A"] for rw in rows)
    B = max(rw["B"] for rw in rows)
    tau = max(rw["tau"] for rw in rows)
    return dict(
        model=model.name, lam=float(lam), hbar=float(hbar), sign=sign, l=l, r=r,
        localization=localization,
        A=A, B=B, tau=tau, tau_formula=tau_formula,
        A_over_tau=A / tau if tau > 0 else 0.0, B_over_tau=B / tau if tau > 0 else 0.0,
        predictions={"nonorthogonal": 1.0, "lam_hbar3": 1.0 / (lam * hbar ** 3),
                     "hbar_power": hbar ** (-1 + 1 / max(r, 1))},
        blocks=sum(rw["blocks"] for rw in rows), x_span=max(rw["x_span"] for rw in rows),
        operator_norm=l2_norm(shell_op, rel_tol=1e-12, block=8), pieces=rows)
