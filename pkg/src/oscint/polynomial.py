"""Sparse multivariate polynomials with exact differentiation.

Built-in phases are polynomials, so their derivatives of every order are
available in closed form.  Variables are ordered ``(x_1..x_n, theta_1..theta_n)``.
"""

from math import prod

import numpy as np


class Poly:
    """Polynomial stored as ``{exponent tuple: coefficient}``."""

    __slots__ = ("nvars", "terms")

    def __init__(self, terms, nvars):
        self.nvars = int(nvars)
        clean = {}
        for exps, c in terms.items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.nvars:
                raise ValueError(f"exponent {exps} does not match nvars={self.nvars}")
            c = float(c)
            if c != 0.0:
                clean[exps] = clean.get(exps, 0.0) + c
        self.terms = {e: c for e, c in clean.items() if c != 0.0}

    @classmethod
    def var(cls, k, nvars):
        e = [0] * nvars
        e[k] = 1
        return cls({tuple(e): 1.0}, nvars)

    @classmethod
    def const(cls, c, nvars):
        return cls({(0,) * nvars: c}, nvars)

    def _coerce(self, other):
        if isinstance(other, Poly):
            if other.nvars != self.nvars:
                raise ValueError("polynomials in different numbers of variables")
            return other
        return Poly.const(other, self.nvars)

    def __add__(self, other):
        other = self._coerce(other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0.0) + c
        return Poly(terms, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Poly({e: -c for e, c in self.terms.items()}, self.nvars)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        terms = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0.0) + c1 * c2
        return Poly(terms, self.nvars)

    __rmul__ = __mul__

    def __pow__(self, k):
        out = Poly.const(1.0, self.nvars)
        for _ in range(int(k)):
            out = out * self
        return out

    def __repr__(self):
        return f"Poly({self.terms!r}, nvars={self.nvars})"

    @property
    def degree(self):
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self):
        return not self.terms

    def deriv(self, alpha):
        """Partial derivative of multi-order ``alpha``."""
        alpha = tuple(int(a) for a in alpha)
        terms = {}
        for e, c in self.terms.items():
            if any(ei < ai for ei, ai in zip(e, alpha)):
                continue
            factor = 1.0
            for ei, ai in zip(e, alpha):
                for k in range(ai):
                    factor *= ei - k
            ne = tuple(ei - ai for ei, ai in zip(e, alpha))
            terms[ne] = terms.get(ne, 0.0) + c * factor
        return Poly(terms, self.nvars)

    def permuted(self, order):
        """Polynomial in permuted variables: new variable k is old variable ``order[k]``."""
        return Poly({tuple(e[k] for k in order): c for e, c in self.terms.items()}, self.nvars)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.nvars:
            raise ValueError(f"expected trailing dimension {self.nvars}, got {p.shape}")
        out = np.zeros(p.shape[:-1])
        if not self.terms:
            return out
        powers = _power_table(p, self.terms)
        for e, c in self.terms.items():
            out = out + c * prod((powers[k][ek] for k, ek in enumerate(e)), start=1.0)
        return out

    def outer(self, xpts, tpts, n):
        """Evaluate on the product of point sets ``xpts`` (Nx, n) and ``tpts`` (Nt, n).

        Terms are grouped by their x-exponent so the cost is a handful of rank-1
        updates instead of an elementwise evaluation on the full product grid.
        """
        xpts = np.asarray(xpts, dtype=float)
        tpts = np.asarray(tpts, dtype=float)
        groups = {}
        for e, c in self.terms.items():
            groups.setdefault(e[:n], {})[e[n:]] = c
        out = np.zeros((xpts.shape[0], tpts.shape[0]))
        for ex, tterms in groups.items():
            xv = _monomial(xpts, ex)
            tv = np.zeros(tpts.shape[0])
            for et, c in tterms.items():
                tv += c * _monomial(tpts, et)
            out += np.multiply.outer(xv, tv)
        return out


def _monomial(pts, exps):
    v = np.ones(pts.shape[0])
    for k, e in enumerate(exps):
        if e:
            v = v * pts[:, k] ** e
    return v


def _power_table(p, terms):
    maxdeg = [0] * p.shape[-1]
    for e in terms:
        for k, ek in enumerate(e):
            maxdeg[k] = max(maxdeg[k], ek)
    table = []
    for k, m in enumerate(maxdeg):
        col = p[..., k]
        pw = [np.ones_like(col)]
        for _ in range(m):
            pw.append(pw[-1] * col)
        table.append(pw)
    return table
