import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import Polynomial

from oscint.errors import PreconditionError
from oscint.sublevel import (
    certify_kappa, measure_by_sampling, sign_intervals, sublevel_bound, sublevel_set,
)


def test_linear_exact():
    res = sublevel_set([0.0, 1.0], (-1, 1), 0.25, 1)
    assert res.count == 1
    a, b, sig = res.intervals[0]
    assert a == pytest.approx(-0.25) and b == pytest.approx(0.25) and sig == ()


def test_quadratic_two_pieces():
    res = sublevel_set([-0.04, 0.0, 1.0], (-1, 1), 0.05, 2)
    # |t^2 - 0.04| < 0.05  <=>  t^2 < 0.09
    assert res.count == 2
    assert res.measure == pytest.approx(0.6, abs=1e-12)
    assert [s for *_, s in res.intervals] == [(-1,), (1,)]
    assert max(res.lengths) <= sublevel_bound(2, 2.0, 0.05)


def test_cubic_sign_pieces():
    # h = t^3 - t/4 has h'' = 6t and h' = 3t^2 - 1/4
    pieces = sign_intervals([0.0, -0.25, 0.0, 1.0], (-1, 1), 3)
    assert len(pieces) == 4
    cuts = sorted({a for a, _, _ in pieces} | {b for _, b, _ in pieces})
    np.testing.assert_allclose(cuts, [-1, -np.sqrt(1 / 12), 0, np.sqrt(1 / 12), 1], atol=1e-12)
    assert [s for *_, s in pieces] == [(1, -1), (-1, -1), (-1, 1), (1, 1)]


def test_bound_formula():
    assert sublevel_bound(1, 2.0, 0.5) == pytest.approx(0.5)
    assert sublevel_bound(3, 6.0, 1 / 8) == pytest.approx((2.0 * 6 / 6) ** (1 / 3) / 2)
    with pytest.raises(ValueError):
        sublevel_bound(0, 1.0, 0.1)


def test_precondition_violations():
    with pytest.raises(PreconditionError):
        sublevel_set([0.0, 0.0, 0.0, 1.0], (-1, 1), 0.1, 1)      # h' = 3t^2 vanishes at 0
    with pytest.raises(PreconditionError):
        certify_kappa(Polynomial([0, 0, 1, 1]), (-1, 1), 2)     # h'' = 2 + 6t changes sign
    with pytest.raises(PreconditionError):
        sublevel_set([0.0, 1.0], (-1, 1), 0.1, 1, kappa=2.0)
    with pytest.raises(ValueError):
        sublevel_set([0.0, 1.0], (1, -1), 0.1, 1)


def test_certify_kappa_refines_minimum():
    # h'' = 2 + 2 (t - 0.3)^2, minimum 2 at t = 0.3
    h = Polynomial([0, 0, 1.09, -0.2, 1 / 6])
    kappa = certify_kappa(h, (-1, 1), 2)
    dense = np.min(np.abs(h.deriv(2)(np.linspace(-1, 1, 100001))))
    assert kappa == pytest.approx(2.0, abs=1e-9)
    assert kappa <= dense + 1e-12


@settings(max_examples=60, deadline=None)
@given(roots=st.lists(st.floats(-1.5, 1.5), min_size=1, max_size=3),
       scale=st.floats(0.2, 5.0), j=st.integers(1, 10))
def test_matches_sampling_oracle(roots, scale, j):
    h = scale * Polynomial.fromroots(roots)
    r = len(roots)
    kappa = certify_kappa(h, (-1, 1), r)
    hb = 2.0 ** -j
    res = sublevel_set(h, (-1, 1), hb, r, kappa)
    assert res.count <= 2 ** (r - 1)
    lim = sublevel_bound(r, kappa, hb)
    assert all(L <= lim * (1 + 1e-12) for L in res.lengths)
    m, dt = measure_by_sampling(h, (-1, 1), hb, samples=40_000)
    assert abs(m - res.measure) <= 2 * (res.count + 1) * dt
    # every reported interval really is in the sublevel set
    for a, b, _ in res.intervals:
        t = np.linspace(a, b, 50)[1:-1]
        assert np.all(np.abs(h(t)) < hb * (1 + 1e-9))


def test_small_examples():
    res = sublevel_set([0.0, 1.0], (-1, 1), 0.1, 1, kappa=1.0)
    assert res.count == 1 and res.lengths[0] == pytest.approx(0.2)
    assert res.lengths[0] <= sublevel_bound(1, 1.0, 0.1) * (1 + 1e-12)
    res = sublevel_set([0.0, 0.0, 1.0], (-1, 1), 0.01, 2, kappa=2.0)
    assert res.count == 2
    np.testing.assert_allclose(res.lengths, [0.1, 0.1], atol=1e-12)
    assert res.intervals[0][1] == res.intervals[1][0]
    assert max(res.lengths) <= np.sqrt(2) * 0.1
    assert sublevel_bound(2, 2.0, 0.02) > sublevel_bound(2, 2.0, 0.01) > sublevel_bound(2, 4.0, 0.01)
