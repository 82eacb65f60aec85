import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oscint.cutoffs import (
    BlockIndex, PHI, active_blocks, bar_cutoff, beta, chi, covering_indices, dyadic_weights,
    enumerate_patterns, fine_window, make_bump, rho, shell_cutoff, sign_weight, smooth_step,
    SignPattern,
)
from oscint.phase import fold2, get_model, type_lr

reals = st.floats(-50, 50, allow_nan=False)


def test_bump_plateau_and_support():
    b = make_bump(1.0, 2.0)
    t = np.linspace(-3, 3, 601)
    v = b(t)
    assert np.all(v[np.abs(t) <= 1] == 1.0)
    assert np.all(v[np.abs(t) >= 2] == 0.0)
    assert np.all((v >= 0) & (v <= 1))
    np.testing.assert_allclose(b(t) + b.reflected(t), 1.0, atol=1e-15)


def test_make_bump_rejects_bad_radii():
    with pytest.raises(ValueError):
        make_bump(2.0, 1.0)
    with pytest.raises(ValueError):
        make_bump(0.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(u=reals)
def test_smooth_step_complement(u):
    assert abs(smooth_step(u) + smooth_step(1 - u) - 1.0) <= 1e-15


@settings(max_examples=100, deadline=None)
@given(t=reals)
def test_rho_partition(t):
    assert abs(rho(t) + rho(-t) - 1.0) <= 1e-15


@settings(max_examples=100, deadline=None)
@given(t=reals, J=st.integers(1, 12))
def test_dyadic_telescoping(t, J):
    bar, shells = dyadic_weights(t, J)
    assert len(shells) == J
    assert abs(bar + sum(shells) - PHI(t * 2.0 ** -J)) <= 1e-13


def test_beta_support():
    s = np.linspace(-5, 5, 1001)
    b = beta(s)
    assert np.all(b[np.abs(s) < 0.5] == 0)
    assert np.all(b[np.abs(s) > 2] == 0)
    np.testing.assert_allclose(shell_cutoff(s, 1) + shell_cutoff(s, -1), b, atol=0)
    assert np.all(shell_cutoff(s, 1)[s < 0] == 0)
    np.testing.assert_array_equal(bar_cutoff(s), PHI(s))


@settings(max_examples=100, deadline=None)
@given(s=reals)
def test_chi_partition_of_unity(s):
    ks = np.arange(np.floor(s) - 3, np.floor(s) + 4)
    assert abs(np.sum(chi(s - ks)) - 1.0) <= 1e-14
    if abs(s) >= 1:
        assert chi(s) == 0.0


def test_sign_patterns_partition():
    m = type_lr(3, 3)
    rng = np.random.default_rng(0)
    p = rng.uniform(m.support_lower, m.support_upper, size=(200, 2))
    for side in ("right", "left"):
        pats = enumerate_patterns(side, 3)
        assert len(pats) == 4
        total = sum(sign_weight(m, p, 0.1, pat) for pat in pats)
        np.testing.assert_allclose(total, 1.0, atol=1e-14)
    assert enumerate_patterns("right", 1)[0].label() == "()"
    with pytest.raises(ValueError):
        SignPattern("up", (1,))
    with pytest.raises(ValueError):
        SignPattern("left", (2,))


def test_sign_weight_two_dimensional_partition():
    m = get_model("type_lr", 2, 2, n=2, warp=0.2)
    rng = np.random.default_rng(1)
    p = rng.uniform(m.support_lower, m.support_upper, size=(50, 4))
    total = sum(sign_weight(m, p, 0.2, pat) for pat in enumerate_patterns("right", 2))
    np.testing.assert_allclose(total, 1.0, atol=1e-14)


def test_fine_windows_sum_to_one():
    m = fold2()
    hb = 0.25
    rng = np.random.default_rng(2)
    p = rng.uniform(m.support_lower, m.support_upper, size=(100, 2))
    blocks = active_blocks(m, hb)
    total = sum(fine_window(m, p, hb, b) for b in blocks)
    np.testing.assert_allclose(total, 1.0, atol=1e-13)
    assert BlockIndex((0,), (1,)) < BlockIndex((1,), (0,))


def test_fine_window_two_dimensional():
    m = get_model("fold2", n=2)
    hb = 0.5
    p = np.array([[0.1, 0.3, -0.2, -0.1]])
    from oscint.cutoffs import left_coords, right_coords
    rc, lc = right_coords(m, p)[0], left_coords(m, p)[0]
    total = 0.0
    for X0 in covering_indices(rc[0] - 1, rc[0] + 1, hb):
        for X1 in covering_indices(rc[1] - 1, rc[1] + 1, hb):
            for T0 in covering_indices(lc[0] - 1, lc[0] + 1, hb):
                for T1 in covering_indices(lc[1] - 1, lc[1] + 1, hb):
                    total += fine_window(m, p, hb, BlockIndex((X0, X1), (T0, T1)))[0]
    assert abs(total - 1.0) <= 1e-13


def test_covering_indices_exact():
    hb = 0.25
    ks = covering_indices(-0.3, 0.6, hb)
    v = np.linspace(-0.3, 0.6, 2001)
    hit = {k for k in range(-10, 10) if np.any(chi(v / hb - k) > 0)}
    assert set(ks) == hit


def test_dyadic_example_and_centre():
    bar, shells = dyadic_weights(3.0, 4)
    assert bar == 0.0
    assert shells[0] == pytest.approx(PHI(1.5))
    assert bar + sum(shells) == pytest.approx(1.0, abs=1e-15)
    bar, shells = dyadic_weights(0.0, 3)
    assert bar == 1.0 and all(s == 0.0 for s in shells)
    rng = np.random.default_rng(7)
    for t, J in zip(rng.uniform(-200, 200, 10_000), rng.integers(1, 10, 10_000)):
        bar, shells = dyadic_weights(t, J)
        assert abs(bar + sum(shells) - PHI(t * 2.0 ** -J)) <= 1e-14


def test_sign_weight_far_from_boundary():
    # type_lr(2, 2): K_R h = d_x (x^2 - theta^2) = 2x
    m = type_lr(2, 2)
    hb = 0.01
    p = np.array([[5 * hb, 0.3]])
    assert sign_weight(m, p, hb, SignPattern("right", (1,)))[0] == 1.0
    assert sign_weight(m, p, hb, SignPattern("right", (-1,)))[0] == 0.0
    assert sign_weight(fold2(), fold2().center, hb, SignPattern("right", ())) == 1.0


def test_window_count_scales_inverse_square():
    m = fold2()
    c4, c5 = len(active_blocks(m, 2.0 ** -4)), len(active_blocks(m, 2.0 ** -5))
    assert 3.6 <= c5 / c4 <= 4.4
    assert chi(3.0) == 0.0


def test_partition_gradients_scale_like_inverse_hbar():
    m = type_lr(2, 3)
    x = np.linspace(m.support_lower[0], m.support_upper[0], 20001)
    p = np.stack([x, np.full_like(x, 0.2)], axis=1)
    scaled = []
    for k in range(2, 9):
        hb = 2.0 ** -k
        w = sign_weight(m, p, hb, SignPattern("right", (1, 1)))
        g = np.max(np.abs(np.diff(w) / np.diff(x)))
        win = chi(x / hb - 1)
        gw = np.max(np.abs(np.diff(win) / np.diff(x)))
        scaled.append((g * hb, gw * hb))
    scaled = np.array(scaled)
    assert np.all(scaled < 50)
    assert scaled[:, 1].max() / scaled[:, 1].min() < 1.2


def test_shell_and_bar_supports():
    s = np.linspace(-4, 4, 8001)
    assert np.all(np.abs(s[shell_cutoff(s, 1) != 0]) >= 0.5)
    assert np.all(s[shell_cutoff(s, 1) != 0] <= 2)
    assert np.all(np.abs(s[bar_cutoff(s) != 0]) <= 2)
