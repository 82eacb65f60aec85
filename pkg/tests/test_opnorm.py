import numpy as np
import pytest

from oscint.cutoffs import PHI, SignPattern, beta
from oscint.errors import ResolutionError
from oscint.opnorm import (
    Grid, OperatorSpec, batched_l2_norm, discretize, interpolate_bound, l1_linf_norms, l1_norm,
    l2_norm, linf_norm, required_points, schur_bound, tree_sum,
)
from oscint.phase import fold2, get_model, nondegenerate, type_lr


def _dense(op):
    return np.linalg.norm(op.matrix(), 2)


def test_kernel_matches_direct_formula():
    m = fold2()
    op = discretize(OperatorSpec(m, 40.0, "shell", hbar=0.5, sign=-1), n_points=60)
    K = op.kernel()
    x, t = op.grid.x_axes[0], op.grid.theta_axes[0]
    X, T = np.meshgrid(x, t, indexing="ij")
    P = np.stack([X, T], axis=-1)
    h = 1 - 2 * (X - T)
    s = -h / 0.5
    env = m.amplitude(P) * np.where(s > 0, beta(s), 0.0)
    direct = np.exp(1j * 40.0 * (X * T + (X - T) ** 3 / 3)) * env
    np.testing.assert_allclose(K, direct, atol=1e-12)


def test_spec_validation():
    m = fold2()
    with pytest.raises(ValueError):
        OperatorSpec(m, -1.0)
    with pytest.raises(ValueError):
        OperatorSpec(m, 10.0, "shell", hbar=2.0)
    with pytest.raises(ValueError):
        OperatorSpec(m, 10.0, "shell", hbar=0.5, sign=0)
    with pytest.raises(ValueError):
        OperatorSpec(m, 10.0, "bar")
    with pytest.raises(ValueError):
        OperatorSpec(m, 10.0, "wedge")
    with pytest.raises(ValueError):
        OperatorSpec(m, 10.0, right_pattern=SignPattern("left", ()))


@pytest.mark.parametrize("spec,n_points", [
    (OperatorSpec(fold2(), 64.0), None),
    (OperatorSpec(type_lr(2, 3), 100.0, "shell", hbar=0.125), None),
    (OperatorSpec(nondegenerate(), 0.0), None),
    (OperatorSpec(get_model("fold2", n=2), 4.0), 24),
])
def test_l2_norm_against_dense_svd(spec, n_points):
    op = discretize(spec, n_points=n_points)
    ref = _dense(op)
    assert l2_norm(op, rel_tol=1e-12) == pytest.approx(ref, rel=1e-6)
    assert l2_norm(op, rel_tol=1e-12, block=4) == pytest.approx(ref, rel=1e-6)
    assert l2_norm(op.matrix(), rel_tol=1e-12) == pytest.approx(ref, rel=1e-6)


def test_matrix_free_path_matches_cached():
    spec = OperatorSpec(type_lr(2, 2), 50.0, "shell", hbar=0.25)
    a = discretize(spec, threads=1)
    b = discretize(spec, cache_bytes=0, threads=3)
    assert a.cached and not b.cached
    u = np.random.default_rng(0).standard_normal(a.shape[1])
    np.testing.assert_allclose(a.matvec(u), b.matvec(u), atol=1e-12)
    np.testing.assert_allclose(a.rmatvec(u[:a.shape[0]]), b.rmatvec(u[:a.shape[0]]), atol=1e-12)
    np.testing.assert_allclose(a.normal_apply(u), b.normal_apply(u), atol=1e-12)
    assert l1_linf_norms(a) == pytest.approx(l1_linf_norms(b), rel=1e-13)
    assert l2_norm(a, rel_tol=1e-10) == pytest.approx(l2_norm(b, rel_tol=1e-10), rel=1e-9)


def test_thread_count_does_not_change_bits():
    spec = OperatorSpec(fold2(), 128.0)
    vals = {discretize(spec, cache_bytes=0, threads=t).abs_sums()[1].tobytes() for t in (1, 2, 5)}
    assert len(vals) == 1
    vals = {l2_norm(discretize(spec, cache_bytes=0, threads=t)) for t in (1, 4)}
    assert len(vals) == 1


def test_matvec_is_quadrature():
    op = discretize(OperatorSpec(fold2(), 30.0), n_points=80)
    u = np.cos(op.grid.theta_axes[0])
    direct = op.kernel() @ u * op.dtheta
    np.testing.assert_allclose(op.matvec(u), direct, atol=1e-13)


def test_l1_linf_direct():
    op = discretize(OperatorSpec(type_lr(2, 3), 60.0, "shell", hbar=0.25))
    A = np.abs(op.kernel())
    assert l1_norm(op) == pytest.approx(A.sum(axis=0).max() * op.dx, rel=1e-13)
    assert linf_norm(op) == pytest.approx(A.sum(axis=1).max() * op.dtheta, rel=1e-13)
    assert schur_bound(op) >= _dense(op) * (1 - 1e-12)


def test_l2_converges_in_grid():
    spec = OperatorSpec(fold2(), 64.0)
    base = l2_norm(discretize(spec), rel_tol=1e-10)
    fine = l2_norm(discretize(spec, points_per_wavelength=16), rel_tol=1e-10)
    assert base == pytest.approx(fine, rel=2e-3)


def test_shell_signs_and_dyadic_sum():
    m = fold2()
    grid = discretize(OperatorSpec(m, 50.0, "shell", hbar=0.125)).grid
    k = lambda **kw: discretize(OperatorSpec(m, 50.0, **kw), grid=grid).kernel()
    both = k(localization="shell", hbar=0.25, sign=1) + k(localization="shell", hbar=0.25, sign=-1)
    X, T = np.meshgrid(grid.x_axes[0], grid.theta_axes[0], indexing="ij")
    h = 1 - 2 * (X - T)
    np.testing.assert_allclose(np.abs(both), np.abs(k()) * beta(h / 0.25), atol=1e-13)
    # bar(hbar) plus shells at 2 hbar .. 2^J hbar equals bar(2^J hbar)
    total = k(localization="bar", hbar=0.125)
    for j in (1, 2, 3):
        hb = 0.125 * 2 ** j
        if hb <= 1:
            total = total + k(localization="shell", hbar=hb, sign=1) + k(localization="shell", hbar=hb, sign=-1)
    np.testing.assert_allclose(total, k(localization="bar", hbar=1.0), atol=1e-13)
    np.testing.assert_allclose(np.abs(k(localization="bar", hbar=1.0)), np.abs(k()) * PHI(h), atol=1e-13)


def test_resolution_guard():
    spec = OperatorSpec(fold2(), 4096.0)
    with pytest.raises(ResolutionError, match="lambda cap"):
        discretize(spec)
    with pytest.raises(ResolutionError, match="max_points"):
        discretize(OperatorSpec(fold2(), 1024.0), max_points=1000)


def test_required_points_scale_with_lambda():
    m = fold2()
    a = required_points(OperatorSpec(m, 100.0))
    b = required_points(OperatorSpec(m, 200.0))
    assert np.all(b >= 2 * a - 2)
    s = required_points(OperatorSpec(m, 1.0, "shell", hbar=1 / 64))
    assert np.all(s > 100)


def test_grid_helpers():
    g = Grid.on_box(np.array([0.0, -1.0]), np.array([1.0, 1.0]), 1, [4, 8])
    np.testing.assert_allclose(g.x_axes[0], [0.125, 0.375, 0.625, 0.875])
    assert g.dx == pytest.approx(0.25) and g.dtheta == pytest.approx(0.25)
    assert g.shape == (4, 8)
    assert g.same_as(Grid.on_box(np.array([0.0, -1.0]), np.array([1.0, 1.0]), 1, [4, 8]))


def test_batched_norms_against_svd():
    rng = np.random.default_rng(5)
    S = rng.standard_normal((50, 6, 9)) + 1j * rng.standard_normal((50, 6, 9))
    S[3] = 0
    S[7] *= 1e-200
    # nearly repeated top singular values converge through the squaring stage
    U, _, Vh = np.linalg.svd(S[10])
    S[10] = U @ np.diag([1.0, 1 - 1e-7, 0.5, 0.1, 0.1, 0.0]) @ Vh[:6]
    ref = np.linalg.norm(S, 2, axis=(1, 2))
    got = batched_l2_norm(S)
    np.testing.assert_allclose(got, ref, rtol=1e-6, atol=0)
    assert got[3] == 0.0


def test_interpolate_bound():
    assert interpolate_bound(1.0, 2.0, 3.0, 2) == 2.0
    assert interpolate_bound(4.0, 2.0, 9.0, 1) == pytest.approx(4.0)
    assert interpolate_bound(4.0, 2.0, 9.0, np.inf) == pytest.approx(9.0)
    # Riesz-Thorin between 1 and 2: theta = 2 (1 - 1/p)
    p = 4 / 3
    th = 2 * (1 - 1 / p)
    assert interpolate_bound(4.0, 2.0, 9.0, p) == pytest.approx(4.0 ** (1 - th) * 2.0 ** th)
    with pytest.raises(ValueError):
        interpolate_bound(1, 1, 1, 0.5)


def test_tree_sum_order():
    parts = [np.float64(x) for x in (1e16, 1.0, -1e16, 1.0)]
    assert tree_sum(parts) == (parts[0] + parts[1]) + (parts[2] + parts[3])
    with pytest.raises(ValueError):
        tree_sum([])


def test_kernel_spot_value_high_frequency():
    m = fold2()
    op = discretize(OperatorSpec(m, 256.0), cache_bytes=0)
    i, j = 137, 402
    x, t = op.grid.x_axes[0][i], op.grid.theta_axes[0][j]
    S = x * t + (x - t) ** 3 / 3
    direct = np.exp(1j * 256.0 * S) * m.amplitude(np.array([x, t]))
    assert op.rows(i, i + 1)[0, j] == pytest.approx(direct, abs=1e-12)
