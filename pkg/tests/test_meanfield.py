"""Full particle flow: predictor, velocity, symmetrization, projections."""

import numpy as np
import pytest

from mfflow import (
    OrthogonalTransform,
    ParticleCloud,
    QuadratureSpec,
    RandomSource,
    SplitDims,
    TargetSpec,
    batch_loss,
    compose_disintegration,
    init_cloud,
    invariance_defect,
    odd_part_loss_gap,
    perp_dependence_scan,
    predict,
    project_to_angles,
    reduced_predict,
    sample_uniform_sphere,
    sphere_batch,
    step,
    symmetrize_batch,
    symmetrize_cloud,
    velocity,
)
from mfflow.errors import (
    DegenerateParticleError,
    GroupTooLargeError,
    NumericalBlowupError,
)
from mfflow.meanfield import (
    coordinate_permutation,
    group_closure,
    neg_identity,
    reflection,
    transform_cloud,
)

DIMS6 = SplitDims(6, 2)


def make_cloud(m=5, dims=DIMS6, seed=42):
    return init_cloud(m, dims, RandomSource(seed).split(0))


def rotation_2d(angle: float, d: int, i: int = 0, j: int = 1) -> OrthogonalTransform:
    m = np.eye(d)
    c, s = np.cos(angle), np.sin(angle)
    m[i, i] = c
    m[i, j] = -s
    m[j, i] = s
    m[j, j] = c
    return OrthogonalTransform(m)


# ---- init and predictor ----


def test_init_exact_cone():
    cloud = make_cloud(m=200)
    assert cloud.cone_defect() <= 1e-12
    assert set(np.unique(cloud.a)) == {-1.0, 1.0}
    assert np.max(np.abs(np.linalg.norm(cloud.b, axis=1) - 1.0)) <= 1e-12


def test_init_deterministic():
    a = make_cloud(seed=5)
    b = make_cloud(seed=5)
    assert np.array_equal(a.a, b.a) and np.array_equal(a.b, b.b)


def test_init_rejects_m0():
    with pytest.raises(ValueError):
        init_cloud(0, DIMS6, RandomSource(0))


def test_predict_opposed_pair_is_abs():
    # atoms (1, e1) and (1, -e1): f(x) = (relu(x1) + relu(-x1)) / 2 = |x1| / 2
    e1 = np.zeros(6)
    e1[0] = 1.0
    cloud = ParticleCloud(a=np.array([1.0, 1.0]), b=np.stack([e1, -e1]), dims=DIMS6)
    for t in (-0.7, 0.0, 0.3):
        x = t * e1 + 0.1 * np.roll(e1, 2)
        assert predict(cloud, x) == pytest.approx(abs(t) / 2, abs=1e-15)


def test_predict_batch_matches_single():
    cloud = make_cloud()
    xs = sphere_batch(9, 6, RandomSource(1))
    vals = predict(cloud, xs)
    assert vals.shape == (9,)
    for i in range(9):
        assert vals[i] == pytest.approx(predict(cloud, xs[i]), abs=1e-15)


# ---- targets ----


def test_target_norm_on_subspace():
    tgt = TargetSpec.norm_on_subspace(DIMS6)
    x = np.array([[3.0, 4.0, 9.0, 9.0, 9.0, 9.0]])
    assert tgt(x)[0] == pytest.approx(5.0, abs=1e-14)


def test_target_odd_linear_values_and_oddness():
    v = np.eye(6)[0]
    u = np.eye(6)[1]
    tgt = TargetSpec.odd_linear(np.stack([v, u]), [1.0, 0.5], [1, 3])
    x = sphere_batch(20, 6, RandomSource(2))
    np.testing.assert_allclose(tgt(x), x[:, 0] + 0.5 * x[:, 1] ** 3, atol=1e-14)
    np.testing.assert_allclose(tgt(-x), -tgt(x), atol=1e-14)


def test_target_rejects_even_power():
    with pytest.raises(ValueError, match="odd"):
        TargetSpec.odd_linear(np.eye(3)[0], [1.0], [2])


def test_target_custom_callback():
    tgt = TargetSpec.custom(lambda x: x[:, 0] ** 2)
    assert tgt(np.array([[2.0, 0.0]]))[0] == pytest.approx(4.0)


def test_target_rejects_unknown_kind():
    with pytest.raises(ValueError):
        TargetSpec(kind="mystery")


# ---- velocity ----


def test_velocity_zero_direction_particle():
    # sigma(0) = 0 and the zero subgradient kill both components.
    b = np.zeros((1, 6))
    cloud = ParticleCloud(a=np.array([1.3]), b=b, dims=DIMS6)
    va, vb = velocity(cloud, TargetSpec.norm_on_subspace(DIMS6), sphere_batch(32, 6, RandomSource(3)))
    assert va[0] == 0.0
    assert np.all(vb[0] == 0.0)


def test_velocity_zero_residual():
    cloud = make_cloud()
    frozen = predict  # capture module fn
    tgt = TargetSpec.custom(lambda x, c=cloud: frozen(c, x))
    batch = sphere_batch(32, 6, RandomSource(4))
    va, vb = velocity(cloud, tgt, batch)
    assert np.max(np.abs(va)) <= 1e-14
    assert np.max(np.abs(vb)) <= 1e-14


def test_velocity_matches_finite_differences():
    # velocity_j = -m * central difference of the batch loss in (a_j, b_j),
    # valid away from kink crossings (batch margin checked below).
    dims = DIMS6
    cloud = make_cloud(m=5)
    tgt = TargetSpec.norm_on_subspace(dims)
    batch = sphere_batch(64, 6, RandomSource(42).split(1))
    assert np.min(np.abs(batch @ cloud.b.T)) > 1e-4  # smooth-point margin
    va, vb = velocity(cloud, tgt, batch)
    h, m = 1e-5, cloud.m

    def loss_of(a, b):
        return batch_loss(ParticleCloud(a=a, b=b, dims=dims), tgt, batch)

    for j in range(m):
        ap, am = cloud.a.copy(), cloud.a.copy()
        ap[j] += h
        am[j] -= h
        fd = -(loss_of(ap, cloud.b) - loss_of(am, cloud.b)) / (2 * h) * m
        assert abs(fd - va[j]) <= 1e-6 * max(abs(va[j]), 1e-10)
        for k in range(dims.d):
            bp, bm = cloud.b.copy(), cloud.b.copy()
            bp[j, k] += h
            bm[j, k] -= h
            fd = -(loss_of(cloud.a, bp) - loss_of(cloud.a, bm)) / (2 * h) * m
            assert abs(fd - vb[j, k]) <= 1e-6 * max(np.linalg.norm(vb[j]), 1e-10)


@pytest.mark.parametrize(
    "gen,target_kind",
    [("reflection", "invariant"), ("neg", "anti")],
)
def test_velocity_conjugacy(gen, target_kind):
    # On a symmetrized batch, velocity at (s a, T b) is (s va, T vb).
    dims = DIMS6
    cloud = make_cloud(m=6)
    if gen == "reflection":
        tr = reflection(6, 5)
        tgt = TargetSpec.norm_on_subspace(dims)
    else:
        tr = neg_identity(6)
        tgt = TargetSpec.odd_linear(np.eye(6)[0], [1.0])
    batch = symmetrize_batch(sphere_batch(40, 6, RandomSource(6)), [tr])
    va, vb = velocity(cloud, tgt, batch)
    moved = transform_cloud(cloud, tr.matrix, tr.sign)
    va2, vb2 = velocity(moved, tgt, batch)
    np.testing.assert_allclose(va2, tr.sign * va, atol=1e-12)
    np.testing.assert_allclose(vb2, vb @ tr.matrix.T, atol=1e-12)


# ---- step ----


def test_step_eta_zero_is_identity():
    cloud = make_cloud()
    out = step(cloud, TargetSpec.norm_on_subspace(DIMS6), 0.0, sphere_batch(16, 6, RandomSource(7)))
    assert np.array_equal(out.a, cloud.a) and np.array_equal(out.b, cloud.b)


def test_step_blowup_raises_with_iteration():
    cloud = make_cloud()
    tgt = TargetSpec.norm_on_subspace(DIMS6)
    batch = sphere_batch(16, 6, RandomSource(8))
    c = cloud
    with pytest.raises(NumericalBlowupError) as exc:
        for k in range(50):
            c = step(c, tgt, 1e200, batch, iteration=k)
    assert exc.value.iteration is not None
    assert "iteration" in str(exc.value)


def test_step_cone_drift_first_order():
    # Fixed batch run: conservation defect of |a| - ||b|| stays <= 1e-3 and
    # halves when the step size is halved (second-order per-step error).
    dims = SplitDims(10, 3)
    cloud = init_cloud(64, dims, RandomSource(7).split(0))
    tgt = TargetSpec.norm_on_subspace(dims)
    fb = sphere_batch(4096, 10, RandomSource(7).split(1))
    c1 = cloud.copy()
    for _ in range(1000):
        c1 = step(c1, tgt, 1e-3, fb)
    drift_full = c1.cone_defect()
    assert drift_full <= 1e-3
    c2 = cloud.copy()
    for _ in range(2000):
        c2 = step(c2, tgt, 5e-4, fb)
    ratio = drift_full / c2.cone_defect()
    assert 1.5 <= ratio <= 2.5


def test_step_frozen_batch_loss_monotone():
    cloud = make_cloud(m=32)
    tgt = TargetSpec.norm_on_subspace(DIMS6)
    fb = sphere_batch(512, 6, RandomSource(9))
    prev = batch_loss(cloud, tgt, fb)
    c = cloud
    for _ in range(100):
        c = step(c, tgt, 1e-3, fb)
        cur = batch_loss(c, tgt, fb)
        assert cur <= prev + 1e-9
        prev = cur


# ---- transforms and symmetrization ----


def test_transform_requires_orthogonal():
    with pytest.raises(ValueError, match="orthogonal"):
        OrthogonalTransform(np.array([[1.0, 0.1], [0.0, 1.0]]))


def test_transform_rejects_unknown_flavor():
    with pytest.raises(ValueError, match="flavor"):
        OrthogonalTransform(np.eye(2), flavor="both")


@pytest.mark.parametrize(
    "gens,expected",
    [
        ([], 1),
        (["refl5"], 2),
        (["neg"], 2),
        (["refl0", "refl1"], 4),
        (["rot4"], 4),
        (["rot5"], 5),
    ],
)
def test_group_closure_sizes(gens, expected):
    table = {
        "refl5": reflection(6, 5),
        "refl0": reflection(6, 0),
        "refl1": reflection(6, 1),
        "neg": neg_identity(6),
        "rot4": rotation_2d(np.pi / 2, 6),
        "rot5": rotation_2d(2 * np.pi / 5, 6),
    }
    group = group_closure([table[g] for g in gens], 6)
    assert len(group) == expected
    assert np.array_equal(group[0][0], np.eye(6))  # identity first


def test_group_closure_cap():
    with pytest.raises(GroupTooLargeError):
        group_closure([rotation_2d(2 * np.pi / 100, 6)], 6, cap=64)


def test_symmetrize_anti_invariant_adds_mirror():
    cloud = make_cloud(m=2)
    sym = symmetrize_cloud(cloud, [neg_identity(6)])
    assert sym.m == 4
    # second block is exactly (-a, -b)
    np.testing.assert_array_equal(sym.a[2:], -cloud.a)
    np.testing.assert_array_equal(sym.b[2:], -cloud.b)


def test_symmetrize_invariant_pushforward_equal():
    cloud = make_cloud(m=3)
    tr = reflection(6, 4)
    sym = symmetrize_cloud(cloud, [tr])
    moved = transform_cloud(sym, tr.matrix, tr.sign)
    # the transformed atom multiset equals the original one
    orig = sorted(map(tuple, np.column_stack([sym.a, sym.b])))
    new = sorted(map(tuple, np.column_stack([moved.a, moved.b])))
    np.testing.assert_allclose(np.array(orig), np.array(new), atol=1e-12)


def test_symmetrize_permutation_group():
    cloud = make_cloud(m=2)
    perm = coordinate_permutation([1, 0, 2, 3, 4, 5])
    sym = symmetrize_cloud(cloud, [perm])
    assert sym.m == 4
    np.testing.assert_array_equal(sym.b[2:], cloud.b[:, [1, 0, 2, 3, 4, 5]])


def test_symmetrized_predictor_exactly_invariant():
    cloud = make_cloud(m=8)
    tr = reflection(6, 5)
    sym = symmetrize_cloud(cloud, [tr])
    pts = sphere_batch(200, 6, RandomSource(10))
    assert invariance_defect(sym, tr, pts) <= 1e-12
    # an unsymmetrized cloud generically is not invariant
    assert invariance_defect(cloud, tr, pts) > 1e-6


def test_symmetrize_batch_contains_orbit():
    pts = sphere_batch(5, 6, RandomSource(11))
    tr = reflection(6, 0)
    big = symmetrize_batch(pts, [tr])
    assert big.shape == (10, 6)
    np.testing.assert_array_equal(big[5:], pts @ tr.matrix.T)


def test_step_commutes_with_relabeling():
    # step then relabel equals relabel then step on symmetric cloud/batch.
    tr = reflection(6, 3)
    cloud = symmetrize_cloud(make_cloud(m=4), [tr])
    tgt = TargetSpec.norm_on_subspace(DIMS6)
    batch = symmetrize_batch(sphere_batch(32, 6, RandomSource(12)), [tr])
    stepped = step(cloud, tgt, 1e-2, batch)
    path_a = transform_cloud(stepped, tr.matrix, tr.sign)
    path_b = step(transform_cloud(cloud, tr.matrix, tr.sign), tgt, 1e-2, batch)
    np.testing.assert_allclose(path_a.a, path_b.a, atol=1e-12)
    np.testing.assert_allclose(path_a.b, path_b.b, atol=1e-12)


def test_invariance_defect_holds_along_training():
    dims = DIMS6
    tr = reflection(6, 5)
    cloud = symmetrize_cloud(make_cloud(m=8), [tr])
    tgt = TargetSpec.norm_on_subspace(dims)
    pts = sphere_batch(100, 6, RandomSource(13))
    rs = RandomSource(14)
    for k in range(200):
        batch = symmetrize_batch(sphere_batch(64, 6, rs.split(k)), [tr])
        cloud = step(cloud, tgt, 1e-3, batch)
    assert invariance_defect(cloud, tr, pts) <= 1e-12


def test_anti_invariant_flow_predictor_linear():
    # odd target + mirrored pairs keep f(x) = <w(t), x> exactly along training.
    dims = DIMS6
    tgt = TargetSpec.odd_linear(np.eye(6)[0], [1.0])
    tr = neg_identity(6)
    cloud = symmetrize_cloud(make_cloud(m=8), [tr])
    rs = RandomSource(15)
    for k in range(200):
        batch = symmetrize_batch(sphere_batch(64, 6, rs.split(k)), [tr])
        cloud = step(cloud, tgt, 1e-3, batch)
    w = cloud.a @ cloud.b / (2 * cloud.m)
    pts = sphere_batch(100, 6, RandomSource(16))
    assert np.max(np.abs(predict(cloud, pts) - pts @ w)) <= 1e-12


# ---- odd part ----


def test_odd_part_decomposition_identity():
    # On a sign-symmetric batch with odd target:
    # L(f) - L(f_odd) = mean of f_even^2 / 2, exactly.
    cloud = make_cloud(m=8)
    tgt = TargetSpec.odd_linear(np.eye(6)[0], [1.0])
    pts = sphere_batch(64, 6, RandomSource(17))
    batch = np.concatenate([pts, -pts])
    loss, odd_loss = odd_part_loss_gap(cloud, tgt, batch)
    f_even = 0.5 * (predict(cloud, batch) + predict(cloud, -batch))
    assert loss - odd_loss == pytest.approx(float(np.mean(0.5 * f_even**2)), abs=1e-12)
    assert loss >= odd_loss - 1e-12


def test_odd_part_gap_vanishes_for_mirrored_cloud():
    cloud = symmetrize_cloud(make_cloud(m=8), [neg_identity(6)])
    tgt = TargetSpec.odd_linear(np.eye(6)[0], [1.0])
    pts = sphere_batch(64, 6, RandomSource(18))
    batch = np.concatenate([pts, -pts])
    loss, odd_loss = odd_part_loss_gap(cloud, tgt, batch)
    assert loss - odd_loss <= 1e-12


# ---- projections and scans ----


def test_project_hand_values():
    dims = SplitDims(2, 1)
    b = np.array([[0.6, 0.8], [1.0, 0.0], [0.0, -2.0]])
    a = np.array([2.0, -1.0, 1.0])
    cloud = ParticleCloud(a=a, b=b, dims=dims)
    rc = project_to_angles(cloud)
    m = 3
    np.testing.assert_allclose(rc.theta, [np.arccos(0.6), 0.0, np.pi / 2], atol=1e-12)
    np.testing.assert_allclose(rc.c, [2.0 / m, -1.0 / m, 2.0 / m], atol=1e-14)
    np.testing.assert_array_equal(rc.eps, [1.0, -1.0, 1.0])
    assert rc.mass_scale == 1.0


def test_project_rejects_zero_direction():
    cloud = ParticleCloud(a=np.array([1.0]), b=np.zeros((1, 6)), dims=DIMS6)
    with pytest.raises(DegenerateParticleError):
        project_to_angles(cloud)


def test_project_predictor_consistency_orbit_average():
    # sum_j c_j phi_tilde(theta_j, phi) equals the orbit average of the full
    # predictor over x = cos(phi) z_H + sin(phi) z_perp, any cloud.
    dims = DIMS6
    cloud = make_cloud(m=5)
    rc = project_to_angles(cloud)
    rs = RandomSource(19)
    n = 200_000
    for phi0 in (0.35, 0.7, 1.2):
        zh = sample_uniform_sphere(n, dims.d_H, rs.split(0))
        zp = sample_uniform_sphere(n, dims.d_perp, rs.split(1))
        xs = compose_disintegration(np.full(n, phi0), zh, zp, dims)
        f_orbit = predict(cloud, xs)
        f_red = reduced_predict(rc, phi0, QuadratureSpec("gauss", 256))
        se = 3 * f_orbit.std(ddof=1) / np.sqrt(n)
        assert abs(f_orbit.mean() - f_red) <= se


def test_perp_scan_in_plane_particle_constant():
    # particle direction inside H never sees the perpendicular coordinate
    dims = SplitDims(4, 2)
    cloud = ParticleCloud(a=np.array([1.0]), b=np.array([[1.0, 0.0, 0.0, 0.0]]), dims=dims)
    vals = perp_dependence_scan(cloud, np.array([1.0, 0.0]), np.linspace(0, 1, 11))
    np.testing.assert_allclose(vals, 1.0, atol=1e-14)


def test_perp_scan_rejects_bad_uh():
    cloud = make_cloud()
    with pytest.raises(ValueError):
        perp_dependence_scan(cloud, np.array([0.5, 0.0]), [0.0, 1.0])
    with pytest.raises(ValueError):
        perp_dependence_scan(cloud, np.zeros(3), [0.0])
