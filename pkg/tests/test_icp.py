import numpy as np
import pytest

from kssicp import DegenerateInput, IcpParams, PointCloud, RigidTransform, icp_align, to_preshape
from kssicp.synthetic import blob, fibonacci_sphere

from conftest import random_rotation, rotation_angle_deg
from oracles import rotation_zyx


@pytest.fixture(scope="module")
def shape():
    return to_preshape(blob(3000, 3))


def check_rigid(r):
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-9)
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-9)


def test_identical_clouds(shape):
    res = icp_align(shape, shape)
    np.testing.assert_allclose(res.transform.rotation, np.eye(3), atol=1e-12)
    assert res.mse == 0.0
    assert res.iterations == 1
    tr, mse, it = res
    assert (mse, it) == (0.0, 1)


def ellipsoid(n=3000):
    # random directions: a Fibonacci lattice is nearly self-similar under z rotations
    u = np.random.default_rng(5).normal(size=(n, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return to_preshape(PointCloud(u * [1.0, 0.75, 0.55]))


def test_ten_degrees_about_z():
    target = ellipsoid()
    rz = rotation_zyx(0, 0, np.deg2rad(10))
    moved = target.points @ rz.T
    res = icp_align(moved, target, params=IcpParams(max_iterations=200))
    err = rotation_angle_deg(res.transform.rotation @ rz)
    assert err < 0.5
    assert res.mse < 1e-8


def test_170_degrees_gets_trapped(shape):
    rz = rotation_zyx(0, 0, np.deg2rad(170))
    res = icp_align(shape.points @ rz.T, shape)
    # a correct alignment of identical point sets reaches mse 0
    assert res.mse > 1e-7
    assert rotation_angle_deg(res.transform.rotation @ rz) > 30


def test_history_non_increasing_and_rigid(rng):
    for seed in range(5):
        target = to_preshape(blob(2000, seed))
        r = random_rotation(np.random.default_rng(seed))
        src = target.points @ r.T + 0.01
        res = icp_align(src, target)
        assert np.all(np.diff(res.history) <= 1e-12)
        assert res.mse <= res.history[-1] + 1e-12
        check_rigid(res.transform.rotation)


def test_deterministic(shape):
    src = shape.points @ rotation_zyx(0.2, 0.1, 0.3).T
    a, b = icp_align(src, shape), icp_align(src, shape)
    np.testing.assert_array_equal(a.transform.matrix(), b.transform.matrix())
    assert a.history == b.history


def test_initial_transform_is_used(shape):
    r = rotation_zyx(0, 0, np.deg2rad(170))
    res = icp_align(shape.points @ r.T, shape, initial=RigidTransform(r.T))
    assert res.mse < 1e-20


def test_reject_gate(shape):
    res = icp_align(shape.points + 0.001, shape, params=IcpParams(reject_distance=0.5))
    assert res.mse < 1e-12


def test_degenerate_inputs():
    line = np.column_stack([np.arange(5.0), np.zeros(5), np.zeros(5)])
    with pytest.raises(DegenerateInput):
        icp_align(line, fibonacci_sphere(50).points)
    with pytest.raises(DegenerateInput):
        icp_align(np.zeros((2, 3)), fibonacci_sphere(50).points)


def test_params_validation():
    with pytest.raises(ValueError):
        IcpParams(max_iterations=0)
    with pytest.raises(ValueError):
        IcpParams(convergence_eps=0)


class TestRigidTransform:
    def test_compose_associative(self, rng):
        ts = [RigidTransform(random_rotation(rng), rng.normal(size=3)) for _ in range(3)]
        a, b, c = ts
        np.testing.assert_allclose(a.compose(b).compose(c).matrix(), a.compose(b.compose(c)).matrix(),
                                   atol=1e-12)

    def test_compose_applies_inner_first(self, rng):
        a = RigidTransform(random_rotation(rng), rng.normal(size=3))
        b = RigidTransform(random_rotation(rng), rng.normal(size=3))
        p = rng.normal(size=(4, 3))
        np.testing.assert_allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12)

    def test_inverse(self, rng):
        a = RigidTransform(random_rotation(rng), rng.normal(size=3))
        np.testing.assert_allclose(a.compose(a.inverse()).matrix(), np.eye(4), atol=1e-12)
