import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from kssicp import (EmptyCloud, FormatError, PointCloud, SpatialIndex, TooFewPoints,
                    average_knn_distance, bounding_box, build_index, estimate_normals,
                    load_cloud, save_cloud)
from kssicp.synthetic import fibonacci_sphere


def brute_nearest(points, q):
    d = np.linalg.norm(points - q, axis=1)
    i = int(np.argmin(d))  # first index among ties
    return d[i], i


class TestPointCloud:
    def test_rejects_non_finite(self):
        with pytest.raises(FormatError):
            PointCloud([[0, 0, np.nan]])
        with pytest.raises(FormatError):
            PointCloud([[0, np.inf, 0]])

    def test_rejects_empty(self):
        with pytest.raises(EmptyCloud):
            PointCloud(np.zeros((0, 3)))

    def test_normals_must_be_unit(self):
        with pytest.raises(FormatError):
            PointCloud([[0, 0, 0]], [[0, 0, 2.0]])
        PointCloud([[0, 0, 0]], [[0, 0, 1.0 + 5e-7]])

    def test_arrays_are_read_only_copies(self):
        src = np.zeros((2, 3))
        c = PointCloud(src)
        src[0, 0] = 5
        assert c.points[0, 0] == 0
        with pytest.raises(ValueError):
            c.points[0, 0] = 1

    def test_transformed_rotates_normals(self):
        c = PointCloud([[1.0, 0, 0]], [[1.0, 0, 0]])
        m = np.eye(4)
        m[:3, :3] = 2 * np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
        m[:3, 3] = [0, 0, 5]
        t = c.transformed(m)
        np.testing.assert_allclose(t.points, [[0, 2, 5]])
        np.testing.assert_allclose(t.normals, [[0, 1, 0]])


class TestBoundingBox:
    def test_unit_cube_corners(self):
        corners = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], float)
        box = bounding_box(PointCloud(corners))
        np.testing.assert_array_equal(box.min, [0, 0, 0])
        np.testing.assert_array_equal(box.max, [1, 1, 1])
        assert box.longest_edge == 1.0

    def test_single_point(self):
        box = bounding_box(PointCloud([[1.5, -2, 3]]))
        np.testing.assert_array_equal(box.min, box.max)
        np.testing.assert_array_equal(box.min, [1.5, -2, 3])

    def test_matches_brute_force(self, rng):
        pts = rng.normal(size=(10, 3))
        box = bounding_box(PointCloud(pts))
        for axis in range(3):
            assert box.min[axis] == min(p[axis] for p in pts)
            assert box.max[axis] == max(p[axis] for p in pts)


class TestSpatialIndex:
    def test_member_is_its_own_nearest(self, rng):
        pts = rng.uniform(size=(50, 3))
        idx = build_index(PointCloud(pts))
        d, i = idx.nearest(pts)
        np.testing.assert_array_equal(i, np.arange(50))
        np.testing.assert_array_equal(d, 0)

    def test_nearest_matches_scan(self, rng):
        pts = rng.uniform(size=(200, 3))
        queries = rng.uniform(-0.2, 1.2, size=(50, 3))
        idx = SpatialIndex(pts)
        d, i = idx.nearest(queries)
        for q, dd, ii in zip(queries, d, i):
            bd, bi = brute_nearest(pts, q)
            assert ii == bi
            assert dd == pytest.approx(bd, abs=1e-15)

    def test_ties_go_to_lowest_index(self):
        pts = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [1.0, 0, 0]])
        d, i = SpatialIndex(pts).nearest(np.zeros(3))
        assert i == 0 and d == 1.0
        d, i = SpatialIndex(pts).nearest(np.array([1.0, 0, 0]))
        assert i == 0

    def test_knn_matches_sorted_scan(self, rng):
        pts = rng.uniform(size=(200, 3))
        idx = SpatialIndex(pts)
        d, i = idx.knn(pts[:20], 12)
        for q, row_d, row_i in zip(pts[:20], d, i):
            dist = np.linalg.norm(pts - q, axis=1)
            expect = np.lexsort((np.arange(len(pts)), dist))[:12]
            np.testing.assert_array_equal(row_i, expect)
            np.testing.assert_allclose(row_d, dist[expect], atol=1e-15)

    @given(n=st.integers(1, 1000), seed=st.integers(0, 2**32 - 1))
    def test_nearest_property(self, n, seed):
        rng = np.random.default_rng(seed)
        pts = rng.integers(-5, 5, size=(n, 3)).astype(float)  # integer grid: many exact ties
        q = rng.integers(-6, 6, size=(4, 3)).astype(float) + 0.5 * rng.integers(0, 2, size=(4, 3))
        d, i = SpatialIndex(pts).nearest(q)
        for qq, dd, ii in zip(q, d, i):
            bd, bi = brute_nearest(pts, qq)
            assert (ii, dd) == (bi, bd)


class TestAverageKnn:
    def test_two_points(self):
        assert average_knn_distance(PointCloud([[0, 0, 0], [3, 4, 0.0]]), 1) == pytest.approx(5.0)

    def test_line_approaches_spacing(self):
        h = 0.25
        pts = np.column_stack([np.arange(100) * h, np.zeros(100), np.zeros(100)])
        # interior points: neighbours at +-h; the two ends see h and 2h
        expect = (98 * h + 2 * 1.5 * h) / 100
        assert average_knn_distance(PointCloud(pts), 2) == pytest.approx(expect, rel=1e-12)

    def test_matches_double_loop(self, rng):
        pts = rng.normal(size=(50, 3))
        total = 0.0
        for i in range(50):
            d = sorted(np.linalg.norm(pts[j] - pts[i]) for j in range(50) if j != i)
            total += np.mean(d[:12])
        assert average_knn_distance(PointCloud(pts), 12) == pytest.approx(total / 50, rel=1e-12)

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            average_knn_distance(PointCloud(np.eye(3)), 3)


def test_estimated_normals_point_outward_on_sphere():
    sphere = fibonacci_sphere(800)
    est = estimate_normals(PointCloud(sphere.points))
    cos = np.einsum("ij,ij->i", est.normals, sphere.normals)
    assert cos.min() > 0.99


# ---- I/O -------------------------------------------------------------------

def test_ascii_ply_three_vertices(tmp_path):
    p = tmp_path / "tri.ply"
    p.write_text("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
                 "property float z\nend_header\n0 0 0\n1 0 0\n0 1 0\n")
    c = load_cloud(p)
    assert len(c) == 3 and not c.has_normals
    np.testing.assert_array_equal(c.points, [[0, 0, 0], [1, 0, 0], [0, 1, 0]])


def test_xyz_six_columns(tmp_path):
    p = tmp_path / "a.xyz"
    p.write_text("# comment\n0 0 0 0 0 1\n1 2 3 1 0 0\n")
    c = load_cloud(p)
    np.testing.assert_array_equal(c.points, [[0, 0, 0], [1, 2, 3]])
    np.testing.assert_array_equal(c.normals, [[0, 0, 1], [1, 0, 0]])


def test_obj_normals_attached_by_index(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
                 "vn 0 0 1\nvn 0 0 1\nvn 0 1 0\nvn 1 0 0\nf 1 2 3 4\n")
    c = load_cloud(p)
    np.testing.assert_array_equal(c.points, [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    np.testing.assert_array_equal(c.normals, [[0, 0, 1], [0, 0, 1], [0, 1, 0], [1, 0, 0]])


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_cloud(tmp_path / "nope.ply")


def test_big_endian_rejected(tmp_path):
    p = tmp_path / "be.ply"
    p.write_bytes(b"ply\nformat binary_big_endian 1.0\nelement vertex 1\nproperty float x\n"
                  b"property float y\nproperty float z\nend_header\n" + np.zeros(3, ">f4").tobytes())
    with pytest.raises(FormatError):
        load_cloud(p)


def test_non_finite_in_file_rejected(tmp_path):
    p = tmp_path / "bad.xyz"
    p.write_text("0 0 0\nnan 1 1\n")
    with pytest.raises(FormatError):
        load_cloud(p)


def test_empty_file(tmp_path):
    p = tmp_path / "empty.xyz"
    p.write_text("# nothing\n")
    with pytest.raises(EmptyCloud):
        load_cloud(p)


def test_ply_float32_little_endian(tmp_path):
    pts = np.array([[0.5, 1.5, -2.0], [3, 4, 5]], dtype="<f4")
    p = tmp_path / "le.ply"
    p.write_bytes(b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\n"
                  b"property float y\nproperty float z\nend_header\n" + pts.tobytes())
    np.testing.assert_array_equal(load_cloud(p).points, pts.astype(float))


@pytest.mark.parametrize("fmt,binary", [("ply", False), ("ply", True), ("obj", False), ("xyz", False)])
def test_round_trip(tmp_path, rng, fmt, binary):
    pts = rng.normal(size=(100, 3)) * 100
    nrm = rng.normal(size=(100, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    c = PointCloud(pts, nrm)
    path = tmp_path / f"c.{fmt}"
    save_cloud(c, path, binary=binary)
    back = load_cloud(path)
    assert len(back) == 100
    assert np.abs(back.points - pts).max() < 1e-6
    assert np.abs(back.normals - nrm).max() < 1e-6


def test_xyz_without_normals_has_three_columns(tmp_path, rng):
    path = tmp_path / "c.xyz"
    save_cloud(PointCloud(rng.normal(size=(5, 3))), path)
    rows = [l.split() for l in path.read_text().splitlines() if l and not l.startswith("#")]
    assert {len(r) for r in rows} == {3}


def test_ply_with_colours_loads(tmp_path, rng):
    path = tmp_path / "col.ply"
    cols = rng.integers(0, 256, size=(10, 3)).astype(np.uint8)
    c = PointCloud(rng.normal(size=(10, 3)))
    save_cloud(c, path, colors=cols)
    assert "property uchar red" in path.read_text(errors="replace")
    np.testing.assert_array_equal(load_cloud(path).points, c.points)


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 20), st.just(3)),
                  elements=st.floats(allow_nan=True, allow_infinity=True, width=64)))
def test_loader_never_propagates_non_finite(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("fuzz") / "f.xyz"
    path.write_text("\n".join(" ".join(repr(float(v)) for v in row) for row in arr) + "\n")
    try:
        c = load_cloud(path)
    except FormatError:
        assert not np.all(np.isfinite(arr))
    else:
        assert np.all(np.isfinite(c.points))
        np.testing.assert_array_equal(c.points, arr)
