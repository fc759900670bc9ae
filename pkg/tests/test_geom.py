import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symmatch.errors import ConnectivityError, ContractError, DegenerateSampleError, DimensionError, ParseError, SizeError
from symmatch.geom import (
    IndexMap,
    PointCloud,
    ShapePairSample,
    flip,
    gen_dataset,
    gen_pair,
    gen_shape,
    geodesics,
    load_cloud,
    load_map,
    load_pair,
    make_template,
    path_field,
    random_rotation,
    rotate,
    save_cloud,
    save_map,
    save_pair,
    subsample,
)
from symmatch.geom.generator import random_pose


def floyd_warshall(w):
    d = w.copy()
    for k in range(d.shape[0]):
        d = np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :])
    return d


def dense_weights(field):
    g = field.graph.toarray()
    w = np.where(g > 0, g, np.inf)
    np.fill_diagonal(w, 0.0)
    return w


# ------------------------------------------------------------------ types


def test_pointcloud_validation():
    with pytest.raises(ContractError):
        PointCloud(np.zeros((3, 3)))
    with pytest.raises(DimensionError):
        PointCloud(np.zeros((5, 2)))
    with pytest.raises(ContractError):
        PointCloud(np.full((5, 3), np.nan))
    with pytest.raises(ContractError):
        PointCloud(np.zeros((5, 3)), faces=np.array([[0, 1, 5]]))


def test_indexmap_matrix_and_composition():
    m = IndexMap(np.array([2, 0, 1]), 3)
    pi = m.as_matrix()
    assert np.array_equal(pi.sum(axis=1), np.ones(3))
    assert pi[0, 2] == 1 and pi[1, 0] == 1
    assert m.then(IndexMap(np.array([1, 2, 0]), 3)) == IndexMap.identity(3)
    with pytest.raises(ContractError):
        IndexMap(np.array([3]), 3)


# ------------------------------------------------------------- transforms


def test_flip_involution_and_example():
    p = PointCloud(np.array([[1.0, 2.0, 3.0], [-1.0, -2.0, -3.0], [0.5, 0, 0], [-0.5, 0, 0]]))
    f = flip(p, "x")
    assert np.array_equal(f.coords[0], [-1.0, 2.0, 3.0])
    assert np.array_equal(flip(f, "x").coords, p.coords)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from("xyz"))
def test_flip_is_involution(seed, axis):
    c = np.random.default_rng(seed).uniform(-3, 3, size=(9, 3))
    p = PointCloud(c)
    assert np.allclose(flip(flip(p, axis), axis).coords, c, atol=1e-12)


def test_flip_matches_generator_mirror_pairing():
    cloud, sym = gen_shape(3, None, 200)
    assert np.max(np.abs(flip(cloud, "x").coords - cloud.coords[sym.targets])) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_rotation_in_so3(seed):
    r = random_rotation(seed)
    assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-10
    assert abs(np.linalg.det(r) - 1.0) < 1e-10
    # tilt of the vertical axis is bounded by 15 degrees
    assert np.degrees(np.arccos(np.clip(r[1, 1], -1, 1))) <= 15.0 + 1e-9


def test_random_rotation_deterministic():
    assert np.array_equal(random_rotation(42), random_rotation(42))
    assert not np.array_equal(random_rotation(42), random_rotation(43))


def test_rotate_about_centroid_preserves_distances():
    cloud, _ = gen_shape(1, 2, 64)
    r = rotate(cloud, random_rotation(5))
    assert np.allclose(r.coords.mean(0), cloud.coords.mean(0), atol=1e-12)
    d0 = np.linalg.norm(cloud.coords[:, None] - cloud.coords[None], axis=-1)
    d1 = np.linalg.norm(r.coords[:, None] - r.coords[None], axis=-1)
    assert np.allclose(d0, d1, atol=1e-12)


def _pair(n=64, partial="none"):
    return gen_pair(7, (1, 2), n, partial, seed=3)


def test_subsample_full_is_identity():
    s = _pair()
    t = subsample(s, s.x.n, 0)
    assert t.x == s.x and t.y == s.y and t.map_xy == s.map_xy


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 64), st.integers(0, 10_000), st.sampled_from(["none", "cut"]))
def test_subsample_preserves_structure(q, seed, partial):
    s = gen_pair(11, (4, 5), 128, partial, seed=1)
    if q > min(s.x.n, s.y.n):
        with pytest.raises(SizeError):
            subsample(s, q, seed)
        return
    t = subsample(s, q, seed)
    assert t.x.n == t.y.n == q
    assert t.map_xy.is_injective()
    if partial == "none" and q % 2 == 0:
        # pair sampling keeps both partners of every sampled point
        assert t.sym_x.is_involution() and t.sym_y.is_involution()
    kx, ky = t.meta["keep_x"], t.meta["keep_y"]
    # brute-force: the sampled map is the original map read through the index lookups
    for i in range(q):
        assert ky[t.map_xy.targets[i]] == s.map_xy.targets[kx[i]]
    assert np.array_equal(t.x.coords, s.x.coords[kx])


def test_subsample_too_many_points():
    with pytest.raises(SizeError):
        subsample(_pair(), 65, 0)


# -------------------------------------------------------------- geodesics


def test_path_graph():
    f = path_field(3)
    assert f.distance(0, 2) == 2.0
    assert f.diameter() == 2.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_geodesics_match_floyd_warshall(seed):
    p = PointCloud(np.random.default_rng(seed).uniform(size=(100, 3)))
    f = geodesics(p)
    oracle = floyd_warshall(dense_weights(f))
    got = f.all_pairs()
    assert np.max(np.abs(got - oracle)) <= 1e-9
    assert np.all(np.diag(got) == 0)
    assert np.max(np.abs(got - got.T)) <= 1e-9


def test_geodesic_triangle_inequality():
    p = PointCloud(np.random.default_rng(9).uniform(size=(80, 3)))
    d = geodesics(p).all_pairs()
    i, j, k = np.random.default_rng(10).integers(0, 80, size=(3, 500))
    assert np.all(d[i, k] <= d[i, j] + d[j, k] + 1e-12)


def test_geodesics_use_mesh_edges():
    coords = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [5, 5, 0]], dtype=float)
    faces = np.array([[0, 1, 2], [0, 2, 3], [2, 3, 4]])
    f = geodesics(PointCloud(coords, faces))
    assert f.distance(0, 2) == pytest.approx(np.sqrt(2))
    # 1 and 3 share no edge: the diagonal 0-2 does not shorten the walk
    assert f.distance(1, 3) == pytest.approx(2.0)
    assert f.distance(1, 4) == pytest.approx(1.0 + np.sqrt(32.0))


def test_disconnected_graph_lists_components():
    c = np.vstack([np.random.default_rng(0).uniform(size=(20, 3)), 100 + np.random.default_rng(1).uniform(size=(12, 3))])
    with pytest.raises(ConnectivityError) as err:
        geodesics(PointCloud(c))
    assert sorted(err.value.component_sizes) == [12, 20]


# -------------------------------------------------------------- generator


def test_rest_pose_mirror_symmetry():
    cloud, sym = gen_shape(5, None, 300)
    c = cloud.coords
    mirrored = c[sym.targets] * np.array([-1.0, 1.0, 1.0])
    assert np.max(np.abs(mirrored - c)) < 1e-9
    assert sym.is_involution()
    off_plane = np.abs(c[:, 0]) > 1e-12
    assert np.all(sym.targets[off_plane] != np.flatnonzero(off_plane))


def test_template_requires_even_count():
    with pytest.raises(ContractError):
        make_template(0, 101)


@pytest.mark.parametrize("template_seed,pose_seed", [(0, 1), (1, 7), (2, 13), (3, 34), (4, 4)])
def test_posed_symmetry_is_intrinsic(template_seed, pose_seed):
    n = 512
    cloud, sym = gen_shape(template_seed, pose_seed, n)
    d = geodesics(cloud).all_pairs()
    d_sym = d[np.ix_(sym.targets, sym.targets)]
    iu = np.triu_indices(n, 1)
    rel = np.abs(d[iu] - d_sym[iu]) / d[iu]
    assert np.median(rel) < 0.05


def test_poses_are_independent_per_side():
    p = random_pose(3)
    assert p.left != p.right


def test_full_pair_identity_map():
    s = _pair()
    assert s.map_xy == IndexMap.identity(64)
    assert s.sym_x.is_involution() and s.sym_y.is_involution()


@pytest.mark.parametrize("seed", range(6))
def test_cut_size_range(seed):
    s = gen_pair(seed, (seed + 1, seed + 2), 400, "cut", seed)
    assert 0.55 * 400 < s.x.n < 0.75 * 400
    assert 0.25 <= s.meta["removed_fraction"] <= 0.45


@pytest.mark.parametrize("partial", ["cut", "hole"])
def test_partial_points_keep_template_parameterization(partial):
    s = gen_pair(4, (8, 9), 300, partial, seed=2)
    full_b, _ = gen_shape(4, 9, 300)
    assert s.y.n == 300 and s.map_xy.is_injective()
    # every surviving point is the template point map_xy names, in the removed pose
    assert np.array_equal(s.x.coords, full_b.coords[s.map_xy.targets])
    geo = geodesics(s.y)
    assert np.all(geo.distance(s.map_xy.targets, s.map_xy.targets) == 0)


def test_hole_count_and_size():
    s = gen_pair(6, (1, 2), 600, "hole", seed=4)
    assert 6 <= s.meta["holes"] <= 10
    assert 0.0 < s.meta["removed_fraction"] <= 0.6


def test_degenerate_partiality_rejected(monkeypatch):
    from symmatch.geom import generator

    monkeypatch.setattr(generator, "MAX_REMOVED", 0.1)
    with pytest.raises(DegenerateSampleError):
        gen_pair(0, (1, 2), 200, "cut", 0)


def test_dataset_deterministic():
    a = gen_dataset(3, 64, seed=5)
    b = gen_dataset(3, 64, seed=5)
    assert all(x.x == y.x and x.y == y.y for x, y in zip(a, b))
    assert [s.meta["name"] for s in a] == ["pair_0000", "pair_0001", "pair_0002"]


# --------------------------------------------------------------------- io


def test_cloud_roundtrip_exact(tmp_path):
    c = PointCloud(np.random.default_rng(0).normal(size=(17, 3)) * 1e3)
    save_cloud(tmp_path / "a.xyz", c)
    assert np.array_equal(load_cloud(tmp_path / "a.xyz").coords, c.coords)


def test_off_roundtrip_keeps_faces(tmp_path):
    c = PointCloud(np.random.default_rng(1).normal(size=(5, 3)), faces=np.array([[0, 1, 2], [2, 3, 4]]))
    save_cloud(tmp_path / "m.off", c)
    back = load_cloud(tmp_path / "m.off")
    assert np.array_equal(back.faces, c.faces) and np.array_equal(back.coords, c.coords)


def test_xyz_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.xyz"
    path.write_text("0 0 0\n1 1 1\n2 two 2\n3 3 3\n4 4 4\n")
    with pytest.raises(ParseError) as err:
        load_cloud(path)
    assert err.value.line == 3


def test_map_roundtrip_and_errors(tmp_path):
    m = IndexMap(np.array([3, 1, 0, 2]), 5)
    save_map(tmp_path / "m.map", m)
    assert load_map(tmp_path / "m.map") == m
    (tmp_path / "bad.map").write_text("2 3\n0\n7\n")
    with pytest.raises(ParseError) as err:
        load_map(tmp_path / "bad.map")
    assert err.value.line == 3
    (tmp_path / "short.map").write_text("3 3\n0\n1\n")
    with pytest.raises(ParseError):
        load_map(tmp_path / "short.map")


def test_pair_roundtrip(tmp_path):
    s = _pair(32, "cut")
    files = save_pair(tmp_path, "p", s)
    assert len(files) == 5
    t = load_pair(tmp_path, "p")
    assert np.array_equal(t.x.coords, s.x.coords) and np.array_equal(t.y.coords, s.y.coords)
    assert t.map_xy == s.map_xy and t.sym_x == s.sym_x and t.sym_y == s.sym_y
