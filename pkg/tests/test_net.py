import numpy as np
import pytest

from symmatch import diffmat as dm
from symmatch.errors import DimensionError
from symmatch.geom import PointCloud, flip, gen_shape
from symmatch.gradcheck import check
from symmatch.net import embed, encode, init_encoder, layer_shapes, param_leaves
from symmatch.train import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint


def test_parameter_count_k24():
    p = init_encoder(24, 0)
    assert p.count() == (3 * 64 + 64) + (64 * 64 + 64) + (128 * 64 + 64) + (64 * 24 + 24) == 14232


def test_layer_shapes():
    assert layer_shapes(10) == [(64, 3), (64, 64), (64, 128), (10, 64)]


def test_init_deterministic_and_zero_bias():
    a, b = init_encoder(16, 7), init_encoder(16, 7)
    assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))
    assert all(np.all(bias == 0) for bias in a.biases)
    c = init_encoder(16, 8)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_glorot_bounds():
    p = init_encoder(24, 1)
    for w in p.weights:
        assert np.max(np.abs(w)) <= np.sqrt(6.0 / (w.shape[0] + w.shape[1])) + 1e-15


def test_output_shape_and_permutation_equivariance():
    p = init_encoder(12, 3)
    cloud, _ = gen_shape(0, 1, 128)
    phi = embed(p, cloud)
    assert phi.shape == (128, 12)
    perm = np.random.default_rng(0).permutation(128)
    assert np.allclose(embed(p, cloud.coords[perm]), phi[perm], atol=1e-13)


def test_weight_sharing_between_branches():
    p = init_encoder(8, 2)
    cloud, _ = gen_shape(1, 2, 64)
    tape = dm.Tape()
    leaves = param_leaves(tape, p)
    a = encode(leaves, p, cloud)
    b = encode(leaves, p, flip(cloud))
    g = dm.backward(dm.add(dm.sum_all(a), dm.sum_all(b)))
    ga = dm.backward(dm.sum_all(a))
    assert all(g[l].shape == arr.shape for l, arr in zip(leaves, p.arrays()))
    assert any(not np.array_equal(g[l], ga[l]) for l in leaves)


def test_encoder_param_gradient():
    p = init_encoder(4, 5)
    pts = np.random.default_rng(1).uniform(-1, 1, size=(16, 3))
    w = np.random.default_rng(2).uniform(-1, 1, size=(16, 4))

    def build(v):
        return dm.sum_all(dm.mul(encode(v, p, pts), v[0].tape.const(w)))

    r = check("encoder", build, p.arrays(), tol=1e-3, rng=np.random.default_rng(3), max_coords=12)
    assert r.rel_err < 1e-3


def test_bad_input_shape():
    with pytest.raises(DimensionError):
        embed(init_encoder(4, 0), np.zeros((10, 2)))


def test_serialization_roundtrip_exact(tmp_path):
    p = init_encoder(24, 9)
    p = p.with_arrays([a + np.random.default_rng(i).normal(size=a.shape) * 1e-3 for i, a in enumerate(p.arrays())])
    save_checkpoint(tmp_path / "c.json", Checkpoint(p, TrainConfig(), 3, "abc"))
    q = load_checkpoint(tmp_path / "c.json").params
    assert q.k == 24 and all(np.array_equal(x, y) for x, y in zip(p.arrays(), q.arrays()))
