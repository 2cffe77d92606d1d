import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from welavae.dataset import generate_dataset
from welavae.evaluation import (
    RepresentationMatrix,
    canvas_ranges,
    cartesian_mse,
    heatmap,
    polar_estimate,
    polar_mse,
    position_means,
    read_pgm,
    rescale_channel,
    score,
    tile_traversal,
    traversal_panel,
    traverse,
    write_heatmaps,
    write_pgm,
)
from welavae.model import ModelConfig, init_params


@pytest.fixture(scope="module")
def grid64():
    c1, c2 = np.meshgrid(np.arange(64.0), np.arange(64.0), indexing="ij")
    return np.stack([c1.ravel(), c2.ravel()], axis=1)


def test_rescale_endpoints_and_inversion():
    v = np.array([2.0, 4.0, 3.0])
    np.testing.assert_allclose(rescale_channel(v, (0, 10)), [0, 10, 5])
    np.testing.assert_allclose(rescale_channel(v, (0, 10), invert=True), [10, 0, 5])
    np.testing.assert_allclose(rescale_channel(np.full(3, 7.0), (0, 10)), [5, 5, 5])


def test_canvas_ranges():
    assert canvas_ranges(64, "nominal") == (64.0, 90.5)
    assert canvas_ranges(64, "grid") == pytest.approx((63.0, 90.5 * 63 / 64))
    assert canvas_ranges(16, "nominal") == (16.0, 90.5 / 4)
    with pytest.raises(ValueError):
        canvas_ranges(64, "other")


def test_nominal_polar_constant_reaches_corner():
    rep = RepresentationMatrix.from_arrays(np.array([[0.0, 0.0], [1.0, 1.0], [0.5, 1.0]]), np.zeros((3, 2)))
    xy = polar_estimate(rep, 0, 1, False, False, 90.5)
    assert xy[2] == pytest.approx([63.99, 63.99], abs=0.01)


def test_identity_inverted_swapped(grid64):
    rep = RepresentationMatrix.from_arrays(grid64, grid64)
    r = cartesian_mse(rep)
    assert r.mse < 1e-12 and r.channel_assignment == (0, 1) and r.inversion_flags == (False, False)
    r = cartesian_mse(RepresentationMatrix.from_arrays(-grid64, grid64))
    assert r.mse < 1e-12 and r.inversion_flags == (True, True)
    noise = np.random.default_rng(0).normal(size=(len(grid64), 1))
    r = cartesian_mse(RepresentationMatrix.from_arrays(np.hstack([noise, grid64[:, ::-1]]), grid64))
    assert r.mse < 1e-12 and r.channel_assignment == (2, 1)


def test_ideal_polar(grid64):
    mu = np.stack([np.arctan2(grid64[:, 1], grid64[:, 0]), np.hypot(grid64[:, 0], grid64[:, 1])], axis=1)
    r = polar_mse(RepresentationMatrix.from_arrays(mu, grid64))
    assert r.mse < 1e-3 and r.channel_assignment == (0, 1)
    assert score(RepresentationMatrix.from_arrays(mu, grid64), "polar").mse == r.mse


def test_constant_representation_enumeration(grid64):
    rep = RepresentationMatrix.from_arrays(np.ones((len(grid64), 3)), grid64)
    assert rep.degenerate.all()
    oracle = sum((a - 31.5) ** 2 + (b - 31.5) ** 2 for a, b in grid64) / len(grid64)
    assert cartesian_mse(rep).mse == pytest.approx(oracle, rel=1e-12)
    assert cartesian_mse(rep, mode="nominal").mse == pytest.approx(
        sum((a - 32) ** 2 + (b - 32) ** 2 for a, b in grid64) / len(grid64), rel=1e-12
    )


def test_needs_two_channels(grid64):
    with pytest.raises(ValueError):
        cartesian_mse(RepresentationMatrix.from_arrays(grid64[:, :1], grid64))


def _brute(mu, coords, extent):
    best = math.inf
    K = mu.shape[1]
    for i, j in itertools.permutations(range(K), 2):
        for fi, fj in itertools.product((0, 1), repeat=2):
            est = []
            for k, f in ((i, fi), (j, fj)):
                col = mu[:, k]
                lo, hi = col.min(), col.max()
                t = (col - lo) / (hi - lo) if hi - lo >= 1e-9 else np.full_like(col, 0.5)
                est.append(extent * (1 - t if f else t))
            err = np.mean((coords[:, 0] - est[0]) ** 2 + (coords[:, 1] - est[1]) ** 2)
            best = min(best, err)
    return best


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(0, 10_000))
def test_search_matches_brute_force(K, seed):
    rng = np.random.default_rng(seed)
    coords = rng.integers(0, 16, size=(40, 2)).astype(float)
    mu = rng.normal(size=(40, K))
    mu[:, 0] = coords[:, 1] + rng.normal(0, 2, 40)
    rep = RepresentationMatrix.from_arrays(mu, coords, side=16)
    assert cartesian_mse(rep).mse == pytest.approx(_brute(mu, coords, 15.0), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5).filter(lambda a: abs(a) > 1e-2), st.floats(-100, 100), st.integers(0, 1000))
def test_affine_invariance(a, b, seed):
    rng = np.random.default_rng(seed)
    coords = rng.integers(0, 16, size=(30, 2)).astype(float)
    mu = coords + rng.normal(0, 1, (30, 2))
    base = RepresentationMatrix.from_arrays(mu, coords, side=16)
    moved = RepresentationMatrix.from_arrays(a * mu + b, coords, side=16)
    for fn in (cartesian_mse, polar_mse):
        assert fn(moved).mse == pytest.approx(fn(base).mse, rel=1e-7, abs=1e-9)


def test_traverse_shapes():
    cfg = ModelConfig(D=16, K=2, label_dims=[2, 2], hidden=8)
    params = init_params(cfg, 0)
    ds = generate_dataset(side=4, variants=1)
    ys = [np.eye(2, dtype=np.float32)[[0, 1]]] * 2
    t = traverse(params, cfg, ds.images[:2], ys, steps=5)
    assert t.shape == (2, 2, 5, 16) and t.min() >= 0 and t.max() <= 1
    assert not np.allclose(t[0, 0, 0], t[0, 0, -1])
    assert tile_traversal(t[0], 4).shape == (8, 20)
    with pytest.raises(ValueError):
        traverse(params, cfg, ds.images[:2], ys, steps=1)


def test_traversal_panel_positions():
    ds = generate_dataset(side=8, variants=3)
    idx = traversal_panel(ds)
    assert tuple(ds.coords[idx[3]]) == (7, 7) and tuple(ds.coords[idx[4]]) == (4, 4)
    assert np.all(ds.sigmas[idx] == ds.sigmas[0])


def test_position_means_indexing():
    ds = generate_dataset(side=5, variants=2)
    maps = position_means(ds.coords.astype(np.float64), ds)
    assert maps.shape == (2, 5, 5)
    assert maps[0, 1, 3] == 3 and maps[1, 1, 3] == 1  # [k, c2, c1]
    cfg = ModelConfig(D=25, K=3, hidden=4)
    assert heatmap(init_params(cfg, 0), cfg, ds).shape == (3, 5, 5)
    with pytest.raises(ValueError):
        position_means(ds.coords[:-1], ds)


def test_pgm_roundtrip(tmp_path):
    img = np.linspace(0, 1, 12 * 7).reshape(7, 12)
    img[0, :3] = [10 / 255, 32 / 255, 13 / 255]  # bytes that look like whitespace
    path = write_pgm(tmp_path / "a.pgm", img)
    back = read_pgm(path)
    assert back.shape == (7, 12)
    np.testing.assert_array_equal(back, np.rint(img * 255).astype(np.uint8))
    assert "value_range" in path.with_suffix(".txt").read_text()
    paths = write_heatmaps(np.array([[[-5.0, 0.0], [3.0, 1.0]]]), tmp_path)
    assert read_pgm(paths[0]).tolist() == [[0, 128], [255, 170]]
    assert (tmp_path / "heatmap_0.csv").exists()
