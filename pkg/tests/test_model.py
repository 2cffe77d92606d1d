import numpy as np
import pytest

from welavae.model import (
    ConfigError,
    LatentCode,
    ModelConfig,
    decode,
    encode,
    encode_cached,
    init_params,
    load_checkpoint,
    parameter_count,
    reparameterize,
    save_checkpoint,
)
from welavae.numerics import DimensionError


def test_encoder_input_widths():
    assert ModelConfig(K=2, label_dims=[3, 3]).encoder_input == 4102
    assert ModelConfig(K=5).encoder_input == 4096


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(K=3, label_dims=[2, 2])
    with pytest.raises(ConfigError):
        ModelConfig(K=2, label_dims=[2, 2], gamma=0.5)
    with pytest.raises(ConfigError):
        ModelConfig(beta=-1)
    with pytest.raises(ConfigError):
        ModelConfig(K=1, label_dims=[1])


def test_config_roundtrip():
    cfg = ModelConfig(D=10, K=2, label_dims=[2, 4], hidden=3, gamma=5, beta=2)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_zero_params_give_standard_outputs():
    cfg = ModelConfig(D=12, K=2, label_dims=[2, 3], hidden=5)
    params = init_params(cfg, 0)
    for name in params.names():
        params.params[name][...] = 0
    x = np.random.default_rng(0).random((4, 12)).astype(np.float32)
    ys = [np.eye(2, dtype=np.float32)[[0, 1, 0, 1]], np.eye(3, dtype=np.float32)[[0, 1, 2, 0]]]
    code = encode(params, cfg, x, ys)
    assert np.all(code.mu == 0) and np.all(code.logvar == 0)
    out = decode(params, cfg, code.mu)
    assert np.all(out.pixel_logits == 0)
    assert [l.shape for l in out.label_logits] == [(4, 2), (4, 3)]


def test_logvar_clamped():
    cfg = ModelConfig(D=3, K=1, hidden=2)
    params = init_params(cfg, 0)
    params.params["enc.head.b"][...] = [0.0, 50.0]
    code, cache = encode_cached(params, cfg, np.zeros((2, 3), np.float32))
    assert np.all(code.logvar == 8.0)
    assert np.all(cache["raw_logvar"] == 50.0)


def test_shape_errors():
    cfg = ModelConfig(D=6, K=2, label_dims=[2, 2], hidden=3)
    params = init_params(cfg, 0)
    with pytest.raises(DimensionError, match=r"\(2, 5\)"):
        encode(params, cfg, np.zeros((2, 5)), [np.zeros((2, 2))] * 2)
    with pytest.raises(ConfigError):
        encode(params, cfg, np.zeros((2, 6)), [np.zeros((2, 2))])
    with pytest.raises(DimensionError):
        decode(params, cfg, np.zeros((2, 3)))


def test_reparameterize_cases():
    code = LatentCode(mu=np.array([[1.0, -2.0]]), logvar=np.array([[0.0, np.log(4.0)]]))
    np.testing.assert_allclose(reparameterize(code, np.zeros((1, 2))), code.mu)
    np.testing.assert_allclose(reparameterize(code, np.ones((1, 2))), [[2.0, 0.0]])
    with pytest.raises(DimensionError):
        reparameterize(code, np.zeros((2, 2)))


def test_reparameterize_moments():
    n = 100_000
    mu, var = 0.7, 2.5
    code = LatentCode(mu=np.full((n, 1), mu), logvar=np.full((n, 1), np.log(var)))
    z = reparameterize(code, np.random.default_rng(3).standard_normal((n, 1)))
    se = np.sqrt(var / n)
    assert abs(z.mean() - mu) < 4 * se
    # var of the sample variance is about 2 var^2 / n
    assert abs(z.var() - var) < 4 * np.sqrt(2 * var**2 / n)


def test_init_deterministic_and_glorot():
    cfg = ModelConfig(D=400, K=2, label_dims=[3, 3], hidden=300)
    a, b = init_params(cfg, 7), init_params(cfg, 7)
    for name in a.names():
        np.testing.assert_array_equal(a[name], b[name])
    assert any(not np.array_equal(a[n], init_params(cfg, 8)[n]) for n in a.names())
    W = a["enc.0.W"]
    bound = np.sqrt(6.0 / (406 + 300))
    assert np.abs(W).max() <= bound
    assert abs(W.var() - bound**2 / 3) < 0.2 * bound**2 / 3
    assert np.all(a["enc.0.b"] == 0)


def test_parameter_count_matches_store():
    for cfg in (ModelConfig(), ModelConfig(K=2, label_dims=[3, 5]), ModelConfig(D=7, K=1, hidden=4, hidden_layers=3)):
        assert parameter_count(cfg) == init_params(cfg, 0).num_parameters()
    # canonical unlabelled K=5 network
    h, D, K = 1200, 4096, 5
    expected = (D * h + h) + (h * h + h) + (h * 2 * K + 2 * K) + (K * h + h) + (h * h + h) + (h * D + D)
    assert parameter_count(ModelConfig(K=5)) == expected


def test_checkpoint_roundtrip(tmp_path):
    cfg = ModelConfig(D=9, K=2, label_dims=[2, 3], hidden=4, gamma=3)
    params = init_params(cfg, 1)
    save_checkpoint(params, cfg, tmp_path, seed=1)
    back, cfg2, manifest = load_checkpoint(tmp_path)
    assert cfg2 == cfg and manifest["seed"] == 1
    for name in params.names():
        np.testing.assert_array_equal(back[name], params[name])
    blob = bytearray((tmp_path / "checkpoint.bin").read_bytes())
    blob[0] ^= 0x40
    (tmp_path / "checkpoint.bin").write_bytes(bytes(blob))
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path)


def test_k_equals_m_opt_out():
    cfg = ModelConfig(D=6, K=2, label_dims=[2], hidden=4, require_k_equals_m=False)
    assert cfg.encoder_input == 8
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
