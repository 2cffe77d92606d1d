import csv
import dataclasses
import json

import numpy as np
import pytest

from welavae.dataset import attach_labels, generate_dataset
from welavae.model import ConfigError, ModelConfig, init_params
from welavae.trainer import TrainConfig, TrainingDiverged, forward_means, label_accuracy, train


@pytest.fixture(scope="module")
def ds1024():
    return attach_labels(generate_dataset(side=8, variants=16), [2])


def _cfg(ds, p=2, **kw):
    model = ModelConfig(D=ds.D, K=2, label_dims=[p, p], hidden=16, gamma=4.0, beta=1.0)
    return TrainConfig(model=model, **{"learning_rate": 1e-3, "batch_size": 32, "epochs": 2, **kw})


def test_steps_per_epoch(ds1024):
    res = train(ds1024, ds1024.labels[2], _cfg(ds1024, batch_size=256, epochs=1))
    assert res.steps == 4 and len(res.history) == 4


def test_partial_batch_included(small_ds):
    res = train(small_ds, small_ds.labels[2], _cfg(small_ds, batch_size=50, epochs=2))
    assert small_ds.N == 128 and res.steps == 6


def test_deterministic_checkpoints(small_ds, tmp_path):
    cfg = _cfg(small_ds, seed=3)
    train(small_ds, small_ds.labels[2], cfg, tmp_path / "a")
    train(small_ds, small_ds.labels[2], cfg, tmp_path / "b")
    assert (tmp_path / "a/checkpoint.bin").read_bytes() == (tmp_path / "b/checkpoint.bin").read_bytes()
    assert (tmp_path / "a/train_log.csv").read_text() == (tmp_path / "b/train_log.csv").read_text()
    train(small_ds, small_ds.labels[2], dataclasses.replace(cfg, seed=4), tmp_path / "c")
    assert (tmp_path / "a/checkpoint.bin").read_bytes() != (tmp_path / "c/checkpoint.bin").read_bytes()


def test_run_artifacts(small_ds, tmp_path):
    res = train(small_ds, small_ds.labels[3], _cfg(small_ds, p=3), tmp_path)
    rows = list(csv.DictReader(open(tmp_path / "train_log.csv")))
    assert len(rows) == res.steps
    assert set(rows[0]) == {"epoch", "step", "recon_x", "recon_y0", "recon_y1", "kl", "tc", "total"}
    run = json.loads((tmp_path / "run.json").read_text())
    assert run["steps"] == res.steps and len(run["accuracies"]) == 2
    ck = json.loads((tmp_path / "checkpoint.json").read_text())
    assert ck["dataset_hash"] == small_ds.content_hash and ck["seed"] == 0


def test_loss_decreases(small_ds):
    res = train(small_ds, None, TrainConfig(ModelConfig(D=64, K=2, hidden=32), learning_rate=1e-3, batch_size=16, epochs=5))
    means = res.epoch_means()
    assert means[5] < means[1]


def test_label_mismatch_rejected(small_ds):
    with pytest.raises(ConfigError):
        train(small_ds, small_ds.labels[3], _cfg(small_ds, p=2))
    with pytest.raises(ConfigError):
        train(small_ds, None, _cfg(small_ds))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts(small_ds):
    images = small_ds.images.copy()
    images[5, 0] = np.nan
    bad = dataclasses.replace(small_ds, images=images)
    with pytest.raises(TrainingDiverged) as exc:
        train(bad, bad.labels[2], _cfg(bad, shuffle=False, batch_size=16))
    assert exc.value.step == 1 and exc.value.term == "recon_x"


def test_zero_model_accuracy_is_bin_zero_frequency(small_ds):
    cfg = _cfg(small_ds, p=3).model
    params = init_params(cfg, 0)
    for name in params.names():
        params.params[name][...] = 0
    acc = label_accuracy(params, cfg, small_ds, small_ds.labels[3])
    freq = [float(np.mean(y[:, 0] == 1)) for y in small_ds.labels[3].onehots]
    assert acc == pytest.approx(freq)


def test_oracle_heads_reach_full_accuracy(small_ds):
    # the encoder copies y_j[1] into mu_j; the decoder turns mu_j back into a bin
    labels = small_ds.labels[2]
    cfg = ModelConfig(D=64, K=2, label_dims=[2, 2], hidden=2, hidden_layers=1)
    params = init_params(cfg, 0)
    for name in params.names():
        params.params[name][...] = 0
    W = params.params["enc.0.W"]
    W[64 + 1, 0] = 1.0
    W[64 + 3, 1] = 1.0
    params.params["enc.head.W"][0, 0] = params.params["enc.head.W"][1, 1] = 1.0
    params.params["dec.0.W"][0, 0] = params.params["dec.0.W"][1, 1] = 1.0
    for j in range(2):
        params.params[f"dec.y{j}.W"][j, 1] = 2.0
        params.params[f"dec.y{j}.b"][...] = [0.0, -1.0]
    assert label_accuracy(params, cfg, small_ds, labels) == [1.0, 1.0]


def test_forward_means_chunking(small_ds):
    cfg = _cfg(small_ds).model
    params = init_params(cfg, 1)
    blocks = small_ds.labels[2].onehots
    a_mu, a_l = forward_means(params, cfg, small_ds.images, blocks, batch_size=7)
    b_mu, b_l = forward_means(params, cfg, small_ds.images, blocks)
    np.testing.assert_allclose(a_mu, b_mu, rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(a_l[1], b_l[1], rtol=1e-5, atol=1e-6)


def test_train_config_roundtrip(small_ds):
    cfg = _cfg(small_ds)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
