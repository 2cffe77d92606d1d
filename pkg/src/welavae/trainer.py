"""Per-seed training loop and label-accuracy measurement.

A run's seed determines the weight initialisation, the shuffle order and the
reparameterisation noise, nothing else. The dataset is shared by all seeds.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .dataset import BlobDataset, WeakLabelSet
from .model import ConfigError, ModelConfig, decode, encode, init_params, save_checkpoint
from .numerics import AdamState, ParamStore, adam_step
from .objective import LossBreakdown, wela_loss

log = logging.getLogger(__name__)

LOG_NAME = "train_log.csv"
RUN_NAME = "run.json"


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, step: int, term: str, breakdown: LossBreakdown):
        super().__init__(f"non-finite {term} at epoch {epoch}, step {step}: {breakdown}")
        self.epoch, self.step, self.term, self.breakdown = epoch, step, term, breakdown


@dataclass
class TrainConfig:
    model: ModelConfig
    learning_rate: float = 1e-4
    batch_size: int = 256
    epochs: int = 150
    seed: int = 0
    shuffle: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["model"] = ModelConfig.from_dict(d["model"])
        return cls(**d)


@dataclass
class RunResult:
    seed: int
    final: LossBreakdown
    accuracies: list[float]
    wall_seconds: float
    threads: int
    steps: int
    checkpoint_path: str | None = None
    log_path: str | None = None
    history: list[dict] = field(default_factory=list, repr=False)
    params: ParamStore | None = field(default=None, repr=False)
    config: TrainConfig | None = field(default=None, repr=False)

    def epoch_means(self) -> dict[int, float]:
        sums: dict[int, list[float]] = {}
        for row in self.history:
            sums.setdefault(row["epoch"], []).append(row["total"])
        return {e: float(np.mean(v)) for e, v in sums.items()}

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "final": asdict(self.final),
            "accuracies": self.accuracies,
            "wall_seconds": self.wall_seconds,
            "threads": self.threads,
            "steps": self.steps,
            "checkpoint_path": self.checkpoint_path,
            "log_path": self.log_path,
            "config": self.config.to_dict() if self.config else None,
        }


def _label_blocks(labels: WeakLabelSet | None, cfg: ModelConfig):
    if cfg.m == 0:
        if labels is not None and labels.m:
            raise ConfigError("unlabelled model was given weak labels")
        return []
    if labels is None or labels.dims != cfg.label_dims:
        got = None if labels is None else labels.dims
        raise ConfigError(f"model expects label dims {cfg.label_dims}, got {got}")
    return labels.onehots


def train(
    ds: BlobDataset,
    labels: WeakLabelSet | None,
    cfg: TrainConfig,
    out_dir=None,
) -> RunResult:
    mcfg = cfg.model
    if mcfg.D != ds.D:
        raise ConfigError(f"model D={mcfg.D} but dataset D={ds.D}")
    if cfg.batch_size > ds.N:
        raise ConfigError(f"batch size {cfg.batch_size} exceeds N={ds.N}")
    blocks = _label_blocks(labels, mcfg)

    started = time.perf_counter()
    params = init_params(mcfg, cfg.seed)
    state = AdamState.for_params(params, learning_rate=cfg.learning_rate)
    rng = np.random.default_rng([1, cfg.seed])
    history: list[dict] = []
    breakdown = None
    step = 0
    with threadpool_limits(limits=cfg.threads):
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(ds.N) if cfg.shuffle else np.arange(ds.N)
            for start in range(0, ds.N, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                x = ds.images[idx]
                ys = [y[idx] for y in blocks]
                eps = rng.standard_normal((len(idx), mcfg.K)).astype(np.float32)
                breakdown, grads = wela_loss(params, mcfg, x, ys, eps, ds.N)
                step += 1
                _check_finite(breakdown, epoch, step)
                params.set_grads(grads)
                adam_step(params, state)
                history.append({"epoch": epoch, "step": step, **breakdown.as_row()})
            log.debug("epoch %d: total %.4f", epoch, history[-1]["total"])
    wall = time.perf_counter() - started

    acc = label_accuracy(params, mcfg, ds, labels) if mcfg.m else []
    result = RunResult(
        seed=cfg.seed,
        final=breakdown,
        accuracies=acc,
        wall_seconds=wall,
        threads=cfg.threads,
        steps=step,
        history=history,
        params=params,
        config=cfg,
    )
    if out_dir is not None:
        _write_run(result, ds, Path(out_dir))
    return result


def _check_finite(b: LossBreakdown, epoch: int, step: int) -> None:
    terms = {"recon_x": b.recon_x, "kl": b.kl, "tc": b.tc, "total": b.total}
    terms.update({f"recon_y{j}": v for j, v in enumerate(b.recon_y)})
    for name, value in terms.items():
        if not math.isfinite(value):
            raise TrainingDiverged(epoch, step, name, b)


def _write_run(result: RunResult, ds: BlobDataset, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / LOG_NAME
    fields = list(result.history[0].keys())
    with open(log_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in result.history:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    cfg = result.config
    ckpt = save_checkpoint(
        result.params,
        cfg.model,
        out,
        seed=cfg.seed,
        epoch=cfg.epochs,
        steps=result.steps,
        final_loss=asdict(result.final),
        epoch_mean_total=result.epoch_means(),
        dataset_hash=ds.manifest.get("content_hash"),
    )
    result.checkpoint_path = str(ckpt)
    result.log_path = str(log_path)
    (out / RUN_NAME).write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True))


def forward_means(params, cfg: ModelConfig, images, blocks, batch_size: int = 2048):
    """Mean codes and label logits for every row, with z = mu."""
    mus, logits = [], [[] for _ in range(cfg.m)]
    for start in range(0, images.shape[0], batch_size):
        sl = slice(start, start + batch_size)
        code = encode(params, cfg, images[sl], [y[sl] for y in blocks])
        mus.append(code.mu)
        if cfg.m:
            out = decode(params, cfg, code.mu)
            for j, l in enumerate(out.label_logits):
                logits[j].append(l)
    mu = np.concatenate(mus, axis=0)
    return mu, [np.concatenate(l, axis=0) for l in logits]


def label_accuracy(params, cfg: ModelConfig, ds: BlobDataset, labels: WeakLabelSet | None) -> list[float]:
    """Fraction of samples whose arg-max label logit hits the true bin, per factor."""
    if cfg.m == 0:
        return []
    blocks = _label_blocks(labels, cfg)
    _, logits = forward_means(params, cfg, ds.images, blocks)
    # np.argmax resolves ties toward the lowest index
    return [float(np.mean(np.argmax(l, axis=1) == np.argmax(y, axis=1))) for l, y in zip(logits, blocks)]
