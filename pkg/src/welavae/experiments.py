"""Multi-seed sweeps and summary reports.

Runs are content-addressed: each lives in ``<out>/<family>-p<p>-<hash>/seed-<s>``
where the hash covers the training config minus the seed, so an interrupted
sweep picks up where it stopped.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import load_dataset
from .evaluation import represent, score
from .model import CKPT_MANIFEST, ModelConfig, load_checkpoint
from .trainer import RUN_NAME, TrainConfig, TrainingDiverged, train

log = logging.getLogger(__name__)

# label-reconstruction weight per label dimensionality
REFERENCE_GAMMAS = {2: 2000.0, 3: 1500.0, 4: 1000.0, 5: 800.0, 6: 750.0, 7: 600.0, 8: 500.0}
DEFAULT_BETA = 40.0
TCVAE_K = 5
FAILED_NAME = "failed.json"
DATASET_REF = "dataset.ref"

REPORT_COLUMNS = [
    "family", "p", "beta", "gamma", "seeds_ok", "seeds_failed",
    "acc_angle", "acc_distance", "mse_lowest", "mse_mean", "mse_best10",
]


def rule_of_thumb_gamma(D: int, p: int, m: int = 2) -> float:
    """gamma such that image dimension ~ gamma * total label dimension."""
    return D / (m * p)


def check_gamma(gamma: float, p: int, D: int = 4096, m: int = 2) -> bool:
    """True when ``gamma * m * p`` is within a factor of two of ``D``; warns otherwise."""
    ratio = gamma * m * p / D
    ok = 0.5 <= ratio <= 2.0
    if not ok:
        warnings.warn(f"gamma={gamma} for p={p} is off the rule of thumb (gamma*{m}p/D = {ratio:.2f})")
    return ok


@dataclass
class SweepConfig:
    dataset: str
    family: str  # "tcvae" or "wela"
    out_dir: str
    beta: float = DEFAULT_BETA
    gammas: dict[int, float] = field(default_factory=lambda: dict(REFERENCE_GAMMAS))
    ps: list[int] = field(default_factory=lambda: [2, 3, 4, 5, 6, 7, 8])
    K: int | None = None
    seeds: list[int] = field(default_factory=lambda: list(range(50)))
    workers: int = 1
    learning_rate: float = 1e-4
    batch_size: int = 256
    epochs: int = 150
    hidden: int = 1200
    threads: int = 1

    def __post_init__(self):
        if self.family not in ("tcvae", "wela"):
            raise ValueError(f"unknown family {self.family!r}")
        self.gammas = {int(k): float(v) for k, v in self.gammas.items()}
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.family == "wela":
            missing = [p for p in self.ps if p not in self.gammas]
            if missing:
                raise ValueError(f"no gamma for p={missing}")

    def groups(self) -> list[int | None]:
        return [None] if self.family == "tcvae" else list(self.ps)


@dataclass
class RunSpec:
    dataset: str
    train: TrainConfig
    p: int | None
    run_dir: str


def config_hash(train_cfg: TrainConfig, dataset_hash: str) -> str:
    d = train_cfg.to_dict()
    d.pop("seed")
    d.pop("threads")
    d["dataset"] = dataset_hash
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


def plan_runs(cfg: SweepConfig, D: int, dataset_hash: str) -> list[RunSpec]:
    specs = []
    for p in cfg.groups():
        if p is None:
            mcfg = ModelConfig(D=D, K=cfg.K or TCVAE_K, hidden=cfg.hidden, beta=cfg.beta)
        else:
            check_gamma(cfg.gammas[p], p, D)
            mcfg = ModelConfig(D=D, K=cfg.K or 2, label_dims=[p, p], hidden=cfg.hidden,
                               beta=cfg.beta, gamma=cfg.gammas[p])
        for seed in cfg.seeds:
            tcfg = TrainConfig(mcfg, learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
                               epochs=cfg.epochs, seed=seed, threads=cfg.threads)
            group = f"{cfg.family}-p{p if p is not None else 0}-{config_hash(tcfg, dataset_hash)}"
            specs.append(RunSpec(cfg.dataset, tcfg, p, str(Path(cfg.out_dir) / group / f"seed-{seed}")))
    return specs


def is_complete(run_dir) -> bool:
    run_dir = Path(run_dir)
    if (run_dir / FAILED_NAME).exists():
        return True
    if not (run_dir / RUN_NAME).exists():
        return False
    try:
        load_checkpoint(run_dir / CKPT_MANIFEST, verify=True)
    except (OSError, ValueError, KeyError):
        return False
    return True


def execute(spec: RunSpec) -> dict:
    """Train one run (or load it if already complete); returns its run record."""
    run_dir = Path(spec.run_dir)
    if is_complete(run_dir):
        return read_run(run_dir)
    ds = load_dataset(spec.dataset)
    labels = ds.labels[spec.p] if spec.p is not None else None
    try:
        result = train(ds, labels, spec.train, out_dir=run_dir)
    except TrainingDiverged as exc:
        run_dir.mkdir(parents=True, exist_ok=True)
        record = {"seed": spec.train.seed, "failed": True, "epoch": exc.epoch, "step": exc.step,
                  "term": exc.term, "config": spec.train.to_dict()}
        (run_dir / FAILED_NAME).write_text(json.dumps(record, indent=2, sort_keys=True))
        return record
    (run_dir / DATASET_REF).write_text(str(Path(spec.dataset).resolve()) + "\n")
    return result.to_dict()


def read_run(run_dir) -> dict:
    run_dir = Path(run_dir)
    if (run_dir / FAILED_NAME).exists():
        return json.loads((run_dir / FAILED_NAME).read_text())
    return json.loads((run_dir / RUN_NAME).read_text())


def run_sweep(cfg: SweepConfig) -> list[dict]:
    ds = load_dataset(cfg.dataset)
    if cfg.family == "wela":
        missing = [p for p in cfg.ps if p not in ds.labels]
        if missing:
            raise ValueError(f"dataset {cfg.dataset} has no labels for p={missing}")
    specs = plan_runs(cfg, ds.D, ds.content_hash)
    del ds
    if cfg.workers <= 1:
        return [execute(s) for s in specs]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(execute, specs))


# ---------------------------------------------------------------------------
# evaluation and reporting


@dataclass
class ReportRow:
    family: str
    p: int | None
    beta: float
    gamma: float | None
    seeds_ok: int
    seeds_failed: int
    acc_angle: float | None
    acc_distance: float | None
    mse_lowest: float | None
    mse_mean: float | None
    mse_best10: float | None

    def as_csv(self) -> dict:
        out = {}
        for key in REPORT_COLUMNS:
            v = getattr(self, key)
            out[key] = "" if v is None else (repr(v) if isinstance(v, float) else v)
        return out


def summarize(scores) -> tuple[float, float, float]:
    """``(lowest, mean, mean of the best ceil(10%))`` of a list of MSEs."""
    s = np.sort(np.asarray(scores, dtype=np.float64))
    if s.size == 0:
        raise ValueError("no scores")
    top = max(1, math.ceil(0.1 * s.size))
    return float(s[0]), float(s.mean()), float(s[:top].mean())


def evaluate_run(run_dir, task: str, ds=None) -> dict:
    """Score one completed run; writes ``metrics_<task>.json`` next to the checkpoint."""
    run_dir = Path(run_dir)
    cache = run_dir / f"metrics_{task}.json"
    if cache.exists():
        return json.loads(cache.read_text())
    record = read_run(run_dir)
    params, mcfg, manifest = load_checkpoint(run_dir / CKPT_MANIFEST)
    p = mcfg.label_dims[0] if mcfg.m else None
    labels = ds.labels[p] if p is not None else None
    res = score(represent(params, mcfg, ds, labels), task)
    out = {
        "seed": manifest["seed"],
        "task": task,
        "mse": res.mse,
        "assignment": list(res.channel_assignment),
        "inversions": list(res.inversion_flags),
        "accuracies": record.get("accuracies", []),
    }
    cache.write_text(json.dumps(out, indent=2, sort_keys=True))
    return out


def discover_groups(runs_dir) -> dict[str, list[Path]]:
    root = Path(runs_dir)
    groups: dict[str, list[Path]] = {}
    if not root.is_dir():
        return groups
    for seed_dir in sorted(root.glob("*/seed-*")):
        if (seed_dir / RUN_NAME).exists() or (seed_dir / FAILED_NAME).exists():
            groups.setdefault(seed_dir.parent.name, []).append(seed_dir)
    return groups


def build_report(runs_dir, task: str, dataset=None) -> list[ReportRow]:
    """One row per model group found under ``runs_dir``; also writes per-seed CSVs."""
    groups = discover_groups(runs_dir)
    if not groups:
        raise FileNotFoundError(f"no runs found under {runs_dir}")
    ds = None
    rows = []
    for name, seed_dirs in sorted(groups.items()):
        records = [(d, read_run(d)) for d in seed_dirs]
        ok = [(d, r) for d, r in records if not r.get("failed")]
        failed = len(records) - len(ok)
        cfg = TrainConfig.from_dict(records[0][1]["config"])
        mcfg = cfg.model
        family = "wela" if mcfg.m else "tcvae"
        p = mcfg.label_dims[0] if mcfg.m else None
        if not ok:
            rows.append(ReportRow(family, p, mcfg.beta, mcfg.gamma if p else None, 0, failed,
                                  None, None, None, None, None))
            continue
        if ds is None:
            ds = load_dataset(dataset or _dataset_from_runs(ok))
        metrics = [evaluate_run(d, task, ds) for d, _ in ok]
        _write_seed_csv(Path(runs_dir) / name / f"scores_{task}.csv", name, metrics)
        lowest, mean, best10 = summarize([m["mse"] for m in metrics])
        best = min(metrics, key=lambda m: m["mse"])
        acc = best["accuracies"] + [None, None]
        rows.append(ReportRow(family, p, mcfg.beta, mcfg.gamma if p else None, len(ok), failed,
                              acc[0], acc[1], lowest, mean, best10))
    rows.sort(key=lambda r: (r.family != "tcvae", r.p or 0))
    return rows


def _dataset_from_runs(ok) -> str:
    for d, _ in ok:
        ref = d / DATASET_REF
        if ref.exists():
            return ref.read_text().strip()
    raise FileNotFoundError("runs do not record their dataset; pass it explicitly")


def _write_seed_csv(path: Path, model_id: str, metrics: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "seed", "task", "mse", "assignment", "inversions"])
        for m in sorted(metrics, key=lambda m: m["seed"]):
            w.writerow([model_id, m["seed"], m["task"], repr(m["mse"]),
                        "-".join(map(str, m["assignment"])), "-".join(str(int(b)) for b in m["inversions"])])


def write_report(rows: list[ReportRow], out_dir, task: str) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"report_{task}.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(r.as_csv())
    txt_path = out / f"report_{task}.txt"
    txt_path.write_text(format_table(rows, task))
    return csv_path, txt_path


def format_table(rows: list[ReportRow], task: str) -> str:
    def f(v, nd=2):
        return "-" if v is None else f"{v:.{nd}f}"

    header = ["Model", "beta", "gamma", "Label dim.", "acc phi", "acc d", "Lowest", "Mean", "Mean: best 10%", "ok/failed"]
    body = []
    for r in rows:
        body.append([
            "beta-TCVAE" if r.family == "tcvae" else "WeLa-VAE",
            f(r.beta, 0), f(r.gamma, 0), "-" if r.p is None else f"p={r.p}",
            f(r.acc_angle), f(r.acc_distance), f(r.mse_lowest), f(r.mse_mean), f(r.mse_best10),
            f"{r.seeds_ok}/{r.seeds_failed}",
        ])
    widths = [max(len(str(c)) for c in col) for col in zip(header, *body)]
    line = lambda cells: "  ".join(str(c).rjust(w) for c, w in zip(cells, widths))
    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    out = [f"{task} coordinate-recovery MSE", rule, line(header), rule]
    out += [line(b) for b in body]
    out.append(rule)
    return "\n".join(out) + "\n"


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
