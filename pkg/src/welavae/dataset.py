"""Blobs dataset: one white Gaussian blob per 64x64 black canvas.

Ground-truth factors are the blob centre ``(c1, c2)`` (column, row, origin at
the top-left corner). Each integer position appears once per blob width in a
fixed sigma grid, so the canonical set has ``64 * 64 * 25 = 102400`` images.
Weak labels are one-hot memberships of the centre in ``p`` equal-width angle
sectors or distance annuli.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FACTORS = ("angle", "distance")
MANIFEST_NAME = "dataset.json"
BLOB_NAME = "dataset.bin"


class ParameterError(ValueError):
    pass


class LabelDomainError(ValueError):
    pass


@dataclass(frozen=True)
class BlobSpec:
    c1: float
    c2: float
    sigma: float


def render_blob(spec: BlobSpec, side: int = 64) -> np.ndarray:
    """Flattened ``side*side`` image; pixel ``(u, v)`` lives at ``v * side + u``."""
    if not spec.sigma > 0:
        raise ParameterError(f"sigma must be positive, got {spec.sigma}")
    u = np.arange(side, dtype=np.float64)
    gx = np.exp(-((u - spec.c1) ** 2) / (2.0 * spec.sigma**2))
    gy = np.exp(-((u - spec.c2) ** 2) / (2.0 * spec.sigma**2))
    return np.outer(gy, gx).reshape(-1).astype(np.float32)


def sigma_grid(variants: int, sigma_min: float, sigma_max: float) -> np.ndarray:
    return np.linspace(sigma_min, sigma_max, variants, dtype=np.float64)


def angle_of(c1, c2):
    """Polar angle of the centre in radians, in ``[0, pi/2]``; the origin maps to 0."""
    return np.arctan2(np.asarray(c2, dtype=np.float64), np.asarray(c1, dtype=np.float64))


def distance_of(c1, c2):
    return np.hypot(np.asarray(c1, dtype=np.float64), np.asarray(c2, dtype=np.float64))


def bin_index(value, lo: float, hi: float, p: int) -> np.ndarray:
    """Equal-width bin of each value; edges go to the upper bin, ``hi`` folds into ``p - 1``."""
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    if not hi > lo:
        raise ParameterError(f"empty range [{lo}, {hi}]")
    v = np.asarray(value, dtype=np.float64)
    if np.any(v < lo) or np.any(v > hi) or np.any(~np.isfinite(v)):
        raise LabelDomainError(f"value outside [{lo}, {hi}]")
    idx = np.floor(p * (v - lo) / (hi - lo)).astype(np.int64)
    return np.minimum(idx, p - 1)


def bin_label(value: float, value_range: tuple[float, float], p: int) -> np.ndarray:
    onehot = np.zeros(p, dtype=np.float32)
    onehot[int(bin_index(value, value_range[0], value_range[1], p))] = 1.0
    return onehot


@dataclass
class WeakLabelConfig:
    p: int
    factors: tuple[str, ...] = FACTORS
    angle_range: tuple[float, float] = (0.0, math.pi / 2)
    # None means [0, sqrt(2) * side] for the dataset at hand
    distance_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.p < 2:
            raise ParameterError(f"p must be >= 2, got {self.p}")
        unknown = set(self.factors) - set(FACTORS)
        if unknown or not self.factors:
            raise ParameterError(f"factors must be drawn from {FACTORS}, got {self.factors}")

    def range_for(self, factor: str, side: int) -> tuple[float, float]:
        if factor == "angle":
            return tuple(self.angle_range)
        if self.distance_range is not None:
            return tuple(self.distance_range)
        return (0.0, math.sqrt(2.0) * side)


@dataclass
class WeakLabelSet:
    config: WeakLabelConfig
    onehots: list[np.ndarray]

    @property
    def m(self) -> int:
        return len(self.onehots)

    @property
    def dims(self) -> list[int]:
        return [y.shape[1] for y in self.onehots]

    def indices(self) -> list[np.ndarray]:
        return [np.argmax(y, axis=1) for y in self.onehots]

    def take(self, idx) -> list[np.ndarray]:
        return [y[idx] for y in self.onehots]


@dataclass
class BlobDataset:
    side: int
    variants: int
    images: np.ndarray  # (N, side*side) float32
    coords: np.ndarray  # (N, 2) float32, columns (c1, c2)
    sigmas: np.ndarray  # (N,) float32
    manifest: dict = field(default_factory=dict)
    labels: dict[int, WeakLabelSet] = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.images.shape[0]

    @property
    def D(self) -> int:
        return self.images.shape[1]

    @property
    def content_hash(self) -> str:
        return self.manifest["content_hash"]


def generate_dataset(
    side: int = 64,
    variants: int = 25,
    sigma_min: float = 1.5,
    sigma_max: float = 4.0,
    seed: int = 0,
    jitter: float = 0.0,
) -> BlobDataset:
    """Render every integer position ``variants`` times, position-major, sigma-minor.

    With ``jitter == 0`` the output does not depend on ``seed``. A positive
    ``jitter`` perturbs each sigma uniformly by up to ``jitter`` pixels.
    """
    if side < 2 or variants < 1:
        raise ParameterError(f"need side >= 2 and variants >= 1, got side={side}, variants={variants}")
    if not (0 < sigma_min <= sigma_max):
        raise ParameterError(f"invalid sigma range [{sigma_min}, {sigma_max}]")
    if jitter < 0:
        raise ParameterError("jitter must be non-negative")

    grid = sigma_grid(variants, sigma_min, sigma_max)
    c1, c2, s = np.meshgrid(np.arange(side), np.arange(side), np.arange(variants), indexing="ij")
    c1, c2 = c1.reshape(-1), c2.reshape(-1)
    sig = grid[s.reshape(-1)]
    if jitter > 0:
        rng = np.random.default_rng(seed)
        sig = np.maximum(sig + rng.uniform(-jitter, jitter, size=sig.shape), 1e-3)

    n = side * side * variants
    images = np.empty((n, side * side), dtype=np.float32)
    u = np.arange(side, dtype=np.float64)
    chunk = 4096
    for start in range(0, n, chunk):
        sl = slice(start, min(n, start + chunk))
        inv = 1.0 / (2.0 * sig[sl, None] ** 2)
        gx = np.exp(-((u[None, :] - c1[sl, None]) ** 2) * inv)
        gy = np.exp(-((u[None, :] - c2[sl, None]) ** 2) * inv)
        images[sl] = (gy[:, :, None] * gx[:, None, :]).reshape(-1, side * side)

    ds = BlobDataset(
        side=side,
        variants=variants,
        images=images,
        coords=np.stack([c1, c2], axis=1).astype(np.float32),
        sigmas=sig.astype(np.float32),
    )
    ds.manifest = {
        "side": side,
        "variants": variants,
        "sigma_min": sigma_min,
        "sigma_max": sigma_max,
        "sigma_grid": grid.tolist(),
        "seed": seed,
        "jitter": jitter,
        "N": n,
        "D": side * side,
        "ordering": "c1-major, c2, sigma-minor",
    }
    ds.manifest["content_hash"] = _content_hash(ds)
    return ds


def build_weak_labels(ds: BlobDataset, cfg: WeakLabelConfig) -> WeakLabelSet:
    c1, c2 = ds.coords[:, 0], ds.coords[:, 1]
    values = {"angle": angle_of(c1, c2), "distance": distance_of(c1, c2)}
    onehots = []
    for factor in cfg.factors:
        lo, hi = cfg.range_for(factor, ds.side)
        idx = bin_index(values[factor], lo, hi, cfg.p)
        y = np.zeros((ds.N, cfg.p), dtype=np.float32)
        y[np.arange(ds.N), idx] = 1.0
        onehots.append(y)
    return WeakLabelSet(cfg, onehots)


def attach_labels(ds: BlobDataset, ps) -> BlobDataset:
    for p in ps:
        ds.labels[int(p)] = build_weak_labels(ds, WeakLabelConfig(p=int(p)))
    ds.manifest["content_hash"] = _content_hash(ds)
    return ds


def _sections(ds: BlobDataset):
    yield "images", ds.images
    yield "coords", ds.coords
    yield "sigmas", ds.sigmas
    for p in sorted(ds.labels):
        for factor, y in zip(ds.labels[p].config.factors, ds.labels[p].onehots):
            yield f"labels/p{p}/{factor}", y


def _content_hash(ds: BlobDataset) -> str:
    h = hashlib.sha256()
    for _, arr in _sections(ds):
        h.update(memoryview(np.ascontiguousarray(arr, dtype="<f4")).cast("B"))
    return h.hexdigest()


def save_dataset(ds: BlobDataset, out_dir) -> Path:
    """Write ``dataset.json`` (manifest) and ``dataset.bin`` (little-endian float32)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    layout = []
    offset = 0
    with open(out / BLOB_NAME, "wb") as fh:
        for name, arr in _sections(ds):
            arr = np.ascontiguousarray(arr, dtype="<f4")
            arr.tofile(fh)
            layout.append({"name": name, "offset": offset, "shape": list(arr.shape)})
            offset += arr.nbytes
    manifest = dict(ds.manifest)
    manifest.update(
        endianness="little",
        dtype="float32",
        blob=BLOB_NAME,
        layout=layout,
        labels={str(p): {"p": p, "factors": list(ls.config.factors)} for p, ls in sorted(ds.labels.items())},
    )
    with open(out / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return out


def load_dataset(path, verify: bool = True) -> BlobDataset:
    path = Path(path)
    if path.is_file():
        path = path.parent
    manifest = json.loads((path / MANIFEST_NAME).read_text())
    raw = np.fromfile(path / manifest["blob"], dtype="<f4")
    arrays = {}
    for entry in manifest["layout"]:
        start = entry["offset"] // 4
        count = int(np.prod(entry["shape"]))
        arrays[entry["name"]] = raw[start : start + count].reshape(entry["shape"]).astype(np.float32)
    ds = BlobDataset(
        side=manifest["side"],
        variants=manifest["variants"],
        images=arrays["images"],
        coords=arrays["coords"],
        sigmas=arrays["sigmas"],
    )
    for key, info in manifest.get("labels", {}).items():
        p = int(key)
        cfg = WeakLabelConfig(p=p, factors=tuple(info["factors"]))
        ds.labels[p] = WeakLabelSet(cfg, [arrays[f"labels/p{p}/{f}"] for f in cfg.factors])
    core = {k: manifest[k] for k in manifest if k not in ("endianness", "dtype", "blob", "layout", "labels")}
    ds.manifest = core
    if verify:
        actual = _content_hash(ds)
        if actual != manifest["content_hash"]:
            raise ValueError(f"dataset at {path} fails hash check ({actual} != {manifest['content_hash']})")
    return ds
