"""Coordinate-recovery scores, latent traversals and positional heat maps.

The representation of an image is its encoder mean ``mu``. A Cartesian score
maps two channels linearly onto the canvas extent; a polar score maps one
channel onto ``[0, pi/2]`` and another onto ``[0, max_distance]`` and converts to
Cartesian. Every ordered channel pair and every combination of inversions is
tried and the lowest mean squared L2 error is reported.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import BlobDataset, WeakLabelSet
from .model import ModelConfig, decode, encode
from .trainer import _label_blocks, forward_means

CANONICAL_SIDE = 64
CANONICAL_EXTENT = 64.0
CANONICAL_MAX_DISTANCE = 90.5
MAX_ANGLE = math.pi / 2
DEGENERATE_SPAN = 1e-9


def canvas_ranges(side: int = CANONICAL_SIDE, mode: str = "grid") -> tuple[float, float]:
    """Rescale targets ``(extent, max_distance)`` for a canvas.

    ``"nominal"`` gives ``(64, 90.5)`` at side 64 and scales them with the side.
    ``"grid"`` (default) uses the span actually covered by integer positions,
    ``side - 1``, with the same distance-to-extent ratio, so a representation
    equal to the true coordinates scores zero.
    """
    if mode == "nominal":
        span = float(side)
    elif mode == "grid":
        span = float(side - 1)
    else:
        raise ValueError(f"unknown range mode {mode!r}")
    scale = span / CANONICAL_SIDE
    return CANONICAL_EXTENT * scale, CANONICAL_MAX_DISTANCE * scale


@dataclass
class RepresentationMatrix:
    mu: np.ndarray
    coords: np.ndarray
    mins: np.ndarray
    maxs: np.ndarray
    side: int = CANONICAL_SIDE

    @classmethod
    def from_arrays(cls, mu, coords, side: int = CANONICAL_SIDE) -> "RepresentationMatrix":
        mu = np.asarray(mu, dtype=np.float64)
        return cls(mu=mu, coords=np.asarray(coords, dtype=np.float64),
                   mins=mu.min(axis=0), maxs=mu.max(axis=0), side=side)

    @property
    def K(self) -> int:
        return self.mu.shape[1]

    @property
    def degenerate(self) -> np.ndarray:
        return (self.maxs - self.mins) < DEGENERATE_SPAN


@dataclass
class MetricResult:
    mse: float
    channel_assignment: tuple[int, int]
    inversion_flags: tuple[bool, bool]
    task: str


def represent(params, cfg: ModelConfig, ds: BlobDataset, labels: WeakLabelSet | None = None) -> RepresentationMatrix:
    mu, _ = forward_means(params, cfg, ds.images, _label_blocks(labels, cfg))
    return RepresentationMatrix.from_arrays(mu, ds.coords, ds.side)


def rescale_channel(values, target, invert: bool = False, vmin=None, vmax=None) -> np.ndarray:
    """Map ``[vmin, vmax]`` linearly onto ``target``; optionally reverse the order.

    A channel whose span is below ``1e-9`` maps to the midpoint of ``target``.
    """
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(target[0]), float(target[1])
    vmin = v.min() if vmin is None else vmin
    vmax = v.max() if vmax is None else vmax
    if vmax - vmin < DEGENERATE_SPAN:
        return np.full_like(v, 0.5 * (lo + hi))
    out = (v - vmin) * ((hi - lo) / (vmax - vmin)) + lo
    if invert:
        out = hi + lo - out
    return out


def _search(rep: RepresentationMatrix, task: str, to_xy) -> MetricResult:
    if rep.K < 2:
        raise ValueError(f"{task} score needs at least two channels, got K={rep.K}")
    best = None
    for i, j in itertools.permutations(range(rep.K), 2):
        for inv_i, inv_j in itertools.product((False, True), repeat=2):
            xy = to_xy(rep, i, j, inv_i, inv_j)
            mse = float(np.mean(np.sum((rep.coords - xy) ** 2, axis=1)))
            if best is None or mse < best.mse:
                best = MetricResult(mse, (i, j), (inv_i, inv_j), task)
    return best


def _channel(rep, k, target, invert):
    return rescale_channel(rep.mu[:, k], target, invert, rep.mins[k], rep.maxs[k])


def cartesian_estimate(rep, i, j, inv_i, inv_j, extent: float) -> np.ndarray:
    return np.stack([_channel(rep, i, (0, extent), inv_i), _channel(rep, j, (0, extent), inv_j)], axis=1)


def polar_estimate(rep, i, j, inv_i, inv_j, max_distance: float) -> np.ndarray:
    phi = _channel(rep, i, (0, MAX_ANGLE), inv_i)
    d = _channel(rep, j, (0, max_distance), inv_j)
    return np.stack([d * np.cos(phi), d * np.sin(phi)], axis=1)


def cartesian_mse(rep: RepresentationMatrix, extent: float | None = None, mode: str = "grid") -> MetricResult:
    if extent is None:
        extent = canvas_ranges(rep.side, mode)[0]
    return _search(rep, "cartesian", lambda r, i, j, a, b: cartesian_estimate(r, i, j, a, b, extent))


def polar_mse(rep: RepresentationMatrix, max_distance: float | None = None, mode: str = "grid") -> MetricResult:
    if max_distance is None:
        max_distance = canvas_ranges(rep.side, mode)[1]
    return _search(rep, "polar", lambda r, i, j, a, b: polar_estimate(r, i, j, a, b, max_distance))


def score(rep: RepresentationMatrix, task: str, mode: str = "grid") -> MetricResult:
    if task == "cartesian":
        return cartesian_mse(rep, mode=mode)
    if task == "polar":
        return polar_mse(rep, mode=mode)
    raise ValueError(f"unknown task {task!r}")


# ---------------------------------------------------------------------------
# qualitative artefacts


def traverse(params, cfg: ModelConfig, x, ys=None, value_range=(-3.0, 3.0), steps: int = 10) -> np.ndarray:
    """Decoded sweeps of each latent channel, shape ``(B, K, steps, D)``, values in [0, 1]."""
    if steps < 2:
        raise ValueError("a traversal needs at least two steps")
    x = np.atleast_2d(x)
    code = encode(params, cfg, x, ys)
    sweep = np.linspace(value_range[0], value_range[1], steps, dtype=np.float32)
    B, K = code.mu.shape
    z = np.repeat(code.mu[:, None, None, :], K, axis=1).repeat(steps, axis=2)  # (B, K, steps, K)
    for k in range(K):
        z[:, k, :, k] = sweep
    logits = decode(params, cfg, z.reshape(-1, K)).pixel_logits
    return (0.5 * (1.0 + np.tanh(0.5 * logits))).reshape(B, K, steps, -1)


def traversal_panel(ds: BlobDataset) -> np.ndarray:
    """Fixed sample indices: corners, centre and edge midpoints, first sigma variant."""
    s = ds.side - 1
    h = ds.side // 2
    positions = [(0, 0), (s, 0), (0, s), (s, s), (h, h), (h, 0), (0, h), (s, h), (h, s)]
    return np.array([(c1 * ds.side + c2) * ds.variants for c1, c2 in positions])


def heatmap(params, cfg: ModelConfig, ds: BlobDataset, labels: WeakLabelSet | None = None) -> np.ndarray:
    """Mean ``mu_k`` per blob position, shape ``(K, side, side)`` indexed ``[k, c2, c1]``."""
    mu, _ = forward_means(params, cfg, ds.images, _label_blocks(labels, cfg))
    return position_means(mu, ds)


def position_means(values: np.ndarray, ds: BlobDataset) -> np.ndarray:
    side = ds.side
    c = ds.coords.astype(np.int64)
    counts = np.bincount(c[:, 1] * side + c[:, 0], minlength=side * side)
    if ds.N != side * side * ds.variants or np.any(counts != ds.variants):
        raise ValueError("heat maps need the full position grid with equal variants per position")
    cell = c[:, 1] * side + c[:, 0]
    out = np.zeros((side * side, values.shape[1]), dtype=np.float64)
    np.add.at(out, cell, values)
    return (out / ds.variants).T.reshape(values.shape[1], side, side)


# ---------------------------------------------------------------------------
# image output


def to_gray(values, lo: float, hi: float) -> np.ndarray:
    v = np.clip(np.asarray(values, dtype=np.float64), lo, hi)
    return np.rint((v - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_pgm(path, image: np.ndarray, lo: float = 0.0, hi: float = 1.0, note: str = "") -> Path:
    """Binary 8-bit PGM plus a ``.txt`` sidecar describing the value-to-gray map."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    gray = to_gray(image, lo, hi)
    rows, cols = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())
    sidecar = f"format: P5 8-bit\nvalue_range: [{lo}, {hi}]\ngray = round((clip(v, lo, hi) - lo) / (hi - lo) * 255)\n"
    if note:
        sidecar += note.rstrip("\n") + "\n"
    path.with_suffix(".txt").write_text(sidecar)
    return path


def read_pgm(path) -> np.ndarray:
    # only the header layout written by write_pgm (no comments)
    data = Path(path).read_bytes()
    magic, size, maxval, pixels = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError("not an 8-bit binary PGM")
    cols, rows = map(int, size.split())
    return np.frombuffer(pixels[: rows * cols], dtype=np.uint8).reshape(rows, cols)


def tile_traversal(grid: np.ndarray, side: int) -> np.ndarray:
    """``(K, steps, D)`` -> one ``(K*side, steps*side)`` image."""
    K, steps, _ = grid.shape
    return grid.reshape(K, steps, side, side).transpose(0, 2, 1, 3).reshape(K * side, steps * side)


def write_heatmaps(maps: np.ndarray, out_dir, prefix: str = "heatmap") -> list[Path]:
    out = Path(out_dir)
    written = []
    for k, m in enumerate(maps):
        written.append(
            write_pgm(out / f"{prefix}_{k}.pgm", m, -3.0, 3.0,
                      note="diverging scale: -3 -> 0 (dark), 0 -> 128, +3 -> 255; rows are c2, columns are c1")
        )
        np.savetxt(out / f"{prefix}_{k}.csv", m, delimiter=",", fmt="%.9g")
    return written
