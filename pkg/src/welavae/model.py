"""Dense Gaussian encoder and Bernoulli/categorical decoder.

The encoder reads ``concat(x, y_1, ..., y_m)`` and emits ``(mu, logvar)``.
The decoder maps ``z`` through a shared trunk to one pixel-logit head and one
logit head per weak label. With ``m == 0`` this is the plain TCVAE network.

Forward passes return a cache that the matching ``*_backward`` function
consumes; gradients are wired by hand for this fixed topology.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .numerics import DimensionError, ParamStore, affine_backward, affine_forward, relu, relu_backward


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    D: int = 4096
    K: int = 2
    label_dims: list[int] = field(default_factory=list)
    hidden: int = 1200
    hidden_layers: int = 2
    gamma: float = 1.0
    beta: float = 0.0
    logvar_clamp: tuple[float, float] = (-8.0, 8.0)
    # extra unlabelled channels tend to entangle; opt out only for diagnostics
    require_k_equals_m: bool = True

    def __post_init__(self):
        self.label_dims = [int(p) for p in self.label_dims]
        self.logvar_clamp = tuple(float(v) for v in self.logvar_clamp)
        if self.K < 1 or self.D < 1 or self.hidden < 1 or self.hidden_layers < 1:
            raise ConfigError(f"invalid sizes in {self}")
        if self.m > 0 and self.K != self.m and self.require_k_equals_m:
            raise ConfigError(f"labelled models need K == m, got K={self.K}, m={self.m}")
        if self.m > 0 and self.gamma < 1:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if any(p < 2 for p in self.label_dims):
            raise ConfigError(f"label dims must be >= 2, got {self.label_dims}")

    @property
    def m(self) -> int:
        return len(self.label_dims)

    @property
    def encoder_input(self) -> int:
        return self.D + sum(self.label_dims)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["logvar_clamp"] = list(self.logvar_clamp)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class LatentCode:
    mu: np.ndarray
    logvar: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.logvar)


@dataclass
class DecoderOutput:
    pixel_logits: np.ndarray
    label_logits: list[np.ndarray]


def _enc_layers(cfg: ModelConfig):
    widths = [cfg.encoder_input] + [cfg.hidden] * cfg.hidden_layers
    layers = [(f"enc.{i}", widths[i], widths[i + 1]) for i in range(cfg.hidden_layers)]
    layers.append(("enc.head", cfg.hidden, 2 * cfg.K))
    return layers


def _dec_layers(cfg: ModelConfig):
    widths = [cfg.K] + [cfg.hidden] * cfg.hidden_layers
    layers = [(f"dec.{i}", widths[i], widths[i + 1]) for i in range(cfg.hidden_layers)]
    layers.append(("dec.x", cfg.hidden, cfg.D))
    layers += [(f"dec.y{j}", cfg.hidden, p) for j, p in enumerate(cfg.label_dims)]
    return layers


def parameter_count(cfg: ModelConfig) -> int:
    h, L = cfg.hidden, cfg.hidden_layers
    trunk = (L - 1) * (h * h + h)
    enc = cfg.encoder_input * h + h + trunk + h * 2 * cfg.K + 2 * cfg.K
    dec = cfg.K * h + h + trunk + h * cfg.D + cfg.D + sum(h * p + p for p in cfg.label_dims)
    return enc + dec


def init_params(cfg: ModelConfig, seed: int, dtype=np.float32) -> ParamStore:
    """Glorot-uniform weights, zero biases; a pure function of ``(cfg, seed)``."""
    rng = np.random.default_rng(seed)
    params = ParamStore()
    for name, n_in, n_out in _enc_layers(cfg) + _dec_layers(cfg):
        a = np.sqrt(6.0 / (n_in + n_out))
        params.add(f"{name}.W", rng.uniform(-a, a, size=(n_in, n_out)).astype(dtype))
        params.add(f"{name}.b", np.zeros(n_out, dtype=dtype))
    return params


def _check_labels(cfg: ModelConfig, ys, batch: int):
    ys = list(ys) if ys is not None else []
    if len(ys) != cfg.m:
        raise ConfigError(f"model expects {cfg.m} label blocks, got {len(ys)}")
    for j, (y, p) in enumerate(zip(ys, cfg.label_dims)):
        if y.shape != (batch, p):
            raise ConfigError(f"label block {j} has shape {y.shape}, expected {(batch, p)}")
    return ys


def encode_cached(params: ParamStore, cfg: ModelConfig, x: np.ndarray, ys=None):
    if x.ndim != 2 or x.shape[1] != cfg.D:
        raise DimensionError(f"encoder expects (B, {cfg.D}) input, got {x.shape}")
    ys = _check_labels(cfg, ys, x.shape[0])
    h = np.concatenate([x] + [y.astype(x.dtype, copy=False) for y in ys], axis=1) if ys else x
    inputs, pre = [], []
    for i in range(cfg.hidden_layers):
        inputs.append(h)
        a = affine_forward(h, params[f"enc.{i}.W"], params[f"enc.{i}.b"])
        pre.append(a)
        h = relu(a)
    inputs.append(h)
    out = affine_forward(h, params["enc.head.W"], params["enc.head.b"])
    raw_logvar = out[:, cfg.K :]
    lo, hi = cfg.logvar_clamp
    code = LatentCode(mu=out[:, : cfg.K], logvar=np.clip(raw_logvar, lo, hi))
    cache = {"inputs": inputs, "pre": pre, "raw_logvar": raw_logvar}
    return code, cache


def encode(params: ParamStore, cfg: ModelConfig, x: np.ndarray, ys=None) -> LatentCode:
    return encode_cached(params, cfg, x, ys)[0]


def encode_backward(params, cfg: ModelConfig, cache, d_mu, d_logvar) -> dict[str, np.ndarray]:
    lo, hi = cfg.logvar_clamp
    raw = cache["raw_logvar"]
    d_raw = np.where((raw >= lo) & (raw <= hi), d_logvar, 0).astype(d_logvar.dtype, copy=False)
    grads = {}
    g = np.concatenate([d_mu, d_raw], axis=1)
    g, grads["enc.head.W"], grads["enc.head.b"] = affine_backward(g, cache["inputs"][-1], params["enc.head.W"])
    for i in reversed(range(cfg.hidden_layers)):
        g = relu_backward(g, cache["pre"][i])
        g, grads[f"enc.{i}.W"], grads[f"enc.{i}.b"] = affine_backward(g, cache["inputs"][i], params[f"enc.{i}.W"])
    return grads


def reparameterize(code: LatentCode, eps: np.ndarray) -> np.ndarray:
    if eps.shape != code.mu.shape:
        raise DimensionError(f"eps shape {eps.shape} does not match mu shape {code.mu.shape}")
    return code.mu + np.exp(0.5 * code.logvar) * eps


def decode_cached(params: ParamStore, cfg: ModelConfig, z: np.ndarray):
    if z.ndim != 2 or z.shape[1] != cfg.K:
        raise DimensionError(f"decoder expects (B, {cfg.K}) latents, got {z.shape}")
    h = z
    inputs, pre = [], []
    for i in range(cfg.hidden_layers):
        inputs.append(h)
        a = affine_forward(h, params[f"dec.{i}.W"], params[f"dec.{i}.b"])
        pre.append(a)
        h = relu(a)
    inputs.append(h)
    out = DecoderOutput(
        pixel_logits=affine_forward(h, params["dec.x.W"], params["dec.x.b"]),
        label_logits=[affine_forward(h, params[f"dec.y{j}.W"], params[f"dec.y{j}.b"]) for j in range(cfg.m)],
    )
    return out, {"inputs": inputs, "pre": pre}


def decode(params: ParamStore, cfg: ModelConfig, z: np.ndarray) -> DecoderOutput:
    return decode_cached(params, cfg, z)[0]


def decode_backward(params, cfg: ModelConfig, cache, d_pixel, d_labels):
    """Return ``(grads, d_z)``."""
    grads = {}
    top = cache["inputs"][-1]
    g, grads["dec.x.W"], grads["dec.x.b"] = affine_backward(d_pixel, top, params["dec.x.W"])
    for j in range(cfg.m):
        gj, grads[f"dec.y{j}.W"], grads[f"dec.y{j}.b"] = affine_backward(d_labels[j], top, params[f"dec.y{j}.W"])
        g = g + gj
    for i in reversed(range(cfg.hidden_layers)):
        g = relu_backward(g, cache["pre"][i])
        g, grads[f"dec.{i}.W"], grads[f"dec.{i}.b"] = affine_backward(g, cache["inputs"][i], params[f"dec.{i}.W"])
    return grads, g


# ---------------------------------------------------------------------------
# checkpoints

CKPT_MANIFEST = "checkpoint.json"
CKPT_BLOB = "checkpoint.bin"


def _params_hash(params: ParamStore) -> str:
    h = hashlib.sha256()
    for name in params.names():
        h.update(name.encode())
        h.update(memoryview(np.ascontiguousarray(params[name], dtype="<f4")).cast("B"))
    return h.hexdigest()


def save_checkpoint(params: ParamStore, cfg: ModelConfig, out_dir, **meta) -> Path:
    """Write ``checkpoint.json`` plus little-endian float32 arrays in sorted-name order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    layout, offset = [], 0
    with open(out / CKPT_BLOB, "wb") as fh:
        for name in params.names():
            arr = np.ascontiguousarray(params[name], dtype="<f4")
            arr.tofile(fh)
            layout.append({"name": name, "offset": offset, "shape": list(arr.shape)})
            offset += arr.nbytes
    manifest = {
        "config": cfg.to_dict(),
        "endianness": "little",
        "dtype": "float32",
        "blob": CKPT_BLOB,
        "layout": layout,
        "content_hash": _params_hash(params),
        **meta,
    }
    (out / CKPT_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out / CKPT_MANIFEST


def load_checkpoint(path, verify: bool = True):
    """Return ``(params, cfg, manifest)``."""
    path = Path(path)
    if path.is_dir():
        path = path / CKPT_MANIFEST
    manifest = json.loads(path.read_text())
    raw = np.fromfile(path.parent / manifest["blob"], dtype="<f4")
    params = ParamStore()
    for entry in manifest["layout"]:
        start, count = entry["offset"] // 4, int(np.prod(entry["shape"]))
        params.add(entry["name"], raw[start : start + count].reshape(entry["shape"]).astype(np.float32))
    if verify and _params_hash(params) != manifest["content_hash"]:
        raise ValueError(f"checkpoint {path} fails hash check")
    return params, ModelConfig.from_dict(manifest["config"]), manifest
