"""Loss terms for TCVAE and WeLa-VAE.

All values are in nats. Reconstruction terms are summed over dimensions and
averaged over the batch. The assembled loss is

    recon_x + gamma * sum_j recon_y[j] + KL(q(z|x,y) || N(0, I)) + beta * TC

where TC is the minibatch-weighted estimate of KL(q(z) || prod_k q(z_k)).
With no labels it is the TCVAE objective; with ``beta == 0`` as well it is
the plain negative ELBO.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ConfigError, LatentCode, ModelConfig, decode_backward, decode_cached, encode_backward, encode_cached
from .numerics import DimensionError, ParamStore

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class LossBreakdown:
    recon_x: float
    recon_y: list[float]
    kl: float
    tc: float
    total: float
    gamma: float
    beta: float
    N: int

    def as_row(self) -> dict:
        row = {"recon_x": self.recon_x}
        row.update({f"recon_y{j}": v for j, v in enumerate(self.recon_y)})
        row.update(kl=self.kl, tc=self.tc, total=self.total)
        return row


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _logsumexp(a, axis):
    amax = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(amax, axis=axis) + np.log(np.sum(np.exp(a - amax), axis=axis))


def _softmax(a, axis):
    e = np.exp(a - np.max(a, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def bernoulli_recon(pixel_logits: np.ndarray, x: np.ndarray) -> float:
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("Bernoulli targets must lie in [0, 1]")
    per_pixel = np.logaddexp(0, pixel_logits) - x * pixel_logits
    return float(np.sum(per_pixel) / x.shape[0])


def _check_onehot(y: np.ndarray) -> None:
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
        raise ValueError("label rows must be one-hot")


def categorical_recon(label_logits: np.ndarray, y_onehot: np.ndarray) -> float:
    _check_onehot(y_onehot)
    log_probs = label_logits - _logsumexp(label_logits, axis=1)[:, None]
    return float(-np.sum(log_probs * y_onehot) / y_onehot.shape[0])


def gaussian_kl(code: LatentCode) -> float:
    mu, lv = code.mu, code.logvar
    return float(0.5 * np.sum(mu * mu + np.exp(lv) - lv - 1.0) / mu.shape[0])


def log_gaussian(z: np.ndarray, code: LatentCode) -> np.ndarray:
    """``out[i, j, k] = log N(z[i, k]; mu[j, k], exp(logvar[j, k]))``."""
    if z.shape[1] != code.mu.shape[1]:
        raise DimensionError(f"latent width mismatch: z{z.shape} vs mu{code.mu.shape}")
    diff = z[:, None, :] - code.mu[None, :, :]
    lv = code.logvar[None, :, :]
    return -0.5 * (LOG_2PI + lv + diff * diff * np.exp(-lv))


def tc_mws_estimate(z: np.ndarray, code: LatentCode, N: int, include_constant: bool = False) -> float:
    """Minibatch-weighted total-correlation estimate.

    The ``log(M * N)`` normalisers of the joint and of each marginal leave a
    parameter-free offset of ``(K - 1) * log(M * N)``. It is dropped unless
    ``include_constant`` is set, so that a single-sample batch, whose
    posterior factorises exactly, scores 0.
    """
    return _tc_mws(z, code, N, include_constant, with_grad=False)[0]


def _tc_mws(z, code, N, include_constant=False, with_grad=True):
    M, K = z.shape
    if M == 0:
        raise ValueError("TC estimate needs at least one sample")
    if N < M:
        raise ValueError(f"dataset size N={N} smaller than batch M={M}")
    logq = log_gaussian(z, code)  # (i, j, k)
    joint = logq.sum(axis=2)  # (i, j)
    log_qz = _logsumexp(joint, axis=1)
    log_qz_k = _logsumexp(logq, axis=1)  # (i, k)
    tc = float(np.mean(log_qz - log_qz_k.sum(axis=1)))
    if include_constant:
        tc += (K - 1) * math.log(M * N)
    if not with_grad:
        return tc, None
    # d tc / d logq[i, j, k]
    G = (_softmax(joint, axis=1)[:, :, None] - _softmax(logq, axis=1)) / M
    inv_var = np.exp(-code.logvar)[None, :, :]
    diff = z[:, None, :] - code.mu[None, :, :]
    scaled = diff * inv_var
    d_z = -np.sum(G * scaled, axis=1)
    d_mu = np.sum(G * scaled, axis=0)
    d_lv = np.sum(G * (0.5 * diff * scaled - 0.5), axis=0)
    return tc, (d_z, d_mu, d_lv)


def wela_loss(
    params: ParamStore,
    cfg: ModelConfig,
    x: np.ndarray,
    ys,
    eps: np.ndarray,
    N: int,
    with_grad: bool = True,
):
    """Forward and backward pass of the full objective on one batch.

    Returns ``(LossBreakdown, grads)``; ``grads`` maps parameter names to
    arrays (``None`` when ``with_grad`` is false).
    """
    ys = list(ys) if ys is not None else []
    if len(ys) != cfg.m:
        raise ConfigError(f"config has m={cfg.m} labels but batch carries {len(ys)}")
    B = x.shape[0]
    code, enc_cache = encode_cached(params, cfg, x, ys)
    sigma = np.exp(0.5 * code.logvar)
    z = code.mu + sigma * eps
    out, dec_cache = decode_cached(params, cfg, z)

    recon_x = bernoulli_recon(out.pixel_logits, x)
    recon_y = [categorical_recon(l, y) for l, y in zip(out.label_logits, ys)]
    kl = gaussian_kl(code)
    tc, tc_grads = _tc_mws(z, code, N, with_grad=with_grad and cfg.beta != 0)
    gamma = cfg.gamma if cfg.m else 0.0
    total = recon_x + gamma * sum(recon_y) + kl + cfg.beta * tc
    breakdown = LossBreakdown(recon_x, recon_y, kl, tc, total, cfg.gamma, cfg.beta, int(N))
    if not with_grad:
        return breakdown, None

    d_pixel = (_sigmoid(out.pixel_logits) - x) / B
    d_labels = [gamma * (_softmax(l, axis=1) - y) / B for l, y in zip(out.label_logits, ys)]
    grads, d_z = decode_backward(params, cfg, dec_cache, d_pixel, d_labels)

    d_mu = code.mu / B
    d_lv = 0.5 * (np.exp(code.logvar) - 1.0) / B
    if tc_grads is not None:
        tz, tmu, tlv = tc_grads
        d_z = d_z + cfg.beta * tz
        d_mu = d_mu + cfg.beta * tmu
        d_lv = d_lv + cfg.beta * tlv
    d_mu = d_mu + d_z
    d_lv = d_lv + d_z * eps * 0.5 * sigma
    dt = params["enc.head.W"].dtype
    grads.update(encode_backward(params, cfg, enc_cache, d_mu.astype(dt, copy=False), d_lv.astype(dt, copy=False)))
    return breakdown, grads
