"""
Hand-wired backprop, checked against finite differences
=======================================================
"""
import numpy as np

from welavae.model import ModelConfig, init_params, parameter_count
from welavae.numerics import grad_check
from welavae.objective import wela_loss

cfg = ModelConfig(D=6, K=2, label_dims=[2, 3], hidden=4, gamma=2.0, beta=1.0)
print("parameters:", parameter_count(cfg))
print("canonical WeLa network:", parameter_count(ModelConfig(K=2, label_dims=[3, 3])))

params = init_params(cfg, seed=0).astype(np.float64)
rng = np.random.default_rng(0)
# small random biases keep units off the ReLU kink at exactly zero
for name in params.names():
    if name.endswith(".b"):
        params.params[name][...] = rng.normal(0, 0.1, params[name].shape)

x = rng.random((4, 6))
ys = [np.eye(2)[[0, 1, 1, 0]], np.eye(3)[[2, 0, 1, 1]]]
eps = rng.standard_normal((4, 2))


def loss(p):
    b, g = wela_loss(p, cfg, x, ys, eps, N=100)
    return b.total, g


breakdown, _ = wela_loss(params, cfg, x, ys, eps, N=100)
print(breakdown)
print("max relative error vs central differences:", grad_check(loss, params, h=1e-5))
