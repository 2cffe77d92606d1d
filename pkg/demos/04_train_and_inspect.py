"""
Train a small WeLa-VAE and look at what it learned
==================================================

A 16x16 canvas keeps this to about a minute on one CPU core.
"""
import sys
from pathlib import Path

from welavae import dataset as wd
from welavae import evaluation as ev
from welavae.experiments import rule_of_thumb_gamma
from welavae.model import ModelConfig
from welavae.trainer import TrainConfig, train

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out") / "04"
ds = wd.attach_labels(wd.generate_dataset(side=16, variants=4), [3])

gamma = round(rule_of_thumb_gamma(ds.D, p=3))  # about D / 2p
cfg = ModelConfig(D=ds.D, K=2, label_dims=[3, 3], gamma=gamma, beta=40.0)
result = train(ds, ds.labels[3], TrainConfig(cfg, learning_rate=1e-3, batch_size=128, epochs=30), out / "run")

means = result.epoch_means()
print(f"loss epoch 1 {means[1]:.1f} -> epoch 30 {means[30]:.1f}")
print("label accuracy (angle, distance):", [round(a, 3) for a in result.accuracies])

rep = ev.represent(result.params, cfg, ds, ds.labels[3])
for task in ("cartesian", "polar"):
    r = ev.score(rep, task)
    print(f"{task:9s} mse {r.mse:7.2f}  channels {r.channel_assignment}  inverted {r.inversion_flags}")

maps = ev.heatmap(result.params, cfg, ds, ds.labels[3])
print("heat maps:", [str(p) for p in ev.write_heatmaps(maps, out / "heat")])

idx = ev.traversal_panel(ds)[:1]
grid = ev.traverse(result.params, cfg, ds.images[idx], [y[idx] for y in ds.labels[3].onehots], steps=8)
print("traversal:", ev.write_pgm(out / "traversal.pgm", ev.tile_traversal(grid[0], ds.side)))
