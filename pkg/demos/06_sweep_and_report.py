"""
A resumable multi-seed sweep and its summary table
==================================================

Runs live under content-addressed directories. Re-running the same sweep
skips everything that already finished.
"""
import sys
import time
from pathlib import Path

from welavae import dataset as wd
from welavae.experiments import SweepConfig, build_report, run_sweep, write_report

root = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out") / "06"
wd.save_dataset(wd.attach_labels(wd.generate_dataset(side=8, variants=2), [2, 3]), root / "data")

common = dict(dataset=str(root / "data"), out_dir=str(root / "runs"), seeds=[0, 1, 2],
              epochs=5, batch_size=32, hidden=64, learning_rate=1e-3, beta=4.0)
sweeps = [SweepConfig(family="tcvae", K=2, **common),
          SweepConfig(family="wela", ps=[2, 3], gammas={2: 16.0, 3: 11.0}, **common)]

for label in ("first pass", "second pass"):
    t0 = time.perf_counter()
    n = sum(len(run_sweep(s)) for s in sweeps)
    print(f"{label}: {n} runs in {time.perf_counter() - t0:.1f} s")

rows = build_report(root / "runs", "polar")
csv_path, txt_path = write_report(rows, root, "polar")
print(txt_path.read_text())
