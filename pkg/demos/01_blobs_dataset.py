"""
The blob dataset and its weak labels
====================================

Every integer position on the canvas gets a few blobs of different widths.
Weak labels are coarse bins of the polar angle and the distance from the
top-left corner.
"""
import sys
from pathlib import Path

import numpy as np

from welavae import dataset as wd
from welavae.evaluation import write_pgm

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out") / "01"

ds = wd.generate_dataset(side=16, variants=4)
print(ds.N, "images of", ds.D, "pixels; hash", ds.content_hash[:12])

# one blob per sigma at the same spot
row = np.flatnonzero((ds.coords[:, 0] == 5) & (ds.coords[:, 1] == 9))
strip = np.hstack([ds.images[i].reshape(16, 16) for i in row])
write_pgm(out / "sigmas.pgm", strip)
print("sigmas at (5, 9):", ds.sigmas[row])

# weak labels for a few bin counts
wd.attach_labels(ds, [2, 3, 8])
for p, labels in sorted(ds.labels.items()):
    angle, dist = labels.onehots
    print(f"p={p}  angle bins {angle.sum(0).astype(int)}  distance bins {dist.sum(0).astype(int)}")

# saved as json manifest + raw float32
wd.save_dataset(ds, out / "blobs")
again = wd.load_dataset(out / "blobs")
print("reloaded, hash matches:", again.content_hash == ds.content_hash)
