"""
Coordinate-recovery scores on hand-made representations
=======================================================
"""
import numpy as np

from welavae.evaluation import RepresentationMatrix, canvas_ranges, cartesian_mse, polar_mse

c1, c2 = np.meshgrid(np.arange(64.0), np.arange(64.0), indexing="ij")
coords = np.stack([c1.ravel(), c2.ravel()], axis=1)
angle, dist = np.arctan2(coords[:, 1], coords[:, 0]), np.hypot(coords[:, 0], coords[:, 1])

cases = {
    "true coordinates": coords,
    "swapped and flipped": np.stack([-coords[:, 1], 3 * coords[:, 0] + 7], 1),
    "polar (angle, distance)": np.stack([angle, dist], 1),
    "constant": np.zeros_like(coords),
    "noise": np.random.default_rng(0).normal(size=coords.shape),
}
print("targets (grid):", canvas_ranges(64), " nominal:", canvas_ranges(64, "nominal"))
for name, mu in cases.items():
    rep = RepresentationMatrix.from_arrays(mu, coords)
    c, p = cartesian_mse(rep), polar_mse(rep)
    print(f"{name:24s} cartesian {c.mse:8.3f} {c.channel_assignment}{c.inversion_flags}   polar {p.mse:8.3f}")

# the nominal targets [0, 64] and 90.5 overshoot integer positions 0..63
print("true coordinates, nominal targets:", round(cartesian_mse(RepresentationMatrix.from_arrays(coords, coords), mode="nominal").mse, 3))
