"""Writes the small CSV fixture used by the CLI golden tests."""
import csv
import pathlib
import sys

import numpy as np

out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures")
rng = np.random.default_rng(20240611)
m = 60
with open(out / "clusters.csv", "w", newline="") as cf, open(out / "individuals.csv", "w", newline="") as inf:
    cw, iw = csv.writer(cf), csv.writer(inf)
    cw.writerow(["cluster_id", "s", "arm", "x1", "x2"])
    iw.writerow(["cluster_id", "y", "w1"])
    for j in range(m):
        cid = f"site{j:02d}"
        x = rng.normal(size=2)
        s = int(rng.random() < 1 / (1 + np.exp(-(0.2 + 0.8 * x[0]))))
        arm = ("control", "treated")[int(rng.random() < 0.5)] if s else ""
        cw.writerow([cid, s, arm, f"{x[0]:.4f}", f"{x[1]:.4f}"])
        for _ in range(int(rng.integers(3, 9))):
            w = rng.normal(0.3 * x[0], 1.0)
            eta = -0.3 + 0.6 * x[0] + 0.5 * w + (0.8 if arm == "treated" else 0.0)
            y = int(rng.random() < 1 / (1 + np.exp(-eta))) if s else ""
            iw.writerow([cid, y, f"{w:.4f}"])
