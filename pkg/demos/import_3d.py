# 3D runs need an externally computed sensitivity model; here a synthetic one stands in.
import tempfile
from pathlib import Path

import numpy as np

from quanteit import cli, textio
from quanteit import forward2d as fwd
from quanteit.qanet import GeometrySpec

geom = GeometrySpec.grid3d(16, 16, 6)
rng = np.random.default_rng(1)
# each measurement sees a smooth blob of the volume around a random centre
z, y, x = np.indices(geom.shape)
centres = rng.uniform((0, 0, 0), geom.shape, size=(192, 3))
J = np.array([np.exp(-((z - c[0]) ** 2 + (y - c[1]) ** 2 + (x - c[2]) ** 2) / 8.0).ravel() for c in centres])
J /= J.sum(1, keepdims=True)                      # rows sum to one, like a normalized Jacobian

truth = np.zeros(geom.shape)
truth[2:4, 4:10, 5:11] = 0.3                      # a block in the middle slices
dv = J @ truth.ravel()

work = Path(tempfile.mkdtemp())
fwd.SensitivityModel(J, np.ones(192), geom, n_electrodes=32).save(work / "imported")
textio.write_vector(work / "imported" / "delta_v.vec", dv)
textio.write_matrix(work / "imported" / "delta_sigma_true.mat", truth.reshape(-1, 16))

cfg = work / "cfg.json"
cfg.write_text('{"task": "3d", "grid": {"dims": [16, 16, 6]}, "iterations": 1000}')
cli.main(["import-check", str(work / "imported")])
cli.main(["reconstruct", "--config", str(cfg), "--import", str(work / "imported"), "--out", str(work / "run")])
print((work / "run" / "metrics.csv").read_text())
