# One full reconstruction of the two-lung benchmark, next to the Noser one-step baseline.
from pathlib import Path

import numpy as np

from quanteit import benchmark, metrics, textio
from quanteit.recon import ReconstructionConfig, noser, reconstruct

b = benchmark.two_lung(64)
cfg = ReconstructionConfig.preset("2d_sim")       # lr 0.05, lambda (0.03, 0.002, 0.01), 1000 steps
res = reconstruct(b.delta_v, b.model, cfg)
print(f"{cfg.iterations} steps in {res.seconds:.1f}s, loss {res.loss_trace[0]:.3f} -> {res.final_loss:.4f}")

x_noser = noser(b.delta_v, b.model.J, mu=20.0)

for name, x in (("quanteit", res.delta_sigma), ("noser", x_noser)):
    r = metrics.evaluate(x, b.truth, b.geometry, normalized=True)
    print(f"{name:>9}: CC {r.cc:.3f}  PSNR {r.psnr:.2f}  ERR {r.err:.3f}  MSSIM {r.mssim:.3f}")

# loss split at a few iterations: total = fidelity + lambda . (laplacian, tv, l1)
lam = cfg.reg_weights.as_array()
for k in (0, 10, 100, 999):
    print(k, res.loss_trace[k], res.fidelity_trace[k], res.reg_traces[k] @ lam)

out = Path("demo_output")
textio.write_pgm(out / "quanteit.pgm", b.geometry.reshape(res.delta_sigma))
textio.write_pgm(out / "noser.pgm", b.geometry.reshape(np.clip(x_noser, 0, None)))
textio.write_pgm(out / "truth.pgm", b.geometry.reshape(b.truth))
print("images in", out.resolve())
