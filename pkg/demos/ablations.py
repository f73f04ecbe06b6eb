# What the circuits contribute: swap the latent for all-ones or for a free trainable vector.
from quanteit import benchmark, metrics
from quanteit.recon import ReconstructionConfig, reconstruct

b = benchmark.two_lung(64)
for method in ("quanteit", "ablation_ones", "ablation_learned"):
    ccs = []
    for seed in (0, 1, 2):
        res = reconstruct(b.delta_v, b.model, ReconstructionConfig.preset("2d_sim", method=method, seed=seed))
        ccs.append(metrics.evaluate(res.delta_sigma, b.truth, b.geometry).cc)
    print(f"{method:<17}", " ".join(f"{c:.4f}" for c in ccs))

# the head is one weight row per pixel, so any latent gives each pixel its own
# free affine map; the latent decides only how those maps are coupled
