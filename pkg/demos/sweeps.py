# Learning-rate and noise sweeps on a 32x32 version of the benchmark (short runs).
from quanteit import benchmark, metrics
from quanteit import forward2d as fwd
from quanteit.recon import ReconstructionConfig, reconstruct

b = benchmark.two_lung(32)
score = lambda x: metrics.evaluate(x, b.truth, b.geometry).cc

print("lr      CC     final loss")
for lr in (0.005, 0.01, 0.05, 0.1, 0.5):
    res = reconstruct(b.delta_v, b.model, ReconstructionConfig.preset("2d_sim", lr=lr, iterations=300))
    print(f"{lr:<7} {score(res.delta_sigma):.3f}  {res.final_loss:.4f}")

print("\nSNR dB  CC")
for snr in (10, 20, 30, 40, 50, 60, None):
    dv = fwd.add_noise(b.delta_v, snr, seed=0)     # same noise draw scaled per level
    res = reconstruct(dv, b.model, ReconstructionConfig.preset("2d_sim", iterations=300))
    print(f"{str(snr):<7} {score(res.delta_sigma):.3f}")
