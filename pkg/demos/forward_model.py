# The 2D pixel-grid forward model: adjacent drive, adjacent measure, 16 point electrodes.
import numpy as np

from quanteit import forward2d as fwd
from quanteit.qanet import GeometrySpec

geom = GeometrySpec.grid2d(64, 64)
protocol = fwd.Protocol(16)
print("measurements per frame:", protocol.m)      # 16*13/2 after reciprocity

sigma_r, sigma_o = fwd.make_phantom(geom)          # 0.24 S/m background, lungs 0.17 / 0.14
v_r = fwd.simulate_measurements(sigma_r, protocol)
v_o = fwd.simulate_measurements(sigma_o, protocol)
dv = fwd.normalize_voltages(v_o, v_r)
truth = fwd.normalize_conductivity(sigma_o, sigma_r)
# positive where conductivity drops: 0.2917 in the left lung, 0.4167 in the right
print("dsigma levels:", np.unique(truth.round(4)))

# full protocol, no dedup: swapping drive and measure gives the same voltage
full = fwd.Protocol(16, reciprocity_dedup=False)
v = dict(zip(full.measurements, fwd.simulate_measurements(sigma_o, full)))
print("worst reciprocity gap:", max(abs(v[i, j] - v[j, i]) / abs(v[i, j]) for i, j in full.measurements))

# normalized Jacobian from the adjoint route; each row sums to about one
model = fwd.build_jacobian_adjoint(sigma_r, protocol)
print("J shape:", model.J.shape, " row sums in", model.J.sum(1).min().round(6), model.J.sum(1).max().round(6))

# how far the linear model is from the nonlinear data
lin = model.J @ truth
print("linearization error:", np.linalg.norm(dv - lin) / np.linalg.norm(dv))
