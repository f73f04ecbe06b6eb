# Two-qubit feature circuits: RY on each qubit, one CNOT, Z readout.
import numpy as np

from quanteit import qsim, qanet

angles = np.array([0.4, 1.1])
state = qsim.circuit_state(angles)
print("amplitudes:", np.round(state.amplitudes.real, 4))
print("norm^2    :", state.norm_squared())

f = qsim.circuit_forward(angles)          # (<Z0>, <Z1>)
print("features  :", f)
print("closed    :", [np.cos(angles[0]), np.cos(angles[0]) * np.cos(angles[1])])

# parameter shift vs a central difference
g = qsim.circuit_gradient(angles)
h = 1e-6
fd = np.column_stack([(qsim.circuit_forward(angles + h * e) - qsim.circuit_forward(angles - h * e)) / (2 * h)
                      for e in np.eye(2)])
print("shift grad:\n", g)
print("max |shift - fd| =", np.abs(g - fd).max())

# a full QA-Net on a tiny 4x4 image: 2 circuits x 2 qubits -> 4 latent values -> 16 pixels
params = qanet.init_params(16, n_c=2, n_q=2, rng=np.random.default_rng(0))
print("latent    :", qanet.latent(params.phi))
print("image     :\n", np.round(qanet.forward(params).reshape(4, 4), 3))
print("parameters:", params.size, "=", qanet.parameter_count(16, 2, 2))
print("64x64 head:", qanet.parameter_count(64 * 64, 2, 2), " 32x32x40 head:", qanet.parameter_count(32 * 32 * 40, 2, 2))
