"""Small statevector simulator for RY + CNOT-chain circuits.

Amplitudes are indexed big-endian: qubit 0 is the most significant bit of
the basis index, so ``|c t>`` for two qubits is index ``2*c + t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ParameterError

MAX_QUBITS = 10


@dataclass(frozen=True)
class Statevector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ParameterError(
                f"expected {2**self.n_qubits} amplitudes, got shape {self.amplitudes.shape}"
            )

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def _check_qubit(state: Statevector, qubit: int, name: str = "qubit") -> None:
    if not 0 <= qubit < state.n_qubits:
        raise ParameterError(f"{name} index {qubit} out of range for {state.n_qubits} qubits")


def new_statevector(n_qubits: int) -> Statevector:
    """Return the ground state ``|0...0>``."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ParameterError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    amps = np.zeros(2**n_qubits, dtype=complex)
    amps[0] = 1.0
    return Statevector(n_qubits, amps)


def _split(state: Statevector, qubit: int) -> np.ndarray:
    # view as (high bits, target bit, low bits)
    return state.amplitudes.reshape(2**qubit, 2, 2 ** (state.n_qubits - qubit - 1))


def apply_ry(state: Statevector, qubit: int, angle: float) -> Statevector:
    """Rotate ``qubit`` about the Y axis by ``angle`` radians."""
    _check_qubit(state, qubit)
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    view = _split(state, qubit)
    a0, a1 = view[:, 0, :], view[:, 1, :]
    out = np.empty_like(view)
    out[:, 0, :] = c * a0 - s * a1
    out[:, 1, :] = s * a0 + c * a1
    return Statevector(state.n_qubits, out.reshape(-1))


def apply_cnot(state: Statevector, control: int, target: int) -> Statevector:
    """Flip ``target`` on the basis states where ``control`` is 1."""
    _check_qubit(state, control, "control")
    _check_qubit(state, target, "target")
    if control == target:
        raise ParameterError("control and target must differ")
    return Statevector(state.n_qubits, state.amplitudes[_cnot_permutation(state.n_qubits, control, target)])


@lru_cache(maxsize=None)
def _cnot_permutation(n, control, target):
    idx = np.arange(2**n)
    cbit = (idx >> (n - 1 - control)) & 1
    perm = idx ^ (cbit << (n - 1 - target))
    perm.flags.writeable = False
    return perm


def z_expectation(state: Statevector, qubit: int) -> float:
    """<psi|Z_qubit|psi> = P(qubit=0) - P(qubit=1)."""
    _check_qubit(state, qubit)
    probs = _split(state, qubit)
    p = np.abs(probs) ** 2
    # rounding can push an unnormalized-by-1ulp state past +-1
    return float(np.clip(p[:, 0, :].sum() - p[:, 1, :].sum(), -1.0, 1.0))


def circuit_state(angles) -> Statevector:
    """Prepare RY(angles[k]) on every qubit, then the CNOT chain k -> k+1."""
    angles = np.asarray(angles, dtype=float).ravel()
    n = len(angles)
    if not 1 <= n <= MAX_QUBITS:
        raise ParameterError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n}")
    # RY on |0> gives (cos, sin) of the half angle, so the rotation layer is a
    # product state; the CNOT chain is one composed index permutation.
    c, s = np.cos(angles / 2), np.sin(angles / 2)
    amps = np.ones(1)
    for k in range(n):
        amps = np.stack((amps * c[k], amps * s[k]), axis=-1).ravel()
    return Statevector(n, amps[_chain_permutation(n)].astype(complex))


@lru_cache(maxsize=None)
def _z_signs(n):
    # row k holds the Z_k eigenvalue (+1 for bit 0, -1 for bit 1) of each basis state
    idx = np.arange(2**n)
    signs = np.array([1.0 - 2.0 * ((idx >> (n - 1 - k)) & 1) for k in range(n)])
    signs.flags.writeable = False
    return signs


@lru_cache(maxsize=None)
def _chain_permutation(n):
    perm = np.arange(2**n)
    for k in range(n - 1):
        perm = perm[_cnot_permutation(n, k, k + 1)]
    perm.flags.writeable = False
    return perm


def circuit_forward(angles) -> np.ndarray:
    """Feature vector of per-qubit Z expectations for one circuit."""
    state = circuit_state(angles)
    n = state.n_qubits
    p = np.abs(state.amplitudes) ** 2
    return np.clip(_z_signs(n) @ p, -1.0, 1.0)


def circuit_gradient(angles) -> np.ndarray:
    """Jacobian ``d f_k / d phi_j`` via the parameter-shift rule.

    Row ``k`` is the feature, column ``j`` the angle. Each column costs two
    circuit evaluations shifted by +-pi/2.
    """
    angles = np.asarray(angles, dtype=float).ravel()
    n = len(angles)
    jac = np.empty((n, n))
    for j in range(n):
        plus = angles.copy()
        minus = angles.copy()
        plus[j] += np.pi / 2
        minus[j] -= np.pi / 2
        jac[:, j] = (circuit_forward(plus) - circuit_forward(minus)) / 2
    return jac
