"""Hybrid generator: parallel RY/CNOT circuits feeding one linear + sigmoid layer.

The image is ``sigmoid(W @ F + b)`` where ``F`` concatenates the Z readouts
of ``n_c`` independent circuits with ``n_q`` qubits each.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from . import qsim
from .errors import ParameterError


@dataclass(frozen=True)
class GeometrySpec:
    """Shape of the flat image vector.

    ``dims`` is ``(width, height)`` or ``(width, height, depth)``. The flat
    vector is C-ordered over :attr:`shape`, which is ``(height, width)`` or
    ``(depth, height, width)``, so the width index always varies fastest.
    """

    kind: str
    dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        expected = {"grid2d": 2, "grid3d": 3}.get(self.kind)
        if expected is None:
            raise ParameterError(f"unknown geometry kind {self.kind!r}")
        if len(dims) != expected or any(d < 1 for d in dims):
            raise ParameterError(f"{self.kind} needs {expected} positive dims, got {dims}")

    @classmethod
    def grid2d(cls, width, height):
        return cls("grid2d", (width, height))

    @classmethod
    def grid3d(cls, width, height, depth):
        return cls("grid3d", (width, height, depth))

    @property
    def n(self) -> int:
        return prod(self.dims)

    @property
    def shape(self) -> tuple:
        return tuple(reversed(self.dims))

    def reshape(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.size != self.n:
            raise ParameterError(f"vector of length {x.size} does not match geometry with n={self.n}")
        return x.reshape(self.shape)


_TINY = np.finfo(float).tiny
_ONE_MINUS = np.nextafter(1.0, 0.0)


def sigmoid(z):
    # split by sign so neither branch overflows
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep the open interval (0, 1) even where float64 saturates
    return np.clip(out, _TINY, _ONE_MINUS)


@dataclass(frozen=True)
class QANetParams:
    """Trainable parameters: circuit angles ``phi`` (n_c, n_q), head ``W`` and ``b``."""

    phi: np.ndarray
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float).ravel()
        if phi.ndim != 2:
            raise ParameterError(f"phi must be 2-D (n_c, n_q), got shape {phi.shape}")
        if W.ndim != 2 or W.shape != (b.size, phi.size):
            raise ParameterError(
                f"W must have shape ({b.size}, {phi.size}) to match b and phi, got {W.shape}"
            )
        for name, a in (("phi", phi), ("W", W), ("b", b)):
            if not np.all(np.isfinite(a)):
                raise ParameterError(f"{name} contains non-finite entries")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.b.size

    @property
    def n_c(self) -> int:
        return self.phi.shape[0]

    @property
    def n_q(self) -> int:
        return self.phi.shape[1]

    @property
    def size(self) -> int:
        return self.phi.size + self.W.size + self.b.size

    def flatten(self) -> np.ndarray:
        """Concatenate (phi, W row-major, b) into one vector."""
        return np.concatenate([self.phi.ravel(), self.W.ravel(), self.b])

    @classmethod
    def unflatten(cls, theta, n, n_c, n_q):
        theta = np.asarray(theta, dtype=float)
        d = n_c * n_q
        if theta.size != parameter_count(n, n_c, n_q):
            raise ParameterError(f"theta has {theta.size} entries, expected {parameter_count(n, n_c, n_q)}")
        phi = theta[:d].reshape(n_c, n_q)
        W = theta[d : d + n * d].reshape(n, d)
        b = theta[d + n * d :]
        return cls(phi, W, b)


def init_params(n, n_c=2, n_q=2, rng=None) -> QANetParams:
    """Seeded start: phi ~ U[0, pi), W ~ U[-a, a] with a = 1/sqrt(n_c n_q), b = 0."""
    rng = np.random.default_rng(rng)
    d = n_c * n_q
    phi = rng.uniform(0.0, np.pi, size=(n_c, n_q))
    a = 1.0 / np.sqrt(d)
    W = rng.uniform(-a, a, size=(n, d))
    return QANetParams(phi, W, np.zeros(n))


def parameter_count(n, n_c=2, n_q=2) -> int:
    """Angles + head weights + head bias."""
    for name, v in (("n", n), ("n_c", n_c), ("n_q", n_q)):
        if int(v) != v or v < 1:
            raise ParameterError(f"{name} must be a positive integer, got {v}")
    d = n_c * n_q
    return d + n * d + n


def latent(phi) -> np.ndarray:
    """Concatenated per-circuit Z readouts, length n_c * n_q."""
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    if phi.shape[0] < 1:
        raise ParameterError("need at least one circuit")
    return np.concatenate([qsim.circuit_forward(a) for a in phi])


def latent_jacobian(phi) -> np.ndarray:
    """Block-diagonal d F / d phi (flattened), shape (n_c n_q, n_c n_q)."""
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    n_c, n_q = phi.shape
    jac = np.zeros((n_c * n_q, n_c * n_q))
    for i, a in enumerate(phi):
        s = slice(i * n_q, (i + 1) * n_q)
        jac[s, s] = qsim.circuit_gradient(a)
    return jac


def head_forward(F, W, b, signed_output=False):
    """Return (image, pre-activation)."""
    F = np.asarray(F, dtype=float)
    if W.shape[1] != F.size or W.shape[0] != b.size:
        raise ParameterError(f"head shapes disagree: W {W.shape}, F {F.shape}, b {b.shape}")
    z = W @ F + b
    s = sigmoid(z)
    return (2.0 * s - 1.0 if signed_output else s), z


def head_backward(F, W, z, grad_out, signed_output=False):
    """Gradients of a scalar loss through the head.

    Returns ``(dF, dW, db)`` given ``grad_out`` = dL/d(image).
    """
    grad_out = np.asarray(grad_out, dtype=float)
    if grad_out.shape != z.shape:
        raise ParameterError(f"grad_out has shape {grad_out.shape}, expected {z.shape}")
    s = sigmoid(z)
    g = grad_out * s * (1.0 - s)
    if signed_output:
        g = 2.0 * g
    return W.T @ g, np.outer(g, F), g


def forward(params: QANetParams, signed_output=False) -> np.ndarray:
    img, _ = head_forward(latent(params.phi), params.W, params.b, signed_output)
    return img


def backward(params: QANetParams, grad_out, signed_output=False) -> QANetParams:
    """Exact gradient of a scalar loss wrt all parameters, packed as QANetParams."""
    F = latent(params.phi)
    z = params.W @ F + params.b
    dF, dW, db = head_backward(F, params.W, z, grad_out, signed_output)
    dphi = latent_jacobian(params.phi).T @ dF
    return QANetParams(dphi.reshape(params.phi.shape), dW, db)
