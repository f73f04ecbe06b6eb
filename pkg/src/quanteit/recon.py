"""Unsupervised reconstruction loop, Noser baseline and latent ablations.

The image is parameterized by the hybrid generator and fitted to one
measurement vector by minimizing::

    ||dv - J x||^2 + lam_lap * R_lap(x) + lam_tv * R_tv(x) + lam_l1 * R_l1(x)

with Adam for a fixed number of iterations (no early stopping).

With ``reduction="mean"`` (the default) the fidelity is averaged over the m
measurements and each prior over the n image elements, which keeps the
published weight presets meaningful independently of the grid size.
``reduction="sum"`` uses the plain squared norm and summed priors.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from . import qanet, textio
from .errors import NumericError, ParameterError
from .optim import AdamState, adam_step
from .qanet import GeometrySpec, QANetParams
from .regularizers import RegWeights, evaluate_all

METHODS = ("quanteit", "ablation_ones", "ablation_learned", "noser")
REDUCTIONS = ("mean", "sum")

#: regularization weights (Laplacian, TV, l1)
PRESETS = {
    "2d_sim": (0.03, 0.002, 0.01),
    "2d_real": (0.05, 0.03, 0.1),
    "3d": (0.001, 0.001, 0.001),
}
LR_2D = 0.05
LR_3D = 0.1


@dataclass(frozen=True)
class ReconstructionConfig:
    iterations: int = 1000
    lr: float = LR_2D
    reg_weights: RegWeights = field(default_factory=lambda: RegWeights(*PRESETS["2d_sim"]))
    seed: int = 0
    method: str = "quanteit"
    noser_mu: float = 20.0
    n_c: int = 2
    n_q: int = 2
    signed_output: bool = False
    reduction: str = "mean"

    def __post_init__(self):
        if self.reduction not in REDUCTIONS:
            raise ParameterError(f"reduction must be one of {REDUCTIONS}, got {self.reduction!r}")
        if self.iterations < 1:
            raise ParameterError("iterations must be >= 1")
        if not self.lr > 0:
            raise ParameterError("learning rate must be positive")
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.noser_mu > 0:
            raise ParameterError("noser_mu must be positive")

    @classmethod
    def preset(cls, name, **kwargs):
        lr = LR_3D if name == "3d" else LR_2D
        kwargs.setdefault("lr", lr)
        return cls(reg_weights=RegWeights(*PRESETS[name]), **kwargs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reg_weights"] = list(self.reg_weights.as_array())
        return d


@dataclass
class ReconstructionResult:
    delta_sigma: np.ndarray
    loss_trace: np.ndarray
    fidelity_trace: np.ndarray
    reg_traces: np.ndarray  # (N, 3): Laplacian, TV, l1 values
    theta: np.ndarray
    method: str
    seconds: float = 0.0

    @property
    def final_loss(self) -> float:
        return float(self.loss_trace[-1])


def image_loss_and_grad(x, dv, J, weights: RegWeights, geometry: GeometrySpec, reduction="mean"):
    """Loss terms on an image and the gradient wrt the image.

    Returns ``(total, fidelity, reg_values, grad_x)``; ``fidelity`` and
    ``reg_values`` are already reduced, so ``total = fidelity + lam @ reg_values``.
    """
    if reduction not in REDUCTIONS:
        raise ParameterError(f"reduction must be one of {REDUCTIONS}, got {reduction!r}")
    m, n = J.shape
    fid_scale, reg_scale = (1.0 / m, 1.0 / n) if reduction == "mean" else (1.0, 1.0)
    r = dv - J @ x
    fidelity = fid_scale * float(r @ r)
    reg_vals, reg_grads = evaluate_all(x, geometry)
    reg_vals = reg_scale * reg_vals
    lam = weights.as_array()
    grad = (-2.0 * fid_scale) * (J.T @ r)
    for w, g in zip(lam, reg_grads):
        if w:
            grad = grad + (w * reg_scale) * g
    return fidelity + float(lam @ reg_vals), fidelity, reg_vals, grad


def _check_dims(dv, J, geometry, n):
    dv = np.asarray(dv, dtype=float).ravel()
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != dv.size:
        raise ParameterError(f"J shape {J.shape} does not match {dv.size} measurements")
    if J.shape[1] != n or geometry.n != n:
        raise ParameterError(f"J has {J.shape[1]} columns, image has {n}, geometry has {geometry.n}")
    return dv, J


def loss_and_grad(params: QANetParams, dv, J, weights: RegWeights, geometry: GeometrySpec,
                  signed_output=False, reduction="mean"):
    """Total loss of the generator output and its gradient as a QANetParams."""
    dv, J = _check_dims(dv, J, geometry, params.n)
    x = qanet.forward(params, signed_output)
    total, _, _, gx = image_loss_and_grad(x, dv, J, weights, geometry, reduction)
    return total, qanet.backward(params, gx, signed_output)


# ------------------------------------------------------------- generators


class _QuantumLatent:
    """theta = (phi, W, b); latent from the circuits."""

    def __init__(self, n, cfg, rng):
        self.n, self.n_c, self.n_q = n, cfg.n_c, cfg.n_q
        self.d = cfg.n_c * cfg.n_q
        self.signed = cfg.signed_output
        self.theta0 = qanet.init_params(n, cfg.n_c, cfg.n_q, rng).flatten()

    def split(self, theta):
        return qanet.QANetParams.unflatten(theta, self.n, self.n_c, self.n_q)

    def forward(self, theta):
        p = self.split(theta)
        F = qanet.latent(p.phi)
        x, z = qanet.head_forward(F, p.W, p.b, self.signed)
        return x, (p, F, z)

    def backward(self, cache, gx):
        p, F, z = cache
        dF, dW, db = qanet.head_backward(F, p.W, z, gx, self.signed)
        dphi = qanet.latent_jacobian(p.phi).T @ dF
        return np.concatenate([dphi, dW.ravel(), db])


class _OnesLatent:
    """theta = (W, b); latent fixed to the all-ones vector, nothing to train upstream."""

    def __init__(self, n, cfg, rng):
        self.n, self.d = n, cfg.n_c * cfg.n_q
        self.signed = cfg.signed_output
        init = qanet.init_params(n, cfg.n_c, cfg.n_q, rng)
        self.F = np.ones(self.d)
        self.theta0 = np.concatenate([init.W.ravel(), init.b])

    def forward(self, theta):
        W = theta[: self.n * self.d].reshape(self.n, self.d)
        b = theta[self.n * self.d :]
        x, z = qanet.head_forward(self.F, W, b, self.signed)
        return x, (W, z)

    def backward(self, cache, gx):
        W, z = cache
        _, dW, db = qanet.head_backward(self.F, W, z, gx, self.signed)
        return np.concatenate([dW.ravel(), db])


class _FreeLatent:
    """theta = (F, W, b); latent is a free vector initialized U[-1, 1]."""

    def __init__(self, n, cfg, rng):
        self.n, self.d = n, cfg.n_c * cfg.n_q
        self.signed = cfg.signed_output
        rng = np.random.default_rng(rng)
        init = qanet.init_params(n, cfg.n_c, cfg.n_q, rng)
        F0 = rng.uniform(-1.0, 1.0, size=self.d)
        self.theta0 = np.concatenate([F0, init.W.ravel(), init.b])

    def forward(self, theta):
        d, n = self.d, self.n
        F = theta[:d]
        W = theta[d : d + n * d].reshape(n, d)
        b = theta[d + n * d :]
        x, z = qanet.head_forward(F, W, b, self.signed)
        return x, (F, W, z)

    def backward(self, cache, gx):
        F, W, z = cache
        dF, dW, db = qanet.head_backward(F, W, z, gx, self.signed)
        return np.concatenate([dF, dW.ravel(), db])


_GENERATORS = {
    "quanteit": _QuantumLatent,
    "ablation_ones": _OnesLatent,
    "ablation_learned": _FreeLatent,
}


def reconstruct(dv, model, config: ReconstructionConfig) -> ReconstructionResult:
    """Fit the generator to ``dv`` through ``model.J`` for exactly ``config.iterations`` Adam steps.

    ``model`` is a :class:`~quanteit.forward2d.SensitivityModel` (anything with
    ``J`` and ``geometry`` works). The returned image is the generator output
    at the final parameters.
    """
    if config.method == "noser":
        start = time.perf_counter()
        x = noser(dv, model.J, config.noser_mu)
        empty = np.zeros(0)
        return ReconstructionResult(x, empty, empty, np.zeros((0, 3)), empty, "noser",
                                    time.perf_counter() - start)
    geometry = model.geometry
    dv, J = _check_dims(dv, model.J, geometry, geometry.n)
    rng = np.random.default_rng(config.seed)
    gen = _GENERATORS[config.method](geometry.n, config, rng)
    theta = gen.theta0.copy()
    state = AdamState.zeros(theta.size, config.lr)
    N = config.iterations
    loss = np.empty(N)
    fid = np.empty(N)
    regs = np.empty((N, 3))
    start = time.perf_counter()
    for k in range(N):
        x, cache = gen.forward(theta)
        total, f, rv, gx = image_loss_and_grad(x, dv, J, config.reg_weights, geometry,
                                                config.reduction)
        if not np.isfinite(total):
            raise NumericError(f"non-finite loss at iteration {k}")
        loss[k], fid[k], regs[k] = total, f, rv
        state, theta = adam_step(state, theta, gen.backward(cache, gx))
    x, _ = gen.forward(theta)
    return ReconstructionResult(x, loss, fid, regs, theta, config.method,
                                time.perf_counter() - start)


def noser(dv, J, mu=20.0) -> np.ndarray:
    """One-step regularized solve ``(J^T J + mu diag(J^T J)) x = J^T dv``."""
    if not mu > 0:
        raise ParameterError("mu must be positive")
    J = np.asarray(J, dtype=float)
    dv = np.asarray(dv, dtype=float).ravel()
    if J.shape[0] != dv.size:
        raise ParameterError(f"J shape {J.shape} does not match {dv.size} measurements")
    JtJ = J.T @ J
    A = JtJ + mu * np.diag(np.diag(JtJ))
    rhs = J.T @ dv
    try:
        x = scipy.linalg.solve(A, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericError(f"Noser system is singular: {exc}") from exc
    scale = np.linalg.norm(rhs)
    if scale > 0 and np.linalg.norm(A @ x - rhs) > 1e-8 * scale:
        raise NumericError("Noser solve did not reach relative residual 1e-8")
    return x


def max_normalize(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak == 0:
        raise ParameterError("cannot max-normalize an all-zero vector")
    return x / peak


def save_checkpoint(path, theta, config: ReconstructionConfig) -> None:
    """Write ``<path>.mat`` (theta as a column) and ``<path>.json`` (config + seed)."""
    path = Path(path)
    textio.write_matrix(path.with_suffix(".mat"), np.asarray(theta).ravel())
    textio.write_json(path.with_suffix(".json"), config.to_dict())


def load_checkpoint(path):
    path = Path(path)
    theta = textio.read_vector(path.with_suffix(".mat"))
    d = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    d["reg_weights"] = RegWeights.from_sequence(d["reg_weights"])
    return theta, ReconstructionConfig(**d)
