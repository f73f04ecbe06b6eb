"""Handcrafted image priors: squared Laplacian, smoothed isotropic TV, smoothed l1.

Each function returns ``(value, gradient)`` on the flat image vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError
from .qanet import GeometrySpec

EPS = 1e-8


@dataclass(frozen=True)
class RegWeights:
    lambda_laplacian: float = 0.0
    lambda_tv: float = 0.0
    lambda_l1: float = 0.0

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not np.isfinite(v) or v < 0:
                raise ParameterError(f"{name} must be finite and non-negative, got {v}")

    @classmethod
    def from_sequence(cls, values):
        values = [float(v) for v in values]
        if len(values) != 3:
            raise ParameterError(f"expected 3 regularization weights, got {len(values)}")
        return cls(*values)

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda_laplacian, self.lambda_tv, self.lambda_l1])


def _check(x, geometry: GeometrySpec) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != geometry.n:
        raise ParameterError(f"image of length {x.size} does not match geometry n={geometry.n}")
    return x


@lru_cache(maxsize=16)
def laplacian_matrix(geometry: GeometrySpec) -> sp.csr_matrix:
    """Graph Laplacian of the grid (4- or 6-neighbour).

    Missing neighbours at the border mirror the border pixel itself, which
    makes the stencil a zero-flux Neumann operator: rows sum to zero.
    """
    shape = geometry.shape
    n = geometry.n
    idx = np.arange(n).reshape(shape)
    rows, cols = [], []
    for axis in range(len(shape)):
        lo = np.take(idx, range(shape[axis] - 1), axis=axis).ravel()
        hi = np.take(idx, range(1, shape[axis]), axis=axis).ravel()
        rows += [lo, hi]
        cols += [hi, lo]
    rows = np.concatenate(rows) if rows else np.array([], int)
    cols = np.concatenate(cols) if cols else np.array([], int)
    A = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    deg = np.asarray(A.sum(axis=1)).ravel()
    return (A - sp.diags(deg)).tocsr()


def laplacian_reg(x, geometry: GeometrySpec):
    """``||L x||^2`` and its gradient ``2 L^T L x``."""
    x = _check(x, geometry)
    L = laplacian_matrix(geometry)
    Lx = L @ x
    return float(Lx @ Lx), 2.0 * (L.T @ Lx)


def tv_reg(x, geometry: GeometrySpec, eps=EPS):
    """Smoothed isotropic total variation with forward differences.

    Differences that would step past the far border are taken as zero.
    """
    x = _check(x, geometry)
    img = x.reshape(geometry.shape)
    diffs = []
    for axis in range(img.ndim):
        d = np.zeros_like(img)
        sl_lo = [slice(None)] * img.ndim
        sl_hi = [slice(None)] * img.ndim
        sl_lo[axis] = slice(0, -1)
        sl_hi[axis] = slice(1, None)
        d[tuple(sl_lo)] = img[tuple(sl_hi)] - img[tuple(sl_lo)]
        diffs.append((d, tuple(sl_lo), tuple(sl_hi)))
    mag = np.sqrt(sum(d**2 for d, _, _ in diffs) + eps**2)
    grad = np.zeros_like(img)
    for d, lo, hi in diffs:
        q = d / mag
        grad[lo] -= q[lo]
        grad[hi] += q[lo]
    return float(mag.sum()), grad.ravel()


def l1_reg(x, eps=EPS):
    """``sum sqrt(x^2 + eps^2)`` and its gradient."""
    x = np.asarray(x, dtype=float).ravel()
    r = np.sqrt(x**2 + eps**2)
    return float(r.sum()), x / r


def evaluate_all(x, geometry: GeometrySpec):
    """Values (Laplacian, TV, l1) and the matching gradients."""
    lap, g_lap = laplacian_reg(x, geometry)
    tv, g_tv = tv_reg(x, geometry)
    l1, g_l1 = l1_reg(x)
    return np.array([lap, tv, l1]), (g_lap, g_tv, g_l1)
