"""The in-repo 2D two-lung benchmark used by tests, demos and the CLI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import forward2d as fwd
from .qanet import GeometrySpec


@dataclass(frozen=True)
class Benchmark:
    geometry: GeometrySpec
    protocol: fwd.Protocol
    sigma_r: fwd.ConductivityField
    sigma_o: fwd.ConductivityField
    v_r: np.ndarray
    v_o: np.ndarray
    delta_v: np.ndarray
    truth: np.ndarray
    model: fwd.SensitivityModel


def simulate(geometry: GeometrySpec, n_electrodes=16, background=fwd.BACKGROUND,
             ellipses=None) -> Benchmark:
    """Nonlinear data for a phantom plus the linearized model at the reference.

    Both voltage frames come from the full forward solver, so inverting
    them through the Jacobian is free of the inverse crime.
    """
    protocol = fwd.Protocol(n_electrodes)
    sigma_r, sigma_o = fwd.make_phantom(geometry, background, ellipses)
    model = fwd.build_jacobian_adjoint(sigma_r, protocol)
    v_r = model.v_ref
    v_o = fwd.simulate_measurements(sigma_o, protocol)
    return Benchmark(
        geometry, protocol, sigma_r, sigma_o, v_r, v_o,
        fwd.normalize_voltages(v_o, v_r),
        fwd.normalize_conductivity(sigma_o, sigma_r),
        model,
    )


def two_lung(size=64, n_electrodes=16) -> Benchmark:
    """Noiseless two-lung phantom on a ``size x size`` grid."""
    return simulate(GeometrySpec.grid2d(size, size), n_electrodes)
