"""2D finite-volume EIT forward model, adjacent protocol and sensitivity matrices.

Each pixel is a node of the grid graph. Neighbouring nodes are joined by a
face whose conductance is the harmonic mean of the two pixel conductivities.
Point electrodes sit on boundary nodes, the outer boundary is insulating and
node 0 is held at zero potential.

Normalized variables follow the difference-imaging convention::

    dv = (v_o - v_r) / v_r          dsigma = -(sigma_o - sigma_r) / sigma_r

so a conductivity drop shows up as a positive ``dsigma``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import textio
from .errors import LoadError, NormalizationError, ParameterError, SolverError
from .qanet import GeometrySpec

#: relative residual every linear solve must reach
RESIDUAL_TOL = 1e-10
#: relative conductivity step of the brute-force Jacobian
FD_STEP = 1e-6
GROUND_NODE = 0
DEFAULT_CURRENT = 1e-3


@dataclass(frozen=True)
class ConductivityField:
    geometry: GeometrySpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != self.geometry.n:
            raise ParameterError(f"{values.size} values for a geometry with n={self.geometry.n}")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ParameterError("conductivity must be positive and finite everywhere")
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, geometry, value):
        return cls(geometry, np.full(geometry.n, float(value)))

    def image(self) -> np.ndarray:
        return self.geometry.reshape(self.values)


# ---------------------------------------------------------------- protocol


def boundary_nodes(geometry: GeometrySpec) -> np.ndarray:
    """Boundary node indices clockwise from the top-left corner."""
    if geometry.kind != "grid2d":
        raise ParameterError("the 2D forward model needs a grid2d geometry")
    w, h = geometry.dims
    if w < 2 or h < 2:
        raise ParameterError("grid must be at least 2x2")
    top = [(0, c) for c in range(w - 1)]
    right = [(r, w - 1) for r in range(h - 1)]
    bottom = [(h - 1, c) for c in range(w - 1, 0, -1)]
    left = [(r, 0) for r in range(h - 1, 0, -1)]
    return np.array([r * w + c for r, c in top + right + bottom + left])


def electrode_nodes(geometry: GeometrySpec, n_electrodes: int) -> np.ndarray:
    """Evenly spaced boundary nodes, offset by half a spacing from the corner."""
    ring = boundary_nodes(geometry)
    if n_electrodes > len(ring):
        raise ParameterError(f"{n_electrodes} electrodes do not fit on {len(ring)} boundary nodes")
    pos = np.floor((np.arange(n_electrodes) + 0.5) * len(ring) / n_electrodes).astype(int)
    return ring[pos]


@dataclass(frozen=True)
class Protocol:
    """Adjacent drive / adjacent measure protocol.

    Drive ``i`` injects through electrodes ``(i, i+1 mod E)``; measure pair
    ``j`` reads ``u[j] - u[j+1 mod E]``. Pairs sharing an electrode with the
    drive are skipped. With ``reciprocity_dedup`` only ``(i, j)`` with
    ``i < j`` is kept, since ``(j, i)`` carries the same voltage.
    """

    n_electrodes: int
    reciprocity_dedup: bool = True
    measurements: tuple = field(init=False)

    def __post_init__(self):
        E = self.n_electrodes
        if E < 4:
            raise ParameterError("need at least 4 electrodes")
        meas = []
        for i in range(E):
            touching = {i, (i + 1) % E}
            for j in range(E):
                if {j, (j + 1) % E} & touching:
                    continue
                if self.reciprocity_dedup and j < i:
                    continue
                meas.append((i, j))
        object.__setattr__(self, "measurements", tuple(meas))

    @property
    def m(self) -> int:
        return len(self.measurements)

    def pair(self, k: int) -> tuple:
        return (k, (k + 1) % self.n_electrodes)

    @property
    def drive_pairs(self) -> list:
        return [self.pair(i) for i in range(self.n_electrodes)]


# ------------------------------------------------------------------ solver


def _faces(geometry: GeometrySpec):
    w, h = geometry.dims
    idx = np.arange(w * h).reshape(h, w)
    i = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    j = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    return i, j


class ForwardSolver:
    """Factorized discrete operator for one conductivity field.

    The factorization is reused across drive patterns, which is what makes
    the per-drive solves of the adjoint Jacobian cheap.
    """

    def __init__(self, field: ConductivityField):
        geometry = field.geometry
        if geometry.kind != "grid2d":
            raise ParameterError("the 2D forward model needs a grid2d geometry")
        self.field = field
        self.geometry = geometry
        self.fi, self.fj = _faces(geometry)
        s = field.values
        si, sj = s[self.fi], s[self.fj]
        self.face_g = 2.0 * si * sj / (si + sj)
        n = geometry.n
        g = self.face_g
        rows = np.concatenate([self.fi, self.fj, self.fi, self.fj])
        cols = np.concatenate([self.fi, self.fj, self.fj, self.fi])
        vals = np.concatenate([g, g, -g, -g])
        K = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
        keep = np.setdiff1d(np.arange(n), [GROUND_NODE])
        self._keep = keep
        self._K = K[keep][:, keep].tocsc()
        try:
            self._lu = spla.splu(self._K)
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc

    def solve(self, rhs) -> np.ndarray:
        """Return node potentials for injected nodal currents ``rhs`` (sum zero)."""
        rhs = np.asarray(rhs, dtype=float)
        b = rhs[self._keep]
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite potentials; system is singular or ill-conditioned")
        res = np.linalg.norm(self._K @ x - b)
        scale = np.linalg.norm(b)
        if scale > 0 and res > RESIDUAL_TOL * scale:
            raise SolverError(f"relative residual {res / scale:.3e} exceeds {RESIDUAL_TOL:g}")
        u = np.zeros(self.geometry.n)
        u[self._keep] = x
        return u


def _pair_current(n, nodes, current):
    rhs = np.zeros(n)
    rhs[nodes[0]] += current
    rhs[nodes[1]] -= current
    return rhs


def solve_potential(field: ConductivityField, drive, current=DEFAULT_CURRENT) -> np.ndarray:
    """Node potentials for ``+current`` at node ``drive[0]`` and ``-current`` at ``drive[1]``."""
    a, b = drive
    if a == b:
        raise ParameterError("drive nodes must be distinct")
    solver = ForwardSolver(field)
    return solver.solve(_pair_current(field.geometry.n, (a, b), current))


def _pair_fields(solver: ForwardSolver, protocol: Protocol, current) -> np.ndarray:
    nodes = electrode_nodes(solver.geometry, protocol.n_electrodes)
    n = solver.geometry.n
    return np.array(
        [solver.solve(_pair_current(n, nodes[list(protocol.pair(k))], current))
         for k in range(protocol.n_electrodes)]
    ), nodes


def _read(fields, nodes, protocol):
    E = protocol.n_electrodes
    v = np.empty(protocol.m)
    for k, (i, j) in enumerate(protocol.measurements):
        v[k] = fields[i, nodes[j]] - fields[i, nodes[(j + 1) % E]]
    return v


def simulate_measurements(field: ConductivityField, protocol: Protocol,
                          current=DEFAULT_CURRENT) -> np.ndarray:
    """Boundary voltages in protocol order (drive-major, measure-minor)."""
    fields, nodes = _pair_fields(ForwardSolver(field), protocol, current)
    return _read(fields, nodes, protocol)


def normalize_voltages(v_o, v_r) -> np.ndarray:
    v_o = np.asarray(v_o, dtype=float)
    v_r = np.asarray(v_r, dtype=float)
    if v_o.shape != v_r.shape:
        raise ParameterError(f"shape mismatch {v_o.shape} vs {v_r.shape}")
    zero = np.flatnonzero(v_r == 0)
    if zero.size:
        raise NormalizationError(int(zero[0]))
    return (v_o - v_r) / v_r


def normalize_conductivity(sigma_o: ConductivityField, sigma_r: ConductivityField) -> np.ndarray:
    if sigma_o.geometry != sigma_r.geometry:
        raise ParameterError("conductivity fields have different geometries")
    return -(sigma_o.values - sigma_r.values) / sigma_r.values


# --------------------------------------------------------------- jacobians


@dataclass(frozen=True)
class SensitivityModel:
    """Normalized Jacobian ``J`` (m x n) with the reference voltages it was built at."""

    J: np.ndarray
    v_ref: np.ndarray
    geometry: GeometrySpec
    protocol: Protocol | None = None
    n_electrodes: int | None = None

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        v_ref = np.asarray(self.v_ref, dtype=float).ravel()
        if J.ndim != 2 or J.shape[0] != v_ref.size:
            raise ParameterError(f"J shape {J.shape} does not match {v_ref.size} reference voltages")
        if J.shape[1] != self.geometry.n:
            raise ParameterError(f"J has {J.shape[1]} columns but geometry has n={self.geometry.n}")
        if self.protocol is not None and self.protocol.m != J.shape[0]:
            raise ParameterError(f"protocol yields {self.protocol.m} measurements, J has {J.shape[0]} rows")
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "v_ref", v_ref)
        if self.n_electrodes is None and self.protocol is not None:
            object.__setattr__(self, "n_electrodes", self.protocol.n_electrodes)

    @property
    def m(self) -> int:
        return self.J.shape[0]

    @property
    def n(self) -> int:
        return self.J.shape[1]

    def save(self, path) -> None:
        """Write ``J.mat``, ``vref.vec`` and ``geometry.json`` into directory ``path``."""
        path = Path(path)
        textio.write_matrix(path / "J.mat", self.J)
        textio.write_vector(path / "vref.vec", self.v_ref)
        textio.write_json(path / "geometry.json", {
            "kind": self.geometry.kind,
            "dims": list(self.geometry.dims),
            "n_electrodes": self.n_electrodes,
            "m": self.m,
        })


def _finish(J_raw, v_r, sigma_r: ConductivityField, protocol):
    zero = np.flatnonzero(v_r == 0)
    if zero.size:
        raise NormalizationError(int(zero[0]))
    # dv_k = J_raw[k] . dsigma_abs / v_k and dsigma_abs = -sigma_r * dsigma_norm
    J = -(J_raw / v_r[:, None]) * sigma_r.values[None, :]
    return SensitivityModel(J, v_r, sigma_r.geometry, protocol)


def build_jacobian_bruteforce(sigma_r: ConductivityField, protocol: Protocol,
                              step=FD_STEP, current=DEFAULT_CURRENT) -> SensitivityModel:
    """Reference Jacobian by one-sided perturbation of every pixel in turn."""
    v_r = simulate_measurements(sigma_r, protocol, current)
    n = sigma_r.geometry.n
    J_raw = np.empty((protocol.m, n))
    for p in range(n):
        pert = sigma_r.values.copy()
        delta = step * pert[p]
        pert[p] += delta
        v_p = simulate_measurements(ConductivityField(sigma_r.geometry, pert), protocol, current)
        J_raw[:, p] = (v_p - v_r) / delta
    return _finish(J_raw, v_r, sigma_r, protocol)


def _face_derivative_operator(solver: ForwardSolver) -> sp.csr_matrix:
    # (n_faces x n) matrix of d g_f / d sigma_p for the harmonic-mean face conductance
    s = solver.field.values
    si, sj = s[solver.fi], s[solver.fj]
    denom = (si + sj) ** 2
    dgi = 2.0 * sj**2 / denom
    dgj = 2.0 * si**2 / denom
    nf = solver.fi.size
    rows = np.concatenate([np.arange(nf), np.arange(nf)])
    cols = np.concatenate([solver.fi, solver.fj])
    return sp.csr_matrix((np.concatenate([dgi, dgj]), (rows, cols)), shape=(nf, solver.geometry.n))


def pair_jacobian(sigma_r: ConductivityField, protocol: Protocol, current=DEFAULT_CURRENT,
                  pairs=None):
    """Raw (unnormalized) sensitivities dv/dsigma for an explicit list of (drive, measure) pairs.

    Drive ``i`` uses ``current``; the measurement field ``j`` is the unit
    current solution of pair ``j``, so by the sensitivity theorem
    ``dv/dsigma_p = -sum_faces dg/dsigma_p * grad(u_i) * grad(u_j)``.
    """
    solver = ForwardSolver(sigma_r)
    fields, nodes = _pair_fields(solver, protocol, 1.0)
    if pairs is None:
        pairs = protocol.measurements
    grads = fields[:, solver.fi] - fields[:, solver.fj]
    D = _face_derivative_operator(solver)
    prods = np.array([grads[i] * grads[j] for i, j in pairs])
    J_raw = -current * np.asarray((D.T @ prods.T).T)
    return J_raw, current * _read(fields, nodes, protocol)


def build_jacobian_adjoint(sigma_r: ConductivityField, protocol: Protocol,
                           current=DEFAULT_CURRENT) -> SensitivityModel:
    """Same contract as :func:`build_jacobian_bruteforce` at the cost of E solves."""
    J_raw, v_r = pair_jacobian(sigma_r, protocol, current)
    return _finish(J_raw, v_r, sigma_r, protocol)


# ----------------------------------------------------------------- phantom


@dataclass(frozen=True)
class Ellipse:
    """Axis-aligned ellipse in unit-square coordinates (x right, y down)."""

    center: tuple
    axes: tuple
    conductivity: float

    def mask(self, geometry: GeometrySpec) -> np.ndarray:
        w, h = geometry.dims
        y, x = np.mgrid[0:h, 0:w]
        xs = (x + 0.5) / w
        ys = (y + 0.5) / h
        cx, cy = self.center
        ax, ay = self.axes
        return ((xs - cx) / ax) ** 2 + ((ys - cy) / ay) ** 2 <= 1.0


BACKGROUND = 0.24
LEFT_LUNG = 0.17
RIGHT_LUNG = 0.14


def two_lung_ellipses():
    """Two vertically elongated lungs mirrored about the vertical midline.

    Radiological convention: the patient's left lung appears on the image right.
    """
    return [
        Ellipse((0.68, 0.5), (0.14, 0.27), LEFT_LUNG),
        Ellipse((0.32, 0.5), (0.14, 0.27), RIGHT_LUNG),
    ]


def make_phantom(geometry: GeometrySpec, background=BACKGROUND, ellipses=None):
    """Return ``(sigma_r, sigma_o)``; later ellipses overwrite earlier ones."""
    if ellipses is None:
        ellipses = two_lung_ellipses()
    if background <= 0:
        raise ParameterError("background conductivity must be positive")
    sigma_r = ConductivityField.uniform(geometry, background)
    img = np.full(geometry.shape, float(background))
    for e in ellipses:
        if e.conductivity <= 0:
            raise ParameterError(f"non-positive ellipse conductivity {e.conductivity}")
        if min(e.axes) <= 0:
            raise ParameterError("ellipse axes must be positive")
        cx, cy = e.center
        ax, ay = e.axes
        if cx - ax < 0 or cx + ax > 1 or cy - ay < 0 or cy + ay > 1:
            raise ParameterError(f"ellipse at {e.center} with axes {e.axes} leaves the grid")
        mask = e.mask(geometry)
        if not mask.any():
            raise ParameterError(f"ellipse at {e.center} covers no pixel centre")
        img[mask] = e.conductivity
    return sigma_r, ConductivityField(geometry, img.ravel())


def add_noise(dv, snr_db, seed=0) -> np.ndarray:
    """Add white Gaussian noise at ``snr_db`` relative to the RMS of ``dv``.

    ``snr_db`` of ``None`` or ``inf`` returns ``dv`` unchanged.
    """
    dv = np.asarray(dv, dtype=float)
    if snr_db is None or np.isposinf(snr_db):
        return dv.copy()
    rms = np.sqrt(np.mean(dv**2))
    if rms == 0:
        raise ParameterError("cannot set an SNR relative to an all-zero signal")
    std = rms * 10.0 ** (-snr_db / 20.0)
    rng = np.random.default_rng(seed)
    return dv + rng.normal(0.0, std, size=dv.shape)


# --------------------------------------------------------------------- I/O


def load_sensitivity(path) -> SensitivityModel:
    """Load a sensitivity directory written by :meth:`SensitivityModel.save`.

    Errors carry the file and line number of the first problem found.
    """
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"expected sensitivity directory not found: {path}")
    geo_path = path / "geometry.json"
    if not geo_path.exists():
        raise FileNotFoundError(f"expected file not found: {geo_path}")
    try:
        meta = json.loads(geo_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LoadError(exc.msg, geo_path, exc.lineno) from None
    for key in ("kind", "dims", "m"):
        if key not in meta:
            raise LoadError(f"missing key {key!r}", geo_path)
    try:
        geometry = GeometrySpec(meta["kind"], tuple(meta["dims"]))
    except (ParameterError, TypeError) as exc:
        raise LoadError(str(exc), geo_path) from None
    J = textio.read_matrix(path / "J.mat")
    v_ref = textio.read_vector(path / "vref.vec")
    m = int(meta["m"])
    if J.shape != (m, geometry.n):
        raise LoadError(f"J is {J.shape[0]}x{J.shape[1]}, geometry declares {m}x{geometry.n}",
                        path / "J.mat", 1)
    if v_ref.size != m:
        raise LoadError(f"vref has {v_ref.size} entries, expected {m}", path / "vref.vec", 1)
    zero_rows = np.flatnonzero(~J.any(axis=1))
    if zero_rows.size:
        raise LoadError("all-zero Jacobian row", path / "J.mat", int(zero_rows[0]) + 2)
    zero_ref = np.flatnonzero(v_ref == 0)
    if zero_ref.size:
        raise LoadError("zero reference voltage", path / "vref.vec", int(zero_ref[0]) + 2)
    protocol = None
    n_el = meta.get("n_electrodes")
    if geometry.kind == "grid2d" and n_el is not None and Protocol(int(n_el)).m == m:
        protocol = Protocol(int(n_el))
    return SensitivityModel(J, v_ref, geometry, protocol, n_el)


import_sensitivity = load_sensitivity
