import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quanteit import forward2d as fwd
from quanteit import textio
from quanteit.errors import LoadError, NormalizationError, ParameterError
from quanteit.qanet import GeometrySpec

G16 = GeometrySpec.grid2d(16, 16)


def random_field(geometry, seed, lo=0.1, hi=0.5):
    rng = np.random.default_rng(seed)
    return fwd.ConductivityField(geometry, rng.uniform(lo, hi, geometry.n))


@pytest.fixture(scope="module")
def bf8():
    sigma_r = fwd.ConductivityField.uniform(G16, 0.24)
    return fwd.build_jacobian_bruteforce(sigma_r, fwd.Protocol(8))


# ----------------------------------------------------------- protocol


def enumerate_dedup(E):
    # independent brute-force count: all ordered (drive, measure) with no shared electrode
    seen = set()
    for i in range(E):
        for j in range(E):
            if {i, (i + 1) % E} & {j, (j + 1) % E}:
                continue
            seen.add(frozenset([i, j]))
    return len(seen)


@pytest.mark.parametrize("E", [8, 10, 16, 32])
def test_protocol_count(E):
    p = fwd.Protocol(E)
    assert p.m == E * (E - 3) // 2 == enumerate_dedup(E)


def test_protocol_sixteen_electrode_count():
    assert fwd.Protocol(16).m == 104
    assert fwd.Protocol(8).m == 20
    assert fwd.Protocol(16, reciprocity_dedup=False).m == 16 * 13


def test_protocol_order_drive_major():
    meas = fwd.Protocol(16).measurements
    assert list(meas) == sorted(meas)
    assert all(i < j for i, j in meas)


def test_electrodes_on_boundary_and_distinct():
    nodes = fwd.electrode_nodes(GeometrySpec.grid2d(64, 64), 16)
    assert len(set(nodes)) == 16
    ring = set(fwd.boundary_nodes(GeometrySpec.grid2d(64, 64)))
    assert set(nodes) <= ring


# ------------------------------------------------------------- solver


def test_solve_linearity_and_scaling():
    f = fwd.ConductivityField.uniform(G16, 0.24)
    u_ab = fwd.solve_potential(f, (3, 200))
    u_ba = fwd.solve_potential(f, (200, 3))
    np.testing.assert_allclose(u_ab, -u_ba, atol=1e-15 * np.abs(u_ab).max())
    u2 = fwd.solve_potential(fwd.ConductivityField.uniform(G16, 0.48), (3, 200))
    np.testing.assert_allclose(u2, u_ab / 2, rtol=1e-10, atol=1e-14)


def test_solve_rejects_same_nodes():
    with pytest.raises(ParameterError):
        fwd.solve_potential(fwd.ConductivityField.uniform(G16, 1.0), (5, 5))


def test_conservation_and_residual():
    f = random_field(G16, 0)
    solver = fwd.ForwardSolver(f)
    rhs = np.zeros(G16.n)
    rhs[[10, 100]] = [1e-3, -1e-3]
    assert rhs.sum() == 0
    u = solver.solve(rhs)
    # reassemble the full operator and check the flux balance at every node
    K = np.zeros((G16.n, G16.n))
    for i, j, g in zip(solver.fi, solver.fj, solver.face_g):
        K[i, i] += g
        K[j, j] += g
        K[i, j] -= g
        K[j, i] -= g
    keep = np.arange(1, G16.n)
    res = K[np.ix_(keep, keep)] @ u[keep] - rhs[keep]
    assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(rhs[keep])
    assert u[fwd.GROUND_NODE] == 0


def four_terminal(field, drive, meas):
    u = fwd.solve_potential(field, drive)
    return u[meas[0]] - u[meas[1]]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_reciprocity(seed):
    f = random_field(G16, seed)
    nodes = fwd.electrode_nodes(G16, 8)
    p, q = (nodes[0], nodes[1]), (nodes[4], nodes[5])
    a, b = four_terminal(f, p, q), four_terminal(f, q, p)
    assert abs(a - b) <= 1e-8 * abs(a)


def test_simulate_deterministic_and_length():
    f = fwd.ConductivityField.uniform(G16, 0.24)
    v1 = fwd.simulate_measurements(f, fwd.Protocol(8))
    v2 = fwd.simulate_measurements(f, fwd.Protocol(8))
    assert v1.tobytes() == v2.tobytes() and v1.size == 20
    v16 = fwd.simulate_measurements(fwd.ConductivityField.uniform(GeometrySpec.grid2d(32, 32), 0.24),
                                    fwd.Protocol(16))
    assert v16.size == 104


# ---------------------------------------------------------- normalization


def test_normalize_voltages():
    v = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(fwd.normalize_voltages(v, v), 0)
    np.testing.assert_allclose(fwd.normalize_voltages(1.1 * v, v), 0.1, rtol=1e-14)
    np.testing.assert_allclose(fwd.normalize_voltages([2, 1], [1, 2]), [1, -0.5])
    with pytest.raises(NormalizationError) as exc:
        fwd.normalize_voltages([1, 2, 3], [1, 0, 3])
    assert exc.value.index == 1 and "1" in str(exc.value)


def test_normalize_conductivity_lung_values():
    g = GeometrySpec.grid2d(3, 1)
    r = fwd.ConductivityField.uniform(g, 0.24)
    o = fwd.ConductivityField(g, [0.24, 0.17, 0.14])
    np.testing.assert_allclose(fwd.normalize_conductivity(o, r), [0, 0.2916666666666667, 0.4166666666666667])
    np.testing.assert_array_equal(fwd.normalize_conductivity(r, r), 0)
    with pytest.raises(ParameterError):
        fwd.normalize_conductivity(fwd.ConductivityField.uniform(GeometrySpec.grid2d(1, 3), 0.24), r)


def test_conductivity_must_be_positive():
    with pytest.raises(ParameterError):
        fwd.ConductivityField(GeometrySpec.grid2d(2, 2), [1, 1, 0, 1])


# ------------------------------------------------------------ jacobians


def test_bruteforce_basics(bf8):
    assert bf8.J.shape == (20, 256)
    assert np.all(bf8.J.any(axis=1))
    assert np.all(bf8.v_ref != 0)
    np.testing.assert_array_equal(bf8.J @ np.zeros(256), 0)


def test_uniform_change_is_unit_response(bf8):
    # scaling sigma by (1-c) scales every voltage by 1/(1-c): J @ ones == ones
    np.testing.assert_allclose(bf8.J @ np.ones(256), 1.0, atol=1e-5)


def test_bruteforce_step_robustness(bf8):
    sigma_r = fwd.ConductivityField.uniform(G16, 0.24)
    bf2 = fwd.build_jacobian_bruteforce(sigma_r, fwd.Protocol(8), step=2e-6)
    assert np.linalg.norm(bf2.J - bf8.J) / np.linalg.norm(bf8.J) < 1e-4


def test_linearization_single_pixel(bf8):
    sigma_r = fwd.ConductivityField.uniform(G16, 0.24)
    vals = sigma_r.values.copy()
    vals[7 * 16 + 5] *= 0.99
    sigma_o = fwd.ConductivityField(G16, vals)
    dv = fwd.normalize_voltages(fwd.simulate_measurements(sigma_o, fwd.Protocol(8)), bf8.v_ref)
    pred = bf8.J @ fwd.normalize_conductivity(sigma_o, sigma_r)
    assert np.linalg.norm(dv - pred) / np.linalg.norm(dv) <= 0.05


def test_linearization_five_percent_blob():
    g = GeometrySpec.grid2d(16, 16)
    sigma_r, sigma_o = fwd.make_phantom(g, 0.24, [fwd.Ellipse((0.4, 0.5), (0.2, 0.2), 0.24 * 0.95)])
    model = fwd.build_jacobian_adjoint(sigma_r, fwd.Protocol(8))
    dv = fwd.normalize_voltages(fwd.simulate_measurements(sigma_o, fwd.Protocol(8)), model.v_ref)
    pred = model.J @ fwd.normalize_conductivity(sigma_o, sigma_r)
    assert np.linalg.norm(dv - pred) / np.linalg.norm(dv) <= 0.05


def test_adjoint_matches_bruteforce(bf8):
    sigma_r = fwd.ConductivityField.uniform(G16, 0.24)
    ad = fwd.build_jacobian_adjoint(sigma_r, fwd.Protocol(8))
    assert np.linalg.norm(ad.J - bf8.J) / np.linalg.norm(bf8.J) <= 0.01
    np.testing.assert_allclose(ad.v_ref, bf8.v_ref, rtol=1e-12)
    rng = np.random.default_rng(5)
    for k, p in zip(rng.integers(0, 20, 3), rng.integers(0, 256, 3)):
        assert ad.J[k, p] == pytest.approx(bf8.J[k, p], rel=0.01)


def test_adjoint_matches_bruteforce_heterogeneous():
    sigma_r = random_field(GeometrySpec.grid2d(10, 10), 9)
    p = fwd.Protocol(8)
    ad = fwd.build_jacobian_adjoint(sigma_r, p)
    bf = fwd.build_jacobian_bruteforce(sigma_r, p)
    assert np.linalg.norm(ad.J - bf.J) / np.linalg.norm(bf.J) <= 0.01


def test_reciprocal_rows_identical_before_dedup():
    sigma_r = random_field(G16, 2)
    full = fwd.Protocol(8, reciprocity_dedup=False)
    J_raw, v = fwd.pair_jacobian(sigma_r, full)
    index = {pair: k for k, pair in enumerate(full.measurements)}
    for (i, j), k in index.items():
        r = index[(j, i)]
        assert abs(v[k] - v[r]) <= 1e-8 * abs(v[k])
        np.testing.assert_allclose(J_raw[k], J_raw[r], rtol=0, atol=1e-8 * np.abs(J_raw[k]).max())


# -------------------------------------------------------------- phantom


def test_two_lung_phantom():
    sigma_r, sigma_o = fwd.make_phantom(GeometrySpec.grid2d(64, 64))
    assert set(np.unique(sigma_o.values)) == {0.24, 0.17, 0.14}
    np.testing.assert_array_equal(sigma_r.values, 0.24)
    img = sigma_o.image()
    # mirrored about the vertical midline in shape, different in value
    np.testing.assert_array_equal(img != 0.24, (img != 0.24)[:, ::-1])
    truth = fwd.normalize_conductivity(sigma_o, sigma_r)
    assert truth.min() == 0


def test_phantom_edge_cases():
    g = GeometrySpec.grid2d(16, 16)
    sigma_r, sigma_o = fwd.make_phantom(g, 0.24, [])
    np.testing.assert_array_equal(sigma_o.values, sigma_r.values)
    with pytest.raises(ParameterError):
        fwd.make_phantom(g, 0.24, [fwd.Ellipse((1.5, 1.5), (0.1, 0.1), 0.1)])
    with pytest.raises(ParameterError):
        fwd.make_phantom(g, 0.24, [fwd.Ellipse((0.5, 0.5), (0.1, 0.1), -0.1)])
    with pytest.raises(ParameterError):
        fwd.make_phantom(g, 0.0, [])


# ---------------------------------------------------------------- noise


def empirical_snr(clean, noisy):
    eta = noisy - clean
    return 10 * np.log10((clean @ clean) / (eta @ eta))


def test_noise_none_and_inf():
    dv = np.linspace(-1, 1, 104)
    np.testing.assert_array_equal(fwd.add_noise(dv, None), dv)
    np.testing.assert_array_equal(fwd.add_noise(dv, np.inf), dv)


def test_noise_snr_within_one_db_over_seeds():
    # i.i.d. draws: the empirical SNR of 104 samples scatters by ~0.6 dB
    dv = np.random.default_rng(100).normal(size=104)
    snrs = np.array([empirical_snr(dv, fwd.add_noise(dv, 20, s)) for s in range(200)])
    assert abs(snrs.mean() - 20) < 0.25
    assert np.mean((snrs >= 19) & (snrs <= 21)) >= 0.85


def test_noise_default_seed_snr():
    dv = np.random.default_rng(1).normal(size=104)
    assert 19 <= empirical_snr(dv, fwd.add_noise(dv, 20, 0)) <= 21


def test_noise_deterministic_and_validation():
    dv = np.arange(1.0, 105.0)
    assert fwd.add_noise(dv, 30, 7).tobytes() == fwd.add_noise(dv, 30, 7).tobytes()
    with pytest.raises(ParameterError):
        fwd.add_noise(np.zeros(10), 20, 0)


# ------------------------------------------------------------------ I/O


def test_sensitivity_roundtrip(tmp_path, bf8):
    bf8.save(tmp_path / "s")
    meta = json.loads((tmp_path / "s" / "geometry.json").read_text())
    assert meta == {"kind": "grid2d", "dims": [16, 16], "n_electrodes": 8, "m": 20}
    loaded = fwd.import_sensitivity(tmp_path / "s")
    np.testing.assert_array_equal(loaded.J, bf8.J)
    np.testing.assert_array_equal(loaded.v_ref, bf8.v_ref)
    assert loaded.protocol == fwd.Protocol(8)


def test_import_3d(tmp_path):
    g = GeometrySpec.grid3d(4, 4, 3)
    J = np.random.default_rng(0).normal(size=(10, g.n))
    d = tmp_path / "s3"
    textio.write_matrix(d / "J.mat", J)
    textio.write_vector(d / "vref.vec", np.ones(10))
    textio.write_json(d / "geometry.json", {"kind": "grid3d", "dims": [4, 4, 3], "n_electrodes": 32, "m": 10})
    model = fwd.import_sensitivity(d)
    assert model.geometry == g and model.protocol is None and model.m == 10


def test_import_errors(tmp_path, bf8):
    d = tmp_path / "s"
    bf8.save(d)
    J = bf8.J.copy()
    J[3] = 0
    textio.write_matrix(d / "J.mat", J)
    with pytest.raises(LoadError) as exc:
        fwd.import_sensitivity(d)
    assert exc.value.line == 5
    textio.write_matrix(d / "J.mat", bf8.J[:, :-1])
    with pytest.raises(LoadError):
        fwd.import_sensitivity(d)
    (d / "J.mat").write_text("20 256\n1 2 x\n")
    with pytest.raises(LoadError) as exc:
        fwd.import_sensitivity(d)
    assert exc.value.line == 2
    with pytest.raises(FileNotFoundError):
        fwd.import_sensitivity(tmp_path / "missing")
