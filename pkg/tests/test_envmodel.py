import json

import numpy as np
import pytest

from noise_loom.envmodel import (
    apply_generator,
    build_exact_env,
    build_lindblad_env,
    build_rtn_env,
    commuting_demo_env,
    lindblad_generator,
    load_model,
    model_from_dict,
    propagate,
    save_model,
    stationarity_residual,
)
from noise_loom.errors import DimensionMismatch, FormatError, InvalidParameter
from noise_loom.qcore import SIGMA_X, SIGMA_Y, SIGMA_Z, bloch_state, bloch_vector

from conftest import random_density, random_hermitian


def double_commutator(gamma, rho):
    inner = SIGMA_X @ rho - rho @ SIGMA_X
    return -0.5 * gamma * (SIGMA_X @ inner - inner @ SIGMA_X)


def test_rtn_construction():
    m = build_rtn_env(1.0, 2.0)
    np.testing.assert_allclose(m.coupling.values, [-1.0, 1.0])
    np.testing.assert_allclose(m.initial_state, np.eye(2) / 2)
    assert not m.is_exact


def test_rtn_zero_coupling():
    m = build_rtn_env(1.0, 0.0)
    np.testing.assert_allclose(m.coupling.values, [0.0])


@pytest.mark.parametrize("gamma", [0.0, -1.0, float("nan")])
def test_rtn_rejects_bad_gamma(gamma):
    with pytest.raises(InvalidParameter):
        build_rtn_env(gamma, 2.0)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 3.0])
def test_generator_matches_double_commutator(gamma):
    m = build_rtn_env(gamma, 2.0)
    rng = np.random.default_rng(0)
    for _ in range(5):
        rho = random_density(rng, 2)
        np.testing.assert_allclose(apply_generator(m, rho), double_commutator(gamma, rho),
                                   atol=1e-14)
    np.testing.assert_allclose(apply_generator(m, SIGMA_Z), -2 * gamma * SIGMA_Z, atol=1e-14)


def test_generator_trace_and_hermiticity():
    m = build_rtn_env(1.3, 2.0)
    rng = np.random.default_rng(5)
    for _ in range(10):
        rho = random_density(rng, 2)
        out = apply_generator(m, rho)
        assert abs(np.trace(out)) < 1e-12
        np.testing.assert_allclose(out, out.conj().T, atol=1e-12)


def test_stationary_state_unchanged(rtn):
    for dt in (0.0, 0.2, 5.0):
        np.testing.assert_allclose(propagate(rtn, np.eye(2) / 2, dt), np.eye(2) / 2, atol=1e-14)


def test_rtn_bloch_z_decay(rtn):
    out = propagate(rtn, bloch_state(z=1.0), 0.2)
    assert bloch_vector(out)[2] == pytest.approx(0.670320, abs=5e-7)
    assert bloch_vector(out)[2] == pytest.approx(np.exp(-0.4), abs=1e-12)


@pytest.mark.parametrize("t", [0.1, 0.7, 2.5])
def test_rtn_bloch_components(rtn, t):
    b0 = np.array([0.3, -0.4, 0.5])
    out = bloch_vector(propagate(rtn, bloch_state(*b0), t))
    decay = np.exp(-2 * t)
    np.testing.assert_allclose(out, [b0[0], b0[1] * decay, b0[2] * decay], atol=1e-9)


def test_exact_branch_zero_hamiltonian():
    rng = np.random.default_rng(6)
    rho = random_density(rng, 3)
    m = build_exact_env(np.zeros((3, 3)), rho, np.diag([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(propagate(m, rho, 1.7), rho, atol=1e-15)


@pytest.mark.parametrize("kind", ["exact", "lindblad"])
def test_semigroup(kind):
    rng = np.random.default_rng(7)
    d = 3
    rho0 = random_density(rng, d)
    v = random_hermitian(rng, d)
    h = random_hermitian(rng, d)
    if kind == "exact":
        m = build_exact_env(h, rho0, v)
    else:
        jumps = [0.4 * random_hermitian(rng, d), 0.3 * (rng.normal(size=(d, d)))]
        m = build_lindblad_env(lindblad_generator(h, jumps), rho0, v)
    rho = random_density(rng, d)
    s, t = 0.37, 0.91
    np.testing.assert_allclose(propagate(m, propagate(m, rho, s), t), propagate(m, rho, s + t),
                               atol=1e-9)
    for _ in range(5):
        out = propagate(m, random_density(rng, d), 0.8)
        assert np.linalg.eigvalsh((out + out.conj().T) / 2)[0] > -1e-10
        assert abs(np.trace(out) - 1) < 1e-10


def test_stationarity_residual():
    assert stationarity_residual(build_rtn_env(1.0, 2.0)) < 1e-15
    gamma = 1.7
    m = build_lindblad_env(build_rtn_env(gamma, 2.0).env.generator, bloch_state(z=1.0), SIGMA_Z)
    assert stationarity_residual(m) == pytest.approx(np.sqrt(2) * gamma, rel=1e-12)
    assert stationarity_residual(commuting_demo_env()) < 1e-15


def test_lindblad_validation():
    bad = np.eye(4)
    with pytest.raises(InvalidParameter, match="trace"):
        build_lindblad_env(bad, np.eye(2) / 2, SIGMA_Z)
    with pytest.raises(DimensionMismatch):
        build_lindblad_env(np.zeros((9, 9)), np.eye(2) / 2, SIGMA_Z)
    with pytest.raises(DimensionMismatch):
        propagate(build_rtn_env(1, 2), np.eye(3) / 3, 0.1)


def test_fingerprint_deterministic():
    a, b = build_rtn_env(1.0, 2.0), build_rtn_env(1.0, 2.0)
    assert a.fingerprint == b.fingerprint
    assert build_rtn_env(1.0, 2.5).fingerprint != a.fingerprint


def test_model_files_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    m = build_exact_env(random_hermitian(rng, 2), random_density(rng, 2), SIGMA_Y)
    path = tmp_path / "m.json"
    save_model(m, path)
    loaded = load_model(path)
    assert loaded.fingerprint == m.fingerprint
    np.testing.assert_array_equal(loaded.env.hamiltonian, m.env.hamiltonian)
    rtn = model_from_dict({"type": "rtn", "gamma": 1, "omega": 2})
    assert rtn.fingerprint == build_rtn_env(1.0, 2.0).fingerprint
    gen = model_from_dict(json.loads(json.dumps(build_rtn_env(1, 2).to_dict())))
    assert gen.dim == 2
    lind = build_lindblad_env(build_rtn_env(1, 2).env.generator, np.eye(2) / 2, SIGMA_Z)
    save_model(lind, path)
    np.testing.assert_array_equal(load_model(path).env.generator, lind.env.generator)


def test_model_file_errors(tmp_path):
    with pytest.raises(FormatError):
        model_from_dict({"type": "nope"})
    with pytest.raises(FormatError, match="missing"):
        model_from_dict({"type": "exact", "H": [[0]]})
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(FormatError):
        load_model(p)
