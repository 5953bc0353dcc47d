import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noise_loom.errors import NonHermitianInput
from noise_loom.qcore import (
    SIGMA_X,
    SIGMA_Z,
    bloch_state,
    check_density_matrix,
    dm_diagnostics,
    evolve_unitary,
    spectral_decompose,
)

from conftest import random_density, random_hermitian


def test_rtn_coupling_spectrum():
    obs = spectral_decompose(0.5 * 2.0 * SIGMA_Z)
    np.testing.assert_allclose(obs.values, [-1.0, 1.0])
    np.testing.assert_allclose(obs.projectors[0], np.diag([0, 1]), atol=1e-15)
    np.testing.assert_allclose(obs.projectors[1], np.diag([1, 0]), atol=1e-15)


def test_fully_degenerate():
    obs = spectral_decompose(3.7 * np.eye(4))
    np.testing.assert_allclose(obs.values, [3.7])
    np.testing.assert_allclose(obs.projectors[0], np.eye(4), atol=1e-12)


def test_sigma_x_closed_form():
    obs = spectral_decompose(SIGMA_X)
    np.testing.assert_allclose(obs.values, [-1.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(obs.projectors[0], (np.eye(2) - SIGMA_X) / 2, atol=1e-14)
    np.testing.assert_allclose(obs.projectors[1], (np.eye(2) + SIGMA_X) / 2, atol=1e-14)


def test_degenerate_grouping_in_larger_matrix():
    rng = np.random.default_rng(1)
    q, _ = np.linalg.qr(rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)))
    m = q @ np.diag([2.0, -1.0, 2.0, 0.5, -1.0]) @ q.conj().T
    obs = spectral_decompose(m)
    np.testing.assert_allclose(obs.values, [-1.0, 0.5, 2.0], atol=1e-12)
    ranks = [round(np.trace(p).real) for p in obs.projectors]
    assert ranks == [2, 1, 2]
    assert obs.check() < 1e-10


def test_non_hermitian_rejected():
    with pytest.raises(NonHermitianInput) as info:
        spectral_decompose(np.array([[0, 1], [0.5, 0]]))
    assert info.value.deviation == pytest.approx(0.5)


@settings(max_examples=60, deadline=None)
@given(d=st.integers(1, 8), seed=st.integers(0, 2**31 - 1), degenerate=st.booleans())
def test_projector_algebra_property(d, seed, degenerate):
    rng = np.random.default_rng(seed)
    m = random_hermitian(rng, d)
    if degenerate and d > 1:
        evals, vecs = np.linalg.eigh(m)
        evals = np.round(evals)
        m = (vecs * evals) @ vecs.conj().T
        m = (m + m.conj().T) / 2
    assert spectral_decompose(m).check() < 1e-10


def test_evolve_identity_at_zero():
    rng = np.random.default_rng(2)
    rho = random_density(rng, 3)
    np.testing.assert_allclose(evolve_unitary(rho, random_hermitian(rng, 3), 0.0), rho, atol=1e-15)


def test_maximally_mixed_invariant():
    rng = np.random.default_rng(3)
    out = evolve_unitary(np.eye(2) / 2, random_hermitian(rng, 2), 1.7)
    np.testing.assert_allclose(out, np.eye(2) / 2, atol=1e-15)


def test_phase_evolution_oracle():
    omega, t = 1.3, 0.77
    rho = evolve_unitary(bloch_state(x=1.0), 0.5 * omega * SIGMA_Z, t)
    assert rho[0, 1] == pytest.approx(0.5 * np.exp(-1j * omega * t), abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 6), seed=st.integers(0, 2**31 - 1),
       s=st.floats(-3, 3), t=st.floats(-3, 3))
def test_evolution_composes_and_preserves_spectrum(d, seed, s, t):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, d)
    h = random_hermitian(rng, d)
    twice = evolve_unitary(evolve_unitary(rho, h, s), h, t)
    np.testing.assert_allclose(twice, evolve_unitary(rho, h, s + t), atol=1e-9)
    np.testing.assert_allclose(np.linalg.eigvalsh(twice), np.linalg.eigvalsh(rho), atol=1e-9)
    tr, _, min_eig = dm_diagnostics(twice)
    assert tr < 1e-10 and min_eig > -1e-10


@pytest.mark.parametrize("rho, expected", [
    (np.eye(2) / 2, (0.0, 0.0, 0.5)),
    (np.diag([1.0, 0.0]), (0.0, 0.0, 0.0)),
    (bloch_state(x=1.2), (0.0, 0.0, -0.1)),
])
def test_dm_diagnostics(rho, expected):
    np.testing.assert_allclose(dm_diagnostics(rho), expected, atol=1e-14)


def test_check_density_matrix_rejects_negative():
    with pytest.raises(ValueError, match="negative eigenvalue"):
        check_density_matrix(bloch_state(x=1.2))
