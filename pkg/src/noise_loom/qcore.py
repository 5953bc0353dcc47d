"""Dense Hermitian linear algebra: spectral projectors, unitary evolution,
density-matrix checks.

All routines accept plain ``numpy`` arrays. Density matrices are ordinary
complex ``(d, d)`` arrays; :func:`check_density_matrix` enforces the usual
invariants where a caller needs them.
"""
from dataclasses import dataclass

import numpy as np

from .errors import NonHermitianInput

TOL_HERM = 1e-12
TOL_TRACE = 1e-12
TOL_PSD = -1e-10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)


def hermiticity_error(a):
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - np.conj(np.swapaxes(a, -1, -2)))))


def as_hermitian(m, what="matrix", tol=TOL_HERM):
    """Return ``m`` as a complex square array, raising if it is not Hermitian.

    The tolerance is scaled by ``max(1, max|m|)`` so large-norm generators
    are not rejected for round-off.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{what} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{what} has non-finite entries")
    dev = hermiticity_error(m)
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if dev > tol * scale:
        raise NonHermitianInput(dev, what)
    return m


@dataclass(frozen=True, eq=False)
class Observable:
    """Spectral decomposition ``source = sum_i values[i] * projectors[i]``.

    ``values`` are strictly increasing; ``projectors`` has shape ``(m, d, d)``.
    """

    values: np.ndarray
    projectors: np.ndarray
    source: np.ndarray

    @property
    def dim(self):
        return self.source.shape[0]

    def __len__(self):
        return len(self.values)

    def check(self, tol=1e-10):
        """Return the worst violation of the projector algebra invariants."""
        d = self.dim
        P = self.projectors
        worst = 0.0
        for i in range(len(P)):
            worst = max(worst, np.max(np.abs(P[i] @ P[i] - P[i])), hermiticity_error(P[i]))
            for j in range(i + 1, len(P)):
                worst = max(worst, np.max(np.abs(P[i] @ P[j])))
        worst = max(worst, np.max(np.abs(P.sum(axis=0) - np.eye(d))))
        recon = np.einsum("i,iab->ab", self.values, P)
        worst = max(worst, np.max(np.abs(recon - self.source)))
        if np.any(np.diff(self.values) <= 0):
            worst = np.inf
        return float(worst)


def spectral_decompose(m, degeneracy_tol=None):
    """Group the eigenvalues of a Hermitian matrix into spectral projectors.

    Eigenvalues whose consecutive gap is at most ``degeneracy_tol`` share one
    projector and the cluster mean becomes its value. The default tolerance is
    ``1e-9`` times the spectral scale ``max(range, max|eigenvalue|)``.

    Raises
    ------
    NonHermitianInput
        If ``m`` deviates from Hermitian by more than ``TOL_HERM``.
    """
    m = as_hermitian(m, "observable")
    evals, evecs = np.linalg.eigh(m)
    if degeneracy_tol is None:
        scale = max(evals[-1] - evals[0], np.max(np.abs(evals)))
        degeneracy_tol = 1e-9 * scale
    groups = [[0]]
    for i in range(1, len(evals)):
        if evals[i] - evals[i - 1] <= degeneracy_tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    values = np.array([evals[g].mean() for g in groups])
    projectors = np.empty((len(groups),) + m.shape, dtype=complex)
    for n, g in enumerate(groups):
        vecs = evecs[:, g]
        projectors[n] = vecs @ vecs.conj().T
    return Observable(values=values, projectors=projectors, source=m)


def unitary(h, t):
    """``exp(-i t h)`` for Hermitian ``h`` via its eigendecomposition."""
    h = as_hermitian(h, "hamiltonian")
    evals, evecs = np.linalg.eigh(h)
    return (evecs * np.exp(-1j * t * evals)) @ evecs.conj().T


def evolve_unitary(rho, h, t):
    """Return ``exp(-i t h) rho exp(i t h)``."""
    u = unitary(h, t)
    return u @ np.asarray(rho, dtype=complex) @ u.conj().T


def dm_diagnostics(rho):
    """Return ``(trace_error, hermiticity_error, min_eigenvalue)`` of ``rho``.

    The minimum eigenvalue is taken from the Hermitian part, so it is always
    real even for slightly non-Hermitian input.
    """
    rho = np.asarray(rho, dtype=complex)
    trace_err = abs(np.trace(rho) - 1.0)
    herm_err = hermiticity_error(rho)
    sym = 0.5 * (rho + rho.conj().T)
    min_eig = float(np.linalg.eigvalsh(sym)[0])
    return float(trace_err), herm_err, min_eig


def check_density_matrix(rho, what="density matrix", herm_tol=TOL_HERM,
                         trace_tol=TOL_TRACE, psd_tol=TOL_PSD):
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"{what} must be square, got shape {rho.shape}")
    trace_err, herm_err, min_eig = dm_diagnostics(rho)
    if herm_err > herm_tol:
        raise NonHermitianInput(herm_err, what)
    if trace_err > trace_tol:
        raise ValueError(f"{what} has trace error {trace_err:.3e}")
    if min_eig < psd_tol:
        raise ValueError(f"{what} has negative eigenvalue {min_eig:.3e}")
    return rho


def bloch_state(x=0.0, y=0.0, z=0.0):
    """Qubit density matrix ``(I + x X + y Y + z Z) / 2`` (not validated)."""
    return 0.5 * (IDENTITY2 + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)


def bloch_vector(rho):
    rho = np.asarray(rho)
    return np.real(np.array([np.trace(rho @ s) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)]))
