"""Brute-force joint (quasi-)probabilities of an environment observable.

Tables are dense numpy arrays with one axis per grid time (and, for
quasi-probabilities, a second block of axes for the ``zeta`` branch), each
axis indexing the observable spectrum in ascending order.
"""
import csv
from dataclasses import dataclass
from itertools import product

import numpy as np

from .envmodel import propagate
from .errors import BudgetExceeded, InvalidParameter
from .sampler import format_decimal

DEFAULT_BUDGET = 10**6


@dataclass(frozen=True)
class TimeGrid:
    times: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 1:
            raise InvalidParameter("time grid needs at least one time")
        if np.any(np.diff(t) <= 0):
            raise InvalidParameter("grid times must be strictly increasing")
        object.__setattr__(self, "times", tuple(float(x) for x in t))

    @classmethod
    def uniform(cls, k, dt, t0=0.0):
        return cls(tuple(t0 + dt * np.arange(k)))

    @property
    def k(self):
        return len(self.times)

    def without(self, j):
        return TimeGrid(self.times[:j] + self.times[j + 1:])


@dataclass(frozen=True, eq=False)
class QuasiProbTable:
    """``values[xi_1..xi_k, zeta_1..zeta_k]`` of the joint quasi-probability."""

    grid: TimeGrid
    values: np.ndarray
    omega_values: np.ndarray

    @property
    def k(self):
        return self.grid.k

    def entry(self, xi, zeta):
        return complex(self.values[tuple(xi) + tuple(zeta)])

    def diagonal(self):
        """Entries with ``xi == zeta``, shape ``(m,)*k``."""
        k, m = self.k, len(self.omega_values)
        flat = self.values.reshape(m**k, m**k)
        return np.real(np.diagonal(flat)).reshape((m,) * k)

    def offdiagonal_mask(self):
        m, k = len(self.omega_values), self.k
        idx = np.indices(self.values.shape)
        return np.any(idx[:k] != idx[k:], axis=0).reshape((m,) * (2 * k))

    def to_csv(self, path):
        """One row per (xi-seq, zeta-seq) with ``xi_k == zeta_k``; sequences are
        space-separated spectrum indices.
        """
        m, k = len(self.omega_values), self.k
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["xi", "zeta", "re", "im"])
            for xi in product(range(m), repeat=k):
                for zeta in product(range(m), repeat=k):
                    if xi[-1] != zeta[-1]:
                        continue
                    z = self.values[xi + zeta]
                    w.writerow([" ".join(map(str, xi)), " ".join(map(str, zeta)),
                                format_decimal(z.real), format_decimal(z.imag)])


def _as_grid(grid):
    return grid if isinstance(grid, TimeGrid) else TimeGrid(tuple(grid))


def _require_exact(model):
    if not model.is_exact:
        raise InvalidParameter("quasi-probabilities need an exact (H_E, rho_E, V_E) environment")


def joint_quasiprob(model, grid, budget=DEFAULT_BUDGET):
    """Joint quasi-probability table of an exact environment on ``grid``.

    Built from the chain ``B(xi) = P(xi_k) U_{k-1} ... U_1 P(xi_1)`` with
    ``U_l = exp(-i (t_{l+1}-t_l) H_E)`` and ``q(xi, zeta) = tr[B(xi) rho_E(t_1) B(zeta)^H]``;
    entries with ``xi_k != zeta_k`` are set to exactly zero.
    """
    _require_exact(model)
    grid = _as_grid(grid)
    obs = model.coupling
    m, k, d = len(obs), grid.k, model.dim
    required = m ** (2 * k - 1)
    if required > budget:
        raise BudgetExceeded(required, budget)
    rho1 = propagate(model, model.initial_state, grid.times[0])
    chains = obs.projectors.copy()
    for l in range(1, k):
        u = model.propagator(grid.times[l] - grid.times[l - 1])
        step = u @ chains
        chains = np.einsum("jab,...bc->...jac", obs.projectors, step)
    chains = chains.reshape(m**k, d, d)
    left = (chains @ rho1).reshape(m**k, d * d)
    q = left @ chains.reshape(m**k, d * d).conj().T
    q = q.reshape((m,) * (2 * k))
    last_xi = np.indices(q.shape)[k - 1]
    last_zeta = np.indices(q.shape)[2 * k - 1]
    q[last_xi != last_zeta] = 0.0
    return QuasiProbTable(grid=grid, values=q, omega_values=obs.values.copy())


def joint_prob(model, grid, budget=DEFAULT_BUDGET):
    """Probability of every outcome sequence under sequential measurement.

    Runs the unnormalised collapse/propagate recurrence for all ``m**k``
    branches; valid for exact and Lindblad environments alike.
    """
    grid = _as_grid(grid)
    obs = model.coupling
    m, k = len(obs), grid.k
    if m**k > budget:
        raise BudgetExceeded(m**k, budget)
    state = propagate(model, model.initial_state, grid.times[0])
    for l in range(k):
        if l:
            state = propagate(model, state, grid.times[l] - grid.times[l - 1])
        state = np.einsum("iab,...bc,icd->...iad", obs.projectors, state, obs.projectors)
    return np.real(np.einsum("...aa->...", state))


def joint_prob_eigensum(model, grid, budget=DEFAULT_BUDGET):
    """Eigenstate-sum formula: ``sum <n1|rho(t1)|n1> prod |<n_{l+1}|U|n_l>|^2``.

    Agrees with :func:`joint_prob` when ``V_E`` is nondegenerate or the state
    carries no coherence inside degenerate eigenspaces.
    """
    _require_exact(model)
    grid = _as_grid(grid)
    obs = model.coupling
    m, k = len(obs), grid.k
    if m**k > budget:
        raise BudgetExceeded(m**k, budget)
    evals, basis = np.linalg.eigh(obs.source)
    cluster = np.argmin(np.abs(evals[:, None] - obs.values[None, :]), axis=1)
    onehot = (cluster[None, :] == np.arange(m)[:, None]).astype(float)
    rho1 = propagate(model, model.initial_state, grid.times[0])
    acc = np.real(np.diag(basis.conj().T @ rho1 @ basis))
    for l in range(1, k):
        u = model.propagator(grid.times[l] - grid.times[l - 1])
        trans = np.abs(basis.conj().T @ u @ basis) ** 2
        acc = np.einsum("...n,cn,qn->...cq", acc, onehot, trans)
    return np.einsum("...n,cn->...c", acc, onehot)


def eigensum_discrepancy(model, grid, budget=DEFAULT_BUDGET):
    """Max difference between the sequential-measurement and eigenstate-sum tables."""
    return float(np.max(np.abs(joint_prob(model, grid, budget)
                               - joint_prob_eigensum(model, grid, budget))))


def validity_witness(model, grid, budget=DEFAULT_BUDGET):
    """Return ``(offdiag_mass, kolmogorov_residual)`` for an exact environment.

    ``offdiag_mass`` sums ``|q|`` over entries with any ``xi_l != zeta_l``.
    ``kolmogorov_residual`` is the worst mismatch between the table summed over
    one non-final time and the table computed directly without that time.
    """
    grid = _as_grid(grid)
    table = joint_quasiprob(model, grid, budget)
    offdiag = float(np.sum(np.abs(table.values[table.offdiagonal_mask()])))
    residual = 0.0
    if grid.k > 1:
        p = joint_prob(model, grid, budget)
        for j in range(grid.k - 1):
            lower = joint_prob(model, grid.without(j), budget)
            residual = max(residual, float(np.max(np.abs(p.sum(axis=j) - lower))))
    return offdiag, residual


def moment(p, grid, omega_values, powers=None):
    """``sum_seq prod_l xi_l**powers[l] * p(seq)``; ``powers`` defaults to all ones."""
    p = np.asarray(p, dtype=float)
    grid = _as_grid(grid)
    omega_values = np.asarray(omega_values, dtype=float)
    if p.ndim != grid.k or any(s != len(omega_values) for s in p.shape):
        raise InvalidParameter("probability table shape does not match grid and spectrum")
    powers = np.ones(grid.k, dtype=int) if powers is None else np.asarray(powers)
    acc = p
    for l in range(grid.k):
        acc = np.tensordot(acc, omega_values ** powers[l], axes=([0], [0]))
    return float(acc)
