"""Trajectory-conditioned von Neumann evolution and ensemble averaging.

Two engines share one calling convention:

* ``pc``: the field is held at ``xi_l`` on ``[t_l, t_l + dt)`` and each
  interval is propagated exactly, giving states at ``t0 + l*dt`` for
  ``l = 0..k``.
* ``rk4``: classical fourth-order Runge-Kutta with step ``h = 2*dt``, reading
  the field at ``t_n``, ``t_n + h/2`` (both middle stages) and ``t_n + h``,
  giving states at ``t0 + 2*n*dt`` for ``n = 0..(k-1)//2``.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, InvalidParameter
from .qcore import SIGMA_Z, as_hermitian, check_density_matrix, hermiticity_error
from .sampler import format_decimal

INTEGRATORS = ("pc", "rk4")


@dataclass(frozen=True, eq=False)
class SystemSpec:
    h_s: np.ndarray
    v_s: np.ndarray
    rho0: np.ndarray

    def __post_init__(self):
        h = as_hermitian(self.h_s, "H_S")
        v = as_hermitian(self.v_s, "V_S")
        rho = check_density_matrix(self.rho0, "rho_S")
        if not h.shape == v.shape == rho.shape:
            raise InvalidParameter("H_S, V_S and rho_S must share one dimension")
        object.__setattr__(self, "h_s", h)
        object.__setattr__(self, "v_s", v)
        object.__setattr__(self, "rho0", rho)

    @property
    def dim(self):
        return self.rho0.shape[0]


def pure_dephasing_system():
    """Qubit with ``H_S = 0``, ``V_S = Z/2`` and ``rho_S = |+x><+x|``."""
    return SystemSpec(np.zeros((2, 2)), 0.5 * SIGMA_Z, 0.5 * np.ones((2, 2)))


@dataclass(frozen=True, eq=False)
class Series:
    times: np.ndarray
    states: np.ndarray

    def element(self, i=0, j=1):
        return self.states[:, i, j]


def _steps_available(k, integrator):
    return k if integrator == "pc" else (k - 1) // 2


def _n_steps(k, dt, integrator, t_max):
    available = _steps_available(k, integrator)
    if t_max is None:
        if available < 1:
            raise GridMismatch(f"{integrator} needs more than k={k} grid points")
        return available
    width = dt if integrator == "pc" else 2 * dt
    wanted = int(np.ceil(t_max / width - 1e-9))
    if wanted > available:
        raise GridMismatch(f"horizon {t_max} needs {wanted} {integrator} steps, "
                           f"k={k} samples allow {available}")
    return wanted


def _values(indices, omega_values):
    indices = np.atleast_2d(np.asarray(indices))
    omega_values = np.asarray(omega_values, dtype=float)
    if indices.size and (indices.min() < 0 or indices.max() >= len(omega_values)):
        raise InvalidParameter("trajectory index outside the spectrum")
    return omega_values[indices]


def _commutator_rhs(h, rho):
    return -1j * (h @ rho - rho @ h)


def rk4_batch(sys, xi, dt, n_steps):
    """RK4 with step ``2*dt`` on a batch of sampled fields ``xi`` (shape (n, k))."""
    n = xi.shape[0]
    h = 2.0 * dt
    rho = np.broadcast_to(sys.rho0, (n,) + sys.rho0.shape).copy()
    out = np.empty((n, n_steps + 1) + sys.rho0.shape, dtype=complex)
    out[:, 0] = rho
    hs, vs = sys.h_s, sys.v_s
    for step in range(n_steps):
        h0 = hs + xi[:, 2 * step, None, None] * vs
        h1 = hs + xi[:, 2 * step + 1, None, None] * vs
        h2 = hs + xi[:, 2 * step + 2, None, None] * vs
        k1 = _commutator_rhs(h0, rho)
        k2 = _commutator_rhs(h1, rho + 0.5 * h * k1)
        k3 = _commutator_rhs(h1, rho + 0.5 * h * k2)
        k4 = _commutator_rhs(h2, rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))
        out[:, step + 1] = rho
    return out


def pc_batch(sys, indices, omega_values, dt, n_steps):
    """Exact ordered product of ``exp(-i dt (H_S + xi_l V_S))`` on a batch."""
    indices = np.atleast_2d(indices)
    n = indices.shape[0]
    props = []
    for w in np.asarray(omega_values, dtype=float):
        evals, evecs = np.linalg.eigh(sys.h_s + w * sys.v_s)
        props.append((evecs * np.exp(-1j * dt * evals)) @ evecs.conj().T)
    props = np.array(props)
    rho = np.broadcast_to(sys.rho0, (n,) + sys.rho0.shape).copy()
    out = np.empty((n, n_steps + 1) + sys.rho0.shape, dtype=complex)
    out[:, 0] = rho
    for step in range(n_steps):
        u = props[indices[:, step]]
        rho = u @ rho @ np.conj(np.swapaxes(u, -1, -2))
        out[:, step + 1] = rho
    return out


def series_times(k, dt, integrator, t0=0.0, t_max=None):
    n_steps = _n_steps(k, dt, integrator, t_max)
    width = dt if integrator == "pc" else 2 * dt
    return t0 + width * np.arange(n_steps + 1)


def evolve_trajectory_rk4(sys, traj, omega_values, t_max=None):
    xi = _values(traj.outcome_indices, omega_values)
    n_steps = _n_steps(traj.k, traj.grid_dt, "rk4", t_max)
    states = rk4_batch(sys, xi, traj.grid_dt, n_steps)[0]
    return Series(series_times(traj.k, traj.grid_dt, "rk4", traj.t0, t_max), states)


def evolve_trajectory_exact_pc(sys, traj, omega_values, t_max=None):
    _values(traj.outcome_indices, omega_values)
    n_steps = _n_steps(traj.k, traj.grid_dt, "pc", t_max)
    states = pc_batch(sys, traj.outcome_indices, omega_values, traj.grid_dt, n_steps)[0]
    return Series(series_times(traj.k, traj.grid_dt, "pc", traj.t0, t_max), states)


def evolve_trajectory(sys, traj, omega_values, integrator="pc", t_max=None):
    if integrator == "pc":
        return evolve_trajectory_exact_pc(sys, traj, omega_values, t_max)
    if integrator == "rk4":
        return evolve_trajectory_rk4(sys, traj, omega_values, t_max)
    raise InvalidParameter(f"unknown integrator {integrator!r}; choose from {INTEGRATORS}")


@dataclass(eq=False)
class SimulationReport:
    times: np.ndarray
    states: np.ndarray
    n_e: int
    integrator: str = ""
    element: tuple = (0, 1)
    reference: np.ndarray = None
    notes: dict = field(default_factory=dict)

    def tracked(self):
        i, j = self.element
        return self.states[:, i, j]

    def check(self, tol=1e-9):
        tr = np.abs(np.einsum("tii->t", self.states) - 1.0)
        herm = hermiticity_error(self.states)
        if tr.max() > tol or herm > tol:
            raise ValueError(f"averaged states drift: trace {tr.max():.2e}, hermiticity {herm:.2e}")

    def errors(self):
        if self.reference is None:
            return None
        return error_report(self.tracked(), self.reference)

    def to_csv(self, path):
        """Columns ``t, re_coh, im_coh, abs_coh, exact, abs_err``; the last two are
        empty when no reference is attached.
        """
        coh = self.tracked()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "re_coh", "im_coh", "abs_coh", "exact", "abs_err"])
            for n, t in enumerate(self.times):
                row = [format_decimal(t), format_decimal(coh[n].real),
                       format_decimal(coh[n].imag), format_decimal(abs(coh[n]))]
                if self.reference is None:
                    row += ["", ""]
                else:
                    ref = self.reference[n]
                    row += [format_decimal(np.real(ref)), format_decimal(abs(coh[n] - ref))]
                w.writerow(row)


def ensemble_average(series, integrator="", element=(0, 1)):
    """Entry-wise mean of per-trajectory series in list order."""
    series = list(series)
    if not series:
        raise GridMismatch("no series to average")
    times = series[0].times
    shape = series[0].states.shape
    total = np.zeros(shape, dtype=complex)
    for s in series:
        if s.states.shape != shape or not np.array_equal(s.times, times):
            raise GridMismatch("series do not share grid and dimension")
        total += s.states
    return SimulationReport(times=times.copy(), states=total / len(series), n_e=len(series),
                            integrator=integrator, element=element)


def simulate_ensemble(sys, ens, integrator="pc", n=None, t_max=None, element=(0, 1),
                      chunk=4096):
    """Average the conditioned evolutions of the first ``n`` trajectories of ``ens``.

    Chunks are reduced in trajectory order, so the result is deterministic.
    """
    if integrator not in INTEGRATORS:
        raise InvalidParameter(f"unknown integrator {integrator!r}; choose from {INTEGRATORS}")
    n = ens.n if n is None else int(n)
    if not 1 <= n <= ens.n:
        raise InvalidParameter(f"n must be in [1, {ens.n}]")
    n_steps = _n_steps(ens.k, ens.dt, integrator, t_max)
    total = None
    for start in range(0, n, chunk):
        idx = ens.indices[start:min(n, start + chunk)]
        if integrator == "pc":
            block = pc_batch(sys, idx, ens.omega_values, ens.dt, n_steps)
        else:
            block = rk4_batch(sys, ens.omega_values[idx], ens.dt, n_steps)
        part = block.sum(axis=0)
        total = part if total is None else total + part
    report = SimulationReport(times=series_times(ens.k, ens.dt, integrator, ens.t0, t_max),
                              states=total / n, n_e=n, integrator=integrator, element=element)
    if integrator == "rk4":
        report.notes["resymmetrized"] = True
        report.notes["discarded_tail_samples"] = ens.k - (2 * n_steps + 1)
    return report


def exact_rtn_coherence(gamma, omega, t):
    """Closed-form coherence of the pure-dephasing qubit under telegraph noise.

    ``(1/2) exp(-gamma t) [cosh(mu gamma t) + sinh(mu gamma t)/mu]`` with
    ``mu = sqrt(1 - omega**2 / (4 gamma**2))``, continued to ``cos``/``sin`` for
    imaginary ``mu`` and to ``1 + gamma t`` at ``mu = 0``.
    """
    gamma = float(gamma)
    omega = float(omega)
    if not gamma > 0:
        raise InvalidParameter(f"gamma must be > 0, got {gamma}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidParameter("t must be >= 0")
    mu2 = 1.0 - omega**2 / (4.0 * gamma**2)
    mu = np.sqrt(abs(mu2))
    x = gamma * t
    if mu < 1e-8:
        bracket = 1.0 + x
    elif mu2 > 0:
        bracket = np.cosh(mu * x) + np.sinh(mu * x) / mu
    else:
        bracket = np.cos(mu * x) + np.sin(mu * x) / mu
    out = 0.5 * np.exp(-x) * bracket
    return float(out) if out.ndim == 0 else out


def error_report(avg, reference):
    """Return ``(rms, max_abs, per_time)`` of ``|avg - reference|`` over the grid."""
    avg = np.asarray(avg)
    reference = np.asarray(reference)
    if avg.shape != reference.shape:
        raise GridMismatch(f"series shapes differ: {avg.shape} vs {reference.shape}")
    dev = np.abs(avg - reference)
    return float(np.sqrt(np.mean(dev**2))), float(dev.max()), dev
