"""Noise statistics from trajectory ensembles and a Gaussian-approximation
spectroscopy pipeline (pulse-sequence filter functions, attenuation, PSD
reconstruction).
"""
import csv
from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, InsufficientData, InvalidRatio, OutOfDomain, QuadratureBudget
from .sampler import format_decimal


# -- ensemble estimators ---------------------------------------------------------

def autocorrelation(ens, l1, l2, bias_corrected=False):
    """Two-time autocorrelation ``mean(x1 x2) - mean(x1) mean(x2)`` over the ensemble.

    With ``bias_corrected`` the result is scaled by ``n/(n-1)``.
    """
    k = ens.k
    for l in (l1, l2):
        if not 0 <= l < k:
            raise IndexOutOfRange(f"grid index {l} outside [0, {k})")
    x = ens.values()
    a, b = x[:, l1], x[:, l2]
    c = float(np.mean(a * b) - np.mean(a) * np.mean(b))
    if bias_corrected:
        if ens.n < 2:
            raise InsufficientData("bias correction needs at least two trajectories")
        c *= ens.n / (ens.n - 1)
    return c


def moment_estimate(ens, indices):
    """Ensemble mean of ``prod_l xi(t_l)`` for the given grid indices, with std error."""
    x = ens.values()
    prod = np.prod(x[:, list(indices)], axis=1)
    se = prod.std(ddof=1) / np.sqrt(ens.n) if ens.n > 1 else np.inf
    return float(prod.mean()), float(se)


def _acf_influence(x, max_lag):
    """Pooled lag estimates and each trajectory's linearised contribution to them."""
    n, k = x.shape
    means = x.mean(axis=0)
    c = np.empty(max_lag + 1)
    infl = np.empty((n, max_lag + 1))
    for s in range(max_lag + 1):
        per_traj = np.mean(x[:, : k - s] * x[:, s:], axis=1)
        c[s] = per_traj.mean() - np.mean(means[: k - s] * means[s:])
        infl[:, s] = per_traj - np.mean(x[:, : k - s] * means[s:] + means[: k - s] * x[:, s:],
                                        axis=1)
    return c, infl


def _stderr(infl):
    n = infl.shape[0]
    return infl.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(infl.shape[1:], np.inf)


def pooled_autocorrelation(ens, max_lag=None):
    """Stationary autocorrelation ``C(s)`` for lags ``s = 0..max_lag`` grid steps.

    Each lag averages the two-time estimator over every start index.
    Standard errors use each trajectory's linearised contribution (products
    and the mean-subtraction term), trajectories being independent.

    Returns ``(lag_times, C, stderr)``.
    """
    x = ens.values()
    k = x.shape[1]
    max_lag = k - 1 if max_lag is None else int(max_lag)
    if not 0 <= max_lag < k:
        raise IndexOutOfRange(f"max_lag {max_lag} outside [0, {k})")
    c, infl = _acf_influence(x, max_lag)
    return ens.dt * np.arange(max_lag + 1), c, _stderr(infl)


@dataclass(frozen=True, eq=False)
class SpectralEstimate:
    omegas: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    estimator: str

    def to_csv(self, path):
        write_columns(path, ["omega", "S", "stderr"], [self.omegas, self.values, self.stderr])


def write_columns(path, header, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([format_decimal(v) for v in row])


def _lag_basis(n_lags, dt, omegas):
    weights = np.full(n_lags, 2.0)
    weights[0] = 1.0
    if n_lags > 1:
        weights[-1] = 1.0
    return dt * np.cos(np.outer(omegas, dt * np.arange(n_lags))) * weights


def lag_spectrum(c, dt, omegas):
    """Trapezoidal Fourier transform of an even lag sequence ``c[0..L]``.

    ``S(w) = dt * [c0 + 2 sum_{0<s<L} c_s cos(w s dt) + c_L cos(w L dt)]``.
    """
    c = np.asarray(c, dtype=float)
    return _lag_basis(len(c), dt, np.asarray(omegas, dtype=float)) @ c


def estimate_psd(ens, max_lag=None, omegas=None):
    """Power spectral density from the pooled autocorrelation.

    ``max_lag`` defaults to ``(k-1)//2`` grid steps; ``omegas`` defaults to
    ``4*max_lag + 1`` points spanning ``[-pi/dt, pi/dt]``.
    """
    if ens.k < 4:
        raise InsufficientData(f"PSD estimate needs k >= 4 grid points, got {ens.k}")
    max_lag = (ens.k - 1) // 2 if max_lag is None else int(max_lag)
    if not 0 <= max_lag < ens.k:
        raise IndexOutOfRange(f"max_lag {max_lag} outside [0, {ens.k})")
    if omegas is None:
        omegas = np.linspace(-np.pi / ens.dt, np.pi / ens.dt, 4 * max_lag + 1)
    omegas = np.asarray(omegas, dtype=float)
    c, infl = _acf_influence(ens.values(), max_lag)
    basis = _lag_basis(max_lag + 1, ens.dt, omegas)
    return SpectralEstimate(omegas, basis @ c, _stderr(infl @ basis.T),
                            f"pooled-acf-trapz(L={max_lag})")


def rtn_autocorrelation(gamma, omega):
    """``C(t1, t2) = (omega/2)**2 exp(-2 gamma |t1 - t2|)`` as a vectorised callable."""
    amp = 0.25 * omega**2
    return lambda t1, t2: amp * np.exp(-2.0 * gamma * np.abs(np.subtract(t1, t2)))


def rtn_psd(gamma, omega, w):
    """Fourier transform of the telegraph autocorrelation: ``(omega**2/4) 4 gamma / (4 gamma**2 + w**2)``."""
    return 0.25 * omega**2 * 4.0 * gamma / (4.0 * gamma**2 + np.asarray(w, dtype=float) ** 2)


# -- spectroscopy ------------------------------------------------------------------

@dataclass(frozen=True)
class PulseSequence:
    """Instantaneous pi pulses at ``flip_times`` within ``(0, duration)``."""

    duration: float
    flip_times: tuple = ()

    def __post_init__(self):
        taus = tuple(float(x) for x in self.flip_times)
        if not self.duration > 0:
            raise OutOfDomain("sequence duration must be positive")
        if taus and (taus[0] <= 0 or taus[-1] >= self.duration or np.any(np.diff(taus) <= 0)):
            raise OutOfDomain("flip times must be strictly increasing inside (0, duration)")
        object.__setattr__(self, "flip_times", taus)


def free_induction(duration):
    return PulseSequence(duration)


def spin_echo(duration):
    return PulseSequence(duration, (duration / 2,))


def cpmg(duration, n_pulses):
    """``n_pulses`` flips at ``(j - 1/2) duration / n_pulses``."""
    return PulseSequence(duration, tuple((np.arange(n_pulses) + 0.5) * duration / n_pulses))


def periodic_sequence(omega_ctr, n_periods):
    """Square-wave filter of angular frequency ``omega_ctr`` over ``n_periods`` periods.

    Built as CPMG with two pulses per period, so ``f`` has period ``2 pi / omega_ctr``
    and Fourier amplitude ``2/pi`` at ``+-omega_ctr``.
    """
    duration = 2 * np.pi * n_periods / omega_ctr
    return cpmg(duration, 2 * n_periods)


def filter_function(seq, t):
    """``+1`` at ``t = 0``, changing sign at every flip time at or before ``t``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > seq.duration):
        raise OutOfDomain(f"t must lie in [0, {seq.duration}]")
    flips = np.searchsorted(np.asarray(seq.flip_times), t_arr, side="right")
    out = np.where(flips % 2 == 0, 1.0, -1.0)
    return float(out) if out.ndim == 0 else out


def _panels(seq, t, panels_per_interval):
    edges = [0.0] + [tau for tau in seq.flip_times if tau < t] + [t]
    lo, hi, sign = [], [], []
    for a in range(len(edges) - 1):
        sub = np.linspace(edges[a], edges[a + 1], panels_per_interval + 1)
        lo.extend(sub[:-1])
        hi.extend(sub[1:])
        sign.extend([(-1.0) ** a] * panels_per_interval)
    return np.array(lo), np.array(hi), np.array(sign)


def attenuation_exponent(corr, seq, t, order=10, panels=1, budget=5 * 10**7):
    """``chi(t) = (1/2) int_0^t int_0^t f(t1) f(t2) C(t1, t2) dt1 dt2``.

    Gauss-Legendre on every pair of panels between flips (``f`` is constant on
    each). Same-panel blocks use a collapsed-triangle rule so a kink of ``C``
    on the diagonal does not spoil convergence; ``C`` must be symmetric.
    """
    if not 0 < t <= seq.duration:
        raise OutOfDomain(f"t must lie in (0, {seq.duration}]")
    lo, hi, sign = _panels(seq, t, panels)
    n_nodes = len(lo) * order
    if n_nodes**2 > budget:
        raise QuadratureBudget(f"{n_nodes}^2 quadrature points exceed budget {budget}")
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    width = hi - lo
    nodes = (lo[:, None] + width[:, None] * x[None, :]).ravel()
    weights = (width[:, None] * w[None, :] * sign[:, None]).ravel()
    panel_of = np.repeat(np.arange(len(lo)), order)

    total = 0.0
    rows = max(1, int(2 * 10**6 // n_nodes))
    for start in range(0, n_nodes, rows):
        sl = slice(start, min(n_nodes, start + rows))
        block = corr(nodes[sl, None], nodes[None, :])
        same = panel_of[sl, None] == panel_of[None, :]
        block = np.where(same, 0.0, block)
        total += weights[sl] @ block @ weights

    # same-panel blocks: 2 * int_lo^hi dt1 int_lo^t1 dt2 C
    t1 = lo[:, None] + width[:, None] * x[None, :]
    diag = 0.0
    for p in range(len(lo)):
        inner = lo[p] + (t1[p][:, None] - lo[p]) * x[None, :]
        vals = corr(np.broadcast_to(t1[p][:, None], inner.shape), inner)
        diag += 2.0 * np.sum(width[p] * w[:, None] * (t1[p][:, None] - lo[p]) * w[None, :] * vals)
    return 0.5 * (total + diag)


def gaussian_attenuation(corr, seq, t, order=10, panels=1, budget=5 * 10**7):
    """Coherence ratio ``exp(-chi(t))`` under the second-cumulant approximation."""
    return float(np.exp(-attenuation_exponent(corr, seq, t, order, panels, budget)))


def reconstruct_psd(observations):
    """Invert ``ratio = exp(-(4 t / pi**2) S(omega_ctr))`` for each observation.

    ``observations`` is an iterable of ``(omega_ctr, ratio, t)``.
    """
    omegas, values = [], []
    for omega_ctr, ratio, t in observations:
        if not 0 < ratio <= 1:
            raise InvalidRatio(f"coherence ratio must lie in (0, 1], got {ratio}")
        if not t > 0:
            raise InvalidRatio(f"evolution time must be positive, got {t}")
        omegas.append(float(omega_ctr))
        values.append(-(np.pi**2) / (4.0 * t) * np.log(ratio))
    values = np.array(values) + 0.0
    return SpectralEstimate(np.array(omegas), values, np.full(len(values), np.nan),
                            "dd-gaussian-inversion")
