"""Measurable environments: exact unitary models and Lindblad-reduced models.

Superoperators act on row-major vectorised density matrices, so
``vec(A @ rho @ B) = kron(A, B.T) @ vec(rho)``.
"""
import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import DimensionMismatch, FormatError, InvalidParameter
from .qcore import (
    SIGMA_X,
    SIGMA_Z,
    Observable,
    as_hermitian,
    check_density_matrix,
    spectral_decompose,
    unitary,
)


@dataclass(frozen=True, eq=False)
class ExactEnvironment:
    hamiltonian: np.ndarray
    initial_state: np.ndarray
    coupling: Observable

    def __post_init__(self):
        d = self.hamiltonian.shape[0]
        if self.initial_state.shape != (d, d) or self.coupling.dim != d:
            raise DimensionMismatch("H_E, rho_E and V_E must share one dimension")


@dataclass(frozen=True, eq=False)
class LindbladEnvironment:
    generator: np.ndarray
    initial_state: np.ndarray
    coupling: Observable

    def __post_init__(self):
        d = self.initial_state.shape[0]
        if self.generator.shape != (d * d, d * d) or self.coupling.dim != d:
            raise DimensionMismatch("generator must be (d^2, d^2) for d-dimensional states")


def _superop_violations(generator, d):
    """Trace- and Hermiticity-preservation defects over the matrix-unit basis."""
    trace_rows = generator.reshape(d, d, d * d)[np.arange(d), np.arange(d)].sum(axis=0)
    trace_err = float(np.max(np.abs(trace_rows)))
    herm_err = 0.0
    for a in range(d):
        for b in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[a, b] = 1.0
            out = (generator @ unit.ravel()).reshape(d, d)
            out_dag = (generator @ unit.T.ravel()).reshape(d, d)
            herm_err = max(herm_err, float(np.max(np.abs(out.conj().T - out_dag))))
    return trace_err, herm_err


class EnvironmentModel:
    """An exact or Lindblad environment plus a label and content fingerprint.

    Propagators are cached per time step, so repeated ``propagate`` calls on a
    uniform grid cost a single matrix product.
    """

    def __init__(self, env, label="", spec=None):
        if not isinstance(env, (ExactEnvironment, LindbladEnvironment)):
            raise TypeError("env must be an ExactEnvironment or LindbladEnvironment")
        self.env = env
        self.label = label
        self._spec = spec if spec is not None else _matrix_spec(env)
        self.fingerprint = hashlib.sha256(
            json.dumps(self._spec, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()
        self._cache = {}

    @property
    def is_exact(self):
        return isinstance(self.env, ExactEnvironment)

    @property
    def coupling(self):
        return self.env.coupling

    @property
    def initial_state(self):
        return self.env.initial_state

    @property
    def dim(self):
        return self.env.initial_state.shape[0]

    def to_dict(self):
        return dict(self._spec)

    def __repr__(self):
        kind = "exact" if self.is_exact else "lindblad"
        return f"EnvironmentModel({kind}, dim={self.dim}, label={self.label!r})"

    def propagator(self, dt):
        """Return the ``dt`` propagator: a unitary (exact) or a superoperator."""
        dt = float(dt)
        if dt < 0:
            raise InvalidParameter(f"dt must be >= 0, got {dt}")
        if dt not in self._cache:
            if self.is_exact:
                self._cache[dt] = unitary(self.env.hamiltonian, dt)
            else:
                self._cache[dt] = expm(dt * self.env.generator)
        return self._cache[dt]


def propagate(model, rho, dt):
    """Evolve ``rho`` (shape ``(d, d)`` or batched ``(..., d, d)``) by ``dt``."""
    rho = np.asarray(rho, dtype=complex)
    d = model.dim
    if rho.shape[-2:] != (d, d):
        raise DimensionMismatch(f"state shape {rho.shape} does not match model dimension {d}")
    p = model.propagator(dt)
    if model.is_exact:
        return p @ rho @ p.conj().T
    flat = rho.reshape(rho.shape[:-2] + (d * d,))
    return (flat @ p.T).reshape(rho.shape)


def apply_generator(model, rho):
    d = model.dim
    rho = np.asarray(rho, dtype=complex)
    return (model.env.generator @ rho.ravel()).reshape(d, d)


def stationarity_residual(model):
    """Frobenius norm of ``L rho`` (Lindblad) or ``[H_E, rho_E]`` (exact)."""
    rho = model.initial_state
    if model.is_exact:
        h = model.env.hamiltonian
        return float(np.linalg.norm(h @ rho - rho @ h))
    return float(np.linalg.norm(apply_generator(model, rho)))


def dephasing_generator(gamma, op):
    """Superoperator of ``rho -> -(gamma/2) [op, [op, rho]]`` for Hermitian ``op``."""
    op = np.asarray(op, dtype=complex)
    d = op.shape[0]
    eye = np.eye(d)
    op2 = op @ op
    return -0.5 * gamma * (np.kron(op2, eye) - 2 * np.kron(op, op.T) + np.kron(eye, op2.T))


def lindblad_generator(hamiltonian, jump_ops=()):
    """Superoperator of ``-i[H, rho] + sum_k (L rho L^H - {L^H L, rho}/2)``."""
    h = as_hermitian(hamiltonian, "hamiltonian")
    d = h.shape[0]
    eye = np.eye(d)
    gen = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op in jump_ops:
        op = np.asarray(op, dtype=complex)
        ldl = op.conj().T @ op
        gen += np.kron(op, op.conj()) - 0.5 * (np.kron(ldl, eye) + np.kron(eye, ldl.T))
    return gen


def build_exact_env(hamiltonian, initial_state, coupling, label="exact", degeneracy_tol=None,
                    spec=None):
    h = as_hermitian(hamiltonian, "H_E")
    rho = check_density_matrix(initial_state, "rho_E")
    obs = spectral_decompose(coupling, degeneracy_tol)
    env = ExactEnvironment(hamiltonian=h, initial_state=rho, coupling=obs)
    return EnvironmentModel(env, label=label, spec=spec)


def build_lindblad_env(generator, initial_state, coupling, label="lindblad", tol=1e-12,
                       degeneracy_tol=None, spec=None):
    """Wrap a generator after checking it preserves trace and Hermiticity."""
    rho = check_density_matrix(initial_state, "rho_q")
    d = rho.shape[0]
    gen = np.asarray(generator, dtype=complex)
    if gen.shape != (d * d, d * d):
        raise DimensionMismatch(f"generator shape {gen.shape} incompatible with d={d}")
    scale = max(1.0, float(np.max(np.abs(gen))))
    trace_err, herm_err = _superop_violations(gen, d)
    if trace_err > tol * scale:
        raise InvalidParameter(f"generator does not preserve trace (defect {trace_err:.3e})")
    if herm_err > tol * scale:
        raise InvalidParameter(f"generator does not preserve Hermiticity (defect {herm_err:.3e})")
    obs = spectral_decompose(coupling, degeneracy_tol)
    env = LindbladEnvironment(generator=gen, initial_state=rho, coupling=obs)
    return EnvironmentModel(env, label=label, spec=spec)


def build_rtn_env(gamma, omega):
    """Two-level telegraph-noise source: ``L rho = -(gamma/2)[X,[X,rho]]``,
    stationary ``I/2`` and coupling ``(omega/2) Z``.
    """
    gamma = float(gamma)
    omega = float(omega)
    if not gamma > 0 or not np.isfinite(gamma):
        raise InvalidParameter(f"gamma must be > 0, got {gamma}")
    if not np.isfinite(omega):
        raise InvalidParameter(f"omega must be finite, got {omega}")
    spec = {"type": "rtn", "gamma": gamma, "omega": omega}
    return build_lindblad_env(
        dephasing_generator(gamma, SIGMA_X),
        np.eye(2, dtype=complex) / 2,
        0.5 * omega * SIGMA_Z,
        label=f"rtn(gamma={gamma!r}, omega={omega!r})",
        spec=spec,
    )


# -- model files --------------------------------------------------------------

def encode_matrix(m):
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def decode_matrix(data, name="matrix"):
    """Parse nested rows of ``[re, im]`` pairs (plain numbers mean real)."""
    try:
        rows = []
        for row in data:
            parsed = []
            for z in row:
                if isinstance(z, (list, tuple)):
                    re, im = z
                    parsed.append(complex(float(re), float(im)))
                else:
                    parsed.append(complex(float(z), 0.0))
            rows.append(parsed)
        m = np.array(rows, dtype=complex)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{name}: expected rows of [re, im] pairs ({exc})") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise FormatError(f"{name}: expected a square matrix, got shape {m.shape}")
    return m


def _matrix_spec(env):
    if isinstance(env, ExactEnvironment):
        return {"type": "exact", "H": encode_matrix(env.hamiltonian),
                "rho": encode_matrix(env.initial_state), "V": encode_matrix(env.coupling.source)}
    return {"type": "lindblad", "generator": encode_matrix(env.generator),
            "rho": encode_matrix(env.initial_state), "V": encode_matrix(env.coupling.source)}


def model_from_dict(spec):
    if not isinstance(spec, dict) or "type" not in spec:
        raise FormatError("model definition must be a JSON object with a 'type' key")
    kind = spec["type"]
    try:
        if kind == "rtn":
            return build_rtn_env(spec["gamma"], spec["omega"])
        if kind == "exact":
            return build_exact_env(decode_matrix(spec["H"], "H"), decode_matrix(spec["rho"], "rho"),
                                   decode_matrix(spec["V"], "V"), label=spec.get("label", "exact"))
        if kind == "lindblad":
            return build_lindblad_env(decode_matrix(spec["generator"], "generator"),
                                      decode_matrix(spec["rho"], "rho"),
                                      decode_matrix(spec["V"], "V"),
                                      label=spec.get("label", "lindblad"))
    except KeyError as exc:
        raise FormatError(f"model definition of type {kind!r} is missing key {exc}") from None
    raise FormatError(f"unknown model type {kind!r}")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(spec)


def save_model(model, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def commuting_demo_env():
    """Three-level environment with ``[H_E, V_E] = 0`` and a stationary diagonal state."""
    return build_exact_env(np.diag([0.3, -0.7, 1.1]), np.diag([0.5, 0.3, 0.2]),
                           np.diag([1.0, -1.0, 1.0]), label="demo-commuting")


def noncommuting_demo_env(omega0=2.0):
    """Qubit with ``H_E = (omega0/2) X``, ``V_E = Z``, ``rho_E = |0><0|``."""
    return build_exact_env(0.5 * omega0 * SIGMA_X, np.diag([1.0, 0.0]), SIGMA_Z,
                           label="demo-noncommuting")
