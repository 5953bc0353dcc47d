"""Sequential projective measurement of an environment observable.

Each trajectory is produced by the measure / collapse / propagate loop: the
outcome at every grid time is drawn from the Born rule, the state is replaced
by its normalised projection, and then evolved for one grid interval.
"""
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .envmodel import propagate
from .errors import DegenerateDistribution, FormatError, InvalidParameter
from .rng import trajectory_stream

FORMAT_TAG = "traj-ens/1"
MIN_PROB = 1e-14
CHUNK = 2048
HEADER_KEYS = ("format", "dt", "k", "n", "omega_values", "model_fingerprint", "master_seed",
               "created_at")


@dataclass(frozen=True, eq=False)
class Trajectory:
    outcome_indices: np.ndarray
    grid_dt: float
    t0: float = 0.0

    @property
    def k(self):
        return len(self.outcome_indices)

    def times(self):
        return self.t0 + self.grid_dt * np.arange(self.k)

    def values(self, omega_values):
        return np.asarray(omega_values)[self.outcome_indices]


@dataclass(eq=False)
class TrajectoryEnsemble:
    """``n`` outcome-index sequences of length ``k`` on a shared uniform grid."""

    indices: np.ndarray
    dt: float
    omega_values: np.ndarray
    model_fingerprint: str = ""
    master_seed: int = 0
    created_at: str = ""
    t0: float = 0.0
    model: dict = field(default=None)

    def __post_init__(self):
        self.indices = np.atleast_2d(np.asarray(self.indices, dtype=np.int64))
        self.omega_values = np.asarray(self.omega_values, dtype=float)
        if self.indices.size and (self.indices.min() < 0
                                  or self.indices.max() >= len(self.omega_values)):
            raise ValueError("outcome index outside the observable spectrum")

    @property
    def n(self):
        return self.indices.shape[0]

    @property
    def k(self):
        return self.indices.shape[1]

    def __len__(self):
        return self.n

    def __getitem__(self, j):
        return Trajectory(self.indices[j], self.dt, self.t0)

    def __iter__(self):
        return (self[j] for j in range(self.n))

    def times(self):
        return self.t0 + self.dt * np.arange(self.k)

    def values(self):
        """Outcome values, shape ``(n, k)``."""
        return self.omega_values[self.indices]

    def subset(self, n):
        return TrajectoryEnsemble(self.indices[:n], self.dt, self.omega_values,
                                  self.model_fingerprint, self.master_seed, self.created_at,
                                  self.t0, self.model)

    def same_data(self, other):
        return (self.dt == other.dt and self.t0 == other.t0
                and np.array_equal(self.omega_values, other.omega_values)
                and np.array_equal(self.indices, other.indices)
                and self.model_fingerprint == other.model_fingerprint
                and self.master_seed == other.master_seed)


def born_probabilities(state, obs):
    """``trace(P_i rho)`` for every projector; works on batched states."""
    return np.real(np.einsum("iab,...ba->...i", obs.projectors, state))


def measure_once(state, obs, rand01):
    """Projective measurement of ``obs`` on ``state`` using one uniform draw.

    Returns ``(index, collapsed_state, probability)``; the outcome is chosen by
    inverse CDF over the Born probabilities in spectrum order.
    """
    state = np.asarray(state, dtype=complex)
    probs = born_probabilities(state, obs)
    idx = _pick(probs[None, :], np.array([rand01]))[0]
    p = probs[idx]
    proj = obs.projectors[idx]
    return int(idx), proj @ state @ proj / p, float(p)


def _pick(probs, u):
    cum = np.cumsum(probs, axis=-1)
    idx = np.argmax(u[:, None] < cum, axis=-1)
    # u beyond the rounded total: take the last outcome with nonzero weight
    over = u >= cum[:, -1]
    if np.any(over):
        last = probs.shape[1] - 1 - np.argmax(probs[:, ::-1] > MIN_PROB, axis=1)
        idx = np.where(over, last, idx)
    chosen = probs[np.arange(len(idx)), idx]
    if np.any(chosen < MIN_PROB):
        bad = int(np.argmax(chosen < MIN_PROB))
        raise DegenerateDistribution(
            f"drew outcome {int(idx[bad])} with probability {chosen[bad]:.3e}")
    return idx


def _sample_batch(model, dt, uniforms):
    """Run the measurement recurrence for every row of ``uniforms`` (shape (n, k))."""
    n, k = uniforms.shape
    obs = model.coupling
    d = model.dim
    state = np.broadcast_to(model.initial_state, (n, d, d)).copy()
    out = np.empty((n, k), dtype=np.int64)
    rows = np.arange(n)
    for step in range(k):
        probs = born_probabilities(state, obs)
        idx = _pick(probs, uniforms[:, step])
        out[:, step] = idx
        if step == k - 1:
            break
        proj = obs.projectors[idx]
        state = proj @ state @ proj / probs[rows, idx][:, None, None]
        state = propagate(model, state, dt)
    return out


def _check_grid(dt, k):
    if not dt > 0 or not math.isfinite(dt):
        raise InvalidParameter(f"dt must be > 0, got {dt}")
    if int(k) != k or k < 1:
        raise InvalidParameter(f"k must be a positive integer, got {k}")


def sample_trajectory(model, dt, k, stream):
    """One trajectory of ``k`` outcomes at times ``0, dt, ..., (k-1) dt``."""
    _check_grid(dt, k)
    u = stream.random(int(k))
    return Trajectory(_sample_batch(model, dt, u[None, :])[0], float(dt))


def _sample_range(model, dt, k, master_seed, start, stop):
    u = np.empty((stop - start, k))
    for row, j in enumerate(range(start, stop)):
        u[row] = trajectory_stream(master_seed, j).random(k)
    return _sample_batch(model, dt, u)


def resolve_workers(workers=None):
    env = os.environ.get("NOISE_LOOM_WORKERS")
    if env:
        try:
            workers = int(env)
        except ValueError:
            raise InvalidParameter(f"NOISE_LOOM_WORKERS must be an integer, got {env!r}") from None
    workers = 1 if workers is None else int(workers)
    if workers < 1:
        raise InvalidParameter(f"worker count must be >= 1, got {workers}")
    return workers


def sample_ensemble(model, dt, k, n_e, master_seed, workers=None):
    """Sample ``n_e`` trajectories; trajectory ``j`` uses stream ``(master_seed, j)``.

    The result does not depend on ``workers`` (or ``NOISE_LOOM_WORKERS``).
    """
    _check_grid(dt, k)
    if int(n_e) != n_e or n_e < 1:
        raise InvalidParameter(f"ensemble size must be >= 1, got {n_e}")
    k, n_e, master_seed = int(k), int(n_e), int(master_seed)
    bounds = [(s, min(s + CHUNK, n_e)) for s in range(0, n_e, CHUNK)]
    workers = resolve_workers(workers)
    if workers == 1 or len(bounds) == 1:
        parts = [_sample_range(model, dt, k, master_seed, s, e) for s, e in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sample_range, model, dt, k, master_seed, s, e)
                       for s, e in bounds]
            parts = [f.result() for f in futures]
    spec = model.to_dict()
    return TrajectoryEnsemble(
        indices=np.concatenate(parts, axis=0),
        dt=float(dt),
        omega_values=model.coupling.values.copy(),
        model_fingerprint=model.fingerprint,
        master_seed=master_seed,
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        model=spec if spec.get("type") == "rtn" else None,
    )


# -- persistence ---------------------------------------------------------------

def format_decimal(x):
    return format(float(x), ".17g")


def _header_line(ens):
    # floats are spliced in by hand to guarantee 17 significant digits
    parts = [
        f'"format":"{FORMAT_TAG}"',
        f'"dt":{format_decimal(ens.dt)}',
        f'"k":{ens.k}',
        f'"n":{ens.n}',
        '"omega_values":[' + ",".join(format_decimal(v) for v in ens.omega_values) + "]",
        f'"model_fingerprint":{json.dumps(ens.model_fingerprint)}',
        f'"master_seed":{int(ens.master_seed)}',
    ]
    if ens.model is not None:
        parts.append('"model":' + json.dumps(ens.model, sort_keys=True, separators=(",", ":")))
    parts.append(f'"created_at":{json.dumps(ens.created_at)}')
    return "{" + ",".join(parts) + "}"


def save_ensemble(ens, path):
    """Write ``ens`` as a ``traj-ens/1`` file (JSON header + one CSV row per trajectory)."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(_header_line(ens) + "\n")
        for row in ens.indices:
            fh.write(",".join(map(str, row.tolist())) + "\n")


def load_ensemble(path):
    """Read and validate a ``traj-ens/1`` file; raises :class:`FormatError`."""
    with open(path, encoding="ascii", newline="") as fh:
        text = fh.read()
    if not text:
        raise FormatError(f"{path}: empty file")
    lines = text.split("\n")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: header is not valid JSON ({exc})") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_TAG:
        raise FormatError(f"{path}: bad magic/version, expected format {FORMAT_TAG!r}")
    missing = [key for key in HEADER_KEYS if key not in header]
    if missing:
        raise FormatError(f"{path}: header missing keys {missing}")
    k, n = header["k"], header["n"]
    if not (isinstance(k, int) and isinstance(n, int) and k >= 1 and n >= 1):
        raise FormatError(f"{path}: k and n must be positive integers")
    omega = np.array(header["omega_values"], dtype=float)
    m = len(omega)
    body = lines[1:]
    if body and body[-1] == "":
        body = body[:-1]
    else:
        raise FormatError(f"{path}: row {len(body)} is not newline-terminated (truncated file?)")
    if len(body) != n:
        raise FormatError(f"{path}: header declares n={n} rows, found {len(body)} "
                          f"(row {min(len(body), n) + 1} missing or extra)")
    idx = np.empty((n, k), dtype=np.int64)
    for r, line in enumerate(body, start=1):
        cells = line.split(",")
        if len(cells) != k:
            raise FormatError(f"{path}: row {r} has {len(cells)} entries, expected {k}")
        try:
            vals = [int(c) for c in cells]
        except ValueError:
            raise FormatError(f"{path}: row {r} has a non-integer entry") from None
        if min(vals) < 0 or max(vals) >= m:
            raise FormatError(f"{path}: row {r} has an index outside [0, {m})")
        idx[r - 1] = vals
    return TrajectoryEnsemble(
        indices=idx,
        dt=float(header["dt"]),
        omega_values=omega,
        model_fingerprint=str(header["model_fingerprint"]),
        master_seed=int(header["master_seed"]),
        created_at=str(header["created_at"]),
        model=header.get("model"),
    )
