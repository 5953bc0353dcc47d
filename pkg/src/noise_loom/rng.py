"""Per-trajectory random streams.

Stream ``j`` of a run is a Philox (counter-based) generator whose 128-bit key
is derived from ``(master_seed, j)`` with SplitMix64 mixing, so trajectory
``j`` draws the same numbers whichever worker samples it and in whatever order.
"""
import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def stream_key(master_seed, index):
    if not 0 <= master_seed <= MASK64:
        raise ValueError(f"master_seed must fit in 64 unsigned bits, got {master_seed}")
    if index < 0:
        raise ValueError("stream index must be non-negative")
    base = splitmix64(master_seed & MASK64)
    k0 = splitmix64(base ^ (index & MASK64))
    k1 = splitmix64(k0 ^ 0xD1B54A32D192ED03)
    return k0, k1


def trajectory_stream(master_seed, index):
    """Independent generator for trajectory ``index`` of run ``master_seed``."""
    key = np.array(stream_key(int(master_seed), int(index)), dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
