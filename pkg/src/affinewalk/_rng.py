"""Counter-based random streams.

Every random draw is a pure function of ``(seed, stream, sample, step)``, so
results never depend on how samples are chunked or scheduled across threads.
The mixer is SplitMix64's finalizer applied to a keyed counter.
"""

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STEP = np.uint64(0xD6E8FEB86659FD93)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_key(seed, name):
    """64-bit key for a named substream of ``seed``."""
    digest = hashlib.blake2b(f"{int(seed)}:{name}".encode(), digest_size=8).digest()
    return np.uint64(int.from_bytes(digest, "little"))


def uniforms(key, samples, step):
    """Uniform(0, 1) draws for each sample index at a given step.

    ``samples`` is an integer array; ``step`` an integer (or array broadcasting
    against ``samples``).
    """
    samples = np.asarray(samples, dtype=np.uint64)
    step = np.asarray(step, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix(key ^ (samples * _GOLDEN))
        z = _mix(z + (step + np.uint64(1)) * _STEP)
    return (z >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)


def choose(key, samples, step, cumweights):
    """Atom indices drawn from the cumulative weight vector."""
    u = uniforms(key, samples, step)
    idx = np.searchsorted(cumweights, u, side="right")
    return np.minimum(idx, len(cumweights) - 1)


def normals(key, samples, step):
    """Standard normal draws (Box-Muller on two decorrelated counters)."""
    samples = np.asarray(samples, dtype=np.uint64)
    u1 = uniforms(key, samples, 2 * np.asarray(step, dtype=np.uint64))
    u2 = uniforms(key, samples, 2 * np.asarray(step, dtype=np.uint64) + np.uint64(1))
    u1 = np.maximum(u1, 1e-300)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def generator(seed, name):
    """A numpy Generator for bulk draws that need no per-sample addressing."""
    return np.random.Generator(np.random.Philox(key=int(stream_key(seed, name))))
