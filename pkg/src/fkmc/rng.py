"""Counter-based random streams.

Every path owns a 64-bit key derived from ``(seed, stream, point index, path
index)``; draw number ``c`` of that path is a SplitMix64 hash of
``key + (c + 1) * GOLDEN``.  A draw therefore depends only on its coordinates
and never on which other paths are still alive, how the work was chunked, or
how many workers ran it.
"""
from __future__ import annotations

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO53_INV = 1.0 / 9007199254740992.0

DEFAULT_SEED = 1234567


def point_key(seed: int, stream: int, index: int) -> np.uint64:
    """Key of the ensemble attached to one evaluation point."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(index)))
    return ss.generate_state(1, dtype=np.uint64)[0]


@nb.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always")
def _uniform(key, counter):
    z = _mix(key + (counter + np.uint64(1)) * GOLDEN)
    return (np.float64(z >> np.uint64(11)) + 0.5) * _TWO53_INV


@nb.njit(cache=True, nogil=True)
def path_keys(key, first, n):
    """Keys of paths ``first .. first + n - 1`` of the ensemble with key ``key``."""
    out = np.empty(n, dtype=np.uint64)
    for j in range(n):
        out[j] = _mix(key + (np.uint64(first + j) + np.uint64(1)) * GOLDEN)
    return out


@nb.njit(cache=True, nogil=True, fastmath=True)
def fill_uniforms(keys, base, out):
    """``out[i, j]`` = uniform(0, 1) draw number ``base + j`` of path ``keys[i]``."""
    n, m = out.shape
    b = np.uint64(base)
    for i in range(n):
        k = keys[i]
        for j in range(m):
            out[i, j] = _uniform(k, b + np.uint64(j))


# Wichura's AS241 (PPND16) coefficients
_A = np.array([3.3871328727963666080e0, 1.3314166789178437745e+2, 1.9715909503065514427e+3,
               1.3731693765509461125e+4, 4.5921953931549871457e+4, 6.7265770927008700853e+4,
               3.3430575583588128105e+4, 2.5090809287301226727e+3])
_B = np.array([1.0, 4.2313330701600911252e+1, 6.8718700749205790830e+2, 5.3941960214247511077e+3,
               2.1213794301586595867e+4, 3.9307895800092710610e+4, 2.8729085735721942674e+4,
               5.2264952788528545610e+3])
_C = np.array([1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
               3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
               2.27238449892691845833e-2, 7.74545014278341407640e-4])
_D = np.array([1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
               1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
               1.05075007164441684324e-9])
_E = np.array([6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
               2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
               2.71155556874348757815e-5, 2.01033439929228813265e-7])
_F = np.array([1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
               7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
               2.04426310338993978564e-15])


@nb.njit(inline="always")
def _poly(c, r):
    acc = c[7]
    for i in range(6, -1, -1):
        acc = acc * r + c[i]
    return acc


@nb.njit(cache=True)
def normal_quantile(p):
    """Inverse of the standard normal CDF (AS241, ~1e-16 relative accuracy)."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_A, r) / _poly(_B, r)
    r = p if q < 0.0 else 1.0 - p
    r = np.sqrt(-np.log(r))
    if r <= 5.0:
        r -= 1.6
        x = _poly(_C, r) / _poly(_D, r)
    else:
        r -= 5.0
        x = _poly(_E, r) / _poly(_F, r)
    return -x if q < 0.0 else x


@nb.njit(cache=True, nogil=True)
def fill_normals(keys, base, out):
    """Standard normals by inversion; column ``j`` uses draw ``base + j``."""
    n, m = out.shape
    b = np.uint64(base)
    for i in range(n):
        k = keys[i]
        for j in range(m):
            out[i, j] = normal_quantile(_uniform(k, b + np.uint64(j)))


def normal_slots(m: int) -> int:
    """Number of counter slots consumed by ``m`` normals."""
    return m
