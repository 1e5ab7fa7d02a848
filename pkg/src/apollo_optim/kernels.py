"""Hot inner loops, each with a loop form (numba-compiled when enabled) and a
vectorised numpy form.

The public entry points dispatch on :data:`apollo_optim._accel.HAVE_NUMBA`.
Both forms are importable directly so tests and benchmarks can compare them.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import HAVE_NUMBA, njit

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0

_U_GAMMA = np.uint64(GOLDEN_GAMMA)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_U1 = np.uint64(1)


# --------------------------------------------------------------------------
# counter-based SplitMix64 stream -> standard normals (Box-Muller)
# --------------------------------------------------------------------------


@njit
def _mix64(z):
    z = (z ^ (z >> _U30)) * _U_MIX1
    z = (z ^ (z >> _U27)) * _U_MIX2
    return z ^ (z >> _U31)


@njit
def _uniform_at(key, counter):
    # value number `counter` of the SplitMix64 stream started at `key`,
    # mapped to the open interval (0, 1)
    z = _mix64(key + (counter + _U1) * _U_GAMMA)
    return (float(z >> _U11) + 0.5) * _INV_2_53


@njit
def normals_loop(key, offset, n):
    """Standard normals number ``offset .. offset+n-1`` of the stream ``key``.

    ``offset`` must be even: normals come in Box-Muller pairs.
    """
    out = np.empty(n, dtype=np.float64)
    k = np.uint64(key)
    pair0 = np.uint64(offset // 2)
    npairs = (n + 1) // 2
    for p in range(npairs):
        c = np.uint64(2) * (pair0 + np.uint64(p))
        u1 = _uniform_at(k, c)
        u2 = _uniform_at(k, c + _U1)
        rad = math.sqrt(-2.0 * math.log(u1))
        ang = _TWO_PI * u2
        out[2 * p] = rad * math.cos(ang)
        if 2 * p + 1 < n:
            out[2 * p + 1] = rad * math.sin(ang)
    return out


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U30)) * _U_MIX1
    z = (z ^ (z >> _U27)) * _U_MIX2
    return z ^ (z >> _U31)


def normals_numpy(key: int, offset: int, n: int) -> np.ndarray:
    npairs = (n + 1) // 2
    with np.errstate(over="ignore"):
        c = (np.arange(npairs, dtype=np.uint64) + np.uint64(offset // 2)) * np.uint64(2)
        k = np.uint64(key)
        z1 = _mix64_np(k + (c + _U1) * _U_GAMMA)
        z2 = _mix64_np(k + (c + np.uint64(2)) * _U_GAMMA)
    u1 = ((z1 >> _U11).astype(np.float64) + 0.5) * _INV_2_53
    u2 = ((z2 >> _U11).astype(np.float64) + 0.5) * _INV_2_53
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = _TWO_PI * u2
    out = np.empty(2 * npairs, dtype=np.float64)
    out[0::2] = rad * np.cos(ang)
    out[1::2] = rad * np.sin(ang)
    return out[:n]


def standard_normals(key: int, offset: int, n: int) -> np.ndarray:
    if offset % 2:
        raise ValueError("normal stream offset must be even")
    if HAVE_NUMBA:
        return normals_loop(np.uint64(key), offset, n)
    return normals_numpy(key, offset, n)


# --------------------------------------------------------------------------
# fused low-rank moment update + per-channel norms
# --------------------------------------------------------------------------


@njit
def moments_loop(R, M, V, beta1, beta2, bc1, bc2, eps):
    """Update ``M``, ``V`` in place from ``R``; return per-column norms of the
    adapted matrix ``(M/bc1) / (sqrt(V/bc2) + eps)`` and of ``R``."""
    rows, cols = R.shape
    adapted = np.zeros(cols, dtype=np.float64)
    raw = np.zeros(cols, dtype=np.float64)
    for i in range(rows):
        for j in range(cols):
            g = R[i, j]
            m = beta1 * M[i, j] + (1.0 - beta1) * g
            v = beta2 * V[i, j] + (1.0 - beta2) * g * g
            M[i, j] = m
            V[i, j] = v
            a = (m / bc1) / (math.sqrt(v / bc2) + eps)
            adapted[j] += a * a
            raw[j] += g * g
    for j in range(cols):
        adapted[j] = math.sqrt(adapted[j])
        raw[j] = math.sqrt(raw[j])
    return adapted, raw


def moments_numpy(R, M, V, beta1, beta2, bc1, bc2, eps):
    M *= beta1
    M += (1.0 - beta1) * R
    V *= beta2
    V += (1.0 - beta2) * R * R
    adapted = (M / bc1) / (np.sqrt(V / bc2) + eps)
    return np.sqrt(np.sum(adapted * adapted, axis=0)), np.sqrt(np.sum(R * R, axis=0))


def update_moments(R, M, V, beta1, beta2, bc1, bc2, eps):
    if HAVE_NUMBA:
        return moments_loop(R, M, V, float(beta1), float(beta2), float(bc1), float(bc2), float(eps))
    return moments_numpy(R, M, V, beta1, beta2, bc1, bc2, eps)
