"""Philox4x32-10 counter-based generator and a Box-Muller normal transform.

Every output is a pure function of (key, counter), so any (path, step,
component) normal can be regenerated without touching a sequential state.
"""

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)
_TWO_NEG32 = 2.0**-32


@njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on one 128-bit counter; all arguments are uint64 < 2**32."""
    for r in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _SHIFT
        lo0 = p0 & _MASK
        hi1 = p1 >> _SHIFT
        lo1 = p1 & _MASK
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        if r < 9:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


@njit(cache=True, nogil=True)
def _box_muller(a, b):
    u1 = (np.float64(a) + 0.5) * _TWO_NEG32
    u2 = (np.float64(b) + 0.5) * _TWO_NEG32
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    return rad * np.cos(ang), rad * np.sin(ang)


def standard_normals(seed, path_start, n_paths, step_start, n_steps, dim):
    """(n_paths, n_steps, dim) standard normals; see _normals for the counter layout."""
    if not 0 <= int(seed) < 2**64 or int(path_start) < 0:
        raise ValueError("seed must be an unsigned 64-bit integer and path_start non-negative")
    return _normals(np.uint64(seed), np.uint64(path_start), np.int64(n_paths),
                    np.int64(step_start), np.int64(n_steps), np.int64(dim))


@njit(cache=True, nogil=True)
def _normals(seed, path_start, n_paths, step_start, n_steps, dim):
    """Standard normals indexed by (path, step, component).

    Counter words are (step // 4, component, path low, path high) and the key
    is the 64-bit seed split in two; one counter yields the normals of four
    consecutive steps of one component.
    """
    out = np.empty((n_paths, n_steps, dim))
    k0 = seed & _MASK
    k1 = seed >> _SHIFT
    step_end = step_start + n_steps
    blk_lo = step_start // 4
    blk_hi = (step_end + 3) // 4
    z = np.empty(4)
    for ip in range(n_paths):
        path = path_start + np.uint64(ip)
        c2 = path & _MASK
        c3 = path >> _SHIFT
        for blk in range(blk_lo, blk_hi):
            for comp in range(dim):
                r0, r1, r2, r3 = philox4x32(np.uint64(blk), np.uint64(comp), c2, c3, k0, k1)
                z[0], z[1] = _box_muller(r0, r1)
                z[2], z[3] = _box_muller(r2, r3)
                for j in range(4):
                    k = 4 * blk + j
                    if step_start <= k < step_end:
                        out[ip, k - step_start, comp] = z[j]
    return out
