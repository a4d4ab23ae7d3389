"""Spherical Fibonacci point sets and their constant-time nearest-point inverse.

Point ``i`` of ``n`` sits at height ``z = 1 - (2i + 1) / n`` and azimuth
``2 pi frac(i (phi - 1))``. In the (azimuth, z) plane these points form a
lattice; near a given height it is spanned by the index steps ``F_k`` and
``F_{k+1}`` (consecutive Fibonacci numbers), with ``k`` chosen from the local
point spacing. Inverting that 2x2 basis yields the lattice cell around a
query, and the nearest sphere point is among the cell corners. The few points
closest to each pole, where the cylinder map is most distorted, are always
checked as well.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

PHI = (1.0 + math.sqrt(5.0)) / 2.0

_FIB = np.zeros(90, dtype=np.int64)
_FIB[1] = 1
for _k in range(2, 90):
    _FIB[_k] = _FIB[_k - 1] + _FIB[_k - 2]


def fibonacci_sphere(n: int) -> np.ndarray:
    """(n, 3) unit vectors on the golden-angle spiral."""
    if n < 1:
        raise ValueError("need at least one point")
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / n
    az = 2.0 * np.pi * np.mod(i * (PHI - 1.0), 1.0)
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([np.cos(az) * r, np.sin(az) * r, z], axis=1)


@nb.njit(cache=True)
def nearest_fibonacci_index(x, y, z, n, pts, fib):
    """Index of the point of ``pts`` (a Fibonacci set of size n) closest to a unit vector."""
    two_pi = 2.0 * np.pi
    phi_m1 = PHI - 1.0
    az = math.atan2(y, x)
    zc = min(max(z, -1.0), 1.0)
    arg = n * np.pi * math.sqrt(5.0) * (1.0 - zc * zc)
    k = 2
    if arg > 1.0:
        k = max(2, int(math.floor(math.log(arg) / math.log(PHI * PHI))))
    k = min(k, fib.shape[0] - 2)
    f0 = fib[k]
    f1 = fib[k + 1]
    # wrapped azimuth step of each basis index
    t0 = f0 * phi_m1
    t1 = f1 * phi_m1
    b00 = two_pi * (t0 - np.floor(t0 + 0.5))
    b01 = two_pi * (t1 - np.floor(t1 + 0.5))
    b10 = -2.0 * f0 / n
    b11 = -2.0 * f1 / n
    det = b00 * b11 - b01 * b10
    rz = zc - (1.0 - 1.0 / n)
    ca = (b11 * az - b01 * rz) / det
    cb = (-b10 * az + b00 * rz) / det
    a0 = int(np.floor(ca))
    c0 = int(np.floor(cb))

    best = -3.0
    best_i = -1
    for da in range(2):
        for db in range(2):
            i = (a0 + da) * f0 + (c0 + db) * f1
            if 0 <= i < n:
                d = x * pts[i, 0] + y * pts[i, 1] + z * pts[i, 2]
                if d > best or (d == best and i < best_i):
                    best = d
                    best_i = i
    m = min(n, 3)
    for j in range(2 * m):
        i = j if j < m else n - 1 - (j - m)
        d = x * pts[i, 0] + y * pts[i, 1] + z * pts[i, 2]
        if d > best or (d == best and i < best_i):
            best = d
            best_i = i
    return best_i


@nb.njit(cache=True)
def _nearest_many(dirs, n, pts, fib, out):
    for r in range(dirs.shape[0]):
        out[r] = nearest_fibonacci_index(dirs[r, 0], dirs[r, 1], dirs[r, 2], n, pts, fib)


def nearest_indices(directions, points: np.ndarray) -> np.ndarray:
    """Vectorised inverse mapping for unit row vectors."""
    d = np.ascontiguousarray(np.atleast_2d(directions), dtype=np.float64)
    out = np.empty(len(d), dtype=np.int64)
    _nearest_many(d, len(points), np.ascontiguousarray(points), _FIB, out)
    return out


def fib_table() -> np.ndarray:
    return _FIB
