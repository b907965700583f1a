"""Hot numeric kernels: numba-jitted implementations with pure-numpy fallbacks.

The fallback path is selected by setting the environment variable
``RCMLAB_NO_NUMBA=1`` before import (or automatically when numba is not
installed).  Both paths are deterministic for a fixed configuration and
independent of the worker/thread count; they are numerically equivalent but
not guaranteed bit-identical to each other.

Grid layout convention used by all kernels here: scalar fields on a box
``B(c, n)`` are flat C-order arrays over the full ``(2n+1)^d`` grid, so the
flat position equals the lexicographic vertex index.  ``w[k][j]`` holds the
conductance of the bond from cell ``j`` to cell ``j + strides[k]`` (axis
``k``), zero when that bond is not inside the box.  ``mu[j]`` is the total
conductance incident to ``j`` within the box.  Kernels touch interior cells
only (all coordinates at sup-distance < n from the center); ring cells of the
output are set to zero.
"""

from __future__ import annotations

import math
import os

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_C1 = np.uint64(0xD1B54A32D192ED03)
_C2 = np.uint64(0x8CB92BA72F3D8DD7)
_C3 = np.uint64(0xABCD1234EF56789B)
_U64_MASK = (1 << 64) - 1
_INV_2_53 = 2.0**-53

HAVE_NUMBA = False
if os.environ.get("RCMLAB_NO_NUMBA", "0") not in ("1", "true", "yes"):
    try:
        # the bundled TBB is too old on some images; omp avoids the warning
        os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")
        import numba
        from numba import njit, prange

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - exercised via env flag instead
        HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA


def set_num_threads(k: int) -> None:
    """Set worker count for the jitted kernels (no effect on results)."""
    if USE_NUMBA:
        import numba

        numba.set_num_threads(max(1, int(k)))


# ---------------------------------------------------------------------------
# counter-based hashing (splitmix64 finalizer); numpy-vectorized


def mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64).copy()
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def mix64_scalar(z: int) -> int:
    z &= _U64_MASK
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _U64_MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _U64_MASK
    return (z ^ (z >> 31)) & _U64_MASK


def to_unit(bits: np.ndarray) -> np.ndarray:
    """Map 64-bit words to floats in the open interval (0, 1)."""
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


def hash_bond_uniforms(seed: int, lowers: np.ndarray, axes: np.ndarray, stream: int) -> np.ndarray:
    """One uniform in (0,1) per bond, keyed by (seed, lower coords, axis, stream).

    Independent of array order and of how the bond list was assembled.
    """
    h = np.full(len(axes), mix64_scalar((seed & _U64_MASK) + 0x9E3779B97F4A7C15), dtype=np.uint64)
    low = np.asarray(lowers, dtype=np.int64)
    for k in range(low.shape[1]):
        salt = np.uint64(((k + 1) * int(_C3)) & _U64_MASK)
        h = mix64(h ^ (low[:, k].astype(np.uint64) * _C1 + salt))
    h = mix64(h ^ (np.asarray(axes, dtype=np.uint64) * _C2))
    h = mix64(h ^ np.uint64(((stream & _U64_MASK) * int(_C3)) & _U64_MASK))
    return to_unit(h)


def hash_uniforms(seed: int, n: int, stream: int) -> np.ndarray:
    """n uniforms in (0,1) keyed by (seed, sample index, stream)."""
    idx = np.arange(n, dtype=np.uint64)
    h0 = mix64_scalar((seed & _U64_MASK) + 0x9E3779B97F4A7C15)
    salt = np.uint64(((stream & _U64_MASK) * int(_C2)) & _U64_MASK)
    h = mix64(np.uint64(h0) ^ (idx * _C1 + salt))
    return to_unit(mix64(h ^ (idx * _C3)))


def stream_state(seed: int, index: int) -> int:
    """Initial splitmix64 state of the (seed, index) stream."""
    s0 = mix64_scalar((seed & _U64_MASK) + 0x9E3779B97F4A7C15)
    return mix64_scalar(s0 ^ ((index & _U64_MASK) * 0xD1B54A32D192ED03 & _U64_MASK))


class SplitMix:
    """Scalar splitmix64 stream, mirroring the jitted walker's draws."""

    __slots__ = ("state",)

    def __init__(self, seed: int, index: int):
        self.state = stream_state(seed, index)

    def next_bits(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _U64_MASK
        return mix64_scalar(self.state)

    def uniform(self) -> float:
        return ((self.next_bits() >> 11) + 0.5) * _INV_2_53


# ---------------------------------------------------------------------------
# box-operator kernels


def _interior_shape(shape: np.ndarray) -> int:
    total = 1
    for s in shape:
        total *= int(s) - 2
    return total


def _apply_p_np(u, out, w, mu, inv_lam, shape):
    dim = len(shape)
    U = u.reshape(tuple(shape))
    acc = -(mu.reshape(tuple(shape)) * U)
    for k in range(dim):
        Wk = w[k].reshape(tuple(shape))
        lo = tuple(slice(0, -1) if i == k else slice(None) for i in range(dim))
        hi = tuple(slice(1, None) if i == k else slice(None) for i in range(dim))
        acc[lo] += Wk[lo] * U[hi]
        acc[hi] += Wk[lo] * U[lo]
    res = U + inv_lam * acc
    inner = tuple(slice(1, -1) for _ in range(dim))
    O = out.reshape(tuple(shape))
    O[...] = 0.0
    O[inner] = res[inner]
    return out


def _apply_l_np(u, out, w, mu, shape):
    dim = len(shape)
    U = u.reshape(tuple(shape))
    acc = -(mu.reshape(tuple(shape)) * U)
    for k in range(dim):
        Wk = w[k].reshape(tuple(shape))
        lo = tuple(slice(0, -1) if i == k else slice(None) for i in range(dim))
        hi = tuple(slice(1, None) if i == k else slice(None) for i in range(dim))
        acc[lo] += Wk[lo] * U[hi]
        acc[hi] += Wk[lo] * U[lo]
    inner = tuple(slice(1, -1) for _ in range(dim))
    O = out.reshape(tuple(shape))
    O[...] = 0.0
    O[inner] = acc[inner]
    return out


if USE_NUMBA:
    # row-structured sweeps: leading coordinates are decoded once per row and
    # the innermost axis runs contiguously

    @njit(cache=True, parallel=True)
    def _apply_p_nb(u, out, w, mu, inv_lam, strides, shape, row_base):
        dim = shape.shape[0]
        rowlen = shape[dim - 1]
        for r in prange(row_base.shape[0]):
            base = row_base[r]
            for i in range(rowlen - 2):
                j = base + i
                acc = -mu[j] * u[j] + w[dim - 1, j - 1] * u[j - 1] + w[dim - 1, j] * u[j + 1]
                for k in range(dim - 1):
                    s = strides[k]
                    acc += w[k, j - s] * u[j - s] + w[k, j] * u[j + s]
                out[j] = u[j] + inv_lam * acc

    @njit(cache=True, parallel=True)
    def _apply_p_acc_nb(u, out, y, wk, w, mu, inv_lam, strides, shape, row_base):
        dim = shape.shape[0]
        rowlen = shape[dim - 1]
        for r in prange(row_base.shape[0]):
            base = row_base[r]
            for i in range(rowlen - 2):
                j = base + i
                acc = -mu[j] * u[j] + w[dim - 1, j - 1] * u[j - 1] + w[dim - 1, j] * u[j + 1]
                for k in range(dim - 1):
                    s = strides[k]
                    acc += w[k, j - s] * u[j - s] + w[k, j] * u[j + s]
                v = u[j] + inv_lam * acc
                out[j] = v
                y[j] += wk * v

    @njit(cache=True, parallel=True)
    def _apply_l_nb(u, out, w, mu, strides, shape, row_base):
        dim = shape.shape[0]
        rowlen = shape[dim - 1]
        for r in prange(row_base.shape[0]):
            base = row_base[r]
            for i in range(rowlen - 2):
                j = base + i
                acc = -mu[j] * u[j] + w[dim - 1, j - 1] * u[j - 1] + w[dim - 1, j] * u[j + 1]
                for k in range(dim - 1):
                    s = strides[k]
                    acc += w[k, j - s] * u[j - s] + w[k, j] * u[j + s]
                out[j] = acc


def grid_meta(shape: tuple[int, ...]):
    """Full-grid strides plus the flat offsets of the interior rows."""
    dim = len(shape)
    strides = np.ones(dim, dtype=np.int64)
    for k in range(dim - 2, -1, -1):
        strides[k] = strides[k + 1] * shape[k + 1]
    if dim == 1:
        row_base = np.asarray([1], dtype=np.int64)
    else:
        axes = [np.arange(1, shape[k] - 1, dtype=np.int64) for k in range(dim - 1)]
        grids = np.meshgrid(*axes, indexing="ij")
        row_base = sum(grids[k].ravel() * strides[k] for k in range(dim - 1)) + 1
        row_base = np.ascontiguousarray(row_base)
    return strides, np.asarray(shape, dtype=np.int64), row_base


def apply_p(u, out, w, mu, inv_lam, meta):
    """out = (I + L/Lambda) u on interior cells, zero on the ring."""
    strides, shape, row_base = meta
    if USE_NUMBA:
        out[:] = 0.0
        _apply_p_nb(u, out, w, mu, inv_lam, strides, shape, row_base)
        return out
    return _apply_p_np(u, out, w, mu, inv_lam, shape)


def apply_p_acc(u, out, y, wk, w, mu, inv_lam, meta):
    """Fused out = P u and y += wk * out (single pass over the grid)."""
    strides, shape, row_base = meta
    if USE_NUMBA:
        out[:] = 0.0
        _apply_p_acc_nb(u, out, y, wk, w, mu, inv_lam, strides, shape, row_base)
        return out
    _apply_p_np(u, out, w, mu, inv_lam, shape)
    if wk != 0.0:
        y += wk * out
    return out


def apply_l(u, out, w, mu, meta):
    """out = L u on interior cells, zero on the ring."""
    strides, shape, row_base = meta
    if USE_NUMBA:
        out[:] = 0.0
        _apply_l_nb(u, out, w, mu, strides, shape, row_base)
        return out
    return _apply_l_np(u, out, w, mu, shape)


# ---------------------------------------------------------------------------
# variable-speed random walk (Gillespie) kernels
#
# Direction scan order at a vertex: axis 0 backward, axis 0 forward,
# axis 1 backward, ... against a single uniform times the total rate.


def _walk_py(mu, w, strides, start_j, horizon, seed, index):
    rng = SplitMix(seed, index)
    dim = len(strides)
    times = [0.0]
    sites = [start_j]
    j = start_j
    t = 0.0
    truncated = False
    while True:
        rate = mu[j]
        dt = -math.log(rng.uniform()) / rate
        if t + dt > horizon:
            break
        t += dt
        r = rng.uniform() * rate
        acc = 0.0
        nxt = j
        done = False
        for k in range(dim):
            s = int(strides[k])
            acc += w[k, j - s]
            if r < acc:
                nxt = j - s
                done = True
                break
            acc += w[k, j]
            if r < acc:
                nxt = j + s
                done = True
                break
        if not done:
            nxt = j + int(strides[dim - 1])
        j = nxt
        times.append(t)
        sites.append(j)
        if mu[j] == 0.0:
            truncated = True
            break
    return np.asarray(times), np.asarray(sites, dtype=np.int64), truncated, t if truncated else horizon


def _final_py(mu, w, strides, start_j, horizon, seed, idx0, n_paths, out_j, out_trunc, out_jumps):
    for i in range(n_paths):
        times, sites, truncated, _ = _walk_py(mu, w, strides, start_j, horizon, seed, idx0 + i)
        out_j[i] = sites[-1]
        out_trunc[i] = 1 if truncated else 0
        out_jumps[i] = len(sites) - 1


if USE_NUMBA:

    @njit(cache=True)
    def _next_unit(state):
        state = state + np.uint64(0x9E3779B97F4A7C15)
        z = state
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
        return state, (np.float64(z >> np.uint64(11)) + 0.5) * 2.0**-53

    @njit(cache=True)
    def _walk_one(mu, w, strides, start_j, horizon, state):
        dim = strides.shape[0]
        j = start_j
        t = 0.0
        jumps = 0
        truncated = 0
        while True:
            rate = mu[j]
            state, u1 = _next_unit(state)
            dt = -math.log(u1) / rate
            if t + dt > horizon:
                break
            t += dt
            state, u2 = _next_unit(state)
            r = u2 * rate
            acc = 0.0
            nxt = j
            done = False
            for k in range(dim):
                s = strides[k]
                acc += w[k, j - s]
                if r < acc:
                    nxt = j - s
                    done = True
                    break
                acc += w[k, j]
                if r < acc:
                    nxt = j + s
                    done = True
                    break
            if not done:
                nxt = j + strides[dim - 1]
            j = nxt
            jumps += 1
            if mu[j] == 0.0:
                truncated = 1
                break
        return j, truncated, jumps

    @njit(cache=True, parallel=True)
    def _final_nb(mu, w, strides, start_j, horizon, states, out_j, out_trunc, out_jumps):
        for i in prange(states.shape[0]):
            j, truncated, jumps = _walk_one(mu, w, strides, start_j, horizon, states[i])
            out_j[i] = j
            out_trunc[i] = truncated
            out_jumps[i] = jumps


def walk_final_positions(mu, w, strides, start_j, horizon, seed, idx0, n_paths):
    """Endpoint, truncation flag, and jump count of n_paths independent walks."""
    out_j = np.empty(n_paths, dtype=np.int64)
    out_trunc = np.zeros(n_paths, dtype=np.uint8)
    out_jumps = np.zeros(n_paths, dtype=np.int64)
    if USE_NUMBA:
        states = np.empty(n_paths, dtype=np.uint64)
        for i in range(n_paths):
            states[i] = stream_state(seed, idx0 + i)
        _final_nb(mu, w, np.asarray(strides, dtype=np.int64), start_j, horizon,
                  states, out_j, out_trunc, out_jumps)
    else:
        _final_py(mu, w, np.asarray(strides, dtype=np.int64), start_j, horizon,
                  seed, idx0, n_paths, out_j, out_trunc, out_jumps)
    return out_j, out_trunc, out_jumps


def walk_trajectory(mu, w, strides, start_j, horizon, seed, index):
    """Full jump chain of one walk: (jump times, flat sites, truncated)."""
    strides = np.asarray(strides, dtype=np.int64)
    if not USE_NUMBA:
        times, sites, truncated, _ = _walk_py(mu, w, strides, start_j, horizon, seed, index)
        return times, sites, truncated
    state = np.uint64(stream_state(seed, index))
    times = [0.0]
    sites = [start_j]
    # mirror _walk_one jump by jump so trajectories match the batch kernel
    dim = len(strides)
    j = start_j
    t = 0.0
    truncated = False
    while True:
        rate = mu[j]
        state, u1 = _next_unit(state)
        state = np.uint64(state)
        dt = -math.log(u1) / rate
        if t + dt > horizon:
            break
        t += dt
        state, u2 = _next_unit(state)
        state = np.uint64(state)
        r = u2 * rate
        acc = 0.0
        nxt = j
        done = False
        for k in range(dim):
            s = int(strides[k])
            acc += w[k, j - s]
            if r < acc:
                nxt = j - s
                done = True
                break
            acc += w[k, j]
            if r < acc:
                nxt = j + s
                done = True
                break
        if not done:
            nxt = j + int(strides[dim - 1])
        j = nxt
        times.append(t)
        sites.append(j)
        if mu[j] == 0.0:
            truncated = True
            break
    return np.asarray(times), np.asarray(sites, dtype=np.int64), truncated
