"""Hot inner loops, each in a numba flavour and a numpy/Python flavour.

The public names at the bottom of the module dispatch on
:data:`loopqrng._accel.USE_NUMBA`. Integer kernels are bit-identical across
backends; the float kernel (:func:`maurer_expectation`) agrees to rounding.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit


# --- event ordering ---------------------------------------------------------


def sort_events_numpy(pulse, loop, n_pulses):
    order = np.argsort(pulse, kind="stable")
    return pulse[order], loop[order]


@njit(cache=True)
def sort_events_numba(pulse, loop, n_pulses):
    # stable counting sort on pulse index; input is concatenated in loop order
    counts = np.zeros(n_pulses + 1, dtype=np.int64)
    for i in range(pulse.size):
        counts[pulse[i] + 1] += 1
    for k in range(n_pulses):
        counts[k + 1] += counts[k]
    out_p = np.empty_like(pulse)
    out_l = np.empty_like(loop)
    for i in range(pulse.size):
        j = counts[pulse[i]]
        out_p[j] = pulse[i]
        out_l[j] = loop[i]
        counts[pulse[i]] += 1
    return out_p, out_l


# --- single-click detection -------------------------------------------------


def single_click_mask_numpy(pulse):
    n = pulse.size
    mask = np.ones(n, dtype=np.bool_)
    if n < 2:
        return mask
    same = pulse[1:] == pulse[:-1]
    mask[1:] &= ~same
    mask[:-1] &= ~same
    return mask


@njit(cache=True)
def single_click_mask_numba(pulse):
    n = pulse.size
    mask = np.ones(n, dtype=np.bool_)
    for i in range(1, n):
        if pulse[i] == pulse[i - 1]:
            mask[i] = False
            mask[i - 1] = False
    return mask


# --- dead time --------------------------------------------------------------


def dead_time_keep_numpy(times, dead_time):
    # sequential by nature; plain Python over a list is the fallback
    keep = np.zeros(times.size, dtype=np.bool_)
    last = -math.inf
    for i, t in enumerate(times.tolist()):
        if t - last >= dead_time:
            keep[i] = True
            last = t
    return keep


@njit(cache=True)
def dead_time_keep_numba(times, dead_time):
    keep = np.zeros(times.size, dtype=np.bool_)
    last = -np.inf
    for i in range(times.size):
        if times[i] - last >= dead_time:
            keep[i] = True
            last = times[i]
    return keep


# --- collision estimator ----------------------------------------------------


def collision_times_numpy(bits):
    eq = (bits[1:] == bits[:-1]).tolist()
    n = bits.size
    out = []
    i = 0
    while True:
        if i + 1 < n and eq[i]:
            out.append(2)
            i += 2
        elif i + 2 < n:
            out.append(3)
            i += 3
        else:
            break
    return np.asarray(out, dtype=np.int64)


@njit(cache=True)
def collision_times_numba(bits):
    n = bits.size
    out = np.empty(n // 2 + 1, dtype=np.int64)
    v = 0
    i = 0
    while True:
        if i + 1 < n and bits[i] == bits[i + 1]:
            out[v] = 2
            i += 2
        elif i + 2 < n:
            out[v] = 3
            i += 3
        else:
            break
        v += 1
    return out[:v]


# --- compression (Maurer) estimator -----------------------------------------


def maurer_distances_numpy(blocks, d):
    """Distance back to the previous occurrence of each test block (1-based
    positions), or the position itself when the value is new."""
    n = blocks.size
    if n == 0:
        return np.empty(0, dtype=np.int64)
    pos = np.arange(1, n + 1, dtype=np.int64)
    order = np.argsort(blocks, kind="stable")
    sb = blocks[order]
    sp = pos[order]
    prev = np.zeros(n, dtype=np.int64)
    same = np.empty(n, dtype=np.bool_)
    same[0] = False
    same[1:] = sb[1:] == sb[:-1]
    prev_sorted = np.where(same, np.concatenate(([0], sp[:-1])), 0)
    prev[order] = prev_sorted
    dist = np.where(prev > 0, pos - prev, pos)
    return dist[d:]


@njit(cache=True)
def maurer_distances_numba(blocks, d):
    n = blocks.size
    if n == 0:
        return np.empty(0, dtype=np.int64)
    last = np.zeros(int(blocks.max()) + 1, dtype=np.int64)
    out = np.empty(max(n - d, 0), dtype=np.int64)
    for i in range(n):
        p = i + 1
        if i >= d:
            prev = last[blocks[i]]
            out[i - d] = p - prev if prev > 0 else p
        last[blocks[i]] = p
    return out


def maurer_log_table(n_blocks):
    """log2(u) for u = 1..n_blocks, shared by every expectation evaluation."""
    return np.log2(np.arange(1, n_blocks + 1, dtype=np.float64))


def maurer_expectation_numpy(z, logs, d):
    """Sum over test positions t and gaps u of log2(u) * F(z, t, u).

    ``logs`` is :func:`maurer_log_table` of the block count. Rearranged so
    each gap u is visited once: the u < t terms of every t share the weight
    ``n_blocks - max(d, u)``.
    """
    n_blocks = logs.size
    if n_blocks <= d:
        return 0.0
    u = np.arange(1, n_blocks + 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        pw = np.exp((u - 1.0) * np.log1p(-z)) if z < 1.0 else (u == 1.0).astype(np.float64)
    weight = n_blocks - np.maximum(float(d), u)
    terms = logs * pw
    inner = np.sum(terms[:-1] * weight[:-1])
    diag = np.sum(terms[d:])
    return float(z * z * inner + z * diag)


@njit(cache=True)
def maurer_expectation_numba(z, logs, d):
    n_blocks = logs.size
    if n_blocks <= d:
        return 0.0
    step = 1.0 - z
    inner = 0.0
    diag = 0.0
    pw = 1.0  # (1 - z) ** (u - 1)
    for i in range(n_blocks):
        u = i + 1
        term = logs[i] * pw
        if u < n_blocks:
            inner += term * (n_blocks - max(d, u))
        if u > d:
            diag += term
        pw *= step
        # stop before subnormals: repeated scaling sticks at the smallest one
        if pw < 1e-300:
            break
    return z * z * inner + z * diag


# --- GF(2) matrix product ---------------------------------------------------


def gf2_matmul_numpy(matrix, blocks):
    """``(blocks @ matrix.T) mod 2`` for 0/1 uint8 arrays."""
    if blocks.shape[0] == 0:
        return np.zeros((0, matrix.shape[0]), dtype=np.uint8)
    # float32 sums are exact below 2**24 terms
    acc = blocks.astype(np.float32) @ matrix.T.astype(np.float32)
    return (acc.astype(np.int64) & 1).astype(np.uint8)


@njit(cache=True)
def gf2_matmul_packed_numba(rows, blocks):
    """Same product on uint64-packed rows (m, w) and blocks (b, w)."""
    nb = blocks.shape[0]
    m = rows.shape[0]
    w = rows.shape[1]
    out = np.zeros((nb, m), dtype=np.uint8)
    for b in range(nb):
        for i in range(m):
            acc = np.uint64(0)
            for k in range(w):
                acc ^= rows[i, k] & blocks[b, k]
            acc ^= acc >> np.uint64(32)
            acc ^= acc >> np.uint64(16)
            acc ^= acc >> np.uint64(8)
            acc ^= acc >> np.uint64(4)
            acc ^= acc >> np.uint64(2)
            acc ^= acc >> np.uint64(1)
            out[b, i] = np.uint8(acc & np.uint64(1))
    return out


def pack_words(bits2d):
    """Pack rows of 0/1 bits into uint64 words, zero-padded to a word edge."""
    bits2d = np.ascontiguousarray(bits2d, dtype=np.uint8)
    rows, n = bits2d.shape
    width = -(-n // 64) * 64
    padded = np.zeros((rows, width), dtype=np.uint8)
    padded[:, :n] = bits2d
    return np.packbits(padded, axis=1).view(np.uint64)


def gf2_matmul_numba(matrix, blocks):
    if blocks.shape[0] == 0:
        return np.zeros((0, matrix.shape[0]), dtype=np.uint8)
    return gf2_matmul_packed_numba(pack_words(matrix), pack_words(blocks))


if USE_NUMBA:
    sort_events = sort_events_numba
    single_click_mask = single_click_mask_numba
    dead_time_keep = dead_time_keep_numba
    collision_times = collision_times_numba
    maurer_distances = maurer_distances_numba
    maurer_expectation = maurer_expectation_numba
    gf2_matmul = gf2_matmul_numba
else:
    sort_events = sort_events_numpy
    single_click_mask = single_click_mask_numpy
    dead_time_keep = dead_time_keep_numpy
    collision_times = collision_times_numpy
    maurer_distances = maurer_distances_numpy
    maurer_expectation = maurer_expectation_numpy
    gf2_matmul = gf2_matmul_numpy
