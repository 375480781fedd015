"""Both kernel flavours must agree with each other and with naive transcriptions."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from loopqrng import kernels as K

bit_arrays = arrays(np.uint8, st.integers(0, 300), elements=st.integers(0, 1))


def naive_collision_times(bits):
    out, i, n = [], 0, len(bits)
    while i < n:
        seen = set()
        for j in range(i, n):
            if bits[j] in seen:
                out.append(j - i + 1)
                i = j + 1
                break
            seen.add(bits[j])
        else:
            break
    return out


def naive_maurer_distances(blocks, d):
    table = {}
    for i in range(d):
        table[blocks[i]] = i + 1
    out = []
    for i in range(d, len(blocks)):
        p = i + 1
        out.append(p - table[blocks[i]] if blocks[i] in table else p)
        table[blocks[i]] = p
    return out


def naive_maurer_expectation(z, n_blocks, d):
    total = 0.0
    for t in range(d + 1, n_blocks + 1):
        for u in range(1, t + 1):
            f = z * z * (1 - z) ** (u - 1) if u < t else z * (1 - z) ** (t - 1)
            total += math.log2(u) * f
    return total


class TestSortEvents:
    @given(st.lists(st.integers(0, 49), max_size=200), st.integers(1, 5))
    def test_backends_agree_and_sort(self, pulses, groups):
        pulse = np.array(pulses, dtype=np.int64)
        loop = (np.arange(pulse.size) * groups // max(pulse.size, 1)).astype(np.int8)
        a = K.sort_events_numpy(pulse, loop, 50)
        b = K.sort_events_numba(pulse, loop, 50)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        assert np.all(np.diff(a[0]) >= 0)


class TestSingleClickMask:
    @given(st.lists(st.integers(0, 20), max_size=100))
    def test_backends_agree(self, pulses):
        p = np.sort(np.array(pulses, dtype=np.int64))
        expected = np.array([pulses.count(x) == 1 for x in p.tolist()], dtype=bool)
        assert np.array_equal(K.single_click_mask_numpy(p), expected)
        assert np.array_equal(K.single_click_mask_numba(p), expected)


class TestDeadTime:
    @given(st.lists(st.floats(0, 1000), max_size=100), st.floats(0.1, 50))
    def test_backends_agree(self, times, dead):
        t = np.sort(np.array(times, dtype=np.float64))
        assert np.array_equal(K.dead_time_keep_numpy(t, dead), K.dead_time_keep_numba(t, dead))

    def test_example(self):
        t = np.array([0.0, 20.0, 40.0, 50.0])
        assert K.dead_time_keep_numba(t, 25.0).tolist() == [True, False, True, False]


class TestCollisionTimes:
    @given(bit_arrays)
    def test_against_naive(self, bits):
        ref = naive_collision_times(bits.tolist())
        assert K.collision_times_numpy(bits).tolist() == ref
        assert K.collision_times_numba(bits).tolist() == ref


class TestMaurer:
    @given(arrays(np.int64, st.integers(0, 120), elements=st.integers(0, 7)), st.integers(0, 30))
    def test_distances(self, blocks, d):
        d = min(d, blocks.size)
        ref = naive_maurer_distances(blocks.tolist(), d)
        assert K.maurer_distances_numpy(blocks, d).tolist() == ref
        assert K.maurer_distances_numba(blocks, d).tolist() == ref

    @pytest.mark.parametrize("z", [1 / 64, 0.01, 0.2, 0.5, 0.9, 1.0])
    @pytest.mark.parametrize("n_blocks,d", [(40, 10), (75, 30), (12, 0)])
    def test_expectation_against_double_sum(self, z, n_blocks, d):
        ref = naive_maurer_expectation(z, n_blocks, d)
        logs = K.maurer_log_table(n_blocks)
        assert K.maurer_expectation_numpy(z, logs, d) == pytest.approx(ref, rel=1e-12, abs=1e-12)
        assert K.maurer_expectation_numba(z, logs, d) == pytest.approx(ref, rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("z", [0.005, 0.05, 0.3, 0.7])
    def test_backends_agree_large(self, z):
        logs = K.maurer_log_table(50_000)
        a = K.maurer_expectation_numpy(z, logs, 1000)
        b = K.maurer_expectation_numba(z, logs, 1000)
        assert a == pytest.approx(b, rel=1e-10)


class TestGF2:
    @settings(max_examples=50)
    @given(st.integers(1, 130), st.integers(1, 40), st.integers(0, 5), st.integers(0, 2**32 - 1))
    def test_backends_agree(self, n, m, k, seed):
        rng = np.random.default_rng(seed)
        mat = rng.integers(0, 2, (m, n), dtype=np.uint8)
        blocks = rng.integers(0, 2, (k, n), dtype=np.uint8)
        ref = (blocks.astype(np.int64) @ mat.T.astype(np.int64)) % 2
        assert np.array_equal(K.gf2_matmul_numpy(mat, blocks), ref)
        assert np.array_equal(K.gf2_matmul_numba(mat, blocks), ref)

    def test_pack_words_pads(self):
        w = K.pack_words(np.ones((2, 65), dtype=np.uint8))
        assert w.shape == (2, 2) and w.dtype == np.uint64
