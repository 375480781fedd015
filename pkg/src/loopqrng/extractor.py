"""Seeded Toeplitz hashing of weakly random bits.

The m x n matrix is ``T[i, j] = s[i - j + n - 1]`` for a seed string ``s``
of ``n + m - 1`` bits, and the output length follows the leftover hash
lemma, ``m = floor(n * h - 2 * log2(1 / epsilon))``.

Seed bits expanded from an integer come from
``PCG64(SeedSequence(seed, spawn_key=(1,)))`` (``integers(0, 2)``), a
domain kept apart from the simulator's chunk streams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from ._accel import USE_NUMBA
from .errors import DataError, DomainError

EXTRACTOR_STREAM_KEY = 1


@dataclass(frozen=True)
class ExtractorConfig:
    h_rate: float
    block_n: int = 4096
    epsilon: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.h_rate <= 1:
            raise DomainError(f"h_rate must lie in (0, 1], got {self.h_rate}")
        if not 0 < self.epsilon < 1:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if int(self.block_n) != self.block_n or self.block_n < 1:
            raise DomainError("block_n must be a positive integer")

    @property
    def m(self) -> int:
        return output_length(self.block_n, self.h_rate, self.epsilon)


def output_length(n: int, h_rate: float, epsilon: float) -> int:
    return math.floor(n * h_rate - 2.0 * math.log2(1.0 / epsilon))


def expand_seed(seed: int, n_bits: int) -> np.ndarray:
    ss = np.random.SeedSequence(int(seed), spawn_key=(EXTRACTOR_STREAM_KEY,))
    rng = np.random.Generator(np.random.PCG64(ss))
    return rng.integers(0, 2, size=n_bits, dtype=np.uint8)


def toeplitz_matrix(seed_bits: np.ndarray, n: int, m: int) -> np.ndarray:
    s = np.asarray(seed_bits, dtype=np.uint8)
    if s.size != n + m - 1:
        raise DomainError(f"need {n + m - 1} seed bits, got {s.size}")
    # row i is s[i + n - 1], s[i + n - 2], ..., s[i]
    windows = np.lib.stride_tricks.sliding_window_view(s, n)
    return np.ascontiguousarray(windows[:m, ::-1])


@dataclass(frozen=True)
class Toeplitz:
    n: int
    m: int
    seed_bits: np.ndarray

    @cached_property
    def matrix(self) -> np.ndarray:
        return toeplitz_matrix(self.seed_bits, self.n, self.m)

    @cached_property
    def packed_rows(self) -> np.ndarray:
        return kernels.pack_words(self.matrix)

    def apply(self, blocks: np.ndarray) -> np.ndarray:
        """Hash a (k, n) array of input blocks to (k, m)."""
        blocks = np.atleast_2d(np.asarray(blocks, dtype=np.uint8))
        if blocks.shape[1] != self.n:
            raise DataError(f"blocks must have {self.n} bits, got {blocks.shape[1]}")
        if blocks.shape[0] == 0:
            return np.zeros((0, self.m), dtype=np.uint8)
        if USE_NUMBA:
            return kernels.gf2_matmul_packed_numba(self.packed_rows, kernels.pack_words(blocks))
        return kernels.gf2_matmul_numpy(self.matrix, blocks)


def build_toeplitz(config: ExtractorConfig, seed_bits=None) -> Toeplitz:
    """Fix the hash for ``config``; raw ``seed_bits`` override the integer seed."""
    m = config.m
    if m < 1:
        raise DomainError(
            f"entropy too low: block of {config.block_n} bits at h={config.h_rate} "
            f"yields m={m} for epsilon={config.epsilon}"
        )
    n = int(config.block_n)
    if seed_bits is None:
        seed_bits = expand_seed(config.seed, n + m - 1)
    seed_bits = np.asarray(seed_bits, dtype=np.uint8)
    if seed_bits.size != n + m - 1 or (seed_bits.size and seed_bits.max() > 1):
        raise DomainError(f"need {n + m - 1} seed bits in {{0, 1}}")
    return Toeplitz(n, m, seed_bits)


def extract_block(instance: Toeplitz, block) -> np.ndarray:
    block = np.asarray(block, dtype=np.uint8)
    if block.ndim != 1 or block.size != instance.n:
        raise DataError(f"block must hold exactly {instance.n} bits, got {block.size}")
    return instance.apply(block[None, :])[0]


def extract(instance: Toeplitz, bits, batch: int = 256) -> np.ndarray:
    """Hash consecutive full blocks; a trailing partial block is dropped."""
    s = np.asarray(getattr(bits, "bits", bits), dtype=np.uint8)
    k = s.size // instance.n
    blocks = s[: k * instance.n].reshape(k, instance.n)
    out = [instance.apply(blocks[i : i + batch]) for i in range(0, k, batch)]
    if not out:
        return np.zeros(0, dtype=np.uint8)
    return np.concatenate(out, axis=0).ravel()
