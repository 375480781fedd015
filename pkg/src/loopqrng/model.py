"""Analytic detection statistics of the looped beam-splitter source.

A weak coherent pulse with mean photon number ``mu`` enters a beam splitter
of reflectivity ``r``. Light reaching the detector after ``l`` round trips
has mean photon number ``beta_l``; loop passes are treated as distinct time
bins, so clicks at different ``l`` are independent.

All functions here are pure.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DomainError

Window = Literal["private", "public"]
Mode = Literal["exact", "first_order"]

#: loop indices feeding each output sequence, as (bit 0, bit 1)
WINDOWS: dict[str, tuple[int, int]] = {"private": (1, 2), "public": (3, 4)}

DEFAULT_L_MAX = 8


@dataclass(frozen=True)
class OpticalParams:
    """Physical configuration.

    ``mu`` is the mean photon number per pulse (|alpha|^2), ``eta`` the
    per-round-trip loss fraction and ``l_max`` the last loop index modelled.
    """

    mu: float
    r: float
    eta: float
    l_max: int = DEFAULT_L_MAX

    def __post_init__(self):
        if not np.isfinite(self.mu) or self.mu < 0:
            raise DomainError(f"mu must be finite and >= 0, got {self.mu}")
        if not 0 < self.r < 1:
            raise DomainError(f"r must lie in (0, 1), got {self.r}")
        if not 0 <= self.eta < 1:
            raise DomainError(f"eta must lie in [0, 1), got {self.eta}")
        if int(self.l_max) != self.l_max or not 4 <= self.l_max <= 127:
            raise DomainError(f"l_max must be an integer in [4, 127], got {self.l_max}")

    @property
    def t(self) -> float:
        return 1.0 - self.r

    @property
    def loop_gain(self) -> float:
        """First-order ratio of consecutive loop probabilities, r(1 - eta)."""
        return self.r * (1.0 - self.eta)

    def as_dict(self) -> dict:
        return {"mu": self.mu, "r": self.r, "eta": self.eta, "l_max": int(self.l_max)}


@dataclass(frozen=True)
class LoopDistribution:
    betas: np.ndarray
    p_click: np.ndarray
    p_single: np.ndarray

    @property
    def l_max(self) -> int:
        return self.p_click.size - 1

    @property
    def p_none(self) -> float:
        """Probability that no loop clicks."""
        if np.any(self.p_click >= 1.0):
            return 0.0
        return float(np.exp(np.sum(np.log1p(-self.p_click))))

    @property
    def p_multi(self) -> float:
        return 1.0 - self.p_none - float(np.sum(self.p_single))

    @classmethod
    def from_click_probabilities(cls, p_click) -> "LoopDistribution":
        """Single-click probabilities for arbitrary independent per-loop clicks."""
        p = np.asarray(p_click, dtype=np.float64)
        if p.ndim != 1 or np.any((p < 0) | (p > 1)):
            raise DomainError("click probabilities must be a 1-d array in [0, 1]")
        q = 1.0 - p
        single = np.empty_like(p)
        for l in range(p.size):
            single[l] = p[l] * np.prod(np.delete(q, l))
        with np.errstate(divide="ignore"):
            betas = -np.log1p(-p)
        return cls(betas=betas, p_click=p, p_single=single)


@dataclass(frozen=True)
class RateCurvePoint:
    r: float
    b: float
    h: float
    p_tot: float


def _check_loop(params: OpticalParams, l: int) -> None:
    if not 0 <= l <= params.l_max:
        raise DomainError(f"loop index {l} outside [0, {params.l_max}]")


def beta(params: OpticalParams, l: int) -> float:
    """Mean photon number reaching the detector after ``l`` round trips."""
    _check_loop(params, l)
    if l == 0:
        return params.mu * params.r
    return params.mu * params.t**2 * params.r ** (l - 1) * (1.0 - params.eta) ** l


def betas(params: OpticalParams) -> np.ndarray:
    return np.array([beta(params, l) for l in range(params.l_max + 1)])


def p_click(params: OpticalParams, l: int) -> float:
    return float(-np.expm1(-beta(params, l)))


def single_click_distribution(params: OpticalParams) -> LoopDistribution:
    """Per-loop probability of exactly one click, vetoed by a click at any
    other loop in ``[0, l_max]`` (l = 0 included)."""
    b = betas(params)
    pc = -np.expm1(-b)
    # prod_{i != l} (1 - p_i) = exp(-(sum(b) - b_l))
    single = pc * np.exp(-(b.sum() - b))
    return LoopDistribution(betas=b, p_click=pc, p_single=single)


def consecutive_ratio(params: OpticalParams, l: int, mode: Mode = "exact") -> float:
    """P_{l+1} / P_l, either from the full model or its weak-pulse limit."""
    if not 1 <= l <= params.l_max - 1:
        raise DomainError(f"ratio index {l} outside [1, {params.l_max - 1}]")
    if mode == "first_order":
        return params.loop_gain
    if mode != "exact":
        raise DomainError(f"unknown mode {mode!r}")
    b0, b1 = beta(params, l), beta(params, l + 1)
    if b0 == 0.0:
        raise DomainError(f"P_{l} is zero; ratio undefined")
    # the common veto factors cancel, leaving (e^b1 - 1) / (e^b0 - 1)
    return float(np.expm1(b1) / np.expm1(b0))


def reference_ratios(params: OpticalParams, loops=(1, 2, 3)) -> np.ndarray:
    return np.array([consecutive_ratio(params, l) for l in loops])


def _window_pair(params: OpticalParams, window: str) -> tuple[float, float]:
    if window not in WINDOWS:
        raise DomainError(f"unknown window {window!r}")
    lo, hi = WINDOWS[window]
    dist = single_click_distribution(params)
    return float(dist.p_single[lo]), float(dist.p_single[hi])


def window_bias(params: OpticalParams, window: Window, mode: Mode = "exact") -> float:
    """Probability of the more likely bit in a window (the lower loop)."""
    if mode == "first_order":
        return 1.0 / (1.0 + params.loop_gain)
    lo, hi = _window_pair(params, window)
    if lo + hi == 0.0:
        raise DomainError(f"{window} window has zero probability mass")
    return max(lo, hi) / (lo + hi)


def min_entropy_from_bias(p: float) -> float:
    if not 0 < p <= 1:
        raise DomainError(f"bias must lie in (0, 1], got {p}")
    return float(-np.log2(p))


def min_entropy_per_event(params: OpticalParams, window: Window = "private", mode: Mode = "exact") -> float:
    return min_entropy_from_bias(window_bias(params, window, mode))


def bits_per_pulse(params: OpticalParams) -> RateCurvePoint:
    """Extractable private bits per pulse, (P1 + P2) * log2((P1 + P2) / P1)."""
    p1, p2 = _window_pair(params, "private")
    p_tot = p1 + p2
    if p_tot == 0.0:
        return RateCurvePoint(r=params.r, b=0.0, h=0.0, p_tot=0.0)
    h = float(np.log2(p_tot / max(p1, p2)))
    return RateCurvePoint(r=params.r, b=p_tot * h, h=h, p_tot=p_tot)


def optimize_reflectivity(
    mu: float,
    eta: float,
    r_min: float = 0.005,
    r_max: float = 0.995,
    steps: int = 200,
    l_max: int = DEFAULT_L_MAX,
) -> tuple[float, RateCurvePoint, list[RateCurvePoint]]:
    """Grid scan of :func:`bits_per_pulse` over reflectivity.

    Returns ``(r_best, best_point, curve)``; ties go to the smaller ``r``.
    """
    if not 0 < r_min < r_max < 1:
        raise DomainError(f"need 0 < r_min < r_max < 1, got [{r_min}, {r_max}]")
    if steps < 3:
        raise DomainError(f"steps must be >= 3, got {steps}")
    grid = np.linspace(r_min, r_max, int(steps))
    curve = [bits_per_pulse(OpticalParams(mu=mu, r=float(r), eta=eta, l_max=l_max)) for r in grid]
    best = int(np.argmax([p.b for p in curve]))
    return curve[best].r, curve[best], curve


def is_unimodal(values) -> bool:
    """True when the sequence rises (weakly) then falls with one sign change."""
    d = np.sign(np.diff(np.asarray(values, dtype=np.float64)))
    d = d[d != 0]
    changes = int(np.count_nonzero(d[1:] != d[:-1]))
    if changes == 0:
        return True
    return changes == 1 and d[0] > 0
