"""Min-entropy estimates for binary sequences.

Four non-iid estimators following NIST SP 800-90B (final, 2018): most
common value (6.3.1), collision (6.3.2), Markov (6.3.3) and compression
(6.3.4). All return bits per sample in [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import kernels
from .errors import DataError, DomainError, InsufficientDataError
from .model import OpticalParams, min_entropy_per_event

Z_99 = 2.576
RECOMMENDED_BITS = 1_000_000

COMPRESSION_BLOCK = 6
COMPRESSION_DICT = 1000
COMPRESSION_C = 0.5907
MARKOV_STEPS = 128


def _as_bits(bits) -> np.ndarray:
    a = np.asarray(getattr(bits, "bits", bits))
    if a.ndim != 1:
        raise DataError("bit sequence must be one-dimensional")
    a = a.astype(np.uint8, copy=False)
    if a.size and a.max() > 1:
        raise DataError("bit sequence holds values other than 0 and 1")
    return a


def _solve_decreasing(f: Callable[[float], float], target: float, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Bisection for f(p) = target with f decreasing on [lo, hi]; clamps to the ends."""
    if target >= f(lo):
        return lo
    if target <= f(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mcv_estimate(bits) -> float:
    """Upper 99% bound on the most common value's probability, as entropy."""
    s = _as_bits(bits)
    n = s.size
    if n == 0:
        raise DataError("empty input")
    ones = int(s.sum())
    p_hat = max(ones, n - ones) / n
    if n == 1:
        return 0.0
    p_u = min(1.0, p_hat + Z_99 * math.sqrt(p_hat * (1.0 - p_hat) / (n - 1)))
    return float(abs(math.log2(p_u)))


def collision_expectation(p: float) -> float:
    """Mean time to the first collision for a binary source with max probability p.

    Literal form of the standard,
    p q^-2 (1 + (1/p - 1/q)/2) F(q) - p q^-1 (1/p - 1/q)/2,
    with F(q) = Gamma(3, 1/q) q^3 e^(1/q) = 2q^3 + 2q^2 + q.
    """
    q = 1.0 - p
    if q <= 0.0:
        return 2.0
    half = 0.5 * (1.0 / p - 1.0 / q)
    f = 2.0 * q**3 + 2.0 * q**2 + q
    return p / q**2 * (1.0 + half) * f - p / q * half


def collision_estimate(bits) -> float:
    s = _as_bits(bits)
    t = kernels.collision_times(s)
    v = t.size
    if v < 2:
        raise InsufficientDataError("collision estimate needs at least two collisions")
    mean = float(t.mean())
    sd = float(t.std(ddof=1))
    target = mean - Z_99 * sd / math.sqrt(v)
    p = _solve_decreasing(collision_expectation, target, 0.5, 1.0)
    return float(min(1.0, max(0.0, -math.log2(p))))


def markov_estimate(bits) -> float:
    """Most likely 128-step path under the fitted first-order chain."""
    s = _as_bits(bits)
    n = s.size
    if n < 4:
        raise InsufficientDataError("Markov estimate needs at least 4 bits")
    p1 = float(s.sum()) / n
    p0 = 1.0 - p1
    pairs = s[:-1].astype(np.int64) * 2 + s[1:]
    c = np.bincount(pairs, minlength=4).astype(np.float64)
    from0 = c[0] + c[1]
    from1 = c[2] + c[3]
    p00, p01 = (c[0] / from0, c[1] / from0) if from0 else (0.0, 0.0)
    p10, p11 = (c[2] / from1, c[3] / from1) if from1 else (0.0, 0.0)

    def lg(x):
        return math.log2(x) if x > 0 else -math.inf

    k = MARKOV_STEPS
    candidates = [
        lg(p0) + (k - 1) * lg(p00),
        lg(p0) + (k // 2) * lg(p01) + (k // 2 - 1) * lg(p10),
        lg(p0) + lg(p01) + (k - 2) * lg(p11),
        lg(p1) + lg(p10) + (k - 2) * lg(p00),
        lg(p1) + (k // 2) * lg(p10) + (k // 2 - 1) * lg(p01),
        lg(p1) + (k - 1) * lg(p11),
    ]
    best = max(x for x in candidates if not math.isnan(x))
    return float(min(1.0, max(0.0, -best / k)))


def compression_blocks(bits, b: int = COMPRESSION_BLOCK) -> np.ndarray:
    s = _as_bits(bits)
    nb = s.size // b
    weights = 1 << np.arange(b - 1, -1, -1)
    return (s[: nb * b].reshape(nb, b).astype(np.int64) * weights).sum(axis=1)


def compression_estimate(bits) -> float:
    """Maurer-statistic estimate on 6-bit blocks with a 1000-block dictionary."""
    b, d = COMPRESSION_BLOCK, COMPRESSION_DICT
    blocks = compression_blocks(bits, b)
    nb = blocks.size
    v = nb - d
    if v < 2:
        raise InsufficientDataError(f"compression estimate needs more than {(d + 1) * b} bits")
    logs = np.log2(kernels.maurer_distances(blocks, d).astype(np.float64))
    mean = float(logs.mean())
    var = float(np.sum(logs * logs) / (v - 1) - mean * mean)
    sd = COMPRESSION_C * math.sqrt(max(var, 0.0))
    target = mean - Z_99 * sd / math.sqrt(v)
    others = 2**b - 1
    table = kernels.maurer_log_table(nb)

    def expected(p):
        q = (1.0 - p) / others
        g = kernels.maurer_expectation(p, table, d) + others * kernels.maurer_expectation(q, table, d)
        return g / v

    p = _solve_decreasing(expected, target, 2.0**-b, 1.0, tol=1e-10)
    return float(min(1.0, max(0.0, -math.log2(p) / b)))


ESTIMATORS: dict[str, Callable] = {
    "mcv": mcv_estimate,
    "collision": collision_estimate,
    "markov": markov_estimate,
    "compression": compression_estimate,
}


@dataclass
class EntropyReport:
    label: str
    n_bits: int
    estimates: dict[str, float]
    model_prediction: float | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def h_min(self) -> float | None:
        return min(self.estimates.values()) if self.estimates else None

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n_bits": self.n_bits,
            "estimators": [{"name": k, "h": v} for k, v in self.estimates.items()],
            "h_min": self.h_min,
            "model_prediction": self.model_prediction,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EntropyReport":
        try:
            est = {e["name"]: float(e["h"]) for e in d["estimators"]}
            return cls(
                label=d["label"],
                n_bits=int(d["n_bits"]),
                estimates=est,
                model_prediction=d.get("model_prediction"),
                warnings=list(d.get("warnings", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed entropy report: {exc}") from None


def assess(
    bits,
    params: OpticalParams | None = None,
    estimators: Iterable[str] | None = None,
    label: str | None = None,
) -> EntropyReport:
    """Run the selected estimators and take the minimum."""
    names = list(estimators) if estimators is not None else list(ESTIMATORS)
    unknown = [n for n in names if n not in ESTIMATORS]
    if unknown:
        raise DomainError(f"unknown estimator(s): {', '.join(unknown)}")
    if label is None:
        label = getattr(bits, "label", "unlabelled")
    s = _as_bits(bits)
    warnings = []
    if s.size < RECOMMENDED_BITS:
        warnings.append(f"low_sample: {s.size} bits < {RECOMMENDED_BITS} recommended")
    estimates = {}
    for name in names:
        try:
            estimates[name] = ESTIMATORS[name](s)
        except InsufficientDataError as exc:
            warnings.append(f"insufficient_data: {name}: {exc}")
    prediction = None
    if params is not None and label in ("private", "public"):
        prediction = min_entropy_per_event(params, label)
    return EntropyReport(label, int(s.size), estimates, prediction, warnings)


@dataclass
class Comparison:
    deltas: dict[str, float]
    verdict: str
    tolerance: float
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"deltas": self.deltas, "verdict": self.verdict, "tolerance": self.tolerance, "flags": self.flags}


def compare_sequences(a: EntropyReport, b: EntropyReport, tolerance: float = 0.05) -> Comparison:
    """Per-estimator ``a - b``; MATCH when every |delta| is within tolerance."""
    common = [n for n in a.estimates if n in b.estimates]
    flags = []
    if set(a.estimates) != set(b.estimates):
        flags.append("estimator sets differ; compared the intersection")
    deltas = {n: a.estimates[n] - b.estimates[n] for n in common}
    ok = bool(common) and all(abs(x) <= tolerance for x in deltas.values())
    return Comparison(deltas, "MATCH" if ok else "MISMATCH", tolerance, flags)
