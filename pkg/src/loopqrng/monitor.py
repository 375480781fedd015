"""Online self-test on consecutive-loop count ratios.

Post-selected counts are binned into fixed pulse intervals. For each
interval and l in {1, 2, 3}, ``R_l = counts[l+1] / counts[l]`` is compared
with the exact-model reference through a z-score whose error comes from
Poisson propagation, ``sigma = R * sqrt(1/c_{l+1} + 1/c_l)``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import DomainError
from .model import OpticalParams, reference_ratios
from .sequences import post_select
from .simulator import EventStream

OK = "OK"
ALARM = "ALARM"
INSUFFICIENT = "INSUFFICIENT_DATA"
UNTESTED = "UNTESTED"

LOOPS = (1, 2, 3, 4)
DEFAULT_INTERVAL_PULSES = 1_800_000  # 0.6 s at 3 MHz


@dataclass(frozen=True)
class IntervalStats:
    interval_index: int
    n_pulses: int
    counts: tuple[int, int, int, int]


@dataclass(frozen=True)
class MonitorConfig:
    reference_ratios: tuple[float, float, float]
    interval_pulses: int = DEFAULT_INTERVAL_PULSES
    sigma_threshold: float = 5.0
    min_counts: int = 100

    def __post_init__(self):
        if self.sigma_threshold <= 0:
            raise DomainError("sigma threshold must be positive")
        if int(self.interval_pulses) != self.interval_pulses or self.interval_pulses < 1:
            raise DomainError("interval_pulses must be a positive integer")
        if len(self.reference_ratios) != 3:
            raise DomainError("need three reference ratios (l = 1, 2, 3)")

    @classmethod
    def from_params(cls, params: OpticalParams, **kwargs) -> "MonitorConfig":
        return cls(reference_ratios=tuple(float(x) for x in reference_ratios(params)), **kwargs)


@dataclass(frozen=True)
class MonitorVerdict:
    interval_index: int
    counts: tuple[int, int, int, int]
    ratios: tuple[float | None, ...]
    z_scores: tuple[float | None, ...]
    status: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class MonitorSummary:
    status: str = UNTESTED
    n_intervals: int = 0
    n_alarms: int = 0
    first_alarm: int | None = None
    verdicts: list[MonitorVerdict] = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k != "verdicts"}
        d["summary"] = True
        return json.dumps(d, sort_keys=True)


def _bin_counts(selected: EventStream, interval_pulses: int, first: int, n_intervals: int) -> np.ndarray:
    counts = np.zeros((n_intervals, 4), dtype=np.int64)
    if len(selected) == 0 or n_intervals == 0:
        return counts
    idx = selected.pulse_index // interval_pulses - first
    inside = (idx >= 0) & (idx < n_intervals)
    flat = idx[inside] * 4 + (selected.loop_index[inside].astype(np.int64) - 1)
    counts += np.bincount(flat, minlength=n_intervals * 4).reshape(n_intervals, 4)
    return counts


def accumulate(selected: EventStream, interval_pulses: int) -> list[IntervalStats]:
    """Per-interval single-click counts for loops 1..4.

    Intervals are ``floor(pulse_index / interval_pulses)``; an empty input
    yields no intervals, otherwise every interval up to the last event (or
    the end of the covered pulse range) is reported.
    """
    if len(selected) == 0:
        return []
    last = max(int(selected.pulse_index.max()), selected.pulse_stop - 1)
    n = last // interval_pulses + 1
    counts = _bin_counts(selected, interval_pulses, 0, n)
    out = []
    for k in range(n):
        lo = k * interval_pulses
        hi = min((k + 1) * interval_pulses, max(selected.pulse_stop, last + 1))
        out.append(IntervalStats(k, hi - lo, tuple(int(c) for c in counts[k])))
    return out


def check_interval(stats: IntervalStats, config: MonitorConfig) -> MonitorVerdict:
    c = stats.counts
    ratios, zs = [], []
    alarm = tested = False
    for j, ref in enumerate(config.reference_ratios):
        lo, hi = c[j], c[j + 1]
        if lo < config.min_counts or lo == 0:
            ratios.append(hi / lo if lo else None)
            zs.append(None)
            continue
        ratio = hi / lo
        if hi:
            sigma = ratio * np.sqrt(1.0 / hi + 1.0 / lo)
        else:
            # empty upper loop: propagate the counts the reference expects
            sigma = ref * np.sqrt(1.0 / (ref * lo) + 1.0 / lo)
        z = (ratio - ref) / sigma
        ratios.append(ratio)
        zs.append(float(z))
        tested = True
        alarm |= abs(z) > config.sigma_threshold
    status = ALARM if alarm else (OK if tested else INSUFFICIENT)
    return MonitorVerdict(stats.interval_index, tuple(c), tuple(ratios), tuple(zs), status)


def iter_verdicts(chunks: Iterable[EventStream], config: MonitorConfig) -> Iterator[MonitorVerdict]:
    """One verdict per complete interval, in order, from raw event chunks.

    Chunks must be contiguous in pulse index and start at pulse 0. A
    trailing partial interval produces no verdict.
    """
    if isinstance(chunks, EventStream):
        chunks = [chunks]
    ip = int(config.interval_pulses)
    pending = np.zeros(4, dtype=np.int64)
    current = 0  # interval being filled
    for chunk in chunks:
        sel = post_select(chunk)
        done_upto = chunk.pulse_stop // ip  # intervals [current, done_upto) now complete
        span = max(done_upto, current + 1) - current
        counts = _bin_counts(sel, ip, current, span + 1)
        counts[0] += pending
        for k in range(done_upto - current):
            yield check_interval(IntervalStats(current + k, ip, tuple(int(x) for x in counts[k])), config)
        pending = counts[done_upto - current]
        current = done_upto


def run_monitor(chunks, config: MonitorConfig) -> MonitorSummary:
    """Run the self-test; ALARM latches from the first alarmed interval."""
    summary = MonitorSummary()
    for v in iter_verdicts(chunks, config):
        summary.verdicts.append(v)
        summary.n_intervals += 1
        if v.status == ALARM:
            summary.n_alarms += 1
            if summary.first_alarm is None:
                summary.first_alarm = v.interval_index
                summary.status = ALARM
        elif v.status == OK and summary.status == UNTESTED:
            summary.status = OK
    return summary
