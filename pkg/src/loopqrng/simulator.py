"""Seeded Monte Carlo of time-tagged detections.

Every pulse clicks independently at each loop ``l`` with probability
``p_click(l)``. Streams are generated in fixed chunks of
:data:`CHUNK_PULSES` pulses. Chunk ``k`` of a run with master seed ``s``
draws from ``PCG64(SeedSequence(s, spawn_key=(0, k)))``, so the output is
a fixed function of ``(config, seed)`` no matter how many workers generate
the chunks. Within a chunk, loop ``l``'s clicking pulses come from
geometric gaps of a Bernoulli(p_click(l)) process, for l = 0..l_max in
order. This derivation is frozen: changing it breaks test fixtures.
"""
from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

from . import kernels
from .errors import DataError, DomainError
from .model import LoopDistribution, OpticalParams, single_click_distribution

CHUNK_PULSES = 1 << 20
SIM_STREAM_KEY = 0


@dataclass(frozen=True)
class SimConfig:
    params: OpticalParams
    n_pulses: int
    seed: int = 0
    rep_rate_hz: float = 3.0e6
    round_trip_ns: float = 33.0
    dead_time_ns: float = 25.0
    dead_time_enabled: bool = False

    def __post_init__(self):
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 1:
            raise DomainError(f"n_pulses must be a positive integer, got {self.n_pulses}")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.round_trip_ns <= 0 or self.rep_rate_hz <= 0 or self.dead_time_ns < 0:
            raise DomainError("timing parameters must be positive")
        if self.dead_time_enabled and self.round_trip_ns <= self.dead_time_ns:
            raise DomainError(
                f"round trip ({self.round_trip_ns} ns) must exceed dead time "
                f"({self.dead_time_ns} ns) when dead time is enabled"
            )

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["params"] = self.params.as_dict()
        return d


@dataclass(frozen=True)
class EventStream:
    """Clicks sorted by (pulse_index, loop_index), covering pulses
    ``[pulse_start, pulse_start + n_pulses)``."""

    pulse_index: np.ndarray
    loop_index: np.ndarray
    n_pulses: int
    pulse_start: int = 0
    config: SimConfig | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return int(self.pulse_index.size)

    @property
    def pulse_stop(self) -> int:
        return self.pulse_start + self.n_pulses

    def is_sorted(self) -> bool:
        p, l = self.pulse_index, self.loop_index
        if p.size < 2:
            return True
        dp = np.diff(p)
        return bool(np.all((dp > 0) | ((dp == 0) & (np.diff(l.astype(np.int64)) > 0))))

    def timestamps_ns(self, rep_rate_hz: float = 3.0e6, round_trip_ns: float = 33.0) -> np.ndarray:
        return self.pulse_index * (1e9 / rep_rate_hz) + self.loop_index * float(round_trip_ns)

    def equals(self, other: "EventStream") -> bool:
        return (
            self.n_pulses == other.n_pulses
            and self.pulse_start == other.pulse_start
            and np.array_equal(self.pulse_index, other.pulse_index)
            and np.array_equal(self.loop_index, other.loop_index)
        )


def simulate_pulse(rng: np.random.Generator, source: Union[OpticalParams, LoopDistribution]) -> set[int]:
    """Loop indices that click for one pulse."""
    if isinstance(source, OpticalParams):
        source = single_click_distribution(source)
    u = rng.random(source.p_click.size)
    return {int(l) for l in np.flatnonzero(u < source.p_click)}


def _bernoulli_positions(rng: np.random.Generator, p: float, n: int) -> np.ndarray:
    """Sorted indices in [0, n) of successes of n Bernoulli(p) trials."""
    if p <= 0.0:
        return np.empty(0, dtype=np.int64)
    batch = int(p * n + 6.0 * np.sqrt(n * p * (1.0 - p)) + 16)
    parts = []
    pos = -1
    while pos < n - 1:
        gaps = rng.geometric(p, size=batch)
        cum = np.cumsum(gaps) + pos
        parts.append(cum)
        pos = int(cum[-1])
    out = np.concatenate(parts)
    return out[: np.searchsorted(out, n)]


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(SIM_STREAM_KEY, int(chunk)))
    return np.random.Generator(np.random.PCG64(ss))


def _simulate_chunk(p_click: np.ndarray, seed: int, chunk: int, start: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    rng = _chunk_rng(seed, chunk)
    pulses, loops = [], []
    for l, p in enumerate(p_click):
        pos = _bernoulli_positions(rng, float(p), size)
        pulses.append(pos)
        loops.append(np.full(pos.size, l, dtype=np.int8))
    pulse = np.concatenate(pulses)
    loop = np.concatenate(loops)
    pulse, loop = kernels.sort_events(pulse, loop, size)
    return pulse + start, loop


def iter_chunks(config: SimConfig, workers: int = 1) -> Iterator[EventStream]:
    """Yield the stream chunk by chunk, in pulse order."""
    p_click = single_click_distribution(config.params).p_click
    n_chunks = -(-config.n_pulses // CHUNK_PULSES)

    def job(k):
        start = k * CHUNK_PULSES
        size = min(CHUNK_PULSES, config.n_pulses - start)
        pulse, loop = _simulate_chunk(p_click, config.seed, k, start, size)
        stream = EventStream(pulse, loop, n_pulses=size, pulse_start=start, config=config)
        if config.dead_time_enabled:
            stream = apply_dead_time(stream, config)
        return stream

    if workers <= 1:
        for k in range(n_chunks):
            yield job(k)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # bounded look-ahead keeps memory flat on long runs
        pending = []
        for k in range(n_chunks):
            pending.append(pool.submit(job, k))
            if len(pending) > 2 * workers:
                yield pending.pop(0).result()
        for f in pending:
            yield f.result()


def concat(chunks, config: SimConfig | None = None) -> EventStream:
    chunks = list(chunks)
    if not chunks:
        raise DataError("no chunks to concatenate")
    for a, b in zip(chunks, chunks[1:]):
        if a.pulse_stop != b.pulse_start:
            raise DataError("chunks are not contiguous")
    return EventStream(
        np.concatenate([c.pulse_index for c in chunks]),
        np.concatenate([c.loop_index for c in chunks]),
        n_pulses=sum(c.n_pulses for c in chunks),
        pulse_start=chunks[0].pulse_start,
        config=config if config is not None else chunks[0].config,
    )


def simulate_stream(config: SimConfig, workers: int = 1) -> EventStream:
    return concat(iter_chunks(config, workers=workers), config)


def shift(stream: EventStream, offset: int) -> EventStream:
    """Same clicks, relabelled to start ``offset`` pulses later."""
    return dataclasses.replace(stream, pulse_index=stream.pulse_index + offset, pulse_start=stream.pulse_start + offset)


def apply_dead_time(stream: EventStream, config: SimConfig) -> EventStream:
    """Drop clicks falling within the dead time after a surviving click.

    Uses the timing fields of ``config`` as given; the enable flag is the
    caller's business.
    """
    if len(stream) == 0:
        return stream
    times = stream.timestamps_ns(config.rep_rate_hz, config.round_trip_ns)
    order = np.argsort(times, kind="stable")
    keep_sorted = kernels.dead_time_keep(times[order], float(config.dead_time_ns))
    keep = np.empty_like(keep_sorted)
    keep[order] = keep_sorted
    return dataclasses.replace(stream, pulse_index=stream.pulse_index[keep], loop_index=stream.loop_index[keep])


# --- CSV event files --------------------------------------------------------

CSV_HEADER = "pulse_index,loop_index"


def write_events_csv(stream_or_chunks, fh) -> int:
    """Write events to an open text handle; returns the row count."""
    chunks = [stream_or_chunks] if isinstance(stream_or_chunks, EventStream) else stream_or_chunks
    fh.write(CSV_HEADER + "\n")
    rows = 0
    for c in chunks:
        if len(c) == 0:
            continue
        lines = np.char.add(np.char.add(c.pulse_index.astype(str), ","), c.loop_index.astype(str))
        fh.write("\n".join(lines.tolist()))
        fh.write("\n")
        rows += len(c)
    return rows


def read_events_csv(path, n_pulses: int | None = None) -> EventStream:
    """Parse an event CSV. Malformed rows raise :class:`DataError` naming the line."""
    import csv

    pulses: list[int] = []
    loops: list[int] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or ",".join(h.strip() for h in header) != CSV_HEADER:
            raise DataError(f"{path}:1: expected header {CSV_HEADER!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                p, l = int(row[0]), int(row[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer field in {row!r}") from None
            if p < 0 or l < 0:
                raise DataError(f"{path}:{lineno}: negative index")
            pulses.append(p)
            loops.append(l)
    pulse = np.asarray(pulses, dtype=np.int64)
    loop = np.asarray(loops, dtype=np.int8)
    if n_pulses is None:
        n_pulses = int(pulse.max()) + 1 if pulse.size else 0
    elif pulse.size and pulse.max() >= n_pulses:
        raise DataError(f"{path}: pulse index {int(pulse.max())} beyond declared {n_pulses} pulses")
    return EventStream(pulse, loop, n_pulses=int(n_pulses))
