"""Single-click post-selection and the private/public bit sequences.

Loop 1 and 3 map to bit 0, loop 2 and 4 to bit 1; loops {1, 2} feed the
private sequence and {3, 4} the public one.
"""
from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from ._io import atomic_open
from .errors import DataError
from .model import WINDOWS
from .simulator import EventStream

SIDECAR_SUFFIX = ".json"
PROVENANCE_KEYS = ("mu", "r", "eta", "l_max", "seed")


@dataclass(frozen=True)
class BitSequence:
    """A bit string held unpacked (one uint8 per bit) with provenance."""

    bits: np.ndarray
    label: str
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.label not in WINDOWS and self.label != "extracted":
            raise DataError(f"unknown sequence label {self.label!r}")

    @property
    def n_bits(self) -> int:
        return int(self.bits.size)

    def __len__(self) -> int:
        return self.n_bits

    def packed(self) -> bytes:
        return np.packbits(self.bits.astype(np.uint8), bitorder="big").tobytes()


def post_select(stream: EventStream) -> EventStream:
    """Keep pulses with exactly one click, and only if it fell in loops 1..4."""
    if not stream.is_sorted():
        raise DataError("event stream is not sorted by (pulse_index, loop_index)")
    single = kernels.single_click_mask(stream.pulse_index)
    window = (stream.loop_index >= 1) & (stream.loop_index <= 4)
    keep = single & window
    return dataclasses.replace(stream, pulse_index=stream.pulse_index[keep], loop_index=stream.loop_index[keep])


def _provenance(stream: EventStream) -> dict:
    cfg = stream.config
    if cfg is None:
        return {k: None for k in PROVENANCE_KEYS}
    return {**cfg.params.as_dict(), "seed": int(cfg.seed)}


def partition(selected: EventStream) -> tuple[BitSequence, BitSequence]:
    loop = selected.loop_index
    if loop.size and (loop.min() < 1 or loop.max() > 4):
        raise DataError("loop index outside [1, 4]; input was not post-selected")
    prov = _provenance(selected)
    bit = ((loop.astype(np.int64) - 1) % 2).astype(np.uint8)
    private = bit[loop <= 2]
    public = bit[loop >= 3]
    return (
        BitSequence(private, "private", dict(prov, window=list(WINDOWS["private"]))),
        BitSequence(public, "public", dict(prov, window=list(WINDOWS["public"]))),
    )


def build_sequences(chunks) -> tuple[BitSequence, BitSequence]:
    """Post-select and partition a stream given as one or more chunks."""
    if isinstance(chunks, EventStream):
        chunks = [chunks]
    priv, pub = [], []
    prov_p = prov_q = None
    for c in chunks:
        p, q = partition(post_select(c))
        priv.append(p.bits)
        pub.append(q.bits)
        prov_p, prov_q = p.provenance, q.provenance
    if prov_p is None:
        raise DataError("empty chunk sequence")
    return (
        BitSequence(np.concatenate(priv), "private", prov_p),
        BitSequence(np.concatenate(pub), "public", prov_q),
    )


def sidecar_path(path) -> Path:
    return Path(str(path) + SIDECAR_SUFFIX)


def write_bits(seq: BitSequence, path, extra: dict | None = None) -> None:
    """Write ``path`` (packed, MSB first, zero-padded) and ``path.json``."""
    meta = {k: seq.provenance.get(k) for k in PROVENANCE_KEYS}
    meta.update(n_bits=seq.n_bits, label=seq.label, created_unix=int(time.time()))
    for k, v in seq.provenance.items():
        meta.setdefault(k, v)
    if extra:
        meta.update(extra)
    with atomic_open(path, "wb") as fh:
        fh.write(seq.packed())
    with atomic_open(sidecar_path(path)) as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_bits(path) -> BitSequence:
    side = sidecar_path(path)
    try:
        meta = json.loads(side.read_text(encoding="utf-8"))
        n_bits = int(meta["n_bits"])
        label = meta["label"]
    except FileNotFoundError:
        raise DataError(f"missing sidecar {side}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"corrupt sidecar {side}: {exc}") from None
    raw = Path(path).read_bytes()
    if n_bits < 0 or n_bits > 8 * len(raw):
        raise DataError(f"sidecar claims {n_bits} bits but {path} holds {8 * len(raw)}")
    if len(raw) != -(-n_bits // 8):
        raise DataError(f"{path} has {len(raw)} bytes, expected {-(-n_bits // 8)} for {n_bits} bits")
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="big")
    if np.any(bits[n_bits:]):
        raise DataError(f"{path}: nonzero padding bits")
    prov = {k: v for k, v in meta.items() if k not in ("n_bits", "label")}
    return BitSequence(bits[:n_bits].copy(), label, prov)


def remove_outputs(*paths) -> None:
    for p in paths:
        for q in (Path(p), sidecar_path(p)):
            if q.exists():
                os.unlink(q)
