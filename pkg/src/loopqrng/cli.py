"""Command-line pipelines: simulate -> bits -> selftest / entropy -> extract.

Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, entropy, extractor, monitor, sequences, simulator
from ._accel import backend_name
from ._io import atomic_open, sha256_file, write_json
from .errors import DataError, DomainError
from .model import OpticalParams, optimize_reflectivity

log = logging.getLogger("loopqrng")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

REFERENCE_DEFAULTS = {"mu": 0.33, "r": 0.41, "eta": 0.230}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def manifest_path(path) -> Path:
    return Path(str(path) + ".manifest.json")


def write_manifest(primary, command: str, argv, config: dict, inputs=(), outputs=()) -> None:
    write_json(
        manifest_path(primary),
        {
            "command": command,
            "argv": list(argv),
            "config": config,
            "inputs": {str(p): sha256_file(p) for p in inputs},
            "outputs": {str(p): sha256_file(p) for p in outputs},
            "tool_version": __version__,
            "backend": backend_name(),
            "created_unix": int(time.time()),
        },
    )


def _read_manifest_config(path) -> dict | None:
    mp = manifest_path(path)
    if not mp.exists():
        return None
    try:
        return json.loads(mp.read_text(encoding="utf-8")).get("config")
    except ValueError:
        raise DataError(f"corrupt manifest {mp}") from None


def read_events(path, n_pulses=None) -> simulator.EventStream:
    """Load an event CSV; ``n_pulses`` falls back to the simulate manifest."""
    cfg = _read_manifest_config(path)
    if n_pulses is None and cfg is not None:
        n_pulses = cfg.get("n_pulses")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # header-only file
            arr = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
        if header != simulator.CSV_HEADER or (arr.size and arr.shape[1] != 2) or (arr.size and arr.min() < 0):
            raise ValueError
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    except ValueError:
        # slow path pinpoints the offending line
        stream = simulator.read_events_csv(path, n_pulses)
    else:
        arr = arr.reshape(-1, 2)
        pulse = arr[:, 0].copy()
        n = int(n_pulses) if n_pulses is not None else (int(pulse.max()) + 1 if pulse.size else 0)
        if pulse.size and pulse.max() >= n:
            raise DataError(f"{path}: pulse index {int(pulse.max())} beyond declared {n} pulses")
        stream = simulator.EventStream(pulse, arr[:, 1].astype(np.int8), n_pulses=n)
    if cfg is not None:
        try:
            p = cfg["params"]
            sim_cfg = simulator.SimConfig(
                params=OpticalParams(p["mu"], p["r"], p["eta"], p["l_max"]),
                n_pulses=max(stream.n_pulses, 1),
                seed=cfg["seed"],
            )
        except (KeyError, TypeError, DomainError):
            sim_cfg = None
        stream = simulator.EventStream(stream.pulse_index, stream.loop_index, stream.n_pulses, 0, sim_cfg)
    return stream


def _params(args) -> OpticalParams:
    return OpticalParams(mu=args.mu, r=args.r, eta=args.eta, l_max=args.l_max)


def _add_params(p, defaults=True):
    d = REFERENCE_DEFAULTS if defaults else {"mu": None, "r": None, "eta": None}
    p.add_argument("--mu", type=float, default=d["mu"], help="mean photon number per pulse")
    p.add_argument("--r", type=float, default=d["r"], help="beam-splitter reflectivity")
    p.add_argument("--eta", type=float, default=d["eta"], help="loss per round trip")
    p.add_argument("--l-max", type=int, default=8)


# --- commands ---------------------------------------------------------------


def cmd_simulate(args, argv) -> int:
    if args.pulses < 1:
        raise UsageError("--pulses must be >= 1")
    config = simulator.SimConfig(
        params=_params(args),
        n_pulses=args.pulses,
        seed=args.seed,
        rep_rate_hz=args.rep_rate,
        round_trip_ns=args.round_trip_ns,
        dead_time_ns=args.dead_time_ns,
        dead_time_enabled=args.dead_time,
    )
    with atomic_open(args.out) as fh:
        rows = simulator.write_events_csv(simulator.iter_chunks(config, workers=args.workers), fh)
    write_manifest(args.out, "simulate", argv, config.as_dict(), outputs=[args.out])
    log.info("wrote %d events for %d pulses to %s", rows, args.pulses, args.out)
    return EXIT_OK


def cmd_bits(args, argv) -> int:
    stream = read_events(args.input, args.pulses)
    private, public = sequences.partition(sequences.post_select(stream))
    written = []
    try:
        for seq, path in ((private, args.private), (public, args.public)):
            sequences.write_bits(seq, path)
            written.append(path)
    except BaseException:
        sequences.remove_outputs(*written)
        raise
    write_manifest(
        args.private,
        "bits",
        argv,
        {"private_bits": private.n_bits, "public_bits": public.n_bits},
        inputs=[args.input],
        outputs=[args.private, args.public],
    )
    print(f"private {private.n_bits} bits, public {public.n_bits} bits")
    return EXIT_OK


def cmd_selftest(args, argv) -> int:
    stream = read_events(args.input, args.pulses)
    config = monitor.MonitorConfig.from_params(
        _params(args),
        interval_pulses=args.interval_pulses,
        sigma_threshold=args.sigma,
        min_counts=args.min_counts,
    )
    summary = monitor.run_monitor([stream], config)
    lines = [v.to_json() for v in summary.verdicts] + [summary.to_json()]
    if args.out:
        with atomic_open(args.out) as fh:
            fh.write("\n".join(lines) + "\n")
        write_manifest(
            args.out,
            "selftest",
            argv,
            {
                "interval_pulses": args.interval_pulses,
                "sigma": args.sigma,
                "min_counts": args.min_counts,
                "params": _params(args).as_dict(),
                "reference_ratios": list(config.reference_ratios),
            },
            inputs=[args.input],
            outputs=[args.out],
        )
    else:
        sys.stdout.write("\n".join(lines) + "\n")
    print(f"self-test: {summary.status} ({summary.n_alarms} alarms in {summary.n_intervals} intervals)", file=sys.stderr)
    return EXIT_OK


def _sidecar_params(seq: sequences.BitSequence) -> OpticalParams | None:
    p = seq.provenance
    try:
        return OpticalParams(p["mu"], p["r"], p["eta"], p.get("l_max") or 8)
    except (KeyError, TypeError, DomainError):
        return None


def cmd_entropy(args, argv) -> int:
    seq = sequences.read_bits(args.input)
    names = [n.strip() for n in args.estimators.split(",")] if args.estimators else None
    if names:
        unknown = [n for n in names if n not in entropy.ESTIMATORS]
        if unknown:
            raise UsageError(f"unknown estimator(s): {', '.join(unknown)}; choose from {', '.join(entropy.ESTIMATORS)}")
    params = None
    if args.mu is not None and args.r is not None and args.eta is not None:
        params = _params(args)
    else:
        params = _sidecar_params(seq)
    report = entropy.assess(seq, params=params, estimators=names, label=seq.label)
    if args.report:
        write_json(args.report, report.to_dict())
        write_manifest(
            args.report, "entropy", argv, {"estimators": names or list(entropy.ESTIMATORS)},
            inputs=[args.input], outputs=[args.report],
        )
    else:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    for w in report.warnings:
        log.warning("%s", w)
    return EXIT_OK


def _load_report(path) -> entropy.EntropyReport:
    try:
        return entropy.EntropyReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_compare(args, argv) -> int:
    cmp = entropy.compare_sequences(_load_report(args.private), _load_report(args.public), args.tolerance)
    out = cmp.to_dict()
    if args.out:
        write_json(args.out, out)
        write_manifest(args.out, "compare", argv, {"tolerance": args.tolerance},
                       inputs=[args.private, args.public], outputs=[args.out])
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_extract(args, argv) -> int:
    if not 0 < args.epsilon < 1:
        raise UsageError("--epsilon must lie in (0, 1)")
    if args.h_rate is not None and args.from_report is not None:
        raise UsageError("give at most one of --h-rate and --from-report")
    seq = sequences.read_bits(args.input)
    if args.h_rate is not None:
        h_rate, source = args.h_rate, "flag"
    elif args.from_report is not None:
        h_rate, source = _load_report(args.from_report).h_min, "report"
        if h_rate is None:
            raise DataError(f"{args.from_report} has no estimates")
    else:
        h_rate, source = entropy.assess(seq).h_min, "measured"
    cfg = extractor.ExtractorConfig(h_rate=h_rate, block_n=args.block, epsilon=args.epsilon, seed=args.seed)
    inst = extractor.build_toeplitz(cfg)
    out_bits = extractor.extract(inst, seq)
    echo = {"block_n": cfg.block_n, "m": inst.m, "epsilon": cfg.epsilon, "h_rate": cfg.h_rate,
            "h_rate_source": source, "extractor_seed": cfg.seed, "source_label": seq.label}
    out_seq = sequences.BitSequence(out_bits, "extracted", {**seq.provenance, **echo})
    sequences.write_bits(out_seq, args.out, extra=echo)
    write_manifest(args.out, "extract", argv, echo, inputs=[args.input], outputs=[args.out])
    print(f"extracted {out_seq.n_bits} bits (m={inst.m} per {cfg.block_n}-bit block)")
    return EXIT_OK


def cmd_optimize(args, argv) -> int:
    r_best, best, curve = optimize_reflectivity(args.mu, args.eta, args.r_min, args.r_max, args.steps, args.l_max)
    if args.out:
        with atomic_open(args.out) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "b", "h", "p_tot"])
            for pt in curve:
                w.writerow([repr(pt.r), repr(pt.b), repr(pt.h), repr(pt.p_tot)])
        write_manifest(args.out, "optimize", argv,
                       {"mu": args.mu, "eta": args.eta, "r_min": args.r_min, "r_max": args.r_max,
                        "steps": args.steps, "l_max": args.l_max},
                       outputs=[args.out])
    print(f"argmax r={r_best:.6f} b={best.b:.8g} h={best.h:.6f} p_tot={best.p_tot:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="loopqrng", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate time-tagged detections to CSV")
    p.add_argument("--pulses", type=int, default=10_000_000)
    _add_params(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rep-rate", type=float, default=3.0e6, help="pulses per second")
    p.add_argument("--round-trip-ns", type=float, default=33.0)
    p.add_argument("--dead-time-ns", type=float, default=25.0)
    p.add_argument("--dead-time", action="store_true", help="apply the detector dead-time filter")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bits", help="post-select events into private/public .bits files")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--private", required=True)
    p.add_argument("--public", required=True)
    p.add_argument("--pulses", type=int, default=None, help="pulse count (default: from manifest)")
    p.set_defaults(func=cmd_bits)

    p = sub.add_parser("selftest", help="run the ratio consistency check")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--interval-pulses", type=int, default=monitor.DEFAULT_INTERVAL_PULSES)
    p.add_argument("--sigma", type=float, default=5.0)
    p.add_argument("--min-counts", type=int, default=100)
    _add_params(p)
    p.add_argument("--pulses", type=int, default=None, help="pulse count (default: from manifest)")
    p.add_argument("--out", default=None, help="JSONL verdicts (default: stdout)")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("entropy", help="min-entropy report for a .bits file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--estimators", default=None, help=f"comma list from {','.join(entropy.ESTIMATORS)}")
    p.add_argument("--report", default=None)
    _add_params(p, defaults=False)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("compare", help="compare private and public entropy reports")
    p.add_argument("--private", required=True)
    p.add_argument("--public", required=True)
    p.add_argument("--tolerance", type=float, default=0.05)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("extract", help="Toeplitz-hash a .bits file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--epsilon", type=float, default=1e-10)
    p.add_argument("--block", type=int, default=4096)
    p.add_argument("--h-rate", type=float, default=None)
    p.add_argument("--from-report", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("optimize", help="scan extractable bits per pulse over reflectivity")
    p.add_argument("--mu", type=float, default=REFERENCE_DEFAULTS["mu"])
    p.add_argument("--eta", type=float, default=REFERENCE_DEFAULTS["eta"])
    p.add_argument("--r-min", type=float, default=0.005)
    p.add_argument("--r-max", type=float, default=0.995)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--l-max", type=int, default=8)
    p.add_argument("--out", default=None, help="curve CSV (r,b,h,p_tot)")
    p.set_defaults(func=cmd_optimize)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args, argv)
    except (UsageError, DomainError) as exc:
        print(f"loopqrng {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"loopqrng {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"loopqrng {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - last resort
        log.exception("internal error")
        print(f"loopqrng {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
