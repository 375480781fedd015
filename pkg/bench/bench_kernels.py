"""Time the numba kernels against their pure-numpy fallbacks.

    python3 bench/bench_kernels.py [--repeat 5] [--scale 1.0] [--end-to-end]

Each kernel is warmed up once (so numba compile time is excluded) and the
best of ``--repeat`` runs is reported. ``--end-to-end`` also times a small
simulate, post-select, assess and extract pass in a fresh interpreter per
backend, switching with ``LOOPQRNG_DISABLE_NUMBA``.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from loopqrng import kernels as K
from loopqrng._accel import HAVE_NUMBA
from loopqrng.extractor import expand_seed, toeplitz_matrix


def best_time(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(scale, rng):
    n_events = int(2_000_000 * scale)
    pulse = rng.integers(0, n_events * 5, n_events)
    loop = rng.integers(0, 9, n_events).astype(np.int8)
    sorted_pulse = np.sort(pulse)
    times = np.sort(rng.random(int(200_000 * scale)) * 1e7)
    bits = (rng.random(int(1_000_000 * scale)) < 0.76).astype(np.uint8)
    blocks = rng.integers(0, 64, int(160_000 * scale))
    logs = K.maurer_log_table(blocks.size)
    n, m = 4096, 1554
    matrix = toeplitz_matrix(expand_seed(0, n + m - 1), n, m)
    inputs = rng.integers(0, 2, (max(1, int(64 * scale)), n), dtype=np.uint8)
    return [
        ("sort_events", K.sort_events_numpy, K.sort_events_numba, (pulse, loop, n_events * 5)),
        ("single_click_mask", K.single_click_mask_numpy, K.single_click_mask_numba, (sorted_pulse,)),
        ("dead_time_keep", K.dead_time_keep_numpy, K.dead_time_keep_numba, (times, 25.0)),
        ("collision_times", K.collision_times_numpy, K.collision_times_numba, (bits,)),
        ("maurer_distances", K.maurer_distances_numpy, K.maurer_distances_numba, (blocks, 1000)),
        ("maurer_expectation", K.maurer_expectation_numpy, K.maurer_expectation_numba, (0.3, logs, 1000)),
        ("gf2_matmul", K.gf2_matmul_numpy, K.gf2_matmul_numba, (matrix, inputs)),
    ]


PIPELINE = """
import time
from loopqrng import OpticalParams, SimConfig, simulate_stream, backend_name
from loopqrng.sequences import build_sequences
from loopqrng.entropy import assess
from loopqrng.extractor import ExtractorConfig, build_toeplitz, extract
p = OpticalParams(0.33, 0.41, 0.23)
def run():
    priv, _ = build_sequences(simulate_stream(SimConfig(p, n_pulses={pulses}, seed=1)))
    h = assess(priv).h_min
    extract(build_toeplitz(ExtractorConfig(h_rate=h)), priv)
run()
t0 = time.perf_counter()
run()
print(backend_name(), time.perf_counter() - t0)
"""


def end_to_end(pulses):
    for flag in ("0", "1"):
        env = dict(os.environ, LOOPQRNG_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", PIPELINE.format(pulses=pulses)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"pipeline ({pulses} pulses) backend={out[0]:<6} {float(out[1]) * 1e3:10.1f} ms")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply every input size")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--end-to-end", action="store_true", help="also time the whole pipeline per backend")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; the numba column runs the fallback")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<20} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>9}")
    for name, np_fn, nb_fn, fn_args in cases(args.scale, rng):
        t_np = best_time(np_fn, fn_args, args.repeat)
        t_nb = best_time(nb_fn, fn_args, args.repeat)
        print(f"{name:<20} {t_np * 1e3:>12.2f} {t_nb * 1e3:>12.2f} {t_np / t_nb:>8.1f}x")
    if args.end_to_end:
        end_to_end(int(10_000_000 * args.scale))


if __name__ == "__main__":
    main()
