"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints best-of-N wall times per kernel and workload, the speed-up, and the
largest absolute difference between the two outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dracsim import _fallback
from dracsim.nvsensor import NVRunParams, draw_detunings, rewind2, segment_signal_phases, xy8

try:
    from dracsim import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads(rng):
    # modal series: (n_modes, n_blocks) of the size used by two- and seven-spin runs
    for m, n in ((16, 4000), (1024, 8000), (4096, 8000)):
        coeffs = rng.normal(size=m) + 1j * rng.normal(size=m)
        modes = np.exp(1j * rng.uniform(0, 2 * np.pi, m))
        yield f"modal_series m={m} n={n}", "modal_series", (coeffs, modes, n)
    params = NVRunParams(signal_amplitude=1e-9, n_field_samples=100)
    det = draw_detunings(params)
    for seq in (xy8(1), xy8(4), rewind2(8)):
        phases, durations = segment_signal_phases(seq, params)
        axes = rng.uniform(0, 2 * np.pi, seq.n_pulses)
        yield f"dd_ensemble {seq.name} x{len(det)}", "dd_ensemble", (phases, durations, axes, 0.9 * np.pi, det)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(args.seed)
    print(f"{'workload':36s} {'numpy (ms)':>11s} {'cython (ms)':>12s} {'speed-up':>9s} {'max|diff|':>10s}")
    for label, name, call in workloads(rng):
        py, cy = getattr(_fallback, name), getattr(_ckernels, name)
        diff = float(np.max(np.abs(py(*call) - cy(*call))))
        t_py = best_of(lambda: py(*call), args.repeat)
        t_cy = best_of(lambda: cy(*call), args.repeat)
        print(f"{label:36s} {1e3 * t_py:11.3f} {1e3 * t_cy:12.3f} {t_py / t_cy:8.1f}x {diff:10.2e}")


if __name__ == "__main__":
    main()
