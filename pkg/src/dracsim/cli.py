"""Command-line front end.

Exit codes: 0 success, 1 comparison failure, 2 input error.  ``--out`` and
``--threads`` default to ``$DRACSIM_OUT_DIR`` and ``$DRACSIM_THREADS``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__, io
from .config import (
    ExperimentConfig,
    NVSweepConfig,
    RunSpec,
    is_nv_config,
    load_config_text,
    parse_experiment,
    parse_nv,
    preset_names,
    preset_text,
)
from .hamiltonians import parse_json
from .nvsensor import SweepResult, sweep_sequence
from .protocols import run_many, trajectory
from .spectra import MatchReport, PeakList, Spectrum, compare_spectra, find_peaks, fourier_transform
from .spincore import ValidationError
from .svg import line_chart

EXIT_OK, EXIT_MISMATCH, EXIT_INPUT = 0, 1, 2
ENV_OUT = "DRACSIM_OUT_DIR"
ENV_THREADS = "DRACSIM_THREADS"


class InputError(Exception):
    pass


def _threads(arg: int | None) -> int:
    if arg is not None:
        n = arg
    else:
        raw = os.environ.get(ENV_THREADS, "1")
        try:
            n = int(raw)
        except ValueError:
            raise InputError(f"{ENV_THREADS} must be an integer, got {raw!r}") from None
    if n < 1:
        raise InputError("thread count must be >= 1")
    return n


def _out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(ENV_OUT) or ".")


def _load(args) -> tuple[Any, str, Path | None, str]:
    """Parsed document, source text, base dir for relative paths, label."""
    if bool(args.config) == bool(args.preset):
        raise InputError("give exactly one of --config or --preset")
    if args.preset:
        text = preset_text(args.preset)
        return parse_json(text, f"preset {args.preset}"), text, None, args.preset
    doc, text = load_config_text(args.config)
    return doc, text, Path(args.config).resolve().parent, Path(args.config).stem


def _spectrum_of(run: RunSpec, ts) -> tuple[Spectrum, PeakList]:
    o = run.spectrum
    sp = fourier_transform(ts, o.axis, o.zero_fill, o.apodization_hz)
    return sp, find_peaks(sp, o.threshold, o.mode)


def _match_passed(report: MatchReport, require: str) -> bool:
    # the reference run is side "a" of the report
    return report.all_matched if require == "both" else not report.unmatched_a


def run_experiment(cfg: ExperimentConfig, threads: int = 1):
    """Main run, optional reference run and their match report."""
    jobs = [(cfg.main.molecule, cfg.main.field, cfg.main.protocol)]
    if cfg.reference:
        r = cfg.reference.run
        jobs.append((r.molecule, r.field, r.protocol))
    signals = [cfg.main.signal] + ([cfg.reference.run.signal] if cfg.reference else [])
    if threads > 1 and len(jobs) > 1 and signals[0] == signals[-1]:
        series = run_many(jobs, threads, signal=signals[0])
    else:
        series = [run_many([job], 1, signal=s)[0] for job, s in zip(jobs, signals)]
    sp, peaks = _spectrum_of(cfg.main, series[0])
    report = None
    if cfg.reference:
        rsp, rpeaks = _spectrum_of(cfg.reference.run, series[1])
        ref = cfg.reference
        # reference is side "a" so Hz deltas are quoted at its carrier
        report = compare_spectra(rpeaks, peaks, ref.freq_tol_hz, ref.units, ref.method)
        return series, sp, peaks, (rsp, rpeaks), report
    return series, sp, peaks, None, report


def _resolve(out: Path, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else out / p


def cmd_simulate(args) -> int:
    doc, text, base, label = _load(args)
    if is_nv_config(doc):
        raise InputError("this is an NV sweep config; use 'dracsim nv-sweep'")
    cfg = parse_experiment(doc, text, base)
    threads = _threads(args.threads)
    out = _out_dir(args.out)
    t0 = time.perf_counter()
    series, sp, peaks, ref, report = run_experiment(cfg, threads)
    wall = time.perf_counter() - t0
    ts = series[0]
    for o in cfg.outputs:
        dest = _resolve(out, o.path)
        if o.kind == "timeseries":
            io.write_timeseries(dest, ts)
        elif o.kind == "spectrum":
            io.write_spectrum(dest, sp)
        elif o.kind == "peaks":
            io.write_peaks(dest, peaks)
        elif o.kind == "match_report":
            extra = {"main": cfg.main.protocol.to_dict(), "reference": cfg.reference.run.protocol.to_dict()}
            extra["passed"] = _match_passed(report, cfg.reference.require)
            io.write_match_report(dest, report, extra)
        elif o.kind == "trajectory":
            tr = trajectory(cfg.main.molecule, cfg.main.field, cfg.main.protocol)
            io.write_trajectory(dest, tr, ts.params)
        elif o.kind == "svg":
            traces = [(f"{ts.kind} ({sp.axis})", sp.freqs_hz, sp.magnitude / max(sp.magnitude.max(), 1e-300))]
            if ref is not None:
                rsp = ref[0]
                traces.append((f"reference {rsp.provenance.get('kind', '')}", rsp.freqs_hz, rsp.magnitude / max(rsp.magnitude.max(), 1e-300)))
            svg = line_chart(traces, title=label, xlabel="frequency (Hz)", ylabel="normalised |S|")
            io.atomic_write_text(dest, svg)
    summary = f"{label}: kind={ts.kind} n_blocks={len(ts)} wall={wall:.3f}s peaks={len(peaks)}"
    code = EXIT_OK
    if report is not None:
        passed = _match_passed(report, cfg.reference.require)
        summary += f" match={'pass' if passed else 'FAIL'} max|df|={report.max_abs_df:.4g}Hz"
        code = EXIT_OK if passed else EXIT_MISMATCH
    print(summary)
    return code


def _peaks_from_file(path: str, threshold: float, mode: str) -> PeakList:
    text = Path(path).read_text() if Path(path).exists() else None
    if text is None:
        raise InputError(f"cannot read {path}")
    if text.startswith('# format: "dracsim-peaks"'):
        return io.read_peaks(path)
    return find_peaks(io.read_spectrum(path), threshold, mode)


def cmd_compare(args) -> int:
    a = _peaks_from_file(args.spectrum_a, args.threshold, args.mode)
    b = _peaks_from_file(args.spectrum_b, args.threshold, args.mode)
    units = args.units
    if units == "auto":
        ra, rb = a.ppm_reference, b.ppm_reference
        units = "ppm" if ra and rb and abs(ra - rb) > 1e-9 * max(ra, rb) else "hz"
    report = compare_spectra(a, b, args.tol, units, args.method)
    dest = Path(args.report) if args.report else _out_dir(args.out) / "match_report.json"
    io.write_match_report(dest, report, {"a": str(args.spectrum_a), "b": str(args.spectrum_b)})
    status = "pass" if report.all_matched else "FAIL"
    print(f"compare: {status} pairs={len(report.pairs)} unmatched={len(report.unmatched_a)}+{len(report.unmatched_b)} "
          f"max|df|={report.max_abs_df:.4g}Hz units={units}")
    return EXIT_OK if report.all_matched else EXIT_MISMATCH


def _family(name: str) -> tuple[str, int]:
    fam, _, n = name.rpartition("-")
    return (fam, int(n)) if fam and n.isdigit() else (name, 0)


def run_nv(cfg: NVSweepConfig, threads: int = 1) -> list[SweepResult]:
    out = []
    for seq in cfg.sequences:
        fam, n = _family(seq.name)
        out.append(
            sweep_sequence(seq, cfg.params, cfg.theta_grid, signal=cfg.signal, threads=threads, family=fam, n_cycles=n)
        )
    return out


def cmd_nv_sweep(args) -> int:
    doc, text, base, label = _load(args)
    if not is_nv_config(doc):
        raise InputError("not an NV sweep config (no 'nv' section); use 'dracsim simulate'")
    cfg = parse_nv(doc, text, base)
    if args.seed is not None:
        cfg = replace(cfg, params=replace(cfg.params, rng_seed=args.seed))
    threads = _threads(args.threads)
    out = _out_dir(args.out)
    t0 = time.perf_counter()
    results = run_nv(cfg, threads)
    wall = time.perf_counter() - t0
    for o in cfg.outputs:
        if o.kind == "sweep":
            for seq, res in zip(cfg.sequences, results):
                io.write_sweep(_resolve(out, o.path.replace("{name}", seq.name)), res)
        elif o.kind == "sequence":
            for seq in cfg.sequences:
                io.atomic_write_text(_resolve(out, o.path.replace("{name}", seq.name)), json.dumps(seq.to_dict(), indent=2) + "\n")
        elif o.kind == "svg":
            traces = [(seq.name, res.theta_deg, res.normalized) for seq, res in zip(cfg.sequences, results)]
            svg = line_chart(traces, title=label, xlabel="pi-pulse rotation (deg)", ylabel="normalised <Mz>")
            io.atomic_write_text(_resolve(out, o.path), svg)
    parts = []
    for seq, res in zip(cfg.sequences, results):
        i = int(abs(res.theta_deg - 180).argmin())
        parts.append(f"{seq.name}@{res.theta_deg[i]:g}={res.mean_mz[i]:.6g}")
    print(f"{label}: seed={cfg.params.rng_seed} points={len(cfg.theta_grid)} wall={wall:.3f}s " + " ".join(parts))
    return EXIT_OK


def cmd_list_presets(args) -> int:
    for name in preset_names():
        try:
            desc = json.loads(preset_text(name)).get("description", "")
        except json.JSONDecodeError:
            desc = "(unreadable)"
        print(f"{name:28s} {desc}")
    return EXIT_OK


def cmd_validate(args) -> int:
    doc, text, base, label = _load(args)
    if is_nv_config(doc):
        cfg = parse_nv(doc, text, base)
        print(f"{label}: ok (nv sweep, {len(cfg.sequences)} sequence(s), {len(cfg.theta_grid)} angles)")
    else:
        cfg = parse_experiment(doc, text, base)
        n = cfg.main.protocol.blocks_for(cfg.main.molecule.t2)
        ref = " +reference" if cfg.reference else ""
        print(f"{label}: ok ({cfg.main.protocol.kind}, {cfg.main.molecule.name}, n_blocks={n}{ref})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--preset", help="built-in preset name (see list-presets)")
    common.add_argument("--out", help=f"output directory (default ${ENV_OUT} or .)")
    common.add_argument("--seed", type=int, help="RNG seed override for stochastic runs")
    common.add_argument("--threads", type=int, help=f"worker threads (default ${ENV_THREADS} or 1)")

    p = argparse.ArgumentParser(prog="dracsim", description="Longitudinal NV-NMR detection simulator.")
    p.add_argument("--version", action="version", version=f"dracsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="run a protocol and write its outputs")
    s.set_defaults(func=cmd_simulate)
    c = sub.add_parser("compare", help="match the peaks of two spectrum CSVs")
    c.add_argument("spectrum_a")
    c.add_argument("spectrum_b")
    c.add_argument("--tol", type=float, default=1.0, help="match tolerance in Hz (default 1)")
    c.add_argument("--units", choices=("auto", "hz", "ppm"), default="auto")
    c.add_argument("--method", choices=("greedy", "bottleneck"), default="greedy")
    c.add_argument("--threshold", type=float, default=0.05, help="relative peak threshold")
    c.add_argument("--mode", choices=("magnitude", "absorption"), default="magnitude")
    c.add_argument("--report", help="match report path (default OUT/match_report.json)")
    c.add_argument("--out", help=f"output directory (default ${ENV_OUT} or .)")
    c.set_defaults(func=cmd_compare)
    n = sub.add_parser("nv-sweep", parents=[common], help="NV pulse-error sweep")
    n.set_defaults(func=cmd_nv_sweep)
    lp = sub.add_parser("list-presets", help="list built-in presets")
    lp.set_defaults(func=cmd_list_presets)
    v = sub.add_parser("validate", parents=[common], help="parse and check a config without running it")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit 2 already
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, ValidationError, OSError) as exc:
        print(f"dracsim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
