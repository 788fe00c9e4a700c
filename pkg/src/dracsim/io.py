"""CSV and JSON exchange formats.

Every CSV starts with ``# key: <json>`` header rows carrying metadata, then
one column-name row, then data.  Floats are written with 17 significant
digits so doubles survive a round trip bit for bit.  Files are written to a
temporary sibling and renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .nvsensor import SweepResult
from .protocols import TimeSeries, Trajectory
from .spectra import MatchReport, Peak, PeakList, Spectrum
from .spincore import ValidationError

FORMAT_VERSION = 1
TIMESERIES_COLUMNS = ("block_index", "t_free", "t_total", "re", "im")
SPECTRUM_COLUMNS = ("freq_hz", "freq_ppm", "re", "im", "magnitude")
PEAK_COLUMNS = ("freq_hz", "freq_ppm", "amplitude", "fwhm_hz")
SWEEP_COLUMNS = ("theta_deg", "mean_mz", "stderr_mz", "normalized_mz")
TRAJECTORY_COLUMNS = ("t", "mx", "my", "mz", "segment")


class FormatError(ValidationError):
    pass


def fmt(x: Any) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _render(kind: str, meta: dict[str, Any], columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    buf.write(f"# format: {json.dumps(f'dracsim-{kind}')}\n")
    buf.write(f"# version: {FORMAT_VERSION}\n")
    for key, value in meta.items():
        buf.write(f"# {key}: {json.dumps(_jsonable(value), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _parse(text: str, kind: str) -> tuple[dict[str, Any], list[str], list[list[str]]]:
    meta: dict[str, Any] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, sep, value = lines[i][1:].strip().partition(":")
        if not sep:
            raise FormatError(f"line {i + 1}: header row needs 'key: value'")
        try:
            meta[key.strip()] = json.loads(value)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {i + 1}: bad header value: {exc.msg}") from None
        i += 1
    if meta.get("format") != f"dracsim-{kind}":
        raise FormatError(f"not a {kind} CSV (format = {meta.get('format')!r})")
    reader = csv.reader(lines[i:])
    try:
        columns = next(reader)
    except StopIteration:
        raise FormatError(f"{kind} CSV has no column row") from None
    rows = [r for r in reader if r]
    return meta, columns, rows


def _read(path: str | os.PathLike, kind: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None
    return _parse(text, kind)


def _floats(rows: list[list[str]], col: int, what: str) -> np.ndarray:
    try:
        return np.array([float(r[col]) if r[col] != "" else np.nan for r in rows])
    except (ValueError, IndexError) as exc:
        raise FormatError(f"bad {what} column: {exc}") from None


# time series ----------------------------------------------------------------


def timeseries_csv(ts: TimeSeries) -> str:
    tf, tt = ts.times("free_time"), ts.times("total_time")
    meta = {
        "kind": ts.kind,
        "dwell_free": ts.dwell_free,
        "dwell_total": ts.dwell_total,
        "params": ts.params,
    }
    rows = ((k, tf[k], tt[k], z.real, z.imag) for k, z in enumerate(ts.samples))
    return _render("timeseries", meta, TIMESERIES_COLUMNS, rows)


def write_timeseries(path: str | os.PathLike, ts: TimeSeries) -> Path:
    return atomic_write_text(path, timeseries_csv(ts))


def read_timeseries(path: str | os.PathLike) -> TimeSeries:
    meta, cols, rows = _read(path, "timeseries")
    if tuple(cols) != TIMESERIES_COLUMNS:
        raise FormatError(f"time-series columns must be {TIMESERIES_COLUMNS}")
    samples = _floats(rows, 3, "re") + 1j * _floats(rows, 4, "im")
    return TimeSeries(samples, float(meta["dwell_free"]), float(meta["dwell_total"]), meta["kind"], meta.get("params", {}))


# spectra --------------------------------------------------------------------


def spectrum_csv(sp: Spectrum) -> str:
    meta = {
        "axis": sp.axis,
        "dwell": sp.dwell,
        "n_samples": sp.n_samples,
        "one_sided": sp.one_sided,
        "ppm_reference": sp.ppm_reference,
        "phase0": sp.phase0,
        "provenance": sp.provenance,
    }
    ppm = sp.freqs_ppm
    rows = (
        (f, "" if ppm is None else ppm[k], a.real, a.imag, abs(a))
        for k, (f, a) in enumerate(zip(sp.freqs_hz, sp.amplitudes))
    )
    return _render("spectrum", meta, SPECTRUM_COLUMNS, rows)


def write_spectrum(path: str | os.PathLike, sp: Spectrum) -> Path:
    return atomic_write_text(path, spectrum_csv(sp))


def read_spectrum(path: str | os.PathLike) -> Spectrum:
    meta, cols, rows = _read(path, "spectrum")
    if tuple(cols) != SPECTRUM_COLUMNS:
        raise FormatError(f"spectrum columns must be {SPECTRUM_COLUMNS}")
    try:
        return Spectrum(
            _floats(rows, 0, "freq_hz"),
            _floats(rows, 2, "re") + 1j * _floats(rows, 3, "im"),
            meta["axis"],
            float(meta["dwell"]),
            int(meta["n_samples"]),
            bool(meta["one_sided"]),
            meta.get("ppm_reference"),
            meta.get("provenance", {}),
            float(meta.get("phase0", 0.0)),
        )
    except KeyError as exc:
        raise FormatError(f"spectrum header is missing {exc}") from None


def peaks_csv(peaks: PeakList) -> str:
    meta = {"bin_hz": peaks.bin_hz, "ppm_reference": peaks.ppm_reference}
    rows = ((p.freq_hz, "" if p.freq_ppm is None else p.freq_ppm, p.amplitude, p.fwhm_hz) for p in peaks)
    return _render("peaks", meta, PEAK_COLUMNS, rows)


def write_peaks(path: str | os.PathLike, peaks: PeakList) -> Path:
    return atomic_write_text(path, peaks_csv(peaks))


def read_peaks(path: str | os.PathLike) -> PeakList:
    meta, cols, rows = _read(path, "peaks")
    if tuple(cols) != PEAK_COLUMNS:
        raise FormatError(f"peak columns must be {PEAK_COLUMNS}")
    out = []
    for r in rows:
        ppm = float(r[1]) if r[1] != "" else None
        out.append(Peak(float(r[0]), float(r[2]), float(r[3]), ppm))
    return PeakList(out, float(meta.get("bin_hz", float("nan"))), meta.get("ppm_reference"))


# reports, sweeps, trajectories ----------------------------------------------


def match_report_json(report: MatchReport, extra: dict[str, Any] | None = None) -> str:
    doc = {"schema_version": FORMAT_VERSION} | report.to_dict() | (extra or {})
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_match_report(path: str | os.PathLike, report: MatchReport, extra: dict[str, Any] | None = None) -> Path:
    return atomic_write_text(path, match_report_json(report, extra))


def sweep_csv(res: SweepResult) -> str:
    meta = {"family": res.family, "n_cycles": res.n_cycles, "signal": res.signal, "params": res.params}
    rows = zip(res.theta_deg, res.mean_mz, res.stderr_mz, res.normalized)
    return _render("sweep", meta, SWEEP_COLUMNS, rows)


def write_sweep(path: str | os.PathLike, res: SweepResult) -> Path:
    return atomic_write_text(path, sweep_csv(res))


def read_sweep(path: str | os.PathLike) -> SweepResult:
    meta, cols, rows = _read(path, "sweep")
    if tuple(cols) != SWEEP_COLUMNS:
        raise FormatError(f"sweep columns must be {SWEEP_COLUMNS}")
    return SweepResult(
        meta["family"],
        int(meta["n_cycles"]),
        _floats(rows, 0, "theta_deg"),
        _floats(rows, 1, "mean_mz"),
        _floats(rows, 2, "stderr_mz"),
        meta.get("signal", "odd"),
        meta.get("params", {}),
    )


def trajectory_csv(tr: Trajectory, params: dict[str, Any] | None = None) -> str:
    rows = zip(tr.t, tr.mx, tr.my, tr.mz, tr.segment)
    return _render("trajectory", {"params": params or {}, "block_end": tr.block_end}, TRAJECTORY_COLUMNS, rows)


def write_trajectory(path: str | os.PathLike, tr: Trajectory, params: dict[str, Any] | None = None) -> Path:
    return atomic_write_text(path, trajectory_csv(tr, params))


def read_trajectory(path: str | os.PathLike) -> Trajectory:
    meta, cols, rows = _read(path, "trajectory")
    if tuple(cols) != TRAJECTORY_COLUMNS:
        raise FormatError(f"trajectory columns must be {TRAJECTORY_COLUMNS}")
    return Trajectory(
        _floats(rows, 0, "t"),
        _floats(rows, 1, "mx"),
        _floats(rows, 2, "my"),
        _floats(rows, 3, "mz"),
        np.array(meta.get("block_end", []), dtype=np.int64),
        [r[4] for r in rows],
    )
