"""Experiment configuration documents and built-in presets.

A config is a JSON object with a mandatory ``schema_version``.  Simulation
configs hold ``molecule``, ``field``, ``protocol`` and optional ``spectrum``,
``reference`` and ``outputs`` sections; NV configs hold an ``nv`` section.
Errors raise :class:`SpecError` with the offending field and, where it can be
found, the line in the source text.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .hamiltonians import FieldContext, MoleculeSpec, SpecError, _locate, load_molecule, parse_json
from .nvsensor import DDSequence, NVRunParams, sequence_by_name
from .protocols import SIGNALS, ProtocolParams
from .spectra import AXES

SCHEMA_VERSION = 1
OUTPUT_KINDS = ("timeseries", "spectrum", "peaks", "match_report", "trajectory", "svg")
NV_OUTPUT_KINDS = ("sweep", "svg", "sequence")
DEFAULT_OUTPUTS = {
    "timeseries": "timeseries.csv",
    "spectrum": "spectrum.csv",
    "peaks": "peaks.csv",
    "match_report": "match_report.json",
    "trajectory": "trajectory.csv",
    "svg": "spectrum.svg",
}
# "{name}" expands to each sequence name
NV_DEFAULT_OUTPUTS = {"sweep": "sweep-{name}.csv", "svg": "sweep.svg", "sequence": "sequence-{name}.json"}


@dataclass(frozen=True)
class SpectrumOptions:
    axis: str = "free_time"
    zero_fill: int = 4
    threshold: float = 0.05
    mode: str = "magnitude"
    apodization_hz: float | None = None


@dataclass(frozen=True)
class RunSpec:
    """One protocol run plus how to turn it into a peak list."""

    molecule: MoleculeSpec
    field: FieldContext
    protocol: ProtocolParams
    signal: str = "differential"
    spectrum: SpectrumOptions = SpectrumOptions()


@dataclass(frozen=True)
class ReferenceSpec:
    run: RunSpec
    freq_tol_hz: float = 1.0
    units: str = "hz"
    method: str = "greedy"
    require: str = "both"  # or "reference": only the reference peaks must match


@dataclass(frozen=True)
class OutputSpec:
    kind: str
    path: str


@dataclass(frozen=True)
class ExperimentConfig:
    main: RunSpec
    reference: ReferenceSpec | None
    outputs: tuple[OutputSpec, ...]
    description: str = ""


@dataclass(frozen=True)
class NVSweepConfig:
    params: NVRunParams
    sequences: tuple[DDSequence, ...]
    theta_grid: tuple[float, ...]
    signal: str = "odd"
    outputs: tuple[OutputSpec, ...] = ()
    description: str = ""


class _Reader:
    """Typed field access with dotted paths for diagnostics."""

    def __init__(self, source: str | None):
        self.source = source

    def fail(self, msg: str, path: str) -> SpecError:
        return SpecError(msg, field=path, line=_locate(self.source, path))

    def section(self, doc: Any, path: str, allowed: set[str], required: set[str] = frozenset()) -> Mapping[str, Any]:
        if not isinstance(doc, Mapping):
            raise self.fail("must be an object", path)
        unknown = sorted(set(doc) - allowed)
        if unknown:
            raise self.fail(f"unknown key(s) {unknown}; allowed: {sorted(allowed)}", f"{path}.{unknown[0]}" if path else unknown[0])
        for key in sorted(required):
            if key not in doc:
                raise self.fail("missing required field", f"{path}.{key}" if path else key)
        return doc

    def number(self, doc: Mapping[str, Any], key: str, path: str, default: Any = ..., positive: bool = False, allow_null: bool = False):
        full = f"{path}.{key}" if path else key
        if key not in doc:
            if default is ...:
                raise self.fail("missing required field", full)
            return default
        value = doc[key]
        if value is None and allow_null:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise self.fail("must be a finite number", full)
        if positive and value <= 0:
            raise self.fail("must be positive", full)
        return value

    def choice(self, doc: Mapping[str, Any], key: str, path: str, options, default: Any = ...):
        full = f"{path}.{key}" if path else key
        if key not in doc:
            if default is ...:
                raise self.fail("missing required field", full)
            return default
        if doc[key] not in options:
            raise self.fail(f"must be one of {list(options)}", full)
        return doc[key]


def _molecule(r: _Reader, doc: Any, base: Path | None) -> MoleculeSpec:
    if isinstance(doc, str):
        if doc.endswith(".json") and base is not None and not Path(doc).is_absolute():
            return load_molecule(base / doc)
        return load_molecule(doc)
    if isinstance(doc, Mapping):
        try:
            return MoleculeSpec.from_dict(doc, source=r.source)
        except SpecError as exc:
            path = f"molecule.{exc.field}" if exc.field else "molecule"
            raise SpecError(str(exc).split(": ", 1)[-1], field=path, line=exc.line or _locate(r.source, path)) from None
    raise r.fail("must be a built-in name, a file path or an inline molecule object", "molecule")


def _field(r: _Reader, doc: Any, path: str, spec: MoleculeSpec) -> FieldContext:
    d = r.section(doc, path, {"b0", "nucleus_gamma"}, {"b0"})
    b0 = r.number(d, "b0", path, positive=True)
    gamma = r.number(d, "nucleus_gamma", path, default=spec.nucleus_gamma, positive=True)
    return FieldContext(float(b0), float(gamma))


_PROTOCOL_KEYS = {"kind", "tau", "mu", "rabi_hz", "nutation_error", "n_blocks", "duration_t2", "signal", "record_trajectory"}


def _protocol(r: _Reader, doc: Any, path: str, spec: MoleculeSpec) -> tuple[ProtocolParams, str]:
    d = r.section(doc, path, _PROTOCOL_KEYS, {"kind", "tau"})
    kind = r.choice(d, "kind", path, ("conventional", "aeris", "dracaeris"))
    tau = float(r.number(d, "tau", path, positive=True))
    mu = float(r.number(d, "mu", path, default=0.0))
    rabi = float(r.number(d, "rabi_hz", path, default=0.0))
    eps = float(r.number(d, "nutation_error", path, default=0.0))
    n_blocks = r.number(d, "n_blocks", path, default=None, allow_null=True)
    if n_blocks is not None and (int(n_blocks) != n_blocks or n_blocks < 1):
        raise r.fail("must be a positive integer", f"{path}.n_blocks")
    duration = r.number(d, "duration_t2", path, default=None, positive=True, allow_null=True)
    if duration is not None:
        if n_blocks is not None:
            raise r.fail("give either n_blocks or duration_t2, not both", f"{path}.duration_t2")
        n_blocks = math.ceil(duration * spec.t2 / (tau + mu))
    signal = r.choice(d, "signal", path, SIGNALS, default="differential")
    traj = d.get("record_trajectory", False)
    if not isinstance(traj, bool):
        raise r.fail("must be true or false", f"{path}.record_trajectory")
    params = ProtocolParams(kind, tau, mu, rabi, eps, None if n_blocks is None else int(n_blocks), traj)
    try:
        params.validate()
    except ValueError as exc:
        raise r.fail(f"invariant violated: {exc}", path) from None
    return params, signal


def _spectrum(r: _Reader, doc: Any, path: str, default: SpectrumOptions = SpectrumOptions()) -> SpectrumOptions:
    if doc is None:
        return default
    d = r.section(doc, path, {"axis", "zero_fill", "threshold", "mode", "apodization_hz"})
    zf = r.number(d, "zero_fill", path, default=default.zero_fill, positive=True)
    if int(zf) != zf:
        raise r.fail("must be an integer", f"{path}.zero_fill")
    thr = float(r.number(d, "threshold", path, default=default.threshold, positive=True))
    if thr >= 1:
        raise r.fail("must lie in (0, 1)", f"{path}.threshold")
    return SpectrumOptions(
        r.choice(d, "axis", path, AXES, default=default.axis),
        int(zf),
        thr,
        r.choice(d, "mode", path, ("magnitude", "absorption"), default=default.mode),
        r.number(d, "apodization_hz", path, default=default.apodization_hz, allow_null=True),
    )


def _outputs(r: _Reader, doc: Any, kinds: tuple[str, ...], defaults: Mapping[str, str]) -> tuple[OutputSpec, ...]:
    if not isinstance(doc, list):
        raise r.fail("must be a list of {kind, path} objects", "outputs")
    out = []
    for i, item in enumerate(doc):
        path = f"outputs[{i}]"
        d = r.section(item, path, {"kind", "path"}, {"kind"})
        kind = r.choice(d, "kind", path, kinds)
        p = d.get("path", defaults[kind])
        if not isinstance(p, str) or not p:
            raise r.fail("must be a non-empty string", f"{path}.path")
        out.append(OutputSpec(kind, p))
    return tuple(out)


def _check_version(r: _Reader, doc: Any) -> None:
    if not isinstance(doc, Mapping):
        raise SpecError("config must be a JSON object", line=1)
    if "schema_version" not in doc:
        raise r.fail("missing required field", "schema_version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise r.fail(f"unsupported schema version {doc['schema_version']!r} (expected {SCHEMA_VERSION})", "schema_version")


def is_nv_config(doc: Any) -> bool:
    return isinstance(doc, Mapping) and "nv" in doc


def parse_experiment(doc: Any, source: str | None = None, base: Path | None = None) -> ExperimentConfig:
    r = _Reader(source)
    _check_version(r, doc)
    d = r.section(
        doc,
        "",
        {"schema_version", "description", "molecule", "field", "protocol", "spectrum", "reference", "outputs"},
        {"molecule", "field", "protocol"},
    )
    spec = _molecule(r, d["molecule"], base)
    fld = _field(r, d["field"], "field", spec)
    params, signal = _protocol(r, d["protocol"], "protocol", spec)
    opts = _spectrum(r, d.get("spectrum"), "spectrum")
    main = RunSpec(spec, fld, params, signal, opts)
    reference = None
    if d.get("reference") is not None:
        rd = r.section(
            d["reference"],
            "reference",
            {"field", "protocol", "spectrum", "freq_tol_hz", "units", "method", "require"},
            {"protocol"},
        )
        rfield = _field(r, rd["field"], "reference.field", spec) if "field" in rd else fld
        rparams, rsignal = _protocol(r, rd["protocol"], "reference.protocol", spec)
        ropts = _spectrum(r, rd.get("spectrum"), "reference.spectrum", opts)
        reference = ReferenceSpec(
            RunSpec(spec, rfield, rparams, rsignal, ropts),
            float(r.number(rd, "freq_tol_hz", "reference", default=1.0, positive=True)),
            r.choice(rd, "units", "reference", ("hz", "ppm"), default="hz"),
            r.choice(rd, "method", "reference", ("greedy", "bottleneck"), default="greedy"),
            r.choice(rd, "require", "reference", ("both", "reference"), default="both"),
        )
    if "outputs" in d:
        outputs = _outputs(r, d["outputs"], OUTPUT_KINDS, DEFAULT_OUTPUTS)
    else:
        kinds = ["timeseries", "spectrum", "peaks", "svg"] + (["match_report"] if reference else [])
        kinds += ["trajectory"] if params.record_trajectory else []
        outputs = tuple(OutputSpec(k, DEFAULT_OUTPUTS[k]) for k in kinds)
    if any(o.kind == "match_report" for o in outputs) and reference is None:
        raise r.fail("a match_report output needs a 'reference' section", "outputs")
    if any(o.kind == "trajectory" for o in outputs) and not params.record_trajectory:
        raise r.fail("a trajectory output needs protocol.record_trajectory = true", "outputs")
    desc = d.get("description", "")
    return ExperimentConfig(main, reference, outputs, str(desc))


_NV_KEYS = {
    "signal_amplitude",
    "signal_freq",
    "signal_phase",
    "nv_gamma",
    "t2_star",
    "n_field_samples",
    "rng_seed",
    "spacing",
    "signal",
    "theta_grid",
    "sequences",
}


def _theta_grid(r: _Reader, doc: Any) -> tuple[float, ...]:
    path = "nv.theta_grid"
    if isinstance(doc, list):
        vals = []
        for i, v in enumerate(doc):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise r.fail("entries must be numbers", f"{path}[{i}]")
            vals.append(float(v))
    else:
        d = r.section(doc, path, {"start", "stop", "step"}, {"start", "stop", "step"})
        start, stop = float(r.number(d, "start", path)), float(r.number(d, "stop", path))
        step = float(r.number(d, "step", path, positive=True))
        n = int(round((stop - start) / step))
        vals = list(start + step * np.arange(n + 1))
    if not vals:
        raise r.fail("must not be empty", path)
    if min(vals) < 90 or max(vals) > 270:
        raise r.fail("angles must lie within [90, 270] degrees", path)
    return tuple(vals)


def parse_nv(doc: Any, source: str | None = None, base: Path | None = None) -> NVSweepConfig:
    r = _Reader(source)
    _check_version(r, doc)
    d = r.section(doc, "", {"schema_version", "description", "nv", "outputs"}, {"nv"})
    nv = r.section(d["nv"], "nv", _NV_KEYS, {"sequences"})
    defaults = NVRunParams()
    kw = {}
    for key in ("signal_amplitude", "signal_freq", "signal_phase", "nv_gamma", "t2_star"):
        kw[key] = float(r.number(nv, key, "nv", default=getattr(defaults, key)))
    for key in ("n_field_samples", "rng_seed"):
        v = r.number(nv, key, "nv", default=getattr(defaults, key))
        if int(v) != v:
            raise r.fail("must be an integer", f"nv.{key}")
        kw[key] = int(v)
    params = NVRunParams(**kw)
    try:
        params.validate()
    except ValueError as exc:
        raise r.fail(str(exc), "nv") from None
    spacing = float(r.number(nv, "spacing", "nv", default=500e-9, positive=True))
    seqs = []
    if not isinstance(nv["sequences"], list) or not nv["sequences"]:
        raise r.fail("must be a non-empty list", "nv.sequences")
    for i, item in enumerate(nv["sequences"]):
        path = f"nv.sequences[{i}]"
        s = r.section(item, path, {"family", "n_cycles", "file"})
        if "file" in s:
            p = Path(s["file"])
            if base is not None and not p.is_absolute():
                p = base / p
            try:
                seqs.append(DDSequence.load(p))
            except OSError as exc:
                raise r.fail(f"cannot read sequence file: {exc.strerror}", f"{path}.file") from None
            continue
        fam = r.choice(s, "family", path, ("xy8", "rewind2"))
        n = r.number(s, "n_cycles", path, positive=True)
        if int(n) != n:
            raise r.fail("must be a positive integer", f"{path}.n_cycles")
        seqs.append(sequence_by_name(fam, int(n), spacing))
    grid = _theta_grid(r, nv.get("theta_grid", {"start": 90, "stop": 270, "step": 5}))
    signal = r.choice(nv, "signal", "nv", ("odd", "raw"), default="odd")
    if "outputs" in d:
        outputs = _outputs(r, d["outputs"], NV_OUTPUT_KINDS, NV_DEFAULT_OUTPUTS)
    else:
        outputs = tuple(OutputSpec(k, NV_DEFAULT_OUTPUTS[k]) for k in ("sweep", "svg"))
    return NVSweepConfig(params, tuple(seqs), grid, signal, outputs, str(d.get("description", "")))


def load_config_text(path: str | Path) -> tuple[Any, str]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_json(text, str(p)), text


def preset_names() -> list[str]:
    root = resources.files("dracsim") / "data" / "presets"
    return sorted(f.name[:-5] for f in root.iterdir() if f.name.endswith(".json"))


def preset_text(name: str) -> str:
    res = resources.files("dracsim") / "data" / "presets" / f"{name}.json"
    if not res.is_file():
        raise SpecError(f"unknown preset {name!r}; run 'dracsim list-presets'")
    return res.read_text()


__all__ = [
    "SCHEMA_VERSION",
    "ExperimentConfig",
    "NVSweepConfig",
    "OutputSpec",
    "ReferenceSpec",
    "RunSpec",
    "SpectrumOptions",
    "is_nv_config",
    "load_config_text",
    "parse_experiment",
    "parse_nv",
    "preset_names",
    "preset_text",
]
