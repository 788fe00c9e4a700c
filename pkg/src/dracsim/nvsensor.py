"""Two-level NV ensemble running dynamical-decoupling AC magnetometry.

The sensor starts along +x after an ideal pi/2 pulse.  Between pulses it
precesses about z by the phase accumulated from a static detuning and the
AC test field; pulses are instantaneous rotations by ``theta`` about an
in-plane axis.  A final ideal pi/2 about x maps the y component (the signal
quadrature) onto z, so for perfect pulses ``<M_z> = sin(phi) / 2``.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from numpy.typing import NDArray

from . import kernels
from .spincore import ValidationError

NV_GAMMA_HZ_PER_T = 28.024e9
AXIS_PHASE = {"x": 0.0, "y": 0.5 * math.pi, "-x": math.pi, "-y": 1.5 * math.pi}
XY8_PATTERN = "xyxyyxyx"
REWIND2_PATTERN = "xxxx"
SIGNALS = ("odd", "raw")


@dataclass(frozen=True)
class Pulse:
    axis: str
    time: float


@dataclass(frozen=True)
class DDSequence:
    """Pulse program on the NV.

    ``reversal_times`` are instants at which the AC signal clock runs
    backwards: the field after a reversal at ``t_r`` is the field at
    ``2 t_r - t``.  Rewind2 uses one per cycle to model the reversed nuclear
    nutation seen by the sensor.
    """

    name: str
    pulses: tuple[Pulse, ...]
    total_time: float
    reversal_times: tuple[float, ...] = ()

    def __post_init__(self):
        times = [p.time for p in self.pulses]
        if self.total_time <= 0:
            raise ValidationError("total_time must be positive")
        if any(t <= 0 or t >= self.total_time for t in times):
            raise ValidationError("pulse times must lie strictly inside (0, total_time)")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("pulse times must be strictly increasing")
        if any(p.axis not in AXIS_PHASE for p in self.pulses):
            raise ValidationError(f"pulse axis must be one of {sorted(AXIS_PHASE)}")
        rev = list(self.reversal_times)
        if any(t <= 0 or t >= self.total_time for t in rev) or any(b <= a for a, b in zip(rev, rev[1:])):
            raise ValidationError("reversal times must be increasing and inside (0, total_time)")

    @property
    def n_pulses(self) -> int:
        return len(self.pulses)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "total_time": self.total_time,
            "pulses": [{"axis": p.axis, "time": p.time} for p in self.pulses],
            "reversal_times": list(self.reversal_times),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "DDSequence":
        try:
            pulses = tuple(Pulse(str(p["axis"]), float(p["time"])) for p in doc["pulses"])
            return cls(str(doc["name"]), pulses, float(doc["total_time"]), tuple(float(t) for t in doc.get("reversal_times", [])))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad sequence descriptor: {exc}") from exc

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DDSequence":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _uniform(name: str, pattern: str, spacing: float) -> DDSequence:
    pulses = tuple(Pulse(ax, (k + 0.5) * spacing) for k, ax in enumerate(pattern))
    return DDSequence(name, pulses, len(pattern) * spacing)


def xy8(n_cycles: int, spacing: float = 500e-9) -> DDSequence:
    """XY8-N: ``X Y X Y Y X Y X`` repeated, pulses at the centres of ``spacing`` slots."""
    if n_cycles < 1:
        raise ValidationError("n_cycles must be >= 1")
    return _uniform(f"xy8-{n_cycles}", XY8_PATTERN * n_cycles, spacing)


def rewind2(n_cycles: int, spacing: float = 500e-9, pattern: str = REWIND2_PATTERN) -> DDSequence:
    """Rewind2-N: N four-pulse cycles at XY4 timing with a signal reversal mid-cycle.

    Each cycle senses the forward nutation for its first half and the
    reversed nutation for its second half.  ``rewind2(2N)`` has the same
    sensing time as ``xy8(N)``.
    """
    if n_cycles < 1:
        raise ValidationError("n_cycles must be >= 1")
    if len(pattern) != 4 or any(a not in "xy" for a in pattern):
        raise ValidationError("rewind2 pattern must be four of 'x'/'y'")
    cycle = 4 * spacing
    seq = _uniform(f"rewind2-{n_cycles}", pattern * n_cycles, spacing)
    return replace(seq, reversal_times=tuple((c + 0.5) * cycle for c in range(n_cycles)))


def sequence_by_name(family: str, n_cycles: int, spacing: float = 500e-9) -> DDSequence:
    if family == "xy8":
        return xy8(n_cycles, spacing)
    if family == "rewind2":
        return rewind2(n_cycles, spacing)
    raise ValidationError(f"unknown sequence family {family!r}")


@dataclass(frozen=True)
class NVRunParams:
    signal_amplitude: float = 50e-12  # T
    signal_freq: float = 1e6  # Hz
    signal_phase: float = 0.5 * math.pi  # zero crossings on the pulses
    nv_gamma: float = NV_GAMMA_HZ_PER_T
    t2_star: float = 100e-9
    n_field_samples: int = 100
    pi_rotation_deg: float = 180.0
    rng_seed: int = 0

    def validate(self) -> "NVRunParams":
        if self.signal_amplitude < 0:
            raise ValidationError("signal_amplitude must be >= 0")
        if self.signal_freq <= 0 or self.nv_gamma <= 0:
            raise ValidationError("signal_freq and nv_gamma must be positive")
        if self.t2_star <= 0:
            raise ValidationError("t2_star must be positive (use math.inf for no dephasing)")
        if self.n_field_samples < 1:
            raise ValidationError("n_field_samples must be >= 1")
        if not 90.0 <= self.pi_rotation_deg <= 270.0:
            raise ValidationError("pi_rotation_deg must lie in [90, 270]")
        return self

    @property
    def detuning_sigma_hz(self) -> float:
        """Gaussian detuning width ``1 / (sqrt(2) pi T2*)``."""
        return 1.0 / (math.sqrt(2.0) * math.pi * self.t2_star)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _clock(t: float, reversals: Sequence[float]) -> tuple[float, float]:
    """Signal clock value and slope at ``t`` (reflections at each reversal)."""
    c, s = t, 1.0
    for r in reversals:
        if t > r:
            c, s = 2 * r - c, -s
    return c, s


def segment_signal_phases(seq: DDSequence, params: NVRunParams) -> tuple[NDArray, NDArray]:
    """Per-segment AC phase ``2 pi gamma int B dt`` and segment durations.

    Segment ``k`` runs from pulse ``k-1`` (or 0) to pulse ``k`` (or the end).
    """
    edges = [0.0] + [p.time for p in seq.pulses] + [seq.total_time]
    w = 2 * math.pi * params.signal_freq
    amp = 2 * math.pi * params.nv_gamma * params.signal_amplitude
    phases = np.zeros(len(edges) - 1)
    for k, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        cuts = [a] + [r for r in seq.reversal_times if a < r < b] + [b]
        total = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (lo + hi)
            _, slope = _clock(mid, seq.reversal_times)
            c_lo = _clock(lo, seq.reversal_times)[0]
            c_hi = c_lo + slope * (hi - lo)
            # int sin(w c + p) dt with dc = slope dt
            total += slope * (math.cos(w * c_lo + params.signal_phase) - math.cos(w * c_hi + params.signal_phase)) / w
        phases[k] = amp * total
    return phases, np.diff(edges)


def _ensemble(seq: DDSequence, params: NVRunParams, detunings_hz: NDArray, amplitude_sign: float = 1.0) -> NDArray:
    phases, durations = segment_signal_phases(seq, params)
    axes = np.array([AXIS_PHASE[p.axis] for p in seq.pulses])
    return kernels.dd_ensemble(amplitude_sign * phases, durations, axes, math.radians(params.pi_rotation_deg), detunings_hz)


def run_dd(seq: DDSequence, params: NVRunParams, b0_offset: float = 0.0, signal: str = "raw") -> float:
    """Final ``<M_z>`` for one static field offset (tesla).

    ``signal="odd"`` returns the part odd in the AC amplitude,
    ``(M(+A) - M(-A)) / 2``, which removes the amplitude-independent
    background left by imperfect pulses.
    """
    params.validate()
    det = np.array([params.nv_gamma * b0_offset])
    if signal == "raw":
        return float(_ensemble(seq, params, det)[0])
    if signal == "odd":
        return float(0.5 * (_ensemble(seq, params, det)[0] - _ensemble(seq, params, det, -1.0)[0]))
    raise ValidationError(f"signal must be one of {SIGNALS}")


def draw_detunings(params: NVRunParams) -> NDArray[np.float64]:
    """Gaussian static detunings (Hz); deterministic in ``rng_seed``."""
    rng = np.random.default_rng(params.rng_seed)
    if math.isinf(params.t2_star):
        return np.zeros(params.n_field_samples)
    return rng.normal(0.0, params.detuning_sigma_hz, params.n_field_samples)


@dataclass(frozen=True)
class EnsembleResult:
    mean: float
    stderr: float
    values: NDArray[np.float64] = field(repr=False)


def dephasing_average(
    seq: DDSequence, params: NVRunParams, signal: str = "odd", detunings_hz: NDArray | None = None
) -> EnsembleResult:
    """Mean ``<M_z>`` over Gaussian static detunings.

    The same detuning draw is used for ``+A`` and ``-A`` in ``signal="odd"``,
    so the background cancels sample by sample.
    """
    params.validate()
    det = draw_detunings(params) if detunings_hz is None else np.asarray(detunings_hz, dtype=float)
    if signal == "raw":
        vals = _ensemble(seq, params, det)
    elif signal == "odd":
        vals = 0.5 * (_ensemble(seq, params, det) - _ensemble(seq, params, det, -1.0))
    else:
        raise ValidationError(f"signal must be one of {SIGNALS}")
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return EnsembleResult(float(vals.mean()), se, vals)


@dataclass
class SweepResult:
    family: str
    n_cycles: int
    theta_deg: NDArray[np.float64]
    mean_mz: NDArray[np.float64]
    stderr_mz: NDArray[np.float64]
    signal: str
    params: dict[str, Any]

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.mean_mz)))

    @property
    def normalized(self) -> NDArray[np.float64]:
        s = self.scale
        return self.mean_mz / s if s > 0 else np.zeros_like(self.mean_mz)

    def normalized_to(self, theta: float = 180.0) -> NDArray[np.float64]:
        """Normalisation by the value at ``theta`` (zero-error by default)."""
        i = int(np.argmin(np.abs(self.theta_deg - theta)))
        ref = self.mean_mz[i]
        if ref == 0:
            raise ValidationError("reference value is zero")
        return self.mean_mz / ref


def sweep_sequence(
    seq: DDSequence,
    params: NVRunParams,
    theta_grid: Sequence[float],
    *,
    signal: str = "odd",
    threads: int = 1,
    family: str = "",
    n_cycles: int = 0,
) -> SweepResult:
    """Dephasing-averaged ``<M_z>`` of ``seq`` at each pi-pulse angle.

    All grid points share one detuning draw; points are evaluated as an
    ordered parallel map, so results do not depend on ``threads``.
    """
    grid = np.asarray(theta_grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("theta grid is empty")
    if np.any(grid < 90) or np.any(grid > 270):
        raise ValidationError("theta grid must lie within [90, 270] degrees")
    params.validate()
    det = draw_detunings(params)

    def point(theta: float) -> EnsembleResult:
        return dephasing_average(seq, replace(params, pi_rotation_deg=float(theta)), signal, det)

    if threads > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(point, grid))
    else:
        results = [point(t) for t in grid]
    return SweepResult(
        family or seq.name,
        n_cycles,
        grid,
        np.array([r.mean for r in results]),
        np.array([r.stderr for r in results]),
        signal,
        params.to_dict() | {"sequence": seq.name},
    )


def error_sweep(
    family: str,
    n_cycles: int,
    params: NVRunParams,
    theta_grid: Sequence[float],
    *,
    signal: str = "odd",
    threads: int = 1,
    spacing: float = 500e-9,
) -> SweepResult:
    """Pulse-error sweep of a named sequence family (``xy8`` or ``rewind2``)."""
    seq = sequence_by_name(family, n_cycles, spacing)
    res = sweep_sequence(seq, params, theta_grid, signal=signal, threads=threads, family=family, n_cycles=n_cycles)
    res.params["spacing"] = spacing
    return res


def plateau_width(theta: NDArray, normalized: NDArray, level: float = 0.8) -> float:
    """Width (deg) of the contiguous region around the maximum where ``normalized >= level``.

    Edges are located by linear interpolation between grid points.
    """
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(normalized, dtype=float)
    k = int(np.argmax(y))
    if y[k] < level:
        return 0.0
    lo = k
    while lo > 0 and y[lo - 1] >= level:
        lo -= 1
    hi = k
    while hi < len(y) - 1 and y[hi + 1] >= level:
        hi += 1
    left = theta[lo]
    if lo > 0:
        left = theta[lo - 1] + (level - y[lo - 1]) / (y[lo] - y[lo - 1]) * (theta[lo] - theta[lo - 1])
    right = theta[hi]
    if hi < len(y) - 1:
        right = theta[hi] + (y[hi] - level) / (y[hi] - y[hi + 1]) * (theta[hi + 1] - theta[hi])
    return float(right - left)
