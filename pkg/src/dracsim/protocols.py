"""Conventional, AERIS and DRACAERIS acquisition loops.

Every block is: free evolution for tau/2, an optional nutation segment of
total length mu (sampled a quarter Rabi period into each pulse), free
evolution for tau/2, then T2 attenuation by ``exp(-(tau + mu) / T2)``.

Because the per-block unitary ``B`` is fixed, the n-th sample is a linear
functional of ``(B^n)^dag rho0 B^n``.  ``run_protocol`` evaluates it in the
eigenbasis of ``B`` (``method="modal"``); ``method="direct"`` steps the
density matrix block by block and is kept as the reference path.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from . import kernels
from .hamiltonians import FieldContext, MoleculeSpec, drive_term, free_hamiltonian
from .spincore import (
    DensityMatrix,
    PropagatorCache,
    ValidationError,
    default_cache,
    evolve,
    expectation,
    total_spin,
)

KINDS = ("conventional", "aeris", "dracaeris")
SIGNALS = ("differential", "forward")

# Sign s in <I_x> + i<I_y> ~ exp(i s 2 pi nu t) for a spin at +nu under the
# propagator convention of ``spincore``; with numpy's FFT sign it puts the
# conventional peak at +nu.
FREQUENCY_SIGN = +1

_INT_TOL = 1e-6


@dataclass(frozen=True)
class ProtocolParams:
    kind: str
    tau: float
    mu: float = 0.0
    rabi_hz: float = 0.0
    nutation_error: float = 0.0
    n_blocks: int | None = None
    record_trajectory: bool = False

    def nutation_cycles(self) -> float:
        """Full 2 pi nutations per pulse (N)."""
        if self.kind == "aeris":
            return self.mu * self.rabi_hz
        if self.kind == "dracaeris":
            return 0.5 * self.mu * self.rabi_hz
        return 0.0

    def validate(self) -> "ProtocolParams":
        if self.kind not in KINDS:
            raise ValidationError(f"protocol kind must be one of {KINDS}, got {self.kind!r}")
        if not self.tau > 0:
            raise ValidationError("tau must be positive")
        if self.n_blocks is not None and self.n_blocks < 1:
            raise ValidationError("n_blocks must be a positive integer")
        if self.kind == "conventional":
            if self.mu != 0:
                raise ValidationError("conventional detection requires mu = 0")
            return self
        if not self.rabi_hz > 0:
            raise ValidationError(f"{self.kind} requires rabi_hz > 0")
        n = self.nutation_cycles()
        label = "mu * rabi_hz" if self.kind == "aeris" else "(mu / 2) * rabi_hz"
        if n < 1 - _INT_TOL or abs(n - round(n)) > _INT_TOL * max(1.0, n):
            raise ValidationError(
                f"{self.kind} requires {label} to be a positive integer, got {n:.6g}"
            )
        return self

    def blocks_for(self, t2: float) -> int:
        if self.n_blocks is not None:
            return int(self.n_blocks)
        return int(math.ceil(3.0 * t2 / (self.tau + self.mu)))

    @property
    def t_max(self) -> float:
        """Sampling instant inside each pulse: first maximum of the nutation."""
        return 0.25 / self.rabi_hz

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class TimeSeries:
    """One sample per acquisition block.

    Conventional runs hold ``<F_x> + i<F_y>``; longitudinal runs hold the real
    ``<F_z>`` signal with zero imaginary part.  ``forward`` / ``rewind`` keep the
    two raw DRACAERIS readings.
    """

    samples: NDArray[np.complex128]
    dwell_free: float
    dwell_total: float
    kind: str
    params: dict[str, Any] = field(default_factory=dict)
    forward: NDArray[np.float64] | None = None
    rewind: NDArray[np.float64] | None = None

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def is_real(self) -> bool:
        return self.kind in ("aeris", "dracaeris")

    def times(self, axis: str = "free_time") -> NDArray[np.float64]:
        dwell = self.dwell_free if axis == "free_time" else self.dwell_total
        return dwell * np.arange(len(self.samples))


def initialize_state(spec: MoleculeSpec, polarization: float = 1.0) -> DensityMatrix:
    """All spins along +y: ``1/d + polarization * (2/d) F_y``.

    With ``polarization = 1``, ``<F_y> = n_spins / 2``.  Only the traceless part
    drives any signal, so outputs are linear in ``polarization``.
    """
    d = spec.dim
    fy = total_spin(spec.n_spins, "y")
    return DensityMatrix(np.eye(d, dtype=complex) / d + polarization * (2.0 / d) * fy)


@dataclass
class _Plan:
    block: NDArray  # per-block unitary, time-ordered product
    probes: list[tuple[NDArray, NDArray]]  # (unitary to sampling instant, observable)
    segments: list[tuple[NDArray, float, str]]  # (Hamiltonian, duration, label)


def _plan(
    spec: MoleculeSpec,
    field: FieldContext,
    params: ProtocolParams,
    cache: PropagatorCache,
) -> _Plan:
    n = spec.n_spins
    h0 = free_hamiltonian(spec, field)
    half = 0.5 * params.tau
    uf = cache.propagator(h0, half)
    fz = total_spin(n, "z")
    if params.kind == "conventional":
        obs = total_spin(n, "x") + 1j * total_spin(n, "y")
        return _Plan(uf @ uf, [(uf, obs)], [(h0, half, "free"), (h0, half, "free")])

    eps = params.nutation_error
    hf = h0 + drive_term(n, params.rabi_hz, 0.0, eps)
    pulse = params.mu if params.kind == "aeris" else 0.5 * params.mu
    tm = params.t_max
    f1 = cache.propagator(hf, tm)
    f2 = cache.propagator(hf, pulse - tm)
    if params.kind == "aeris":
        return _Plan(
            uf @ f1 @ f2 @ uf,
            [(uf @ f1, fz)],
            [(h0, half, "free"), (hf, pulse, "drive"), (h0, half, "free")],
        )
    hr = h0 + drive_term(n, params.rabi_hz, math.pi, eps)
    r1 = cache.propagator(hr, tm)
    r2 = cache.propagator(hr, pulse - tm)
    fwd = uf @ f1 @ f2
    return _Plan(
        fwd @ r1 @ r2 @ uf,
        [(uf @ f1, fz), (fwd @ r1, fz)],
        [(h0, half, "free"), (hf, pulse, "drive+"), (hr, pulse, "drive-"), (h0, half, "free")],
    )


def _heisenberg(probe: NDArray, obs: NDArray) -> NDArray:
    # tr(P^dag rho P O) = tr(rho P O P^dag)
    return probe @ obs @ probe.conj().T


def _modal_traces(
    rho0: NDArray, block: NDArray, observables: Sequence[NDArray], n_blocks: int
) -> list[NDArray]:
    t, v = scipy.linalg.schur(block, output="complex")
    d = np.diag(t)
    d = d / np.abs(d)
    r = v.conj().T @ rho0 @ v
    modes = (d.conj()[:, None] * d[None, :]).ravel()
    out = []
    for obs in observables:
        q = v.conj().T @ obs @ v
        coeffs = (r * q.T).ravel()
        keep = np.abs(coeffs) > 1e-15 * max(np.max(np.abs(coeffs)), 1e-300)
        out.append(kernels.modal_series(coeffs[keep], modes[keep], n_blocks))
    return out


def _direct_traces(
    rho0: NDArray, block: NDArray, observables: Sequence[NDArray], n_blocks: int
) -> list[NDArray]:
    out = [np.empty(n_blocks, dtype=complex) for _ in observables]
    rho = DensityMatrix(rho0)
    obs_t = [o.T for o in observables]
    for k in range(n_blocks):
        for series, ot in zip(out, obs_t):
            series[k] = np.sum(rho.entries * ot)
        rho = evolve(rho, block)
    return out


def run_protocol(
    spec: MoleculeSpec,
    field: FieldContext,
    params: ProtocolParams,
    *,
    signal: str = "differential",
    method: str = "modal",
    polarization: float = 1.0,
    cache: PropagatorCache | None = None,
) -> TimeSeries:
    """Simulate one acquisition train and return its sampled signal.

    ``signal`` selects the DRACAERIS combination: ``"differential"`` records
    ``(s_forward - s_rewind) / 2``, ``"forward"`` records ``s_forward`` only.
    Safe to call concurrently; the shared propagator cache is locked.
    """
    params.validate()
    if signal not in SIGNALS:
        raise ValidationError(f"signal must be one of {SIGNALS}")
    if method not in ("modal", "direct"):
        raise ValidationError("method must be 'modal' or 'direct'")
    cache = cache or default_cache
    n_blocks = params.blocks_for(spec.t2)
    plan = _plan(spec, field, params, cache)
    rho0 = initialize_state(spec, polarization).entries
    observables = [_heisenberg(p, o) for p, o in plan.probes]
    traces = (_modal_traces if method == "modal" else _direct_traces)(
        rho0, plan.block, observables, n_blocks
    )
    with np.errstate(under="ignore"):
        decay = np.exp(-np.arange(n_blocks) * (params.tau + params.mu) / spec.t2)

    forward = rewind = None
    if params.kind == "conventional":
        samples = traces[0] * decay
    elif params.kind == "aeris":
        samples = (traces[0].real * decay).astype(complex)
    else:
        forward = traces[0].real * decay
        rewind = traces[1].real * decay
        combined = 0.5 * (forward - rewind) if signal == "differential" else forward
        samples = combined.astype(complex)
    snapshot = params.to_dict() | {
        "n_blocks": n_blocks,
        "molecule": spec.name,
        "b0": field.b0,
        "reference_freq": field.reference_freq,
        "signal": signal,
        "frequency_sign": FREQUENCY_SIGN,
    }
    return TimeSeries(
        samples,
        params.tau,
        params.tau + params.mu,
        params.kind,
        snapshot,
        forward,
        rewind,
    )


@dataclass
class Trajectory:
    """Densely sampled total magnetisation through the whole train."""

    t: NDArray[np.float64]
    mx: NDArray[np.float64]
    my: NDArray[np.float64]
    mz: NDArray[np.float64]
    block_end: NDArray[np.int64]  # indices of the last sample of each block
    segment: list[str]


def trajectory(
    spec: MoleculeSpec,
    field: FieldContext,
    params: ProtocolParams,
    samples_per_segment: int = 20,
    cache: PropagatorCache | None = None,
) -> Trajectory:
    params.validate()
    if not params.record_trajectory:
        raise ValidationError("trajectory requires record_trajectory = true")
    if samples_per_segment < 1:
        raise ValidationError("samples_per_segment must be >= 1")
    cache = cache or default_cache
    n = spec.n_spins
    ops = [total_spin(n, a) for a in "xyz"]
    plan = _plan(spec, field, params, cache)
    steps = [
        (cache.propagator(h, dur / samples_per_segment), dur / samples_per_segment, label)
        for h, dur, label in plan.segments
    ]
    n_blocks = params.blocks_for(spec.t2)
    block_decay = math.exp(-(params.tau + params.mu) / spec.t2)
    rho = initialize_state(spec)
    t = 0.0
    rows = [(0.0, *(expectation(rho, o) for o in ops))]
    labels = ["start"]
    ends = []
    for _ in range(n_blocks):
        for u, dt, label in steps:
            for _ in range(samples_per_segment):
                rho = evolve(rho, u)
                t += dt
                rows.append((t, *(expectation(rho, o) for o in ops)))
                labels.append(label)
        rho = rho.with_scale(rho.scale * block_decay)
        ends.append(len(rows) - 1)
    arr = np.array(rows)
    return Trajectory(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], np.array(ends), labels)


def run_many(
    jobs: Iterable[tuple[MoleculeSpec, FieldContext, ProtocolParams]],
    threads: int = 1,
    **kwargs: Any,
) -> list[TimeSeries]:
    """Run independent protocols, optionally on a thread pool; order preserved."""
    jobs = list(jobs)
    if threads <= 1 or len(jobs) < 2:
        return [run_protocol(*job, **kwargs) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: run_protocol(*job, **kwargs), jobs))
