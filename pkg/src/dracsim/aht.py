"""First-order average Hamiltonian of a nutation-interrupted acquisition block.

Over one block (free tau/2, drive, free tau/2) the toggling frame of the drive
leaves the free-precession terms untouched and rotates each Zeeman term
during the drive.  Scalar couplings ``I_j . I_k`` commute with the collective
drive, so they pass through unscaled.  A drive segment of duration ``T`` and
nutation angle ``Theta = 2 pi rabi T`` averages ``I_z`` to::

    I_z sin(Theta)/Theta + I_y (1 - cos(Theta))/Theta

which vanishes for ``Theta = 2 pi N``.  With the ``exp(+iHt)`` propagator
convention of ``spincore`` the ``I_y`` term carries a plus sign.  A rewind
pulse started from the frame left by the forward pulse gives the same
average, so DRACAERIS simply doubles the drive time at half the angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import simpson

from .hamiltonians import FieldContext, MoleculeSpec, coupling_hamiltonian, drive_term, free_hamiltonian
from .protocols import _heisenberg, _modal_traces, initialize_state, TimeSeries
from .spectra import Spectrum, fourier_transform
from .spincore import ValidationError, default_cache, propagator, spin_operator, total_spin

KINDS = ("aeris", "dracaeris")


@dataclass(frozen=True)
class AverageHamiltonianTerms:
    scaled_zeeman: NDArray[np.complex128]  # tau/(tau+mu) * sum w_i Iz_i
    full_j: NDArray[np.complex128]
    residual: NDArray[np.complex128]

    @property
    def total(self) -> NDArray[np.complex128]:
        return self.scaled_zeeman + self.full_j + self.residual


def _pulse_length(mu: float, kind: str) -> float:
    if kind not in KINDS:
        raise ValidationError(f"kind must be one of {KINDS}, got {kind!r}")
    return mu if kind == "aeris" else 0.5 * mu


def drive_average_factors(theta: float) -> tuple[float, float]:
    """``(sin(Theta)/Theta, (1 - cos(Theta))/Theta)`` with the Theta -> 0 limit."""
    if abs(theta) < 1e-8:
        return 1.0, 0.5 * theta
    return math.sin(theta) / theta, 2.0 * math.sin(0.5 * theta) ** 2 / theta


def average_hamiltonian(
    spec: MoleculeSpec,
    field: FieldContext,
    tau: float,
    mu: float,
    rabi_hz: float,
    kind: str = "dracaeris",
) -> AverageHamiltonianTerms:
    """Analytic first-order average Hamiltonian (rad/s) for one block.

    The drive amplitude enters only through the nutation angle of each
    pulse; nutation errors are not part of this model.
    """
    if tau <= 0 or mu < 0:
        raise ValidationError("need tau > 0 and mu >= 0")
    if mu > 0 and rabi_hz <= 0:
        raise ValidationError("rabi_hz must be positive when mu > 0")
    n = spec.n_spins
    w = 2 * np.pi * spec.shifts_hz(field)
    period = tau + mu
    zeeman = sum(wi * spin_operator(n, i, "z") for i, wi in enumerate(w))
    iy = sum(wi * spin_operator(n, i, "y") for i, wi in enumerate(w))
    zeeman = np.asarray(zeeman, dtype=complex)
    iy = np.asarray(iy, dtype=complex)
    if mu == 0:
        residual = np.zeros_like(zeeman)
    else:
        theta = 2 * np.pi * rabi_hz * _pulse_length(mu, kind)
        s1, s2 = drive_average_factors(theta)
        residual = (mu / period) * (s1 * zeeman + s2 * iy)
    return AverageHamiltonianTerms((tau / period) * zeeman, np.asarray(coupling_hamiltonian(spec), dtype=complex), residual)


def residual_bound_constant(n_spins: int) -> float:
    """C in ``max|residual| <= C max|w_i| / (Omega (tau + mu))``, Omega in rad/s.

    ``|sin Theta| <= 1`` and ``2 sin^2(Theta/2) <= 2`` bound the two drive
    factors by 1/Theta and 2/Theta.  The Iz part is diagonal with entries up
    to ``n/2 max|w|``; each Iy entry involves a single spin.  DRACAERIS halves
    Theta, giving ``max(n, 2)``, which also covers AERIS.
    """
    return float(max(n_spins, 2))


def toggling_frame_average(
    spec: MoleculeSpec,
    field: FieldContext,
    tau: float,
    mu: float,
    rabi_hz: float,
    kind: str = "dracaeris",
    steps: int = 10_000,
) -> NDArray[np.complex128]:
    """Brute-force block average of the toggling-frame Hamiltonian.

    The free segments have a constant frame and are integrated exactly; the
    ``steps`` Simpson intervals are shared among the drive segments.  The drive
    frame is built from the numerical drive propagator, not from the closed
    form used by ``average_hamiltonian``.
    """
    h0 = np.asarray(free_hamiltonian(spec, field), dtype=complex)
    period = tau + mu
    integral = tau * h0
    if mu > 0:
        n = spec.n_spins
        pulse = _pulse_length(mu, kind)
        phases = [0.0] if kind == "aeris" else [0.0, math.pi]
        per_pulse = max(2 * (steps // (2 * len(phases))), 2)  # Simpson needs an even count
        frame = np.eye(2**n, dtype=complex)
        for phase in phases:
            drive = drive_term(n, rabi_hz, phase, 0.0)
            ts = np.linspace(0.0, pulse, per_pulse + 1)
            vals = np.empty((len(ts),) + h0.shape, dtype=complex)
            for i, t in enumerate(ts):
                u = frame @ propagator(drive, t)
                vals[i] = u @ h0 @ u.conj().T
            integral = integral + simpson(vals, x=ts, axis=0)
            frame = frame @ propagator(drive, pulse)
    return integral / period


def aht_spectrum(
    spec: MoleculeSpec,
    field: FieldContext,
    tau: float,
    mu: float,
    rabi_hz: float,
    n_blocks: int | None = None,
    *,
    kind: str = "dracaeris",
    include_residual: bool = True,
    zero_fill_factor: int = 4,
) -> Spectrum:
    """Conventional-style detection under the average Hamiltonian.

    Samples ``<F_x> + i<F_y>`` half a block into each block, so ``mu = 0``
    reproduces the conventional run sample for sample, and transforms on the
    total-time axis.
    """
    return fourier_transform(
        aht_series(spec, field, tau, mu, rabi_hz, n_blocks, kind=kind, include_residual=include_residual),
        "total_time",
        zero_fill_factor,
    )


def aht_series(
    spec: MoleculeSpec,
    field: FieldContext,
    tau: float,
    mu: float,
    rabi_hz: float,
    n_blocks: int | None = None,
    *,
    kind: str = "dracaeris",
    include_residual: bool = True,
) -> TimeSeries:
    terms = average_hamiltonian(spec, field, tau, mu, rabi_hz, kind)
    h = terms.total if include_residual else terms.scaled_zeeman + terms.full_j
    period = tau + mu
    if n_blocks is None:
        n_blocks = math.ceil(3 * spec.t2 / period)
    if n_blocks < 1:
        raise ValidationError("n_blocks must be positive")
    n = spec.n_spins
    block = default_cache.propagator(h, period)
    probe = default_cache.propagator(h, 0.5 * period)
    obs = _heisenberg(probe, total_spin(n, "x") + 1j * total_spin(n, "y"))
    rho0 = initialize_state(spec).entries
    (trace,) = _modal_traces(rho0, block, [obs], n_blocks)
    decay = np.exp(-np.arange(n_blocks) * period / spec.t2)
    params = {
        "kind": "aht",
        "source_kind": kind,
        "tau": tau,
        "mu": mu,
        "rabi_hz": rabi_hz,
        "n_blocks": n_blocks,
        "include_residual": include_residual,
        "molecule": spec.name,
        "b0": field.b0,
        "reference_freq": field.reference_freq,
    }
    return TimeSeries(trace * decay, period, period, "aht", params)
