"""Fourier transforms, peak picking and peak-list comparison."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linear_sum_assignment

from .protocols import TimeSeries
from .spincore import ValidationError

AXES = ("free_time", "total_time")


@dataclass
class Spectrum:
    freqs_hz: NDArray[np.float64]
    amplitudes: NDArray[np.complex128]
    axis: str
    dwell: float
    n_samples: int
    one_sided: bool = False
    ppm_reference: float | None = None  # Hz of the 0 ppm carrier
    provenance: dict[str, Any] = field(default_factory=dict)
    phase0: float = 0.0  # phase of the first time-domain sample

    def __post_init__(self):
        if len(self.freqs_hz) != len(self.amplitudes):
            raise ValidationError("frequency and amplitude arrays differ in length")

    @property
    def magnitude(self) -> NDArray[np.float64]:
        return np.abs(self.amplitudes)

    @property
    def absorption(self) -> NDArray[np.float64]:
        """Real part after removing the zero-order phase of the first sample."""
        return np.real(self.amplitudes * np.exp(-1j * self.phase0))

    @property
    def bin_hz(self) -> float:
        n_pad = 2 * (len(self.freqs_hz) - 1) if self.one_sided else len(self.freqs_hz)
        return 1.0 / (n_pad * self.dwell)

    @property
    def freqs_ppm(self) -> NDArray[np.float64] | None:
        if self.ppm_reference is None:
            return None
        return self.freqs_hz / self.ppm_reference * 1e6


def fourier_transform(
    ts: TimeSeries,
    axis: str = "free_time",
    zero_fill_factor: int = 4,
    apodization_hz: float | None = None,
) -> Spectrum:
    """DFT of the sampled signal on the chosen dwell convention.

    Real (longitudinal) signals return the non-negative half only; complex
    (conventional) signals return the full, centred axis.  No normalisation
    is applied, so ``sum |x|^2 == sum |X|^2 / n`` for ``zero_fill_factor=1``.
    ``apodization_hz`` applies ``exp(-pi * lb * t)`` line broadening.
    """
    if axis not in AXES:
        raise ValidationError(f"axis must be one of {AXES}, got {axis!r}")
    if zero_fill_factor < 1 or int(zero_fill_factor) != zero_fill_factor:
        raise ValidationError("zero_fill_factor must be an integer >= 1")
    if len(ts.samples) == 0:
        raise ValidationError("time series is empty")
    dwell = ts.dwell_free if axis == "free_time" else ts.dwell_total
    x = np.asarray(ts.samples, dtype=complex)
    if apodization_hz:
        x = x * np.exp(-np.pi * apodization_hz * dwell * np.arange(len(x)))
    n_pad = int(zero_fill_factor) * len(x)
    spec = np.fft.fft(x, n_pad)
    freqs = np.fft.fftfreq(n_pad, dwell)
    ref = ts.params.get("reference_freq")
    phase0 = float(np.angle(x[0])) if x[0] != 0 else 0.0
    common = dict(
        axis=axis, dwell=dwell, n_samples=len(x), ppm_reference=ref, provenance=dict(ts.params), phase0=phase0
    )
    if ts.is_real:
        half = n_pad // 2 + 1
        f = np.abs(freqs[:half])  # fftfreq labels the Nyquist bin negative
        return Spectrum(f, spec[:half], one_sided=True, **common)
    return Spectrum(np.fft.fftshift(freqs), np.fft.fftshift(spec), **common)


def spectral_energy(spectrum: Spectrum) -> float:
    """Energy of the underlying time series recovered from an unpadded spectrum."""
    mag2 = np.abs(spectrum.amplitudes) ** 2
    n = spectrum.n_samples
    if not spectrum.one_sided:
        return float(mag2.sum() / n)
    # one-sided real data: interior bins appear twice in the full transform
    weights = np.full(len(mag2), 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    return float((weights * mag2).sum() / n)


@dataclass(frozen=True)
class Peak:
    freq_hz: float
    amplitude: float
    fwhm_hz: float
    freq_ppm: float | None = None


@dataclass
class PeakList:
    peaks: list[Peak]
    bin_hz: float = float("nan")
    ppm_reference: float | None = None

    def __len__(self) -> int:
        return len(self.peaks)

    def __iter__(self):
        return iter(self.peaks)

    @property
    def freqs(self) -> NDArray[np.float64]:
        return np.array([p.freq_hz for p in self.peaks])


def _half_crossing(mag: NDArray, start: int, step: int, level: float) -> float | None:
    """Fractional index where ``mag`` first drops below ``level`` walking from ``start``."""
    i = start
    while 0 <= i + step < len(mag):
        j = i + step
        if mag[j] < level:
            # linear interpolation between i and j
            frac = (mag[i] - level) / (mag[i] - mag[j])
            return i + step * frac
        i = j
    return None


def find_peaks(spectrum: Spectrum, rel_threshold: float = 0.05, mode: str = "magnitude") -> PeakList:
    """Local maxima of ``|A|`` above ``rel_threshold * max|A|``.

    Positions and heights come from a 3-point parabola through the maximum
    and its neighbours; FWHM from linear interpolation of the half-height
    crossings (NaN when a crossing falls off the axis).

    ``mode="absorption"`` picks peaks on ``Spectrum.absorption`` instead. For a
    damped sinusoid this is the Lorentzian whose FWHM is ``1/(pi T2)``; the
    magnitude line is sqrt(3) times wider.
    """
    if not 0 < rel_threshold < 1:
        raise ValidationError("rel_threshold must lie in (0, 1)")
    if mode not in ("magnitude", "absorption"):
        raise ValidationError("mode must be 'magnitude' or 'absorption'")
    mag = spectrum.magnitude if mode == "magnitude" else spectrum.absorption
    out: list[Peak] = []
    if len(mag) < 3 or not np.any(mag > 0):  # also covers an all-negative absorption trace
        return PeakList(out, spectrum.bin_hz if len(mag) > 1 else float("nan"), spectrum.ppm_reference)
    floor = rel_threshold * mag.max()
    df = spectrum.bin_hz
    f = spectrum.freqs_hz
    if spectrum.one_sided:
        # mirror across 0 Hz so a line at DC is an interior maximum
        mag = np.concatenate([mag[1:2], mag])
        f = np.concatenate([-f[1:2], f])
    interior = (mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:]) & (mag[1:-1] > floor)
    for k in np.flatnonzero(interior) + 1:
        a, b, c = mag[k - 1], mag[k], mag[k + 1]
        denom = a - 2 * b + c
        p = 0.5 * (a - c) / denom if denom != 0 else 0.0
        height = b - 0.25 * (a - c) * p
        left = _half_crossing(mag, k, -1, height / 2)
        right = _half_crossing(mag, k, +1, height / 2)
        fwhm = (right - left) * df if left is not None and right is not None else float("nan")
        freq = f[k] + p * df
        ppm = float(freq / spectrum.ppm_reference * 1e6) if spectrum.ppm_reference else None
        out.append(Peak(float(freq), float(height), float(fwhm), ppm))
    out.sort(key=lambda pk: pk.freq_hz)
    return PeakList(out, df, spectrum.ppm_reference)


@dataclass
class MatchReport:
    pairs: list[dict[str, float]]
    unmatched_a: list[float]
    unmatched_b: list[float]
    freq_tol_hz: float
    units: str
    method: str = "greedy"

    @property
    def all_matched(self) -> bool:
        return not self.unmatched_a and not self.unmatched_b

    @property
    def max_abs_df(self) -> float:
        return max((abs(p["delta_hz"]) for p in self.pairs), default=0.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "all_matched": self.all_matched,
            "units": self.units,
            "method": self.method,
            "freq_tol_hz": self.freq_tol_hz,
            "max_abs_delta_hz": self.max_abs_df,
            "pairs": self.pairs,
            "unmatched_a_hz": self.unmatched_a,
            "unmatched_b_hz": self.unmatched_b,
        }


def _bottleneck(cost: NDArray[np.float64], tol: float) -> list[tuple[int, int]]:
    """One-to-one matching minimising the largest cost, then the total.

    Maximum-cardinality among pairs within ``tol``; ties in cardinality are
    broken by the smallest achievable worst pair.
    """
    allowed = cost <= tol
    if not allowed.any():
        return []
    big = 1e6 * (1.0 + float(np.max(cost[allowed])))

    def solve(limit: float):
        w = np.where(cost <= limit, cost, big)
        r, c = linear_sum_assignment(w)
        keep = w[r, c] < big
        return list(zip(r[keep].tolist(), c[keep].tolist()))

    best = solve(tol)
    levels = np.unique(cost[allowed])
    lo, hi = 0, len(levels) - 1
    while lo < hi:  # smallest limit that keeps the full cardinality
        mid = (lo + hi) // 2
        if len(solve(levels[mid])) == len(best):
            hi = mid
        else:
            lo = mid + 1
    return solve(levels[lo])


def compare_spectra(
    a: PeakList, b: PeakList, freq_tol_hz: float, units: str = "hz", method: str = "greedy"
) -> MatchReport:
    """Match two peak lists by frequency.

    ``method="greedy"`` pairs the globally closest peaks first.
    ``method="bottleneck"`` finds the one-to-one assignment with the most pairs
    within tolerance whose worst ``|df|`` is smallest; it is the fairer
    measure when multiplets shift as a block and a greedy pass would pair each
    line with a neighbour of its true partner.

    With ``units="ppm"`` the lists are compared on their ppm scales (each with
    its own carrier) and differences are expressed in Hz at ``a``'s carrier,
    which is how spectra recorded at different fields are overlaid.
    """
    if units not in ("hz", "ppm"):
        raise ValidationError("units must be 'hz' or 'ppm'")
    if method not in ("greedy", "bottleneck"):
        raise ValidationError("method must be 'greedy' or 'bottleneck'")
    if units == "ppm":
        if a.ppm_reference is None or b.ppm_reference is None:
            raise ValidationError("ppm comparison needs a ppm reference on both peak lists")
        fa = a.freqs
        fb = b.freqs * (a.ppm_reference / b.ppm_reference)
    else:
        fa, fb = a.freqs, b.freqs
    if method == "greedy":
        cands = sorted(
            (abs(fa[i] - fb[j]), i, j)
            for i in range(len(fa))
            for j in range(len(fb))
            if abs(fa[i] - fb[j]) <= freq_tol_hz
        )
        chosen = []
        seen_a: set[int] = set()
        seen_b: set[int] = set()
        for _, i, j in cands:
            if i in seen_a or j in seen_b:
                continue
            seen_a.add(i)
            seen_b.add(j)
            chosen.append((i, j))
    elif len(fa) and len(fb):
        chosen = _bottleneck(np.abs(fa[:, None] - fb[None, :]), freq_tol_hz)
    else:
        chosen = []
    used_a: set[int] = set()
    used_b: set[int] = set()
    pairs = []
    for i, j in chosen:
        used_a.add(i)
        used_b.add(j)
        pa, pb = a.peaks[i], b.peaks[j]
        pairs.append(
            {
                "freq_a_hz": pa.freq_hz,
                "freq_b_hz": pb.freq_hz,
                "delta_hz": float(fa[i] - fb[j]),
                "amplitude_ratio": pa.amplitude / pb.amplitude if pb.amplitude else float("inf"),
            }
        )
    pairs.sort(key=lambda p: p["freq_a_hz"])
    return MatchReport(
        pairs,
        [a.peaks[i].freq_hz for i in range(len(fa)) if i not in used_a],
        [b.peaks[j].freq_hz for j in range(len(fb)) if j not in used_b],
        freq_tol_hz,
        units,
        method,
    )
