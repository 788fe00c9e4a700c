import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dracsim.hamiltonians import FieldContext
from dracsim.protocols import ProtocolParams, TimeSeries, run_protocol
from dracsim.spectra import (
    Peak,
    PeakList,
    compare_spectra,
    find_peaks,
    fourier_transform,
    spectral_energy,
)
from dracsim.spincore import ValidationError

from conftest import hz_molecule

F1 = FieldContext(1.0)


def _series(x, kind="conventional", dwell=1e-3, total=None, ref=None):
    params = {} if ref is None else {"reference_freq": ref}
    return TimeSeries(np.asarray(x, dtype=complex), dwell, total or dwell, kind, params)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 300), real=st.booleans())
def test_parseval(seed, n, real):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n) + (0 if real else 1j * rng.normal(size=n))
    ts = _series(x, "aeris" if real else "conventional")
    sp = fourier_transform(ts, zero_fill_factor=1)
    assert spectral_energy(sp) == pytest.approx(float(np.sum(np.abs(x) ** 2)), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 64)) + 1j * rng.normal(size=(2, 64))
    fx = fourier_transform(_series(x)).amplitudes
    fy = fourier_transform(_series(y)).amplitudes
    fxy = fourier_transform(_series(a * x + b * y)).amplitudes
    assert np.allclose(fxy, a * fx + b * fy, atol=1e-9)


def test_axis_duality():
    # the same record transformed on the two axes places a line at
    # nu_app and at nu_app * tau / (tau + mu)
    tau, mu, nu = 1e-3, 3e-3, 80.0
    k = np.arange(2048)
    x = np.cos(2 * np.pi * nu * tau * k) * np.exp(-k / 800)
    ts = _series(x, "aeris", tau, tau + mu)
    f_free = find_peaks(fourier_transform(ts, "free_time"), 0.5).freqs
    f_total = find_peaks(fourier_transform(ts, "total_time"), 0.5).freqs
    assert f_free == pytest.approx([nu], abs=0.05)
    assert f_total == pytest.approx([nu * tau / (tau + mu)], abs=0.05 * tau / (tau + mu))


def test_real_signal_one_sided_and_dc_line():
    ts = _series(np.exp(-np.arange(256) / 50), "aeris")
    sp = fourier_transform(ts)
    assert sp.one_sided and sp.freqs_hz[0] == 0.0 and np.all(sp.freqs_hz >= 0)
    peaks = find_peaks(sp, 0.5)
    assert len(peaks) == 1 and abs(peaks.freqs[0]) < sp.bin_hz


def test_conventional_axis_is_centred():
    sp = fourier_transform(_series(np.ones(8)), zero_fill_factor=1)
    assert np.all(np.diff(sp.freqs_hz) > 0)
    assert sp.freqs_hz.min() < 0 < sp.freqs_hz.max()


def test_absorption_linewidth_is_lorentzian():
    t2 = 1.0
    spec = hz_molecule([25.0], t2=t2)
    ts = run_protocol(spec, F1, ProtocolParams("conventional", 8e-4, n_blocks=10_000))
    sp = fourier_transform(ts)
    (absn,) = find_peaks(sp, 0.5, mode="absorption").peaks
    (mag,) = find_peaks(sp, 0.5).peaks
    assert absn.freq_hz == pytest.approx(25.0, abs=0.01)
    assert absn.fwhm_hz == pytest.approx(1 / (np.pi * t2), rel=0.01)
    assert mag.fwhm_hz == pytest.approx(np.sqrt(3) * absn.fwhm_hz, rel=0.02)


def test_apodization_broadens():
    spec = hz_molecule([25.0], t2=1.0)
    ts = run_protocol(spec, F1, ProtocolParams("conventional", 8e-4, n_blocks=10_000))
    plain = find_peaks(fourier_transform(ts), 0.5, mode="absorption").peaks[0].fwhm_hz
    broad = find_peaks(fourier_transform(ts, apodization_hz=1.0), 0.5, mode="absorption").peaks[0].fwhm_hz
    assert broad == pytest.approx(plain + 1.0, rel=0.02)


def test_ppm_axis():
    sp = fourier_transform(_series(np.ones(4), ref=42.577478e6))
    assert np.allclose(sp.freqs_ppm, sp.freqs_hz / 42.577478)
    assert fourier_transform(_series(np.ones(4))).freqs_ppm is None


def test_bad_arguments():
    ts = _series(np.ones(4))
    with pytest.raises(ValidationError):
        fourier_transform(ts, "wall_time")
    with pytest.raises(ValidationError):
        fourier_transform(ts, zero_fill_factor=0)
    with pytest.raises(ValidationError):
        fourier_transform(_series([]))
    with pytest.raises(ValidationError):
        find_peaks(fourier_transform(ts), 1.5)
    with pytest.raises(ValidationError):
        find_peaks(fourier_transform(ts), 0.1, mode="dispersion")


def _plist(freqs, ref=None):
    return PeakList([Peak(f, 1.0, 0.5) for f in freqs], 0.1, ref)


def test_compare_identical():
    a = _plist([10.0, 20.0, 30.0])
    rep = compare_spectra(a, a, 0.5)
    assert rep.all_matched and rep.max_abs_df == 0.0


def test_compare_reports_unmatched():
    rep = compare_spectra(_plist([10.0, 20.0]), _plist([10.2, 40.0]), 0.5)
    assert rep.max_abs_df == pytest.approx(0.2)
    assert rep.unmatched_a == [20.0] and rep.unmatched_b == [40.0]
    assert not rep.all_matched


def test_bottleneck_beats_greedy_on_shifted_multiplet():
    # a doublet shifted as a block: greedy grabs the inner close pair and
    # strands the outer line, bottleneck pairs both at 0.6
    a = _plist([10.0, 11.0])
    b = _plist([10.6, 11.6])
    greedy = compare_spectra(a, b, 0.7, method="greedy")
    bottle = compare_spectra(a, b, 0.7, method="bottleneck")
    assert len(greedy.pairs) == 1
    assert len(bottle.pairs) == 2 and bottle.max_abs_df == pytest.approx(0.6)
    assert bottle.method == "bottleneck"


def test_bottleneck_minimises_worst_pair():
    a = _plist([0.0, 1.0, 2.0])
    b = _plist([0.3, 1.3, 2.3, 5.0])
    rep = compare_spectra(a, b, 1.0, method="bottleneck")
    assert rep.max_abs_df == pytest.approx(0.3)
    assert rep.unmatched_b == [5.0]


def test_ppm_comparison_across_fields():
    a = _plist([100.0, 200.0], ref=2.0e6)
    b = _plist([50.0, 100.0], ref=1.0e6)
    rep = compare_spectra(a, b, 0.01, units="ppm")
    assert rep.all_matched and rep.max_abs_df < 1e-12
    with pytest.raises(ValidationError):
        compare_spectra(_plist([1.0]), b, 0.1, units="ppm")


def test_report_dict_keys():
    d = compare_spectra(_plist([1.0]), _plist([1.1]), 0.5).to_dict()
    assert {"all_matched", "units", "method", "freq_tol_hz", "max_abs_delta_hz", "pairs"} <= set(d)
