import math

import numpy as np
import pytest

from dracsim.hamiltonians import FieldContext, rescale_field
from dracsim.protocols import (
    FREQUENCY_SIGN,
    ProtocolParams,
    _plan,
    initialize_state,
    run_many,
    run_protocol,
    trajectory,
)
from dracsim.spectra import find_peaks, fourier_transform
from dracsim.spincore import PropagatorCache, ValidationError, expectation, total_spin

from conftest import hz_molecule

F1 = FieldContext(1.0)


def test_initial_state_along_y(pair_plus_singlet):
    rho = initialize_state(pair_plus_singlet)
    assert expectation(rho, total_spin(3, "y")) == pytest.approx(1.5)
    assert expectation(rho, total_spin(3, "x")) == pytest.approx(0.0, abs=1e-15)
    assert np.trace(rho.entries).real == pytest.approx(1.0)


def test_conventional_closed_form():
    spec = hz_molecule([25.0], t2=0.5)
    tau = 1e-3
    ts = run_protocol(spec, F1, ProtocolParams("conventional", tau, n_blocks=50))
    k = np.arange(50)
    t = 0.5 * tau + k * tau
    expected = 0.5j * np.exp(FREQUENCY_SIGN * 2j * np.pi * 25.0 * t) * np.exp(-k * tau / 0.5)
    assert np.max(np.abs(ts.samples - expected)) < 1e-12


def test_conventional_envelope(pair_plus_singlet):
    ts = run_protocol(pair_plus_singlet, F1, ProtocolParams("conventional", 1e-3, n_blocks=30))
    # an uncoupled singlet keeps |<F+>| constant apart from the decay; the
    # total magnetisation of the whole molecule cannot exceed n/2
    env = 1.5 * np.exp(-np.arange(30) * 1e-3 / pair_plus_singlet.t2)
    assert np.all(np.abs(ts.samples) <= env + 1e-12)
    assert abs(ts.samples[0]) > 0.95 * 1.5


def test_conventional_peaks_at_shifts(three_singlets):
    ts = run_protocol(three_singlets, F1, ProtocolParams("conventional", 5e-4))
    peaks = find_peaks(fourier_transform(ts), 0.2)
    assert np.allclose(peaks.freqs, [25.0, 250.0, 500.0], atol=0.0625)


def test_aeris_on_resonance_is_pure_decay():
    spec = hz_molecule([0.0], t2=0.2)
    p = ProtocolParams("aeris", 1e-3, 1e-3, 2000.0, n_blocks=20)
    ts = run_protocol(spec, F1, p)
    expected = 0.5 * np.exp(-np.arange(20) * 2e-3 / 0.2)
    assert np.allclose(ts.samples.real, expected, atol=1e-12)
    assert np.all(ts.samples.imag == 0)


def test_rewind_identity_on_resonance():
    spec = hz_molecule([0.0, 0.0], j=[[0, 7.0], [7.0, 0]])
    cache = PropagatorCache()
    for eps in (0.0, 0.03, -0.1):
        plan = _plan(spec, F1, ProtocolParams("dracaeris", 1e-3, 1e-3, 2000.0, eps), cache)
        # drive pair cancels exactly; J commutes with it and only sees free time
        from_j = cache.propagator(plan.segments[0][0], 2e-3)
        assert np.max(np.abs(plan.block - from_j)) < 1e-10


def test_dracaeris_readings_are_antisymmetric_on_resonance():
    spec = hz_molecule([0.0], t2=0.5)
    ts = run_protocol(spec, F1, ProtocolParams("dracaeris", 1e-3, 1e-3, 2000.0, n_blocks=10))
    assert np.allclose(ts.forward, -ts.rewind, atol=1e-12)
    assert np.allclose(ts.samples.real, ts.forward, atol=1e-12)


def test_forward_signal_option():
    spec = hz_molecule([30.0], t2=0.5)
    p = ProtocolParams("dracaeris", 1e-3, 1e-3, 2000.0, n_blocks=10)
    ts = run_protocol(spec, F1, p, signal="forward")
    assert np.array_equal(ts.samples.real, ts.forward)


@pytest.mark.parametrize("kind,mu,rabi", [("conventional", 0.0, 0.0), ("aeris", 1e-3, 2000.0), ("dracaeris", 1e-3, 2000.0)])
def test_linear_in_polarization(pair_plus_singlet, kind, mu, rabi):
    p = ProtocolParams(kind, 1e-3, mu, rabi, n_blocks=40)
    full = run_protocol(pair_plus_singlet, F1, p, polarization=1.0)
    part = run_protocol(pair_plus_singlet, F1, p, polarization=1e-5)
    assert np.max(np.abs(part.samples * 1e5 - full.samples)) < 1e-9


@pytest.mark.parametrize("kind,mu,rabi", [("conventional", 0.0, 0.0), ("aeris", 1e-3, 2000.0), ("dracaeris", 8e-4, 2500.0)])
def test_modal_matches_direct(pair_plus_singlet, kind, mu, rabi):
    p = ProtocolParams(kind, 8e-4, mu, rabi, 0.01, n_blocks=300)
    a = run_protocol(pair_plus_singlet, F1, p, method="modal")
    b = run_protocol(pair_plus_singlet, F1, p, method="direct")
    assert np.max(np.abs(a.samples - b.samples)) < 1e-10


def test_validation_rules():
    with pytest.raises(ValidationError):
        ProtocolParams("conventional", 1e-3, mu=1e-3).validate()
    with pytest.raises(ValidationError):
        ProtocolParams("aeris", 1e-3, 1e-3, 2500.0).validate()  # N = 2.5
    with pytest.raises(ValidationError):
        ProtocolParams("dracaeris", 1e-3, 1e-3, 1000.0).validate()  # N = 0.5
    with pytest.raises(ValidationError):
        ProtocolParams("weird", 1e-3).validate()
    with pytest.raises(ValidationError):
        ProtocolParams("conventional", 0.0).validate()
    assert ProtocolParams("dracaeris", 1e-3, 1e-3, 2000.0).nutation_cycles() == 1.0
    assert ProtocolParams("aeris", 1e-3, 1e-3, 2000.0).nutation_cycles() == 2.0


def test_default_record_is_three_t2(single_25):
    p = ProtocolParams("aeris", 1e-3, 1e-3, 2000.0)
    assert p.blocks_for(single_25.t2) == math.ceil(3 * single_25.t2 / 2e-3)


def test_time_axes():
    spec = hz_molecule([10.0])
    ts = run_protocol(spec, F1, ProtocolParams("aeris", 1e-3, 3e-3, 1000.0, n_blocks=4))
    assert np.allclose(ts.times("free_time"), [0, 1e-3, 2e-3, 3e-3])
    assert np.allclose(ts.times("total_time"), [0, 4e-3, 8e-3, 12e-3])


def test_trajectory_dracaeris_returns_to_transverse_plane():
    spec = hz_molecule([0.0], t2=1.0)
    p = ProtocolParams("dracaeris", 1e-3, 1e-3, 2000.0, n_blocks=4, record_trajectory=True)
    tr = trajectory(spec, F1, p, samples_per_segment=16)
    assert np.max(np.abs(tr.mz[tr.block_end])) < 1e-6
    # it does leave the plane during the drive
    assert np.max(np.abs(tr.mz)) > 0.4
    assert len(tr.t) == len(tr.segment)


def test_trajectory_requires_flag():
    spec = hz_molecule([0.0])
    with pytest.raises(ValidationError):
        trajectory(spec, F1, ProtocolParams("aeris", 1e-3, 1e-3, 2000.0, n_blocks=2))


def _peak(ts):
    sp = fourier_transform(ts, "total_time", 8)
    return find_peaks(sp, 0.5).freqs[0]


def test_nutation_error_leading_order_shift():
    # a drive miscalibrated by eps leaves a Zeeman fraction sin(Theta)/Theta
    # active during the drive, shifting the line by nu mu s1 / (tau + mu)
    nu, tau, mu = 100.0, 1e-3, 1e-3
    spec = hz_molecule([nu], t2=100.0)

    def freq(eps):
        return _peak(run_protocol(spec, F1, ProtocolParams("dracaeris", tau, mu, 2000.0, eps, n_blocks=4000)))

    base = freq(0.0)
    for eps in (0.01, 0.02, 0.05):
        theta = 2 * np.pi * (1 + eps)
        predicted = nu * mu * math.sin(theta) / theta / (tau + mu)
        assert freq(eps) - base == pytest.approx(predicted, rel=0.02)


def test_small_pulse_limit_recovers_conventional():
    spec = hz_molecule([100.0], t2=100.0)
    conv = run_protocol(spec, F1, ProtocolParams("conventional", 1e-3, n_blocks=20)).samples.imag
    errs = []
    for mu in (1e-4, 1e-5, 1e-6):
        ts = run_protocol(spec, F1, ProtocolParams("aeris", 1e-3, mu, 1.0 / mu, n_blocks=20))
        errs.append(np.max(np.abs(ts.samples.real - conv)))
    assert errs[0] > 5 * errs[1] > 25 * errs[2]
    assert errs[2] < 1e-4


def test_rescaled_conventional_matches_scaled_frequencies(three_singlets):
    half = rescale_field(F1, 0.5, three_singlets)
    ts = run_protocol(three_singlets, half, ProtocolParams("conventional", 1e-3))
    peaks = find_peaks(fourier_transform(ts), 0.2)
    assert np.allclose(peaks.freqs, [12.5, 125.0, 250.0], atol=0.0625)


def test_run_many_matches_serial(pair_plus_singlet):
    jobs = [
        (pair_plus_singlet, F1, ProtocolParams("aeris", 1e-3, 1e-3, k * 1000.0, n_blocks=50))
        for k in (1, 2, 3, 4)
    ]
    serial = run_many(jobs, threads=1)
    threaded = run_many(jobs, threads=4)
    for a, b in zip(serial, threaded):
        assert np.array_equal(a.samples, b.samples)


def test_unknown_options_rejected(single_25):
    p = ProtocolParams("conventional", 1e-3, n_blocks=2)
    with pytest.raises(ValidationError):
        run_protocol(single_25, F1, p, signal="sum")
    with pytest.raises(ValidationError):
        run_protocol(single_25, F1, p, method="euler")
