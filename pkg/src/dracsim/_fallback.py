"""Pure-numpy implementations of the hot kernels.

Semantics match ``_ckernels.pyx`` exactly; the two are cross-checked in the
test suite and timed against each other in ``benchmarks/``.
"""

import numpy as np


def modal_series(coeffs, modes, n):
    """``out[k] = sum_j coeffs[j] * modes[j]**k`` for ``k < n``."""
    coeffs = np.asarray(coeffs, dtype=complex)
    modes = np.asarray(modes, dtype=complex)
    out = np.empty(n, dtype=complex)
    acc = coeffs.copy()
    for k in range(n):
        out[k] = acc.sum()
        acc *= modes
    return out


def _rot(angle, axis_phase):
    """exp(-i angle/2 (cos(p) sx + sin(p) sy)) broadcast over leading dims."""
    c = np.cos(angle / 2.0)
    s = np.sin(angle / 2.0)
    u = np.empty(np.shape(angle) + (2, 2), dtype=complex)
    u[..., 0, 0] = c
    u[..., 1, 1] = c
    u[..., 0, 1] = -1j * s * np.exp(-1j * axis_phase)
    u[..., 1, 0] = -1j * s * np.exp(1j * axis_phase)
    return u


def _rz(phi):
    u = np.zeros(np.shape(phi) + (2, 2), dtype=complex)
    u[..., 0, 0] = np.exp(-0.5j * phi)
    u[..., 1, 1] = np.exp(0.5j * phi)
    return u


def dd_ensemble(seg_signal_phase, seg_duration, pulse_axis_phase, theta, detunings_hz):
    """Final ``<M_z>`` of a two-level sensor for each static detuning.

    The state starts along +x; free segment ``k`` rotates about z by
    ``seg_signal_phase[k] + 2 pi detuning seg_duration[k]``; pulse ``k`` (between
    segments ``k`` and ``k+1``) rotates by ``theta`` about the in-plane axis at
    ``pulse_axis_phase[k]``; a final pi/2 about x maps y onto z.
    """
    seg_signal_phase = np.asarray(seg_signal_phase, dtype=float)
    seg_duration = np.asarray(seg_duration, dtype=float)
    det = np.asarray(detunings_hz, dtype=float)
    m = det.shape[0]
    u = np.broadcast_to(np.eye(2, dtype=complex), (m, 2, 2)).copy()
    pulses = [_rot(theta, p) for p in pulse_axis_phase]
    for k in range(seg_duration.shape[0]):
        u = _rz(seg_signal_phase[k] + 2.0 * np.pi * det * seg_duration[k]) @ u
        if k < len(pulses):
            u = pulses[k] @ u
    u = _rot(np.pi / 2, 0.0) @ u
    rho0 = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
    rho = u @ rho0 @ np.conj(np.swapaxes(u, -1, -2))
    return 0.5 * np.real(rho[:, 0, 0] - rho[:, 1, 1])
