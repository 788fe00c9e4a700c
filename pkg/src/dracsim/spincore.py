"""Dense spin-1/2 operator algebra and unitary evolution.

Conventions
-----------
Propagators are ``U(H, t) = exp(+i H t)`` and states evolve as
``rho -> U^-1 rho U``.  With ``U`` unitary this is the ordinary
Schrodinger evolution ``exp(-iHt) rho exp(+iHt)``, so a spin under
``H = w I_z`` precesses as ``<I_x> + i<I_y> ~ exp(+i w t)``.

All matrices are dense ``complex128`` arrays of size ``2**n``.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10

AXES = ("x", "y", "z", "plus", "minus")

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex) / 2,
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex) / 2,
    "z": np.array([[1, 0], [0, -1]], dtype=complex) / 2,
    "plus": np.array([[0, 1], [0, 0]], dtype=complex),
    "minus": np.array([[0, 0], [1, 0]], dtype=complex),
}


class ValidationError(ValueError):
    """Raised when an input violates a documented invariant."""


@dataclass(frozen=True)
class DensityMatrix:
    """Density matrix with a separate real attenuation factor.

    ``scale`` carries the accumulated T2 damping so the matrix itself keeps
    unit trace; expectation values are multiplied by it.
    """

    entries: NDArray[np.complex128]
    scale: float = 1.0

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def with_scale(self, scale: float) -> "DensityMatrix":
        return replace(self, scale=scale)


def _check_dim(dim: int) -> None:
    if dim < 1 or dim & (dim - 1):
        raise ValidationError(f"operator dimension {dim} is not a power of two")


def is_hermitian(op: NDArray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(op - op.conj().T), initial=0.0) <= tol)


def unitarity_error(u: NDArray) -> float:
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


@lru_cache(maxsize=256)
def _spin_operator_cached(n_spins: int, index: int, axis: str) -> NDArray:
    out = np.ones((1, 1), dtype=complex)
    for k in range(n_spins):
        out = np.kron(out, _PAULI[axis] if k == index else np.eye(2))
    out.setflags(write=False)
    return out


def spin_operator(n_spins: int, index: int, axis: str) -> NDArray[np.complex128]:
    """Single-spin operator ``I_axis`` of spin ``index`` in an ``n_spins`` system.

    Spin 0 is the leftmost factor of the Kronecker product.  The returned
    array is read-only and shared; copy it before mutating.
    """
    if n_spins < 1:
        raise ValidationError("n_spins must be >= 1")
    if not 0 <= index < n_spins:
        raise ValidationError(f"spin index {index} out of range for {n_spins} spins")
    if axis not in AXES:
        raise ValidationError(f"unknown axis {axis!r}; expected one of {AXES}")
    return _spin_operator_cached(n_spins, index, axis)


def total_spin(n_spins: int, axis: str) -> NDArray[np.complex128]:
    """Sum of ``I_axis`` over all spins."""
    return sum(spin_operator(n_spins, k, axis) for k in range(n_spins))


def commutator(a: NDArray, b: NDArray) -> NDArray:
    return a @ b - b @ a


def eig_hermitian(h: NDArray) -> tuple[NDArray, NDArray]:
    """Eigenvalues and eigenvectors of a Hermitian matrix, validated."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValidationError("Hamiltonian must be a square matrix")
    _check_dim(h.shape[0])
    if not is_hermitian(h):
        err = np.max(np.abs(h - h.conj().T))
        raise ValidationError(f"Hamiltonian is not Hermitian (max |H - H^dag| = {err:.3e})")
    return np.linalg.eigh(h)


def propagator_from_eig(evals: NDArray, evecs: NDArray, t: float) -> NDArray:
    return (evecs * np.exp(1j * evals * t)) @ evecs.conj().T


def propagator(h: NDArray, t: float) -> NDArray[np.complex128]:
    """Return ``exp(i H t)`` via Hermitian eigendecomposition."""
    evals, evecs = eig_hermitian(h)
    return propagator_from_eig(evals, evecs, t)


class PropagatorCache:
    """Thread-safe cache of eigendecompositions and propagators.

    Keys are a digest of the Hamiltonian bytes plus the duration, so equal
    matrices built independently share entries.
    """

    def __init__(self, max_entries: int = 512):
        self._eig: dict[bytes, tuple[NDArray, NDArray]] = {}
        self._prop: dict[tuple[bytes, float], NDArray] = {}
        self._lock = threading.Lock()
        self.max_entries = max_entries
        self.hits = 0
        self.misses = 0

    @staticmethod
    def _key(h: NDArray) -> bytes:
        h = np.ascontiguousarray(h, dtype=complex)
        return hashlib.blake2b(h.tobytes() + repr(h.shape).encode(), digest_size=16).digest()

    def eig(self, h: NDArray) -> tuple[NDArray, NDArray]:
        key = self._key(h)
        with self._lock:
            hit = self._eig.get(key)
        if hit is None:
            hit = eig_hermitian(h)
            with self._lock:
                if len(self._eig) >= self.max_entries:
                    self._eig.clear()
                self._eig[key] = hit
        return hit

    def propagator(self, h: NDArray, t: float) -> NDArray:
        key = (self._key(h), float(t))
        with self._lock:
            u = self._prop.get(key)
            if u is not None:
                self.hits += 1
                return u
            self.misses += 1
        u = propagator_from_eig(*self.eig(h), t)
        u.setflags(write=False)
        with self._lock:
            if len(self._prop) >= self.max_entries:
                self._prop.clear()
            self._prop[key] = u
        return u

    def clear(self) -> None:
        with self._lock:
            self._eig.clear()
            self._prop.clear()


default_cache = PropagatorCache()


def evolve(rho: DensityMatrix, u: NDArray) -> DensityMatrix:
    """Return ``U^-1 rho U`` (``U^dag rho U`` for unitary ``U``)."""
    if u.shape != rho.entries.shape:
        raise ValidationError(
            f"dimension mismatch: state {rho.entries.shape} vs propagator {u.shape}"
        )
    return DensityMatrix(u.conj().T @ rho.entries @ u, rho.scale)


def expectation(rho: DensityMatrix, op: NDArray) -> float:
    """``scale * Re tr(rho O)``."""
    if op.shape != rho.entries.shape:
        raise ValidationError(
            f"dimension mismatch: state {rho.entries.shape} vs operator {op.shape}"
        )
    # tr(AB) = sum(A * B^T), avoids the full product
    return rho.scale * float(np.real(np.sum(rho.entries * op.T)))


def mixed_state(n_spins: int) -> DensityMatrix:
    dim = 2**n_spins
    return DensityMatrix(np.eye(dim, dtype=complex) / dim)
