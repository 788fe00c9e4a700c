"""Rotating-frame Hamiltonians for small liquid-state proton systems.

Frequencies are Hz (or ppm) at every interface and rad/s inside operators.
Molecule specifications are plain JSON documents; see ``MoleculeSpec.from_dict``
for the schema.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .spincore import ValidationError, spin_operator, total_spin

PROTON_GAMMA_HZ_PER_T = 42.577478e6
TWO_PI = 2.0 * math.pi


class SpecError(ValidationError):
    """Malformed molecule or config document; carries a field path and line."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class Spin:
    label: str
    shift_ppm: float | None = None
    shift_hz: float | None = None

    def __post_init__(self):
        if (self.shift_ppm is None) == (self.shift_hz is None):
            raise SpecError(
                f"spin {self.label!r} must declare exactly one of shift_ppm / shift_hz"
            )


@dataclass(frozen=True)
class MoleculeSpec:
    name: str
    spins: tuple[Spin, ...]
    j_couplings: NDArray[np.float64]
    t2: float
    nucleus_gamma: float = PROTON_GAMMA_HZ_PER_T

    def __post_init__(self):
        n = len(self.spins)
        if n < 1:
            raise SpecError("molecule has no spins", field="spins")
        j = np.asarray(self.j_couplings, dtype=float)
        if j.shape != (n, n):
            raise SpecError(f"coupling table must be {n}x{n}, got {j.shape}", field="j_couplings")
        if not np.array_equal(j, j.T):
            raise SpecError("coupling table is not symmetric", field="j_couplings")
        if np.any(np.diag(j) != 0.0):
            raise SpecError("coupling table diagonal must be zero", field="j_couplings")
        if not self.t2 > 0:
            raise SpecError("t2 must be positive", field="t2")
        object.__setattr__(self, "j_couplings", j)
        object.__setattr__(self, "spins", tuple(self.spins))

    @property
    def n_spins(self) -> int:
        return len(self.spins)

    @property
    def dim(self) -> int:
        return 2**self.n_spins

    @property
    def uses_hz_shifts(self) -> bool:
        return any(s.shift_hz is not None for s in self.spins)

    def labels(self) -> list[str]:
        return [s.label for s in self.spins]

    def shifts_hz(self, field: "FieldContext") -> NDArray[np.float64]:
        """Rotating-frame offsets in Hz at the given field."""
        return np.array(
            [
                s.shift_hz if s.shift_hz is not None else s.shift_ppm * 1e-6 * field.reference_freq
                for s in self.spins
            ]
        )

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], source: str | None = None) -> "MoleculeSpec":
        """Build from a mapping.

        Schema::

            {"name": str,
             "spins": [{"label": str, "shift_ppm": float} | {"label": str, "shift_hz": float}, ...],
             "j_couplings": [[a, b, J_hz], ...],  # spin labels or indices
             "j_matrix": [[...], ...],            # alternative: n x n symmetric table
             "t2": float,                          # seconds
             "nucleus_gamma": float}               # Hz/T, optional
        """
        def fail(msg: str, path: str) -> SpecError:
            return SpecError(msg, field=path, line=_locate(source, path))

        if not isinstance(doc, Mapping):
            raise SpecError("molecule must be an object")
        for key in ("name", "spins", "t2"):
            if key not in doc:
                raise fail("missing required field", key)
        spins = []
        if not isinstance(doc["spins"], Sequence) or isinstance(doc["spins"], str):
            raise fail("must be a list", "spins")
        for i, raw in enumerate(doc["spins"]):
            path = f"spins[{i}]"
            if not isinstance(raw, Mapping) or "label" not in raw:
                raise fail("spin entry needs a 'label'", path)
            unknown = set(raw) - {"label", "shift_ppm", "shift_hz"}
            if unknown:
                raise fail(f"unknown keys {sorted(unknown)}", path)
            try:
                spins.append(
                    Spin(
                        str(raw["label"]),
                        _opt_float(raw.get("shift_ppm")),
                        _opt_float(raw.get("shift_hz")),
                    )
                )
            except SpecError as exc:
                raise fail(str(exc), path) from None
            except (TypeError, ValueError):
                raise fail("shift must be a number", path) from None
        labels = [s.label for s in spins]
        if len(set(labels)) != len(labels):
            raise fail("spin labels must be unique", "spins")
        n = len(spins)
        j = np.zeros((n, n))
        try:
            if "j_matrix" in doc:
                j = np.array(doc["j_matrix"], dtype=float)
                if j.shape != (n, n):
                    raise fail(f"must be a {n}x{n} matrix", "j_matrix")
            for k, entry in enumerate(doc.get("j_couplings", [])):
                a, b, value = entry
                ia = labels.index(a) if isinstance(a, str) else int(a)
                ib = labels.index(b) if isinstance(b, str) else int(b)
                if ia == ib:
                    raise fail("a spin cannot couple to itself", f"j_couplings[{k}]")
                j[ia, ib] = j[ib, ia] = float(value)
        except SpecError:
            raise
        except (TypeError, ValueError, IndexError):
            raise fail("expected [a, b, J_hz] entries with known labels", "j_couplings") from None
        try:
            t2 = float(doc["t2"])
        except (TypeError, ValueError):
            raise fail("must be a number", "t2") from None
        gamma = float(doc.get("nucleus_gamma", PROTON_GAMMA_HZ_PER_T))
        try:
            return cls(str(doc["name"]), tuple(spins), j, t2, gamma)
        except SpecError as exc:
            if exc.field is not None and exc.line is None:
                raise fail(str(exc).split(": ", 1)[-1], exc.field) from None
            raise

    def to_dict(self) -> dict[str, Any]:
        spins = []
        for s in self.spins:
            entry: dict[str, Any] = {"label": s.label}
            if s.shift_ppm is not None:
                entry["shift_ppm"] = s.shift_ppm
            else:
                entry["shift_hz"] = s.shift_hz
            spins.append(entry)
        pairs = [
            [self.spins[a].label, self.spins[b].label, float(self.j_couplings[a, b])]
            for a in range(self.n_spins)
            for b in range(a + 1, self.n_spins)
            if self.j_couplings[a, b] != 0.0
        ]
        return {
            "name": self.name,
            "spins": spins,
            "j_couplings": pairs,
            "t2": self.t2,
            "nucleus_gamma": self.nucleus_gamma,
        }


def _opt_float(value: Any) -> float | None:
    return None if value is None else float(value)


def _locate(source: str | None, path: str) -> int | None:
    """Best-effort line number of ``path`` inside ``source``.

    Falls back to the nearest enclosing key when the last one is absent,
    which is the case for missing required fields.
    """
    if not source:
        return None
    lines = source.splitlines()
    for part in reversed(path.split(".")):
        needle = f'"{part.split("[")[0]}"'
        for lineno, line in enumerate(lines, start=1):
            if needle in line:
                return lineno
    return None


def parse_json(text: str, what: str = "document") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{what} is not valid JSON: {exc.msg}", line=exc.lineno) from None


def load_molecule(path_or_name: str | Path) -> MoleculeSpec:
    """Load a molecule from a JSON file or the built-in library."""
    p = Path(path_or_name)
    if p.suffix == ".json" or p.exists():
        text = p.read_text()
        return MoleculeSpec.from_dict(parse_json(text, str(p)), source=text)
    return builtin_molecule(str(path_or_name))


def builtin_names() -> list[str]:
    root = resources.files("dracsim") / "data" / "molecules"
    return sorted(f.name[:-5] for f in root.iterdir() if f.name.endswith(".json"))


def builtin_molecule(name: str) -> MoleculeSpec:
    root = resources.files("dracsim") / "data" / "molecules"
    res = root / f"{name}.json"
    if not res.is_file():
        raise SpecError(f"unknown built-in molecule {name!r}; available: {builtin_names()}")
    text = res.read_text()
    return MoleculeSpec.from_dict(json.loads(text), source=text)


@dataclass(frozen=True)
class FieldContext:
    """Bias field and the rotating-frame carrier derived from it."""

    b0: float
    nucleus_gamma: float = PROTON_GAMMA_HZ_PER_T
    rescale_factor: float = 1.0

    def __post_init__(self):
        if not self.b0 > 0:
            raise ValidationError("b0 must be positive")

    @property
    def reference_freq(self) -> float:
        return self.nucleus_gamma * self.b0

    @classmethod
    def for_molecule(cls, spec: MoleculeSpec, b0: float) -> "FieldContext":
        return cls(b0, spec.nucleus_gamma)


def rescale_field(
    field: FieldContext, factor: float, spec: MoleculeSpec | None = None
) -> FieldContext:
    """Field context at ``factor * b0``.

    Only ppm-declared shifts follow the field; a spec with Hz shifts is
    rejected here (when given) and again when a Hamiltonian is built.
    """
    if not 0 < factor <= 1:
        raise ValidationError(f"rescale factor must lie in (0, 1], got {factor}")
    if spec is not None and spec.uses_hz_shifts:
        raise ValidationError(
            f"molecule {spec.name!r} declares shifts in Hz; declare them in ppm to rescale"
        )
    return FieldContext(field.b0 * factor, field.nucleus_gamma, field.rescale_factor * factor)


def _check_pair(spec: MoleculeSpec, field: FieldContext) -> None:
    if not math.isclose(spec.nucleus_gamma, field.nucleus_gamma, rel_tol=1e-12):
        raise ValidationError("field context was built for a different nucleus")
    if field.rescale_factor != 1.0 and spec.uses_hz_shifts:
        raise ValidationError(
            f"molecule {spec.name!r} declares shifts in Hz and cannot follow a rescaled field"
        )


def zeeman_hamiltonian(spec: MoleculeSpec, field: FieldContext) -> NDArray[np.complex128]:
    """``sum_i w_i I_z,i`` with ``w_i = 2 pi nu_i``."""
    _check_pair(spec, field)
    n = spec.n_spins
    h = np.zeros((spec.dim, spec.dim), dtype=complex)
    for i, nu in enumerate(spec.shifts_hz(field)):
        h += TWO_PI * nu * spin_operator(n, i, "z")
    return h


def coupling_hamiltonian(spec: MoleculeSpec) -> NDArray[np.complex128]:
    """Isotropic scalar couplings ``sum_{j>k} 2 pi J_jk I_j . I_k``."""
    n = spec.n_spins
    h = np.zeros((spec.dim, spec.dim), dtype=complex)
    for a in range(n):
        for b in range(a + 1, n):
            jab = spec.j_couplings[a, b]
            if jab == 0.0:
                continue
            for ax in "xyz":
                h += TWO_PI * jab * (spin_operator(n, a, ax) @ spin_operator(n, b, ax))
    return h


def free_hamiltonian(spec: MoleculeSpec, field: FieldContext) -> NDArray[np.complex128]:
    return zeeman_hamiltonian(spec, field) + coupling_hamiltonian(spec)


def drive_term(
    n_spins: int, rabi_hz: float, phase: float = 0.0, nutation_error: float = 0.0
) -> NDArray[np.complex128]:
    """``Omega_eff sum_i (cos(phase) I_x,i + sin(phase) I_y,i)``."""
    if not rabi_hz > 0:
        raise ValidationError("rabi_hz must be positive")
    amp = TWO_PI * rabi_hz * (1.0 + nutation_error)
    return amp * (math.cos(phase) * total_spin(n_spins, "x") + math.sin(phase) * total_spin(n_spins, "y"))


def drive_hamiltonian(
    spec: MoleculeSpec,
    field: FieldContext,
    rabi_hz: float,
    phase: float = 0.0,
    nutation_error: float = 0.0,
) -> NDArray[np.complex128]:
    return free_hamiltonian(spec, field) + drive_term(spec.n_spins, rabi_hz, phase, nutation_error)


def ppm_to_hz(ppm: float, field: FieldContext) -> float:
    return ppm * 1e-6 * field.reference_freq


def hz_to_ppm(hz: float, field: FieldContext) -> float:
    return hz / (1e-6 * field.reference_freq)
