import numpy as np
import pytest

from dracsim.hamiltonians import FieldContext, MoleculeSpec, Spin, builtin_molecule


@pytest.fixture
def one_tesla():
    return FieldContext(1.0)


@pytest.fixture
def three_singlets():
    return builtin_molecule("three-singlets")


@pytest.fixture
def pair_plus_singlet():
    return builtin_molecule("pair-plus-singlet")


@pytest.fixture
def single_25():
    return builtin_molecule("single-25hz")


def hz_molecule(shifts, j=None, t2=1.0, name="test"):
    n = len(shifts)
    return MoleculeSpec(
        name,
        tuple(Spin(f"S{i}", shift_hz=float(s)) for i, s in enumerate(shifts)),
        np.zeros((n, n)) if j is None else np.asarray(j, dtype=float),
        t2,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
