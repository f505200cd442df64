"""Shared fixtures: the small-circuit suite and random-matrix helpers."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from collapsim import qmath
from collapsim.medium import FaultSpec, GateSpec, Medium, load_circuit

REPO_ROOT = Path(__file__).resolve().parent.parent
CIRCUITS_DIR = REPO_ROOT / "circuits"

H = qmath.HADAMARD
X = qmath.PAULI_X
Z = qmath.PAULI_Z
CNOT = qmath.CNOT
CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(np.complex128)
S_GATE = np.diag([1.0, 1.0j])
T_GATE = np.diag([1.0, np.exp(1.0j * np.pi / 4)])


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Haar-ish unitary via QR of a random complex matrix."""
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(m)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_density(rng: np.random.Generator, num_qubits: int) -> qmath.DensityMatrix:
    dim = 1 << num_qubits
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = m @ m.conj().T
    return qmath.DensityMatrix(rho / rho.trace())


def random_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (m + m.conj().T) / 2.0


def _ghz3(eta: float) -> Medium:
    return load_circuit(CIRCUITS_DIR / "ghz3.json")[0].with_eta(eta)


def _bell_measure(eta: float) -> Medium:
    return load_circuit(CIRCUITS_DIR / "bell_measure.json")[0].with_eta(eta)


def _staggered(eta: float) -> Medium:
    return load_circuit(CIRCUITS_DIR / "staggered.json")[0].with_eta(eta)


def _single_h(eta: float) -> Medium:
    gates = (
        GateSpec("unitary", H, (0,), 0),
        GateSpec("unitary", T_GATE, (0,), 1),
    )
    return Medium(1, ((0, 1),), gates, eta, (0,))


def _rotated_pair(eta: float) -> Medium:
    u = np.array(
        [
            [np.cos(0.4), -1j * np.sin(0.4)],
            [-1j * np.sin(0.4), np.cos(0.4)],
        ],
        dtype=np.complex128,
    )
    gates = (
        GateSpec("unitary", u, (0,), 0),
        GateSpec("unitary", CNOT, (1, 0), 1),
        GateSpec("unitary", S_GATE, (1,), 2),
    )
    return Medium(2, ((0, 2), (0, 2)), gates, eta, (0, 1))


def _parallel_cz(eta: float) -> Medium:
    gates = (
        GateSpec("unitary", H, (0,), 0),
        GateSpec("unitary", H, (1,), 0),
        GateSpec("unitary", CZ, (0, 1), 1),
        GateSpec("unitary", H, (1,), 2),
    )
    return Medium(2, ((0, 2), (0, 2)), gates, eta, (0, 1))


def _measure_mid(eta: float) -> Medium:
    gates = (
        GateSpec("unitary", H, (0,), 0),
        GateSpec("unitary", CNOT, (0, 1), 1),
        GateSpec("measurement", X, (1,), 2),
        GateSpec("unitary", CNOT, (1, 0), 3),
    )
    return Medium(2, ((0, 3), (0, 3)), gates, eta, (0, 1))


def _dense3(eta: float) -> Medium:
    gates = (
        GateSpec("unitary", H, (0,), 0),
        GateSpec("unitary", H, (1,), 0),
        GateSpec("unitary", H, (2,), 0),
        GateSpec("unitary", CZ, (0, 1), 1),
        GateSpec("unitary", CZ, (1, 2), 2),
        GateSpec("unitary", CZ, (0, 2), 3),
    )
    return Medium(3, ((0, 3), (0, 3), (0, 3)), gates, eta, (0, 1, 2))


#: name -> builder(eta); the acceptance suite of small circuits
FIXTURE_BUILDERS = {
    "ghz3": _ghz3,
    "bell_measure": _bell_measure,
    "staggered": _staggered,
    "single_h": _single_h,
    "rotated_pair": _rotated_pair,
    "parallel_cz": _parallel_cz,
    "measure_mid": _measure_mid,
    "dense3": _dense3,
}


@pytest.fixture(scope="session")
def fixture_suite():
    return FIXTURE_BUILDERS


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def z_fault():
    return FaultSpec.z_basis()


@pytest.fixture(scope="session")
def x_fault():
    return FaultSpec.x_basis()
