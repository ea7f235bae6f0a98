"""Reference dense state-vector kernels.

Qubit 0 is the most significant bit of a basis index, so a state reshaped to
``(2,) * n`` has qubit ``q`` on axis ``q``. These kernels favour clarity; the
batched engine in :mod:`spqcnn.engine` is checked against them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .circuit import CircuitIR, Gate, Observable
from .groups import Permutation

MAX_DENSE_QUBITS = 12
MAX_STATE_QUBITS = 20

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class CapacityGuardError(ValueError):
    pass


@dataclass
class StateVector:
    amplitudes: np.ndarray
    n: int

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (2**self.n,):
            raise ValueError(f"expected {2**self.n} amplitudes, got {self.amplitudes.shape}")

    @classmethod
    def zero(cls, n: int) -> StateVector:
        return cls(zero_state(n), n)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def dump(self, path, seed: int | None = None) -> None:
        """Little-endian interleaved (re, im) doubles plus a JSON header."""
        path = Path(path)
        self.amplitudes.astype("<c16").tofile(path)
        path.with_suffix(path.suffix + ".json").write_text(json.dumps({"n": self.n, "seed": seed}))

    @classmethod
    def load(cls, path) -> StateVector:
        path = Path(path)
        header = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        return cls(np.fromfile(path, dtype="<c16"), int(header["n"]))


def zero_state(n: int) -> np.ndarray:
    if n > MAX_STATE_QUBITS:
        raise CapacityGuardError(f"n={n} exceeds the dense state limit {MAX_STATE_QUBITS}")
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    return psi


def _n_of(psi: np.ndarray) -> int:
    n = int(psi.size).bit_length() - 1
    if 2**n != psi.size:
        raise ValueError("state length is not a power of two")
    return n


def rotation_matrix(kind: str, angle: float) -> np.ndarray:
    """``exp(-i angle P)`` for a single-qubit Pauli ``P``."""
    c, s = np.cos(angle), np.sin(angle)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RZ":
        return np.array([[np.exp(-1j * angle), 0], [0, np.exp(1j * angle)]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    raise ValueError(f"no single-qubit matrix for {kind!r}")


def apply_1q(psi: np.ndarray, mat: np.ndarray, q: int) -> np.ndarray:
    n = _n_of(psi)
    if not 0 <= q < n:
        raise IndexError(f"qubit {q} out of range for n={n}")
    t = psi.reshape(2**q, 2, -1)
    return np.einsum("ij,ajb->aib", mat, t).reshape(-1)


def z_pattern(n: int, qubits) -> np.ndarray:
    """Diagonal of ``Z_a Z_b ...`` as a vector of +-1."""
    idx = np.arange(2**n)
    out = np.ones(2**n)
    for q in qubits:
        out *= 1 - 2 * ((idx >> (n - 1 - q)) & 1)
    return out


def apply_gate(psi: np.ndarray, gate: Gate, angle: float) -> np.ndarray:
    """Return ``exp(-i angle P) psi`` for the gate's Pauli ``P``."""
    n = _n_of(psi)
    for q in gate.qubits:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for n={n}")
    if gate.kind == "RZZ":
        return np.exp(-1j * angle * z_pattern(n, gate.qubits)) * psi
    return apply_1q(psi, rotation_matrix(gate.kind, angle), gate.qubits[0])


def apply_circuit(psi: np.ndarray, circuit: CircuitIR, theta) -> np.ndarray:
    angles = circuit.angles(theta)
    out = np.asarray(psi, dtype=complex)
    for gate, angle in zip(circuit.all_gates(), angles):
        out = apply_gate(out, gate, angle)
    return out


def apply_pauli(psi: np.ndarray, pauli: str, q: int) -> np.ndarray:
    return apply_1q(psi, PAULI[pauli], q)


def exact_expectation(psi: np.ndarray, obs: Observable) -> float:
    total = 0.0
    for q, p, c in obs.terms:
        total += c * float(np.real(np.vdot(psi, apply_pauli(psi, p, q))))
    return total * obs.scale


def single_qubit_expectations(psi: np.ndarray) -> dict[str, np.ndarray]:
    """``<X_q>, <Y_q>, <Z_q>`` for every qubit via reduced density matrices."""
    n = _n_of(psi)
    t = psi.reshape((2,) * n)
    out = {p: np.zeros(n) for p in "XYZ"}
    for q in range(n):
        m = np.moveaxis(t, q, 0).reshape(2, -1)
        rho = m @ m.conj().T
        out["X"][q] = 2 * rho[0, 1].real
        out["Y"][q] = 2 * rho[1, 0].imag
        out["Z"][q] = (rho[0, 0] - rho[1, 1]).real
    return out


def dense_unitary(circuit: CircuitIR, theta) -> np.ndarray:
    """Full ``2^n x 2^n`` matrix, one basis column at a time."""
    n = circuit.n
    if n > MAX_DENSE_QUBITS:
        raise CapacityGuardError(f"n={n} exceeds the dense unitary limit {MAX_DENSE_QUBITS}")
    dim = 2**n
    out = np.empty((dim, dim), dtype=complex)
    basis = np.zeros(dim, dtype=complex)
    for k in range(dim):
        basis[:] = 0
        basis[k] = 1
        out[:, k] = apply_circuit(basis, circuit, theta)
    return out


def permute_state(psi: np.ndarray, g: Permutation) -> np.ndarray:
    """``U_g psi``: the content of qubit ``j`` moves to qubit ``g(j)``."""
    n = _n_of(psi)
    if g.n != n:
        raise ValueError(f"permutation on {g.n} qubits applied to {n}-qubit state")
    return np.transpose(psi.reshape((2,) * n), g.inverse().images).reshape(-1)


def permutation_unitary(g: Permutation) -> np.ndarray:
    """Matrix of :func:`permute_state`; ``U_g U_h = U_{g*h}``."""
    n = g.n
    if n > MAX_DENSE_QUBITS:
        raise CapacityGuardError(f"n={n} exceeds the dense unitary limit {MAX_DENSE_QUBITS}")
    dim = 2**n
    idx = np.arange(dim)
    target = np.zeros(dim, dtype=int)
    for j in range(n):
        bit = (idx >> (n - 1 - j)) & 1
        target |= bit << (n - 1 - g(j))
    U = np.zeros((dim, dim), dtype=complex)
    U[target, idx] = 1.0
    return U


def random_state(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)
