"""Heisenberg models on the 2x2x2 cube and their noisy ground-state datasets.

Bond classes follow :data:`spqcnn.presets.CUBE_BONDS`: A on the top face,
B on the verticals, C on the bottom face. Model 1 uses ``+J_B`` on the
verticals and model 2 uses ``-J_B``; everything else is shared.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .presets import CUBE_BONDS
from .rng import make_rng
from .statevector import PAULI, StateVector

DEMO_COUPLINGS = (1.0, 1.5, 1.3)


class DegeneracyError(ValueError):
    pass


@dataclass(frozen=True)
class HeisenbergSpec:
    couplings: tuple[float, float, float] = DEMO_COUPLINGS
    mu: int = 1
    bonds: tuple[tuple[int, int, str], ...] = CUBE_BONDS

    def __post_init__(self):
        if self.mu not in (1, 2):
            raise ValueError(f"mu must be 1 or 2, got {self.mu}")
        for j, k, c in self.bonds:
            if c not in "ABC" or j == k:
                raise ValueError(f"bad bond {(j, k, c)}")

    @property
    def n(self) -> int:
        return max(max(j, k) for j, k, _ in self.bonds) + 1

    def coupling(self, bond_class: str) -> float:
        ja, jb, jc = self.couplings
        if bond_class == "A":
            return ja
        if bond_class == "C":
            return jc
        return jb if self.mu == 1 else -jb


def _two_site(n: int, j: int, k: int, p: str) -> np.ndarray:
    ops = [PAULI["I"]] * n
    ops[j] = ops[k] = PAULI[p]
    out = ops[0]
    for op in ops[1:]:
        out = np.kron(out, op)
    return out


def build_hamiltonian(spec: HeisenbergSpec) -> np.ndarray:
    n = spec.n
    H = np.zeros((2**n, 2**n), dtype=complex)
    for j, k, c in spec.bonds:
        J = spec.coupling(c)
        if J == 0:
            continue
        for p in "XYZ":
            H += J * _two_site(n, j, k, p)
    return H


def ground_state(H: np.ndarray, gap_tol: float = 1e-8) -> tuple[StateVector, float]:
    """Lowest eigenvector of a dense Hermitian matrix and the gap above it."""
    if not np.allclose(H, H.conj().T, atol=1e-12):
        raise ValueError("Hamiltonian is not Hermitian")
    w, v = np.linalg.eigh(H)
    gap = float(w[1] - w[0])
    if gap < gap_tol:
        raise DegeneracyError(f"ground state is degenerate (gap {gap:.3e} < {gap_tol:.1e})")
    psi = v[:, 0]
    # fix the global phase so the result does not depend on the eigensolver
    k = int(np.argmax(np.abs(psi) > 1e-8))
    psi = psi * np.exp(-1j * np.angle(psi[k]))
    n = int(H.shape[0]).bit_length() - 1
    return StateVector(psi / np.linalg.norm(psi), n), gap


@lru_cache(maxsize=16)
def model_ground_state(mu: int, couplings: tuple[float, float, float] = DEMO_COUPLINGS,
                       gap_tol: float = 1e-8) -> StateVector:
    state, _ = ground_state(build_hamiltonian(HeisenbergSpec(couplings, mu)), gap_tol)
    return state


@dataclass
class NoisyState:
    state: StateVector
    label: int
    axes: np.ndarray = field(repr=False)
    angles: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        if not np.allclose(np.linalg.norm(self.axes, axis=1), 1.0, atol=1e-12):
            raise ValueError("noise axes must be unit vectors")


def noise_unitary(axis, eps: float) -> np.ndarray:
    """``exp(i eps n.sigma) = cos(eps) I + i sin(eps) n.sigma``."""
    ns = axis[0] * PAULI["X"] + axis[1] * PAULI["Y"] + axis[2] * PAULI["Z"]
    return np.cos(eps) * PAULI["I"] + 1j * np.sin(eps) * ns


def apply_noise(psi: np.ndarray, axes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    n = len(angles)
    t = np.asarray(psi, dtype=complex).reshape((2,) * n)
    for q in range(n):
        t = np.moveaxis(np.tensordot(noise_unitary(axes[q], angles[q]), t, axes=([1], [q])), 0, q)
    return t.reshape(-1)


def sample_noisy_state(base: StateVector, gamma: float, rng: np.random.Generator, label: int = 1) -> NoisyState:
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    n = base.n
    axes = rng.normal(size=(n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.normal(0.0, gamma * np.pi / 2, size=n)
    psi = apply_noise(base.amplitudes, axes, angles)
    return NoisyState(StateVector(psi, n), label, axes, angles)


def make_dataset(n_t: int, gamma: float, seed: int, tag: str = "train",
                 couplings: tuple[float, float, float] = DEMO_COUPLINGS) -> list[NoisyState]:
    """``n_t`` noisy ground states of model 1 (label 1), then ``n_t`` of model 2 (label 0)."""
    if n_t < 1:
        raise ValueError("n_t must be at least 1")
    out = []
    for mu, label in ((1, 1), (2, 0)):
        base = model_ground_state(mu, tuple(couplings))
        rng = make_rng(seed, f"{tag}-data-{mu}")
        out.extend(sample_noisy_state(base, gamma, rng, label) for _ in range(n_t))
    return out


def dataset_arrays(data: list[NoisyState]) -> tuple[np.ndarray, np.ndarray]:
    """Stacked amplitudes (rows) and labels."""
    return np.stack([d.state.amplitudes for d in data]), np.array([d.label for d in data])
