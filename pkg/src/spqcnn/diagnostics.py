"""Monte Carlo barren-plateau scans on ring circuits with final local rotations.

For ``C = sum_j C_j`` with ``C_j = <O_j>`` after the circuit, the scan draws
all gate angles uniformly and reports the sample means of ``C_j`` and of
``C_j C_k`` (both should vanish once each qubit ends in a random ``RX RZ``
pair) together with ``Var[C]`` for each system size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuit import CircuitIR, build_split_circuit
from .engine import Program
from .presets import translation_ring
from .rng import make_rng
from .splitting import auto_split
from .statevector import MAX_DENSE_QUBITS, CapacityGuardError, single_qubit_expectations, zero_state


@dataclass
class ScanRow:
    n: int
    samples: int
    var_c: float
    var_c_err: float
    mean_var_cj: float
    worst_mean_z: float  # max_j |E[C_j]| / sigma_MC
    worst_cross_z: float  # max_{j<k} |E[C_j C_k]| / sigma_MC


@dataclass
class BPReport:
    rows: list[ScanRow] = field(default_factory=list)
    exponent: float = float("nan")  # c in Var[C](n) ~ n^(-c), from the two extreme sizes
    z_bound: float = 4.0

    @property
    def means_ok(self) -> bool:
        return all(r.worst_mean_z <= self.z_bound and r.worst_cross_z <= self.z_bound for r in self.rows)

    def decay_ratio(self) -> float:
        return self.rows[-1].var_c / self.rows[0].var_c

    def exponential_reference(self, base: float = 2.0) -> float:
        """Ratio a ``base^-n`` decay would give between the extreme sizes."""
        return base ** -(self.rows[-1].n - self.rows[0].n)


def ring_circuit(n: int, layers: int = 3, depth: int = 2) -> CircuitIR:
    """Non-equivariant split circuit on a ring, plus a final ``RX RZ`` on every qubit."""
    plan = auto_split(translation_ring(n), layers)
    return build_split_circuit(plan, [depth] * layers).with_fresh_slots().with_final_rotations()


def _random_angles(circuit: CircuitIR, rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(0.0, 2 * np.pi, size=circuit.n_slots)
    # final rotations over [0, pi), which already covers each rotation once
    for g in circuit.final_rotations:
        theta[g.slot] = rng.uniform(0.0, np.pi)
    return theta


def local_costs(circuit: CircuitIR, samples: int, rng: np.random.Generator, pauli: str = "X",
                psi: np.ndarray | None = None) -> np.ndarray:
    """``C_j`` for each random draw, shape ``(samples, n)``."""
    n = circuit.n
    if n > MAX_DENSE_QUBITS:
        raise CapacityGuardError(f"n={n} exceeds the scan limit {MAX_DENSE_QUBITS}")
    program = Program(circuit)
    psi = zero_state(n) if psi is None else psi
    out = np.empty((samples, n))
    for s in range(samples):
        phi = program.evolve(psi, circuit.angles(_random_angles(circuit, rng)))
        out[s] = single_qubit_expectations(phi)[pauli]
    return out


def _scan_row(n: int, costs: np.ndarray) -> ScanRow:
    samples = len(costs)
    root = np.sqrt(samples)
    mean = costs.mean(axis=0)
    z_mean = np.abs(mean) / (costs.std(axis=0, ddof=1) / root)
    j, k = np.triu_indices(n, 1)
    prod = costs[:, j] * costs[:, k]
    z_cross = np.abs(prod.mean(axis=0)) / (prod.std(axis=0, ddof=1) / root)
    total = costs.sum(axis=1)
    var_c = float(total.var(ddof=1))
    # standard error of a sample variance from the fourth central moment
    m4 = float(np.mean((total - total.mean()) ** 4))
    err = float(np.sqrt(max(m4 - var_c**2, 0.0) / samples))
    return ScanRow(n, samples, var_c, err, float(costs.var(axis=0, ddof=1).mean()),
                   float(z_mean.max()), float(z_cross.max()))


def bp_diagnostics(n_list: Sequence[int] = (4, 8), samples: int = 10_000, seed: int = 0,
                   layers: int = 3, depth: int = 2, pauli: str = "X") -> BPReport:
    report = BPReport()
    for n in n_list:
        costs = local_costs(ring_circuit(n, layers, depth), samples, make_rng(seed, "bp-scan", n), pauli)
        report.rows.append(_scan_row(n, costs))
    if len(report.rows) >= 2:
        a, b = report.rows[0], report.rows[-1]
        report.exponent = float(-np.log(b.var_c / a.var_c) / np.log(b.n / a.n))
    return report
