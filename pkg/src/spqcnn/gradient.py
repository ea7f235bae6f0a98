"""Parameter-shift gradients, simultaneous-shift packing and shot-sampled estimates.

With ``R_P(a) = exp(-i a P)`` the derivative of an expectation with respect
to one gate angle is ``<O>(a + pi/4) - <O>(a - pi/4)``. A slot used by
several gates (an *occurrence* each) gets the chain-rule sum over its
occurrences, each weighted by the gate's sign. Shifting the slot as a whole
is only exact when no two occurrences share a lightcone, which fails when a
slot repeats inside one branch, so shifts are applied per occurrence.

Occurrences whose forward lightcones are disjoint can be shifted in the
same circuit: the derivative for each one is read from the qubits of its own
lightcone only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuit import CircuitIR, Observable
from .engine import Program, outcome_signs, rotate_to_basis
from .shots import measurement_bases, qubit_weights, sample_indices
from .statevector import apply_gate, exact_expectation

SHIFT = np.pi / 4


@dataclass(frozen=True)
class ShiftGroup:
    positions: tuple[int, ...]
    slots: tuple[int, ...]
    cones: tuple[frozenset[int], ...]

    @property
    def lightcones(self) -> frozenset[int]:
        out: frozenset[int] = frozenset()
        for c in self.cones:
            out |= c
        return out


@dataclass
class ShotLedger:
    mode: str
    shots_per_circuit: list[int] = field(default_factory=list)

    @property
    def circuits(self) -> int:
        return len(self.shots_per_circuit)

    @property
    def total(self) -> int:
        return int(sum(self.shots_per_circuit))


@dataclass
class GradientEstimate:
    grad: np.ndarray
    value: float  # estimate of <O> from the unshifted circuit
    ledger: ShotLedger


# ---------------------------------------------------------------------------
# exact reference path


def run_angles(psi: np.ndarray, circuit: CircuitIR, angles) -> np.ndarray:
    out = np.asarray(psi, dtype=complex)
    for gate, a in zip(circuit.all_gates(), angles):
        out = apply_gate(out, gate, a)
    return out


def _check_slot(circuit: CircuitIR, slot: int) -> None:
    if not 0 <= slot < circuit.n_slots:
        raise IndexError(f"slot {slot} out of range (n_slots={circuit.n_slots})")


def shift_gradient_exact(circuit: CircuitIR, theta, psi, obs: Observable, slot: int) -> float:
    """``d<O>/d theta[slot]`` by literal +-pi/4 shifted circuits, one occurrence at a time."""
    _check_slot(circuit, slot)
    angles = circuit.angles(theta)
    total = 0.0
    for pos, g in enumerate(circuit.all_gates()):
        if g.slot != slot:
            continue
        up, down = angles.copy(), angles.copy()
        up[pos] += SHIFT
        down[pos] -= SHIFT
        diff = exact_expectation(run_angles(psi, circuit, up), obs) - exact_expectation(
            run_angles(psi, circuit, down), obs
        )
        total += g.sign * diff
    return total


def finite_difference(circuit: CircuitIR, theta, psi, obs: Observable, slot: int, h: float = 1e-5) -> float:
    _check_slot(circuit, slot)
    theta = np.asarray(theta, dtype=float)
    up, down = theta.copy(), theta.copy()
    up[slot] += h
    down[slot] -= h
    from .statevector import apply_circuit

    f_up = exact_expectation(apply_circuit(psi, circuit, up), obs)
    f_down = exact_expectation(apply_circuit(psi, circuit, down), obs)
    return (f_up - f_down) / (2 * h)


# ---------------------------------------------------------------------------
# lightcones and packing


def forward_cone(circuit: CircuitIR, pos: int) -> frozenset[int]:
    """Output qubits whose marginals can depend on gate ``pos``."""
    gates = circuit.all_gates()
    live = set(gates[pos].qubits)
    for g in gates[pos + 1 :]:
        if live & set(g.qubits):
            live |= set(g.qubits)
    return frozenset(live)


def pack_shift_groups(circuit: CircuitIR) -> list[ShiftGroup]:
    """Greedy first-fit packing of all occurrences into disjoint-lightcone groups.

    Occurrences are visited by layer, then slot, then position.
    """
    gates = circuit.all_gates()
    layers = circuit.gate_layers()
    order = sorted(range(len(gates)), key=lambda p: (layers[p], gates[p].slot, p))
    groups: list[list[int]] = []
    used: list[set[int]] = []
    cones = {p: forward_cone(circuit, p) for p in order}
    for p in order:
        for k, qs in enumerate(used):
            if not qs & cones[p]:
                groups[k].append(p)
                qs |= cones[p]
                break
        else:
            groups.append([p])
            used.append(set(cones[p]))
    return [
        ShiftGroup(tuple(grp), tuple(gates[p].slot for p in grp), tuple(cones[p] for p in grp))
        for grp in groups
    ]


# ---------------------------------------------------------------------------
# fast exact path


def _rotated(program: Program, rows: np.ndarray, obs: Observable) -> np.ndarray:
    return rotate_to_basis(rows, program.n, measurement_bases(obs))


def value_and_gradient_exact(
    circuit: CircuitIR, theta, psi, obs: Observable, program: Program | None = None,
) -> tuple[float, np.ndarray]:
    """``<O>`` and all slot derivatives at once from the shifted-circuit states.

    Each occurrence's shifted pair is ``(phi -+ 1j chi) / sqrt(2)``, so the
    difference of the two expectations is ``2 Im <phi|O|chi>``.
    """
    program = program or Program(circuit)
    angles = circuit.angles(theta)
    positions = list(range(len(program.gates)))
    phi, chi = program.run(psi, angles, [{p: ("pauli", 0.0)} for p in positions])
    rot = _rotated(program, np.vstack([phi[None, :], chi]), obs)
    diag = outcome_signs(obs.n) @ qubit_weights(obs)
    value = float(np.abs(rot[0]) ** 2 @ diag)
    d = 2 * np.imag((rot[0].conj() * diag) @ rot[1:].T)
    grad = np.zeros(circuit.n_slots)
    signs = np.array([g.sign for g in program.gates], dtype=float)
    slots = np.array([g.slot for g in program.gates])
    np.add.at(grad, slots, signs * d)
    return value, grad


def gradient_exact(circuit: CircuitIR, theta, psi, obs: Observable, program: Program | None = None) -> np.ndarray:
    return value_and_gradient_exact(circuit, theta, psi, obs, program)[1]


def _group_columns(groups: Sequence[ShiftGroup]):
    """Columns for every group: a ``chi`` column for singletons, a +/- pair otherwise."""
    cols = []
    index = []
    for grp in groups:
        if len(grp.positions) == 1:
            index.append(("chi", len(cols)))
            cols.append({grp.positions[0]: ("pauli", 0.0)})
        else:
            index.append(("pair", len(cols)))
            cols.append({p: ("shift", SHIFT) for p in grp.positions})
            cols.append({p: ("shift", -SHIFT) for p in grp.positions})
    return cols, index


def _pair_amplitudes(phi_rot, col_rot, index):
    """Rotated amplitudes of (+, -) circuits for each group: shape (G, 2, D)."""
    out = np.empty((len(index), 2, phi_rot.size), dtype=complex)
    for g, (kind, c) in enumerate(index):
        if kind == "chi":
            out[g, 0] = (phi_rot - 1j * col_rot[c]) / np.sqrt(2)
            out[g, 1] = (phi_rot + 1j * col_rot[c]) / np.sqrt(2)
        else:
            out[g, 0] = col_rot[c]
            out[g, 1] = col_rot[c + 1]
    return out


def gradient_packed_exact(
    circuit: CircuitIR, theta, psi, obs: Observable,
    groups: Sequence[ShiftGroup] | None = None, program: Program | None = None,
) -> np.ndarray:
    """Exact gradient assembled group by group from simultaneously shifted circuits."""
    program = program or Program(circuit)
    groups = groups if groups is not None else pack_shift_groups(circuit)
    angles = circuit.angles(theta)
    cols, index = _group_columns(groups)
    phi, Y = program.run(psi, angles, cols)
    rot = _rotated(program, np.vstack([phi[None, :], Y]), obs)
    amps = _pair_amplitudes(rot[0], rot[1:], index)
    marg = (np.abs(amps) ** 2) @ outcome_signs(obs.n)  # (G, 2, n)
    w = qubit_weights(obs)
    grad = np.zeros(circuit.n_slots)
    for g, grp in enumerate(groups):
        for p, cone in zip(grp.positions, grp.cones):
            qs = sorted(cone)
            d = float((marg[g, 0, qs] - marg[g, 1, qs]) @ w[qs])
            grad[program.gates[p].slot] += program.gates[p].sign * d
    return grad


# ---------------------------------------------------------------------------
# shot-sampled estimates


def allocate_shots(total: int, pairs: int) -> tuple[int, np.ndarray]:
    """Spread ``total`` shots evenly over one base circuit and ``pairs`` +/- pairs.

    Both circuits of a pair always get the same count; leftovers go to the
    base circuit (odd remainder) and to the first pairs.
    """
    circuits = 1 + 2 * pairs
    if total < circuits:
        raise ValueError(f"{total} shots cannot cover {circuits} circuits")
    s, rem = divmod(total, circuits)
    per_pair = np.full(pairs, s, dtype=int)
    per_pair[: rem // 2] += 1
    return s + rem % 2, per_pair


def _per_circuit_means(values: np.ndarray, counts: np.ndarray) -> np.ndarray:
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return np.add.reduceat(values, starts, axis=0) / counts[:, None] if values.ndim == 2 else (
        np.add.reduceat(values, starts) / counts
    )


def estimate_gradient(
    circuit: CircuitIR,
    theta,
    psi,
    obs: Observable,
    rng: np.random.Generator,
    mode: str = "sp",
    shots_per_circuit: int | None = None,
    total_shots: int | None = None,
    program: Program | None = None,
    groups: Sequence[ShiftGroup] | None = None,
) -> GradientEstimate:
    """Shot-sampled gradient and base-circuit value.

    ``sp``: one +/- circuit pair per packed group; every shot reads all qubits
    and each occurrence uses the outcomes inside its lightcone.
    ``randomized``: one +/- pair per occurrence; each shot reads one random
    qubit of the occurrence's lightcone (all qubits for the base circuit),
    scaled by the lightcone size.
    Give either ``shots_per_circuit`` or a ``total_shots`` budget.
    """
    if (shots_per_circuit is None) == (total_shots is None):
        raise ValueError("give exactly one of shots_per_circuit and total_shots")
    if mode not in ("sp", "randomized"):
        raise ValueError(f"unknown mode {mode!r}")
    program = program or Program(circuit)
    angles = circuit.angles(theta)
    n = obs.n
    w = qubit_weights(obs)
    signs_table = outcome_signs(n)

    if mode == "sp":
        groups = groups if groups is not None else pack_shift_groups(circuit)
        units = [(grp.positions, grp.cones) for grp in groups]
        cols, index = _group_columns(groups)
    else:
        gates = program.gates
        units = [((p,), (forward_cone(circuit, p),)) for p in range(len(gates))]
        cols = [{p: ("pauli", 0.0)} for p in range(len(gates))]
        index = [("chi", k) for k in range(len(gates))]

    if shots_per_circuit is not None:
        if shots_per_circuit < 1:
            raise ValueError("shots must be at least 1")
        base_shots, pair_shots = shots_per_circuit, np.full(len(units), shots_per_circuit, dtype=int)
    else:
        base_shots, pair_shots = allocate_shots(int(total_shots), len(units))

    phi, Y = program.run(psi, angles, cols)
    rot = _rotated(program, np.vstack([phi[None, :], Y]), obs)
    amps = _pair_amplitudes(rot[0], rot[1:], index)
    probs = np.vstack([np.abs(rot[0])[None, :] ** 2, (np.abs(amps) ** 2).reshape(-1, rot.shape[1])])
    counts = np.concatenate([[base_shots], np.repeat(pair_shots, 2)])

    grad = np.zeros(circuit.n_slots)
    if mode == "sp":
        idx = sample_indices(probs, counts, rng)
        per_qubit = _per_circuit_means(signs_table[idx] * w, counts)  # (C, n)
        value = float(per_qubit[0].sum())
        for u, (positions, cones) in enumerate(units):
            plus, minus = per_qubit[1 + 2 * u], per_qubit[2 + 2 * u]
            for p, cone in zip(positions, cones):
                qs = sorted(cone)
                g = program.gates[p]
                grad[g.slot] += g.sign * float(plus[qs].sum() - minus[qs].sum())
    else:
        marg = probs @ signs_table  # (C, n) exact single-qubit means
        cone_arrays = [np.arange(n)] + [np.array(sorted(units[u][1][0])) for u in range(len(units)) for _ in (0, 1)]
        sizes = np.array([len(c) for c in cone_arrays])
        padded = np.zeros((len(cone_arrays), n), dtype=int)
        for c, arr in enumerate(cone_arrays):
            padded[c, : arr.size] = arr
        rows = np.repeat(np.arange(len(counts)), counts)
        picks = padded[rows, (rng.random(rows.size) * sizes[rows]).astype(int)]
        plus = rng.random(rows.size) < (1 + marg[rows, picks]) / 2
        vals = sizes[rows] * w[picks] * np.where(plus, 1.0, -1.0)
        means = _per_circuit_means(vals, counts)
        value = float(means[0])
        for u, (positions, _) in enumerate(units):
            g = program.gates[positions[0]]
            grad[g.slot] += g.sign * float(means[1 + 2 * u] - means[2 + 2 * u])
    return GradientEstimate(grad, value, ShotLedger(mode, counts.tolist()))
