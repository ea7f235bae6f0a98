from __future__ import annotations

import numpy as np
import pytest

from spqcnn.engine import BASIS_CHANGE, Program, outcome_signs, rotate_to_basis
from spqcnn.gradient import SHIFT, run_angles
from spqcnn.statevector import apply_1q, apply_circuit, apply_gate, random_state


def test_evolve_matches_reference(ansatz, free_ansatz, rng):
    for circ in (ansatz, free_ansatz, ansatz.with_final_rotations()):
        prog = Program(circ)
        theta = rng.uniform(0, 2 * np.pi, circ.n_slots)
        psi = random_state(8, rng)
        assert np.allclose(prog.evolve(psi, circ.angles(theta)), apply_circuit(psi, circ, theta), atol=1e-12)


def test_evolve_batch_and_no_aliasing(ansatz, rng):
    prog = Program(ansatz)
    theta = rng.uniform(0, 2 * np.pi, ansatz.n_slots)
    batch = np.stack([random_state(8, rng) for _ in range(4)], axis=1)
    keep = batch.copy()
    out = prog.evolve(batch, ansatz.angles(theta))
    assert np.array_equal(batch, keep)
    for k in range(4):
        assert np.allclose(out[:, k], apply_circuit(batch[:, k], ansatz, theta), atol=1e-12)


def test_blocks_cover_every_gate_once(ansatz):
    prog = Program(ansatz)
    seen = sorted(p for blk in prog.blocks for p in blk.positions)
    assert seen == list(range(len(prog.gates)))
    levels = {}
    for blk in prog.blocks:
        levels.setdefault(blk.level, []).append(blk)
    for blks in levels.values():
        qs = [q for blk in blks for q in blk.qubits]
        assert len(qs) == len(set(qs))


def test_shift_columns_match_reference(ansatz, rng):
    prog = Program(ansatz)
    theta = rng.uniform(0, 2 * np.pi, ansatz.n_slots)
    angles = ansatz.angles(theta)
    psi = random_state(8, rng)
    positions = [0, 5, 50, 143, 287]
    cols = [{p: ("shift", SHIFT)} for p in positions] + [{3: ("shift", -SHIFT), 200: ("shift", SHIFT)}]
    phi, Y = prog.run(psi, angles, cols)
    assert np.allclose(phi, run_angles(psi, ansatz, angles), atol=1e-12)
    for col, y in zip(cols, Y):
        a = angles.copy()
        for p, (_, d) in col.items():
            a[p] += d
        assert np.allclose(y, run_angles(psi, ansatz, a), atol=1e-12)


def test_pauli_column_gives_derivative_direction(ansatz, rng):
    prog = Program(ansatz)
    theta = rng.uniform(0, 2 * np.pi, ansatz.n_slots)
    angles = ansatz.angles(theta)
    psi = random_state(8, rng)
    for p in (1, 60, 250):
        phi, (chi,) = prog.run(psi, angles, [{p: ("pauli", 0.0)}])
        for sgn in (1, -1):
            a = angles.copy()
            a[p] += sgn * SHIFT
            assert np.allclose((phi - sgn * 1j * chi) / np.sqrt(2), run_angles(psi, ansatz, a), atol=1e-12)


def test_basis_rotation_and_signs(rng):
    psi = random_state(2, rng)
    out = rotate_to_basis(psi, 2, ["X", "Y"])
    ref = apply_1q(apply_1q(psi, BASIS_CHANGE["X"], 0), BASIS_CHANGE["Y"], 1)
    assert np.allclose(out, ref)
    s = outcome_signs(2)
    assert s.tolist() == [[1, 1], [1, -1], [-1, 1], [-1, -1]]


def test_y_basis_change_diagonalizes_y():
    Y = np.array([[0, -1j], [1j, 0]])
    B = BASIS_CHANGE["Y"]
    assert np.allclose(B @ Y @ B.conj().T, np.diag([1, -1]))
    X = np.array([[0, 1], [1, 0]])
    Hd = BASIS_CHANGE["X"]
    assert np.allclose(Hd @ X @ Hd.conj().T, np.diag([1, -1]))


def test_empty_column_list(ansatz, rng):
    prog = Program(ansatz)
    phi, Y = prog.run(random_state(8, rng), ansatz.angles(np.zeros(ansatz.n_slots)), [])
    assert Y.shape == (0, 256)
    assert phi.shape == (256,)


def test_gate_kernel_agrees_with_einsum(rng):
    from spqcnn.circuit import Gate

    psi = random_state(5, rng)
    for q in range(5):
        g = Gate("RX", (q,), 0)
        assert np.allclose(apply_gate(psi, g, 0.7), apply_1q(psi, np.array(
            [[np.cos(0.7), -1j * np.sin(0.7)], [-1j * np.sin(0.7), np.cos(0.7)]]), q))
    assert pytest.approx(1.0) == np.linalg.norm(psi)
