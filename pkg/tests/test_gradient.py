from __future__ import annotations

import numpy as np
import pytest

from spqcnn.circuit import CircuitIR, CircuitLayer, Gate, Observable
from spqcnn.diagnostics import ring_circuit
from spqcnn.gradient import (
    SHIFT,
    allocate_shots,
    estimate_gradient,
    finite_difference,
    forward_cone,
    gradient_exact,
    gradient_packed_exact,
    pack_shift_groups,
    run_angles,
    shift_gradient_exact,
    value_and_gradient_exact,
)
from spqcnn.rng import make_rng
from spqcnn.statevector import apply_circuit, exact_expectation, random_state, zero_state


def _one_qubit(kind="RX"):
    layer = CircuitLayer((frozenset({0}),), (Gate(kind, (0,), 0),))
    return CircuitIR(1, (layer,), 1)


def _point(circuit, seed):
    rng = make_rng(seed, "grad-point")
    return rng.uniform(0, 2 * np.pi, circuit.n_slots), random_state(circuit.n, rng)


def test_single_rotation_closed_form():
    circ = _one_qubit()
    theta = np.array([np.pi / 8])
    d = shift_gradient_exact(circ, theta, zero_state(1), Observable.sum_z(1), 0)
    assert d == pytest.approx(-np.sqrt(2), abs=1e-12)
    for t in np.linspace(0, 2 * np.pi, 7):
        assert gradient_exact(circ, [t], zero_state(1), Observable.sum_z(1))[0] == pytest.approx(-2 * np.sin(2 * t), abs=1e-12)


def test_unused_slot_has_zero_gradient():
    layer = CircuitLayer((frozenset({0}),), (Gate("RX", (0,), 0),))
    circ = CircuitIR(1, (layer,), 2)
    theta = np.array([0.4, 1.1])
    assert shift_gradient_exact(circ, theta, zero_state(1), Observable.sum_z(1), 1) == 0.0
    assert gradient_exact(circ, theta, zero_state(1), Observable.sum_z(1))[1] == 0.0


@pytest.mark.parametrize("seed", range(2))
def test_shift_matches_finite_difference(ansatz, seed):
    theta, psi = _point(ansatz, seed)
    O = Observable.sum_x(8)
    fast = gradient_exact(ansatz, theta, psi, O)
    for slot in range(0, ansatz.n_slots, 7):
        fd = finite_difference(ansatz, theta, psi, O, slot)
        assert shift_gradient_exact(ansatz, theta, psi, O, slot) == pytest.approx(fd, rel=1e-6, abs=1e-8)
        assert fast[slot] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_value_matches_forward_pass(ansatz):
    theta, psi = _point(ansatz, 3)
    O = Observable.sum_x(8)
    value, _ = value_and_gradient_exact(ansatz, theta, psi, O)
    assert value == pytest.approx(exact_expectation(apply_circuit(psi, ansatz, theta), O), abs=1e-12)


def test_whole_slot_shift_is_not_exact_for_shared_slots(ansatz):
    # shifting every occurrence of a slot together differs from the derivative
    theta, psi = _point(ansatz, 4)
    O = Observable.sum_x(8)
    angles = ansatz.angles(theta)
    gates = ansatz.all_gates()
    worst = 0.0
    for slot, positions in ansatz.sharing().items():
        up, down = angles.copy(), angles.copy()
        for p in positions:
            up[p] += gates[p].sign * SHIFT
            down[p] -= gates[p].sign * SHIFT
        whole = exact_expectation(run_angles(psi, ansatz, up), O) - exact_expectation(run_angles(psi, ansatz, down), O)
        worst = max(worst, abs(whole - finite_difference(ansatz, theta, psi, O, slot)))
    assert worst > 1e-3


def test_forward_cone_grows_with_later_gates():
    gates = (Gate("RX", (0,), 0), Gate("RZZ", (0, 1), 1), Gate("RX", (2,), 2))
    circ = CircuitIR(3, (CircuitLayer((frozenset({0, 1, 2}),), gates),), 3)
    assert forward_cone(circ, 0) == {0, 1}
    assert forward_cone(circ, 2) == {2}


def test_groups_have_disjoint_cones_and_cover_every_occurrence(ansatz):
    groups = pack_shift_groups(ansatz)
    covered = sorted(p for g in groups for p in g.positions)
    assert covered == list(range(len(ansatz.all_gates())))
    for g in groups:
        seen: set[int] = set()
        for cone in g.cones:
            assert not seen & cone
            seen |= cone


def test_demo_packing_counts(ansatz):
    groups = pack_shift_groups(ansatz)
    assert len(groups) == 177
    assert 1 + 2 * len(groups) == 355
    assert 1 + 2 * len(ansatz.all_gates()) == 577


def test_last_layer_occurrences_pack_across_branches(free_ansatz):
    layers = free_ansatz.gate_layers()
    last = max(layers)
    groups = [g for g in pack_shift_groups(free_ansatz) if all(layers[p] == last for p in g.positions)]
    # four disjoint pair branches share each packed circuit
    assert max(len(g.positions) for g in groups) == 4


def test_first_layer_occurrences_stay_alone(ansatz):
    layers = ansatz.gate_layers()
    for g in pack_shift_groups(ansatz):
        if any(layers[p] == 0 for p in g.positions):
            assert len(g.positions) == 1


def test_shared_last_layer_slot_is_one_group(ansatz):
    # a shared slot whose occurrences sit in disjoint branches costs one pair
    layers = ansatz.gate_layers()
    last = max(layers)
    gates = ansatz.all_gates()
    home = {}
    for k, g in enumerate(pack_shift_groups(ansatz)):
        for p in g.positions:
            if layers[p] == last and gates[p].kind == "RZZ":
                home.setdefault(gates[p].slot, set()).add(k)
    assert home
    assert all(len(v) == 1 for v in home.values())


@pytest.mark.parametrize("which", ["ansatz", "free_ansatz"])
def test_packed_exact_equals_slot_wise(which, request):
    circ = request.getfixturevalue(which)
    theta, psi = _point(circ, 5)
    O = Observable.sum_x(8)
    np.testing.assert_allclose(gradient_packed_exact(circ, theta, psi, O), gradient_exact(circ, theta, psi, O), atol=1e-12)


def test_outside_lightcone_gradient_vanishes(free_ansatz):
    theta, psi = _point(free_ansatz, 6)
    O = Observable(8, ((0, "X", 1.0),))
    grad = gradient_exact(free_ansatz, theta, psi, O)
    gates = free_ansatz.all_gates()
    outside = [g.slot for p, g in enumerate(gates) if 0 not in forward_cone(free_ansatz, p)]
    assert outside
    np.testing.assert_allclose(grad[outside], 0.0, atol=1e-12)


def test_allocate_shots():
    base, pairs = allocate_shots(1445, 177)
    assert base + 2 * pairs.sum() == 1445
    # 1445 = 4 * 355 + 25: the odd shot goes to the base, 12 pairs get one more
    assert base == 5 and np.count_nonzero(pairs == 5) == 12
    base, pairs = allocate_shots(1445, 288)
    assert base + 2 * pairs.sum() == 1445
    assert pairs.max() - pairs.min() <= 1
    with pytest.raises(ValueError):
        allocate_shots(10, 5)


@pytest.mark.parametrize("mode,circuits", [("sp", 355), ("randomized", 577)])
def test_ledger_respects_budget(ansatz, mode, circuits):
    theta, psi = _point(ansatz, 7)
    est = estimate_gradient(ansatz, theta, psi, Observable.sum_x(8), make_rng(0, "ledger"), mode, total_shots=1445)
    assert est.ledger.total == 1445
    assert est.ledger.circuits == circuits
    assert est.grad.shape == (ansatz.n_slots,)


def test_estimate_arguments_validated(ansatz):
    theta, psi = _point(ansatz, 7)
    O = Observable.sum_x(8)
    with pytest.raises(ValueError):
        estimate_gradient(ansatz, theta, psi, O, make_rng(0, "x"), "sp")
    with pytest.raises(ValueError):
        estimate_gradient(ansatz, theta, psi, O, make_rng(0, "x"), "other", shots_per_circuit=5)


@pytest.mark.parametrize("mode", ["sp", "randomized"])
def test_shot_estimates_are_unbiased(mode):
    circ = ring_circuit(4)
    theta, psi = _point(circ, 8)
    O = Observable.sum_x(4)
    exact = gradient_exact(circ, theta, psi, O)
    reps = np.array([
        estimate_gradient(circ, theta, psi, O, make_rng(s, "unbiased-grad"), mode, shots_per_circuit=2000).grad
        for s in range(200)
    ])
    se = reps.std(axis=0, ddof=1) / np.sqrt(len(reps))
    z = np.abs(reps.mean(axis=0) - exact) / np.maximum(se, 1e-12)
    assert z.max() < 5


def test_shot_noise_scales_inversely_with_shots():
    circ = ring_circuit(4)
    theta, psi = _point(circ, 9)
    O = Observable.sum_x(4)
    shots = np.array([100, 400, 1600])
    var = []
    for s in shots:
        reps = np.array([
            estimate_gradient(circ, theta, psi, O, make_rng(k, "scaling", int(s)), "sp", shots_per_circuit=int(s)).grad
            for k in range(100)
        ])
        var.append(np.trace(np.cov(reps.T)))
    slope = np.polyfit(np.log(shots), np.log(var), 1)[0]
    assert abs(slope + 1) < 0.1


def test_estimates_deterministic(ansatz):
    theta, psi = _point(ansatz, 10)
    O = Observable.sum_x(8)
    a = estimate_gradient(ansatz, theta, psi, O, make_rng(1, "det"), "sp", total_shots=1445)
    b = estimate_gradient(ansatz, theta, psi, O, make_rng(1, "det"), "sp", total_shots=1445)
    np.testing.assert_array_equal(a.grad, b.grad)
    assert a.value == b.value
