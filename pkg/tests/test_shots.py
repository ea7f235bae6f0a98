from __future__ import annotations

import numpy as np
import pytest

from spqcnn.circuit import CircuitIR, CircuitLayer, Gate, Observable
from spqcnn.rng import make_rng
from spqcnn.shots import (
    analytic_variances,
    efficiency_ratio,
    estimate_randomized,
    estimate_sp,
    qubit_marginals,
    sample_indices,
)
from spqcnn.statevector import apply_circuit, exact_expectation, random_state, zero_state


def _plus(n):
    return np.full(2**n, 2 ** (-n / 2), dtype=complex)


def _ghz(n):
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    return psi


def test_sp_deterministic_outcome():
    est = estimate_sp(_plus(4), Observable.sum_x(4, normalize=True), 1000, make_rng(0, "t"))
    assert est.mean == 1.0
    assert est.variance == 0.0
    assert est.per_qubit_outcomes_used == 4000


def test_sp_symmetric_coin():
    n, shots = 4, 100_000
    est = estimate_sp(zero_state(n), Observable.sum_x(n, normalize=True), shots, make_rng(1, "t"))
    sigma = np.sqrt(1 / n / shots)
    assert abs(est.mean) < 5 * sigma


def test_shots_must_be_positive():
    with pytest.raises(ValueError):
        estimate_sp(zero_state(2), Observable.sum_x(2), 0, make_rng(0, "t"))


def test_sampler_matches_distribution():
    rng = make_rng(0, "sampler")
    p = rng.dirichlet(np.ones(16), size=2)
    p[0, 3] = 0
    p[0] /= p[0].sum()
    idx = sample_indices(p, [200_000, 200_000], rng)
    for r in range(2):
        freq = np.bincount(idx[r * 200_000:(r + 1) * 200_000], minlength=16) / 200_000
        assert np.all(np.abs(freq - p[r]) < 5 * np.sqrt(p[r] * (1 - p[r]) / 200_000) + 1e-12)
    assert np.bincount(idx[:200_000], minlength=16)[3] == 0


@pytest.mark.parametrize("seed", range(3))
def test_sp_and_randomized_converge_to_exact(ansatz, seed):
    rng = make_rng(seed, "conv")
    theta = rng.uniform(0, 2 * np.pi, ansatz.n_slots)
    psi = random_state(8, rng)
    O = Observable.sum_x(8)
    out = apply_circuit(psi, ansatz, theta)
    exact = exact_expectation(out, O)
    shots = 1_000_000
    sp = estimate_sp(out, O, shots, rng)
    assert abs(sp.mean - exact) <= 3 * np.sqrt(sp.variance / shots) + 1e-12
    rd = estimate_randomized(ansatz, theta, psi, O, shots, rng)
    assert abs(rd.mean - exact) <= 3 * np.sqrt(rd.variance / shots)
    assert rd.per_qubit_outcomes_used == shots


def test_unbiased_over_seeds(ansatz):
    O = Observable.sum_x(8)
    rng0 = make_rng(5, "unbiased")
    theta = rng0.uniform(0, 2 * np.pi, ansatz.n_slots)
    psi = random_state(8, rng0)
    out = apply_circuit(psi, ansatz, theta)
    exact = exact_expectation(out, O)
    for seed in range(20):
        r = make_rng(seed, "unbiased-run")
        for est in (estimate_sp(out, O, 100_000, r), estimate_randomized(ansatz, theta, psi, O, 100_000, r)):
            assert abs(est.mean - exact) <= 4 * np.sqrt(est.variance / 100_000)


def test_single_qubit_estimators_coincide_in_distribution():
    layer = CircuitLayer((frozenset({0}),), (Gate("RX", (0,), 0),))
    circ = CircuitIR(1, (layer,), 1)
    theta = np.array([0.3])
    O = Observable.sum_z(1)
    out = apply_circuit(zero_state(1), circ, theta)
    sp = estimate_sp(out, O, 200_000, make_rng(0, "a"))
    rd = estimate_randomized(circ, theta, zero_state(1), O, 200_000, make_rng(0, "b"))
    assert abs(sp.mean - rd.mean) < 5 * np.sqrt(2 * sp.variance / 200_000)
    assert sp.variance == pytest.approx(rd.variance, rel=0.02)


def test_randomized_lightcone_path_matches_fast_path(ansatz, rng):
    theta = rng.uniform(0, 2 * np.pi, ansatz.n_slots)
    psi = random_state(8, rng)
    O = Observable.sum_x(8)
    fast = estimate_randomized(ansatz, theta, psi, O, 5000, make_rng(3, "path"))
    slow = estimate_randomized(ansatz, theta, psi, O, 5000, make_rng(3, "path"), lightcone=True)
    assert fast == slow


def test_determinism(ansatz, rng):
    out = random_state(8, rng)
    O = Observable.sum_x(8)
    assert estimate_sp(out, O, 999, make_rng(4, "d")) == estimate_sp(out, O, 999, make_rng(4, "d"))


def test_ghz_gives_no_gain():
    rep = efficiency_ratio(_ghz(6), Observable.sum_z(6), 100, 4000, make_rng(0, "ghz"))
    assert rep.r == pytest.approx(1.0, abs=0.1)


def test_uncorrelated_outputs_gain_factor_n():
    n = 6
    rep = efficiency_ratio(zero_state(n), Observable.sum_x(n), 100, 4000, make_rng(0, "zero"))
    assert rep.r == pytest.approx(n, rel=0.1)
    v_sp, v_rand = analytic_variances(zero_state(n), Observable.sum_x(n))
    assert v_rand / v_sp == pytest.approx(n)


def test_random_product_states_gain_at_least_n():
    rng = make_rng(0, "product")
    n = 5
    psi = np.ones(1, dtype=complex)
    for _ in range(n):
        psi = np.kron(psi, random_state(1, rng))
    v_sp, v_rand = analytic_variances(psi, Observable.sum_x(n))
    assert v_rand / v_sp >= n - 1e-9
    rep = efficiency_ratio(psi, Observable.sum_x(n), 100, 4000, rng)
    assert rep.r == pytest.approx(v_rand / v_sp, rel=0.1)


def test_ratio_at_least_one_for_random_outputs(ansatz, rng):
    O = Observable.sum_x(8)
    for _ in range(5):
        out = apply_circuit(random_state(8, rng), ansatz, rng.uniform(0, 2 * np.pi, ansatz.n_slots))
        v_sp, v_rand = analytic_variances(out, O)
        assert v_rand >= v_sp - 1e-12


def test_degenerate_report():
    rep = efficiency_ratio(_plus(3), Observable.sum_x(3), 10, 5, make_rng(0, "deg"))
    assert rep.v_sp == 0.0
    assert rep.degenerate and rep.r == float("inf")
    with pytest.raises(ValueError):
        efficiency_ratio(_plus(3), Observable.sum_x(3), 10, 1, make_rng(0, "deg"))


def test_marginals(rng):
    psi = random_state(3, rng)
    O = Observable(3, ((0, "X", 1.0), (1, "Y", 2.0), (2, "Z", 1.0)))
    m = qubit_marginals(psi, O)
    for q, p in enumerate("XYZ"):
        assert m[q] == pytest.approx(exact_expectation(psi, Observable(3, ((q, p, 1.0),))), abs=1e-12)
