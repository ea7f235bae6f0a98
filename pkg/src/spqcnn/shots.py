"""Finite-shot estimators for the split-parallel and the randomized readout.

The split-parallel readout measures every qubit in each shot. The randomized
baseline reads a single uniformly chosen qubit per shot and rescales by
``n``; since the marginal of qubit ``i`` is the same whether the whole circuit
or only its backward lightcone is run, the fast path samples that marginal
from the full output state. ``lightcone=True`` re-simulates each subcircuit
instead and serves as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuit import CircuitIR, Observable, backward_lightcone
from .engine import outcome_signs, rotate_to_basis
from .statevector import apply_circuit


@dataclass(frozen=True)
class ShotEstimate:
    mean: float
    shots: int
    per_qubit_outcomes_used: int
    variance: float = 0.0  # sample variance of the per-shot values


@dataclass
class EfficiencyReport:
    v_sp: float
    v_rand: float
    r: float
    batches: int
    shots_per_batch: int
    per_state: list[tuple[float, float]] = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        return not np.isfinite(self.r)


def measurement_bases(obs: Observable) -> list[str]:
    bases = ["Z"] * obs.n
    seen: dict[int, str] = {}
    for q, p, _ in obs.terms:
        if seen.get(q, p) != p:
            raise ValueError(f"qubit {q} carries terms in two bases; they cannot share one readout")
        seen[q] = p
        bases[q] = p
    return bases


def outcome_distribution(states: np.ndarray, obs: Observable) -> np.ndarray:
    """Probabilities of each readout bitstring in the observable's bases (rows)."""
    rotated = rotate_to_basis(states, obs.n, measurement_bases(obs))
    return np.abs(rotated) ** 2


def qubit_weights(obs: Observable) -> np.ndarray:
    w = np.zeros(obs.n)
    for q, _, c in obs.terms:
        w[q] += c
    return w * obs.scale


def _check_shots(shots: int) -> None:
    if shots < 1:
        raise ValueError("shots must be at least 1")


def sample_indices(probs: np.ndarray, counts, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampling: ``counts[c]`` draws from row ``c`` of ``probs``, concatenated."""
    probs = np.atleast_2d(probs)
    counts = np.asarray(counts, dtype=int)
    cum = np.cumsum(probs, axis=1)
    cum /= cum[:, -1:]
    rows = np.repeat(np.arange(len(counts)), counts)
    u = rng.random(rows.size)
    # rows are stacked as [r, r + 1) intervals so one sorted search serves all
    width = probs.shape[1]
    flat = (cum + np.arange(len(cum))[:, None]).ravel()
    idx = np.searchsorted(flat, u + rows, side="right") - rows * width
    return np.clip(idx, 0, width - 1)


def estimate_sp(state_out: np.ndarray, obs: Observable, shots: int, rng: np.random.Generator) -> ShotEstimate:
    """All qubits read in every shot; the per-shot value is the full observable."""
    _check_shots(shots)
    probs = outcome_distribution(state_out, obs)
    values = outcome_signs(obs.n) @ qubit_weights(obs)
    draws = values[sample_indices(probs, [shots], rng)]
    var = float(draws.var(ddof=1)) if shots > 1 else 0.0
    return ShotEstimate(float(draws.mean()), shots, shots * obs.n, var)


def qubit_marginals(state_out: np.ndarray, obs: Observable) -> np.ndarray:
    """``<P_i>`` in each qubit's readout basis (vector of length n)."""
    probs = outcome_distribution(state_out, obs)
    return probs @ outcome_signs(obs.n)


def estimate_randomized(
    circuit: CircuitIR,
    theta,
    psi_in: np.ndarray,
    obs: Observable,
    shots: int,
    rng: np.random.Generator,
    lightcone: bool = False,
) -> ShotEstimate:
    """One uniformly random qubit per shot, its outcome scaled by ``n``."""
    _check_shots(shots)
    n = obs.n
    w = qubit_weights(obs)
    picks = rng.integers(0, n, size=shots)
    if lightcone:
        means = np.zeros(n)
        for i in np.unique(picks):
            sub = backward_lightcone(circuit, int(i))
            means[i] = qubit_marginals(apply_circuit(psi_in, sub, theta), obs)[i]
    else:
        means = qubit_marginals(apply_circuit(psi_in, circuit, theta), obs)
    plus = rng.random(shots) < (1 + means[picks]) / 2
    draws = n * w[picks] * np.where(plus, 1.0, -1.0)
    var = float(draws.var(ddof=1)) if shots > 1 else 0.0
    return ShotEstimate(float(draws.mean()), shots, shots, var)


def batch_estimates(state_out, obs: Observable, shots_per_batch: int, batches: int, rng: np.random.Generator):
    """Per-batch means of the sp and randomized estimators, two arrays of length ``batches``."""
    n = obs.n
    w = qubit_weights(obs)
    total = shots_per_batch * batches
    values = outcome_signs(n) @ w
    sp = values[sample_indices(outcome_distribution(state_out, obs), [total], rng)]
    sp = sp.reshape(batches, shots_per_batch).mean(axis=1)
    means = qubit_marginals(state_out, obs)
    picks = rng.integers(0, n, size=total)
    plus = rng.random(total) < (1 + means[picks]) / 2
    rd = (n * w[picks] * np.where(plus, 1.0, -1.0)).reshape(batches, shots_per_batch).mean(axis=1)
    return sp, rd


def _batch_variances(state_out, obs, shots_per_batch, batches, rng):
    sp, rd = batch_estimates(state_out, obs, shots_per_batch, batches, rng)
    return float(sp.var(ddof=1)), float(rd.var(ddof=1))


def efficiency_ratio(
    output_states,
    obs: Observable,
    shots_per_batch: int,
    batches: int,
    rng: np.random.Generator,
) -> EfficiencyReport:
    """Batch-to-batch variance of both estimators, averaged over the given output states.

    ``r = mean(v_rand) / mean(v_sp)``; a zero sp variance gives ``r = inf``.
    """
    if batches < 2:
        raise ValueError("at least two batches are needed for a variance")
    _check_shots(shots_per_batch)
    states = np.atleast_2d(np.asarray(output_states))
    per_state = [_batch_variances(s, obs, shots_per_batch, batches, rng) for s in states]
    v_sp = float(np.mean([a for a, _ in per_state]))
    v_rand = float(np.mean([b for _, b in per_state]))
    r = v_rand / v_sp if v_sp > 0 else float("inf")
    return EfficiencyReport(v_sp, v_rand, r, batches, shots_per_batch, per_state)


def analytic_variances(state_out: np.ndarray, obs: Observable) -> tuple[float, float]:
    """Single-shot variances of the sp and randomized estimators."""
    n = obs.n
    w = qubit_weights(obs)
    probs = outcome_distribution(state_out, obs)
    values = outcome_signs(n) @ w
    mean = float(probs @ values)
    v_sp = float(probs @ values**2) - mean**2
    v_rand = float(n * np.sum(w**2)) - mean**2
    return v_sp, v_rand
