from __future__ import annotations

import json
import math

import numpy as np
import pytest

from spqcnn.heisenberg import dataset_arrays, make_dataset
from spqcnn.rng import make_rng
from spqcnn.statevector import permute_state, random_state, zero_state
from spqcnn.training import (
    AdamState,
    TrainConfig,
    adam_step,
    build_model,
    cross_entropy,
    init_parameters,
    loss,
    loss_and_gradient,
    median_curve,
    predict,
    record_json,
    shot_budget,
    sigmoid,
    train,
)


@pytest.fixture(scope="module")
def eq_model():
    return build_model("eq-sp")


def test_model_shapes():
    eq, free, rd = build_model("eq-sp"), build_model("noneq-sp"), build_model("eq-rand")
    assert eq.circuit.n_slots == 72 and free.circuit.n_slots == 288
    assert rd.circuit == eq.circuit and rd.readout == "randomized"
    assert shot_budget(eq, 5) == 1445 and shot_budget(free, 5) == 1445
    with pytest.raises(ValueError):
        build_model("other")


def test_identity_circuit_predicts_half(eq_model):
    theta = np.zeros(eq_model.circuit.n_slots)
    p1, p2 = predict(eq_model, theta, zero_state(8))
    assert p1 == pytest.approx(0.5) and p2 == pytest.approx(0.5)
    states = np.stack([zero_state(8)] * 3)
    assert loss(eq_model, theta, states, np.array([1, 0, 1])) == pytest.approx(math.log(2))


def test_probabilities_sum_to_one(eq_model, rng):
    theta = init_parameters(eq_model.circuit, 0)
    psi = random_state(8, rng)
    for backend, kw in (("exact", {}), ("shots", {"shots": 100, "rng": make_rng(0, "p")})):
        p1, p2 = predict(eq_model, theta, psi, backend, **kw)
        assert 0 < p1 < 1 and p1 + p2 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        predict(eq_model, theta, psi, "shots")


def test_equivariant_prediction_is_invariant(eq_model, cube, rng):
    theta = init_parameters(eq_model.circuit, 1)
    psi = random_state(8, rng)
    base = predict(eq_model, theta, psi)[0]
    for g in cube:
        assert predict(eq_model, theta, permute_state(psi, g))[0] == pytest.approx(base, abs=1e-12)


def test_free_model_is_not_invariant(cube, rng):
    model = build_model("noneq-sp")
    theta = init_parameters(model.circuit, 1)
    psi = random_state(8, rng)
    base = predict(model, theta, psi)[0]
    assert max(abs(predict(model, theta, permute_state(psi, g))[0] - base) for g in cube) > 1e-6


def test_cross_entropy_clamped():
    assert cross_entropy(np.array([0.0]), np.array([1])) == pytest.approx(-math.log(1e-12))
    assert cross_entropy(np.array([0.25, 0.25]), np.array([1, 0])) == pytest.approx(
        -(math.log(0.25) + math.log(0.75)) / 2)
    assert sigmoid(0.0) == 0.5


def test_loss_gradient_matches_finite_difference(eq_model):
    states, labels = dataset_arrays(make_dataset(1, 0.4, seed=2))
    theta = init_parameters(eq_model.circuit, 2)
    value, grad = loss_and_gradient(eq_model, theta, states, labels)
    assert value == pytest.approx(loss(eq_model, theta, states, labels))
    h = 1e-5
    for slot in range(0, eq_model.circuit.n_slots, 9):
        up, down = theta.copy(), theta.copy()
        up[slot] += h
        down[slot] -= h
        fd = (loss(eq_model, up, states, labels) - loss(eq_model, down, states, labels)) / (2 * h)
        assert grad[slot] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_adam_first_step_moves_by_lr():
    theta = np.array([1.0, 1.0, 1.0])
    grad = np.array([0.3, -2.0, 0.0])
    new, st = adam_step(theta, grad, AdamState.zeros(3), lr=0.01)
    np.testing.assert_allclose(new - theta, [-0.01, 0.01, 0.0], atol=1e-9)
    assert st.t == 1


def test_adam_zero_gradient_and_moment_decay():
    st = AdamState.zeros(2)
    theta = np.array([0.5, -0.5])
    new, st = adam_step(theta, np.zeros(2), st)
    np.testing.assert_array_equal(new, theta)
    _, st = adam_step(theta, np.array([1.0, 1.0]), st)
    m1 = st.m.copy()
    _, st = adam_step(theta, np.zeros(2), st)
    np.testing.assert_allclose(st.m, 0.9 * m1)
    assert st.t == 3


def test_init_reproducible():
    c = build_model("eq-sp").circuit
    np.testing.assert_array_equal(init_parameters(c, 4), init_parameters(c, 4))
    assert not np.array_equal(init_parameters(c, 4), init_parameters(c, 5))
    assert np.all((init_parameters(c, 4) >= 0) & (init_parameters(c, 4) < 2 * np.pi))


def test_config_validation_and_json():
    cfg = TrainConfig(n_t=3, n_epoch=2, seed=7)
    assert TrainConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg
    assert cfg.dataset_seed == 7 and TrainConfig(seed=7, data_seed=1).dataset_seed == 1
    for bad in ({"model": "x"}, {"backend": "x"}, {"n_t": 0}, {"gamma": 2.0}, {"lr": 0.0}, {"n_epoch": -1}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    with pytest.raises(ValueError):
        TrainConfig.from_json({"n_t": 2, "bogus": 1})


def test_zero_epochs_only_evaluates():
    rec = train(TrainConfig(n_t=2, n_epoch=0, test_pairs=2))
    assert len(rec.epochs) == 1
    m = rec.final()
    assert m.epoch == 0 and m.iterations == 0 and m.shots_spent == 0
    np.testing.assert_array_equal(rec.theta, init_parameters(build_model("eq-sp").circuit, 0))


@pytest.mark.parametrize("model", ["eq-sp", "eq-rand"])
def test_shot_training_spends_budget(model):
    seen = []
    rec = train(TrainConfig(n_t=2, n_epoch=2, test_pairs=2, model=model), progress=seen.append)
    assert [m.epoch for m in rec.epochs] == [0, 1, 2] and len(seen) == 3
    assert [m.iterations for m in rec.epochs] == [0, 4, 8]
    assert [m.shots_spent for m in rec.epochs] == [0, 4 * 1445, 8 * 1445]
    again = train(TrainConfig(n_t=2, n_epoch=2, test_pairs=2, model=model))
    np.testing.assert_array_equal(rec.theta, again.theta)
    assert json.loads(record_json(rec))["final"]["epoch"] == 2


def test_exact_training_lowers_loss():
    rec = train(TrainConfig(n_t=4, n_epoch=30, test_pairs=4, backend="exact", lr=0.01, eval_every=10))
    assert [m.epoch for m in rec.epochs] == [0, 10, 20, 30]
    assert rec.final().train_loss < rec.epochs[0].train_loss
    assert rec.final().shots_spent == 0


def test_efficiency_is_recorded_when_asked():
    rec = train(TrainConfig(n_t=2, n_epoch=1, test_pairs=2, backend="exact", efficiency_every=1,
                            efficiency_batches=50))
    assert all(m.efficiency_r >= 1 for m in rec.epochs)


def test_median_curve():
    recs = [train(TrainConfig(n_t=2, n_epoch=1, test_pairs=2, backend="exact", seed=s)) for s in range(3)]
    curve = median_curve(recs, "test_loss")
    assert [e for e, _ in curve] == [0, 1]
    assert curve[1][1] == pytest.approx(np.median([r.at(1).test_loss for r in recs]))
    with pytest.raises(KeyError):
        recs[0].at(5)
