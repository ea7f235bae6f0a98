"""Logistic-head classifier on the cube ansatz: loss, Adam and the SGD loop.

Three models share the training loop:

``eq-sp``     equivariant ansatz, split-parallel readout and packed shifts
``noneq-sp``  same gates with every slot free, split-parallel readout
``eq-rand``   equivariant ansatz, randomized single-qubit readout

With the exact backend the readout does not matter, so ``eq-sp`` and
``eq-rand`` coincide there.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .circuit import CircuitIR, Observable, build_d4_ansatz
from .engine import Program
from .gradient import ShiftGroup, estimate_gradient, pack_shift_groups, value_and_gradient_exact
from .heisenberg import DEMO_COUPLINGS, dataset_arrays, make_dataset
from .presets import cube_demo_plan
from .rng import make_rng
from .shots import efficiency_ratio, estimate_randomized, estimate_sp

MODELS = ("eq-sp", "noneq-sp", "eq-rand")
BACKENDS = ("exact", "shots")
LOG_CLAMP = 1e-12


@dataclass
class TrainConfig:
    n_t: int = 10
    n_epoch: int = 100
    n_shot: int = 5
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    model: str = "eq-sp"
    gamma: float = 0.4
    depths: tuple[int, int, int] = (3, 3, 3)
    backend: str = "shots"
    test_pairs: int = 100
    data_seed: int | None = None  # None: follow ``seed``
    eval_every: int = 1
    efficiency_every: int = 0  # 0: never
    efficiency_shots: int = 100
    efficiency_batches: int = 10000
    couplings: tuple[float, float, float] = DEMO_COUPLINGS

    def __post_init__(self):
        self.depths = tuple(int(d) for d in self.depths)
        self.couplings = tuple(float(c) for c in self.couplings)
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        for name in ("n_t", "n_shot", "test_pairs", "eval_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_epoch < 0:
            raise ValueError("n_epoch must be non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")

    @property
    def dataset_seed(self) -> int:
        return self.seed if self.data_seed is None else self.data_seed

    def to_json(self) -> dict:
        d = asdict(self)
        d["depths"] = list(self.depths)
        d["couplings"] = list(self.couplings)
        return d

    @classmethod
    def from_json(cls, data: dict) -> TrainConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class EpochMetrics:
    epoch: int
    iterations: int
    train_loss: float
    test_loss: float
    test_accuracy: float
    shots_spent: int
    efficiency_r: float = math.nan


@dataclass
class TrainRecord:
    config: TrainConfig
    epochs: list[EpochMetrics] = field(default_factory=list)
    theta: np.ndarray | None = None

    def final(self) -> EpochMetrics:
        return self.epochs[-1]

    def at(self, epoch: int) -> EpochMetrics:
        for m in self.epochs:
            if m.epoch == epoch:
                return m
        raise KeyError(f"epoch {epoch} was not evaluated")


# ---------------------------------------------------------------------------
# models


@dataclass
class Model:
    name: str
    circuit: CircuitIR
    program: Program
    obs: Observable
    groups: list[ShiftGroup]

    @property
    def readout(self) -> str:
        return "randomized" if self.name == "eq-rand" else "sp"

    def expectations(self, theta, states: np.ndarray) -> np.ndarray:
        """Exact ``<O>`` for a stack of input states (rows)."""
        out = self.program.evolve(np.asarray(states).T, self.circuit.angles(theta)).T
        vals = np.zeros(len(out))
        for q, p, c in self.obs.terms:
            vals += c * _pauli_expectations(out, q, p, self.obs.n)
        return vals * self.obs.scale

    def output_states(self, theta, states: np.ndarray) -> np.ndarray:
        return self.program.evolve(np.asarray(states).T, self.circuit.angles(theta)).T


def _pauli_expectations(rows: np.ndarray, q: int, p: str, n: int) -> np.ndarray:
    t = rows.reshape(len(rows), 2**q, 2, -1)
    a, b = t[:, :, 0, :], t[:, :, 1, :]
    if p == "X":
        return 2 * np.real(np.sum(a.conj() * b, axis=(1, 2)))
    if p == "Y":
        return 2 * np.imag(np.sum(a.conj() * b, axis=(1, 2)))
    return np.sum(np.abs(a) ** 2 - np.abs(b) ** 2, axis=(1, 2))


@lru_cache(maxsize=8)
def build_model(name: str, depths: tuple[int, ...] = (3, 3, 3)) -> Model:
    if name not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {name!r}")
    circuit = build_d4_ansatz(cube_demo_plan(), depths)
    if name == "noneq-sp":
        circuit = circuit.with_fresh_slots()
    return Model(name, circuit, Program(circuit), Observable.sum_x(circuit.n), pack_shift_groups(circuit))


def shot_budget(model: Model, n_shot: int) -> int:
    """Shots per iteration, ``(2 * gates + 1) * n_shot`` with logical gates counted once."""
    return (2 * model.circuit.gate_count(logical=True) + 1) * n_shot


# ---------------------------------------------------------------------------
# head, loss and optimizer


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def predict(model: Model, theta, state, backend: str = "exact", shots: int | None = None,
            rng: np.random.Generator | None = None) -> tuple[float, float]:
    """``(p1, p2)`` with ``p1 = sigmoid(<O>)``."""
    psi = np.asarray(getattr(state, "amplitudes", state))
    if backend == "exact":
        value = float(model.expectations(theta, psi[None, :])[0])
    elif backend == "shots":
        if shots is None or rng is None:
            raise ValueError("the shot backend needs shots and rng")
        if model.readout == "sp":
            value = estimate_sp(model.output_states(theta, psi[None, :])[0], model.obs, shots, rng).mean
        else:
            value = estimate_randomized(model.circuit, theta, psi, model.obs, shots, rng).mean
    else:
        raise ValueError(f"unknown backend {backend!r}")
    p1 = float(sigmoid(value))
    return p1, 1.0 - p1


def cross_entropy(p1: np.ndarray, labels: np.ndarray) -> float:
    p1 = np.asarray(p1, dtype=float)
    y = np.asarray(labels, dtype=float)
    terms = y * np.log(np.maximum(p1, LOG_CLAMP)) + (1 - y) * np.log(np.maximum(1 - p1, LOG_CLAMP))
    return float(-np.mean(terms))


def loss(model: Model, theta, states: np.ndarray, labels: np.ndarray) -> float:
    return cross_entropy(sigmoid(model.expectations(theta, states)), labels)


def loss_and_gradient(model: Model, theta, states: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Exact loss and its gradient through the parameter-shift derivatives."""
    grad = np.zeros(model.circuit.n_slots)
    p1s = []
    for psi, y in zip(states, labels):
        value, g = value_and_gradient_exact(model.circuit, theta, psi, model.obs, model.program)
        p1 = float(sigmoid(value))
        p1s.append(p1)
        grad += _dloss_dvalue(p1, y) * g
    return cross_entropy(np.array(p1s), labels), grad / len(states)


def _dloss_dvalue(p1: float, y: int) -> float:
    # derivative of the clamped per-sample loss with respect to <O>
    if (y == 1 and p1 < LOG_CLAMP) or (y == 0 and 1 - p1 < LOG_CLAMP):
        return 0.0
    return p1 - y


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> AdamState:
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(theta, grad, state: AdamState, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> tuple[np.ndarray, AdamState]:
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad**2
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    return np.asarray(theta) - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v, t)


def init_parameters(circuit: CircuitIR, seed: int) -> np.ndarray:
    return make_rng(seed, "init").uniform(0.0, 2 * np.pi, size=circuit.n_slots)


# ---------------------------------------------------------------------------
# training loop


def _metrics(model, theta, train, test, epoch, iterations, shots, r=math.nan) -> EpochMetrics:
    (xs, ys), (xt, yt) = train, test
    p_train = sigmoid(model.expectations(theta, xs))
    p_test = sigmoid(model.expectations(theta, xt))
    acc = float(np.mean((p_test > 0.5) == (yt == 1)))
    return EpochMetrics(epoch, iterations, cross_entropy(p_train, ys), cross_entropy(p_test, yt), acc, shots, r)


def _efficiency(model, theta, states, config, epoch) -> float:
    rng = make_rng(config.seed, "efficiency", epoch)
    out = model.output_states(theta, states)
    return efficiency_ratio(out, model.obs, config.efficiency_shots, config.efficiency_batches, rng).r


def train(config: TrainConfig, progress=None) -> TrainRecord:
    """Single-sample Adam steps; one epoch is one pass over the shuffled training set.

    Test metrics are always computed exactly. ``progress`` is called with
    each :class:`EpochMetrics` as it is produced.
    """
    model = build_model(config.model, tuple(config.depths))
    train_set = dataset_arrays(make_dataset(config.n_t, config.gamma, config.dataset_seed, "train", config.couplings))
    test_set = dataset_arrays(make_dataset(config.test_pairs, config.gamma, config.dataset_seed, "test",
                                           config.couplings))
    theta = init_parameters(model.circuit, config.seed)
    adam = AdamState.zeros(model.circuit.n_slots)
    budget = shot_budget(model, config.n_shot)
    order_rng = make_rng(config.seed, "shuffle")
    shot_rng = make_rng(config.seed, "shots")
    record = TrainRecord(config)
    shots = 0
    iterations = 0

    def evaluate(epoch):
        r = math.nan
        if config.efficiency_every and epoch % config.efficiency_every == 0:
            r = _efficiency(model, theta, train_set[0], config, epoch)
        m = _metrics(model, theta, train_set, test_set, epoch, iterations, shots, r)
        record.epochs.append(m)
        if progress is not None:
            progress(m)

    evaluate(0)
    xs, ys = train_set
    for epoch in range(1, config.n_epoch + 1):
        for k in order_rng.permutation(len(xs)):
            if config.backend == "exact":
                value, g = value_and_gradient_exact(model.circuit, theta, xs[k], model.obs, model.program)
            else:
                est = estimate_gradient(model.circuit, theta, xs[k], model.obs, shot_rng, mode=model.readout,
                                        total_shots=budget, program=model.program, groups=model.groups)
                value, g = est.value, est.grad
                shots += est.ledger.total
            grad = _dloss_dvalue(float(sigmoid(value)), int(ys[k])) * g
            theta, adam = adam_step(theta, grad, adam, config.lr, config.beta1, config.beta2, config.eps)
            iterations += 1
        if epoch % config.eval_every == 0 or epoch == config.n_epoch:
            evaluate(epoch)
    record.theta = theta
    return record


def median_curve(records: Sequence[TrainRecord], attr: str) -> list[tuple[int, float]]:
    """Median of one metric over runs, per evaluated epoch."""
    epochs = [m.epoch for m in records[0].epochs]
    return [(e, float(np.median([getattr(r.at(e), attr) for r in records]))) for e in epochs]


def record_json(record: TrainRecord) -> str:
    return json.dumps({
        "config": record.config.to_json(),
        "final": asdict(record.final()),
        "theta": [float(x) for x in record.theta] if record.theta is not None else None,
    }, indent=2, sort_keys=True)
