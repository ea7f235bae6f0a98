"""Parametrized circuit representation with branch ownership and shared slots.

Every rotation is ``exp(-i * angle * P)`` with ``angle = sign * theta[slot]``.
Gates that share a slot share a parameter value; this is how equivariance is
enforced (structurally, never by runtime checks).

A *block* groups the primitive rotations of one logical gate (the three
rotations of ``RX RZ RX`` on one qubit, or a single ``RZZ``) and is used for
gate counting and for symmetrization.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .groups import FiniteGroup, Permutation, left_cosets
from .splitting import SplitPlan

KINDS = ("RX", "RZ", "RZZ")


class SymmetryClosureError(ValueError):
    pass


class PlanShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    slot: int
    sign: int = 1
    block: int = -1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        qs = tuple(int(q) for q in self.qubits)
        object.__setattr__(self, "qubits", qs)
        if self.kind == "RZZ":
            if len(qs) != 2 or qs[0] == qs[1]:
                raise ValueError(f"RZZ needs two distinct qubits, got {qs}")
        elif len(qs) != 1:
            raise ValueError(f"{self.kind} acts on one qubit, got {qs}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def diagonal(self) -> bool:
        return self.kind != "RX"

    def relabel(self, g: Permutation) -> Gate:
        return replace(self, qubits=tuple(g(q) for q in self.qubits))

    def to_json(self) -> dict:
        return {"kind": self.kind, "qubits": list(self.qubits), "slot": self.slot,
                "sign": self.sign, "block": self.block}


@dataclass(frozen=True)
class CircuitLayer:
    branches: tuple[frozenset[int], ...]
    gates: tuple[Gate, ...]

    def branch_of_gate(self, gate: Gate) -> int:
        for k, b in enumerate(self.branches):
            if set(gate.qubits) <= b:
                return k
        raise ValueError(f"gate {gate} straddles branches")


@dataclass(frozen=True)
class CircuitIR:
    n: int
    layers: tuple[CircuitLayer, ...]
    n_slots: int
    final_rotations: tuple[Gate, ...] = ()

    def __post_init__(self):
        for idx, layer in enumerate(self.layers):
            for gate in layer.gates:
                if any(not 0 <= q < self.n for q in gate.qubits):
                    raise IndexError(f"gate {gate} out of range for n={self.n}")
                if not any(set(gate.qubits) <= b for b in layer.branches):
                    raise ValueError(f"layer {idx}: gate {gate} is not inside one branch")
        for gate in self.all_gates():
            if not 0 <= gate.slot < self.n_slots:
                raise ValueError(f"gate {gate} refers to missing slot (n_slots={self.n_slots})")

    def all_gates(self) -> list[Gate]:
        out = [g for layer in self.layers for g in layer.gates]
        out.extend(self.final_rotations)
        return out

    def gate_layers(self) -> list[int]:
        """Layer index of every gate in :meth:`all_gates` (final rotations get ``len(layers)``)."""
        out = [k for k, layer in enumerate(self.layers) for _ in layer.gates]
        out.extend([len(self.layers)] * len(self.final_rotations))
        return out

    def sharing(self) -> dict[int, list[int]]:
        """Slot -> positions (in :meth:`all_gates`) of the gates using it."""
        table: dict[int, list[int]] = {s: [] for s in range(self.n_slots)}
        for pos, g in enumerate(self.all_gates()):
            table[g.slot].append(pos)
        return table

    def gate_count(self, logical: bool = True) -> int:
        gates = [g for layer in self.layers for g in layer.gates]
        if not logical:
            return len(gates)
        return len({g.block for g in gates if g.block >= 0}) + sum(1 for g in gates if g.block < 0)

    def angles(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_slots,):
            raise ValueError(f"expected {self.n_slots} parameters, got shape {theta.shape}")
        gates = self.all_gates()
        slots = np.fromiter((g.slot for g in gates), dtype=int, count=len(gates))
        signs = np.fromiter((g.sign for g in gates), dtype=float, count=len(gates))
        return signs * theta[slots]

    def with_fresh_slots(self) -> CircuitIR:
        """Same gate list, every gate with its own slot (no sharing)."""
        counter = iter(range(10**9))
        layers = tuple(
            CircuitLayer(layer.branches, tuple(replace(g, slot=next(counter), sign=1) for g in layer.gates))
            for layer in self.layers
        )
        final = tuple(replace(g, slot=next(counter), sign=1) for g in self.final_rotations)
        return CircuitIR(self.n, layers, next(counter), final)

    def with_final_rotations(self) -> CircuitIR:
        """Append ``exp(-i a_j X_j) exp(-i b_j Z_j)`` on every qubit with fresh slots."""
        s = self.n_slots
        block = max((g.block for g in self.all_gates()), default=-1) + 1
        final = list(self.final_rotations)
        for j in range(self.n):
            final.append(Gate("RZ", (j,), s + 2 * j + 1, 1, block + j))
            final.append(Gate("RX", (j,), s + 2 * j, 1, block + j))
        return CircuitIR(self.n, self.layers, s + 2 * self.n, tuple(final))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "n_slots": self.n_slots,
            "layers": [
                {"branches": [sorted(b) for b in layer.branches],
                 "gates": [g.to_json() for g in layer.gates]}
                for layer in self.layers
            ],
            "final_rotations": [g.to_json() for g in self.final_rotations],
        }

    @classmethod
    def from_json(cls, data: dict) -> CircuitIR:
        def gate(d):
            return Gate(d["kind"], tuple(d["qubits"]), int(d["slot"]), int(d.get("sign", 1)), int(d.get("block", -1)))

        layers = tuple(
            CircuitLayer(tuple(frozenset(b) for b in raw["branches"]), tuple(gate(g) for g in raw["gates"]))
            for raw in data["layers"]
        )
        return cls(int(data["n"]), layers, int(data["n_slots"]),
                   tuple(gate(g) for g in data.get("final_rotations", [])))


@dataclass(frozen=True)
class Observable:
    n: int
    terms: tuple[tuple[int, str, float], ...]
    normalize_by_n: bool = False

    def __post_init__(self):
        for q, p, _ in self.terms:
            if p not in ("X", "Y", "Z"):
                raise ValueError(f"unknown Pauli {p!r}")
            if not 0 <= q < self.n:
                raise IndexError(f"term on qubit {q} out of range for n={self.n}")

    @classmethod
    def sum_x(cls, n: int, normalize: bool = False) -> Observable:
        return cls(n, tuple((j, "X", 1.0) for j in range(n)), normalize)

    @classmethod
    def sum_z(cls, n: int, normalize: bool = False) -> Observable:
        return cls(n, tuple((j, "Z", 1.0) for j in range(n)), normalize)

    @property
    def scale(self) -> float:
        return 1.0 / self.n if self.normalize_by_n else 1.0

    def weights(self, pauli: str) -> np.ndarray:
        """Per-qubit coefficients of one Pauli type, scale included."""
        w = np.zeros(self.n)
        for q, p, c in self.terms:
            if p == pauli:
                w[q] += c * self.scale
        return w


# ---------------------------------------------------------------------------
# symmetrization and conjugation


def conjugate_branch(gates: Iterable[Gate], g: Permutation) -> list[Gate]:
    """``U_g V U_g^dag``: relabel qubits by ``g``; slots are kept."""
    return [gate.relabel(g) for gate in gates]


def _blocks(gates: Sequence[Gate]) -> list[list[Gate]]:
    out: list[list[Gate]] = []
    index: dict[int, int] = {}
    for gate in gates:
        if gate.block >= 0 and gate.block in index:
            out[index[gate.block]].append(gate)
        else:
            if gate.block >= 0:
                index[gate.block] = len(out)
            out.append([gate])
    return out


def _block_key(block: Sequence[Gate]):
    kinds = tuple(g.kind for g in block)
    if "RZZ" in kinds:
        if len(block) != 1:
            raise SymmetryClosureError("RZZ blocks must hold a single gate")
        return kinds, frozenset(block[0].qubits)
    qubits = {g.qubits[0] for g in block}
    if len(qubits) != 1:
        raise SymmetryClosureError("single-qubit blocks must act on one qubit")
    return kinds, next(iter(qubits))


@dataclass
class SymmetrizedSeed:
    gates: list[Gate]
    classes: list[list[int]] = field(default_factory=list)  # block ids per sharing class


def symmetrize_seed(
    gates: Sequence[Gate], H: FiniteGroup, branch: Iterable[int] | None = None
) -> SymmetrizedSeed:
    """Close a seed gate list under ``H`` and tie slots along ``H``-orbits.

    Blocks are identified up to relabeling; a missing image is inserted right
    after the block it comes from. The result is exactly ``H``-invariant when
    the seed is a product of stages of mutually commuting blocks, which is
    how the ansatz builders lay out each depth.
    """
    region = frozenset(branch) if branch is not None else frozenset(q for g in gates for q in g.qubits)
    next_block = max((g.block for g in gates), default=-1) + 1
    blocks: dict[int, list[Gate]] = {}
    order: list[int] = []
    for b in _blocks(gates):
        bid = b[0].block
        if bid < 0:
            bid, next_block = next_block, next_block + 1
            b = [replace(g, block=bid) for g in b]
        blocks[bid] = b
        order.append(bid)
    by_key = {_block_key(blocks[bid]): bid for bid in order}
    parent = {bid: bid for bid in order}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    k = 0
    while k < len(order):
        src_id = order[k]
        for h in H:
            image = [g.relabel(h) for g in blocks[src_id]]
            bad = sorted({q for g in image for q in g.qubits if q not in region})
            if bad:
                raise SymmetryClosureError(f"image of block {src_id} under {h!r} leaves the branch at {bad}")
            key = _block_key(image)
            if key not in by_key:
                bid, next_block = next_block, next_block + 1
                blocks[bid] = [replace(g, block=bid) for g in image]
                by_key[key] = bid
                parent[bid] = bid
                order.insert(order.index(src_id) + 1, bid)
            a, b = find(src_id), find(by_key[key])
            if a != b:
                parent[max(a, b)] = min(a, b)
        k += 1

    classes: dict[int, list[int]] = {}
    out: list[Gate] = []
    for bid in order:
        root = find(bid)
        classes.setdefault(root, []).append(bid)
        rep = blocks[root]
        for pos, g in enumerate(blocks[bid]):
            out.append(replace(g, slot=rep[pos].slot, sign=rep[pos].sign))
    return SymmetrizedSeed(out, list(classes.values()))


# ---------------------------------------------------------------------------
# builders


def _rotation_block(q: int, slot: int, block: int) -> list[Gate]:
    # R_j(a) = RX(a1) RZ(a2) RX(a3): RX(a3) acts first
    return [Gate("RX", (q,), slot + 2, 1, block), Gate("RZ", (q,), slot + 1, 1, block),
            Gate("RX", (q,), slot, 1, block)]


def _renumber(gates: list[Gate], slot_map: dict[int, int], counter: list[int]) -> list[Gate]:
    out = []
    for g in gates:
        if g.slot not in slot_map:
            slot_map[g.slot] = counter[0]
            counter[0] += 1
        out.append(replace(g, slot=slot_map[g.slot]))
    return out


def build_split_circuit(
    plan: SplitPlan,
    depths: Sequence[int],
    pairs: Sequence[Sequence[tuple[int, int]]] | None = None,
) -> CircuitIR:
    """Generic equivariant split circuit.

    For every layer and entry ``(H, P)`` the seed branch (identity coset) gets,
    per depth, a rotation block on each of its qubits followed by ``RZZ`` on
    its pairs; the seed is symmetrized under ``H`` and copied to the other
    branches of the entry by conjugation with the coset representatives.
    ``pairs[l]`` lists two-qubit couplings for the seed branches of layer
    ``l``; by default each seed branch is coupled along a path in index order.
    """
    if len(depths) != len(plan.layers):
        raise PlanShapeError(f"{len(depths)} depths for {len(plan.layers)} layers")
    G = plan.group
    counter = [0]
    block_counter = [0]
    layers = []
    for ell, (layer, depth) in enumerate(zip(plan.layers, depths)):
        if layer.spec is None:
            raise PlanShapeError(f"layer {ell} has no subgroup provenance")
        gates_out: list[Gate] = []
        for lam, (H, _P) in enumerate(layer.spec.entries):
            cosets = left_cosets(G, H)
            seed = next(b.qubits for b in layer.branches if b.lam == lam and b.coset_index == 0)
            if pairs is None:
                qs = sorted(seed)
                seed_pairs = list(zip(qs, qs[1:]))
            else:
                seed_pairs = [tuple(p) for p in pairs[ell] if set(p) <= seed]
            per_depth = []
            for _ in range(depth):
                raw: list[Gate] = []
                tmp = 0
                for q in sorted(seed):
                    raw.extend(_rotation_block(q, tmp, block_counter[0]))
                    tmp += 3
                    block_counter[0] += 1
                for a, b in seed_pairs:
                    raw.append(Gate("RZZ", (a, b), tmp, 1, block_counter[0]))
                    tmp += 1
                    block_counter[0] += 1
                sym = symmetrize_seed(raw, H, seed)
                per_depth.append(_renumber(sym.gates, {}, counter))
            seed_gates = [g for d in per_depth for g in d]
            n_blocks = len({g.block for g in seed_gates})
            base = min(g.block for g in seed_gates)
            for i, coset in enumerate(cosets):
                copy = conjugate_branch(seed_gates, coset.representative)
                if i:
                    shift = block_counter[0] - base
                    copy = [replace(g, block=g.block + shift) for g in copy]
                    block_counter[0] += n_blocks
                gates_out.extend(copy)
        branches = tuple(b.qubits for b in layer.branches)
        layers.append(CircuitLayer(branches, tuple(gates_out)))
    return CircuitIR(plan.n, tuple(layers), counter[0])


# layer-2 couplings: the 4-cycle through qubits 0, 5, 3, 6 of the seed branch
CUBE_LAYER2_PAIRS = ((0, 5), (5, 3), (3, 6), (6, 0))
CUBE_LAYER3_PAIRS = ((0, 3), (5, 6))


def build_d4_ansatz(plan: SplitPlan, depths: Sequence[int] = (3, 3, 3)) -> CircuitIR:
    """The equivariant cube ansatz on the three-layer cube plan."""
    from .presets import CUBE_BONDS, cube_demo_plan

    expected = [set(layer) for layer in cube_demo_plan().branch_sets()]
    got = [set(layer) for layer in plan.branch_sets()]
    if plan.n != 8 or got != expected:
        raise PlanShapeError("build_d4_ansatz needs the three-layer cube plan")
    if len(depths) != 3:
        raise PlanShapeError("three depths are required")
    pairs = [[(a, b) for a, b, _ in CUBE_BONDS], list(CUBE_LAYER2_PAIRS), list(CUBE_LAYER3_PAIRS)]
    return build_split_circuit(plan, depths, pairs)


# ---------------------------------------------------------------------------
# analysis


def _subcircuit(circuit: CircuitIR, keep: set[int]) -> CircuitIR:
    pos = 0
    layers = []
    for layer in circuit.layers:
        gates = []
        for g in layer.gates:
            if pos in keep:
                gates.append(g)
            pos += 1
        layers.append(CircuitLayer(layer.branches, tuple(gates)))
    final = []
    for g in circuit.final_rotations:
        if pos in keep:
            final.append(g)
        pos += 1
    return CircuitIR(circuit.n, tuple(layers), circuit.n_slots, tuple(final))


def lightcone_positions(circuit: CircuitIR, i: int) -> set[int]:
    """Positions of gates in the causal past of qubit ``i`` at the output."""
    if not 0 <= i < circuit.n:
        raise IndexError(f"qubit {i} out of range")
    gates = circuit.all_gates()
    live = {i}
    keep = set()
    for pos in range(len(gates) - 1, -1, -1):
        qs = set(gates[pos].qubits)
        if qs & live:
            keep.add(pos)
            live |= qs
    return keep


def backward_lightcone(circuit: CircuitIR, i: int) -> CircuitIR:
    """Gates that can influence the output marginal of qubit ``i``."""
    return _subcircuit(circuit, lightcone_positions(circuit, i))


def branch_chain(circuit: CircuitIR, i: int) -> CircuitIR:
    """Gates of the branches containing ``i`` in every layer (plus its final rotations)."""
    keep = set()
    pos = 0
    for layer in circuit.layers:
        home = next(b for b in layer.branches if i in b)
        for g in layer.gates:
            if set(g.qubits) <= home:
                keep.add(pos)
            pos += 1
    for g in circuit.final_rotations:
        if g.qubits == (i,):
            keep.add(pos)
        pos += 1
    return _subcircuit(circuit, keep)


def check_equivariance(circuit: CircuitIR, G: FiniteGroup, theta, tol: float = 1e-10) -> tuple[bool, float]:
    """Worst ``|U_g V U_g^dag - V|`` over layers and group elements."""
    from .statevector import dense_unitary, permutation_unitary

    worst = 0.0
    for ell in range(len(circuit.layers)):
        V = dense_unitary(layer_circuit(circuit, ell), theta)
        for g in G:
            if g.is_identity():
                continue
            U = permutation_unitary(g)
            worst = max(worst, float(np.max(np.abs(U @ V @ U.conj().T - V))))
    return worst <= tol, worst


def layer_circuit(circuit: CircuitIR, ell: int) -> CircuitIR:
    """A circuit holding only layer ``ell`` (same slot table)."""
    layer = circuit.layers[ell]
    return CircuitIR(circuit.n, (layer,), circuit.n_slots)
