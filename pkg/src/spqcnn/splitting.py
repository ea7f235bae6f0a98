"""Symmetry-preserving circuit splittings built from subgroups and qubit subsets.

A layer is described by entries ``(H, P)``: every left coset ``C`` of ``H`` in
``G`` yields one branch ``C(P)``. Layers are stacked from the widest (one
branch holding every qubit) to the finest; branches may split with depth but
never merge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from .groups import (
    ContainmentError,
    FiniteGroup,
    Permutation,
    all_subgroups,
    apply_set_to_set,
    apply_to_set,
    is_g_complete,
    is_g_independent,
    is_well_behaved,
    left_cosets,
    orbits,
)


class SplitConstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    entries: tuple[tuple[FiniteGroup, frozenset[int]], ...]

    @classmethod
    def of(cls, *entries: tuple[FiniteGroup, Iterable[int]]) -> LayerSpec:
        return cls(tuple((H, frozenset(P)) for H, P in entries))

    @property
    def qubits(self) -> frozenset[int]:
        out: frozenset[int] = frozenset()
        for _, P in self.entries:
            out |= P
        return out

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class Branch:
    qubits: frozenset[int]
    layer: int
    lam: int
    coset_index: int

    def __contains__(self, q: int) -> bool:
        return q in self.qubits


@dataclass(frozen=True)
class Layer:
    branches: tuple[Branch, ...]
    spec: LayerSpec | None = None

    def branch_of(self, q: int) -> int:
        for k, b in enumerate(self.branches):
            if q in b.qubits:
                return k
        raise KeyError(f"qubit {q} is in no branch")


@dataclass(frozen=True)
class SplitPlan:
    group: FiniteGroup
    layers: tuple[Layer, ...]

    @property
    def n(self) -> int:
        return self.group.n

    def branch_sets(self) -> list[list[frozenset[int]]]:
        return [[b.qubits for b in layer.branches] for layer in self.layers]

    def to_json(self) -> dict:
        layers = []
        for layer in self.layers:
            entries = []
            if layer.spec is not None:
                for H, P in layer.spec.entries:
                    entries.append({
                        "subgroup_elements": [list(h.images) for h in H.elements],
                        "subset": sorted(P),
                    })
            layers.append({
                "entries": entries,
                "branches": [
                    {"qubits": sorted(b.qubits), "lambda": b.lam, "coset": b.coset_index}
                    for b in layer.branches
                ],
            })
        return {"n": self.n, "group": self.group.to_json(), "layers": layers}

    @classmethod
    def from_json(cls, data: dict) -> SplitPlan:
        G = FiniteGroup.from_json(data["group"])
        if int(data["n"]) != G.n:
            raise ValueError("plan n disagrees with its group")
        layers = []
        for idx, raw in enumerate(data["layers"]):
            spec = None
            if raw.get("entries"):
                spec = LayerSpec(tuple(
                    (FiniteGroup(tuple(Permutation(tuple(e)) for e in ent["subgroup_elements"]), G.n),
                     frozenset(ent["subset"]))
                    for ent in raw["entries"]
                ))
            branches = tuple(
                Branch(frozenset(b["qubits"]), idx, int(b.get("lambda", 0)), int(b.get("coset", k)))
                for k, b in enumerate(raw["branches"])
            )
            layers.append(Layer(branches, spec))
        return cls(G, tuple(layers))


# ---------------------------------------------------------------------------
# construction


def _check_spec(G: FiniteGroup, spec: LayerSpec) -> None:
    seen: set[int] = set()
    for H, P in spec.entries:
        if not H.is_subgroup_of(G):
            raise ContainmentError(f"{H!r} is not a subgroup of {G!r}")
        for q in P:
            if not 0 <= q < G.n:
                raise IndexError(f"qubit {q} out of range for n={G.n}")
        if seen & P:
            raise ValueError(f"qubit subsets overlap on {sorted(seen & P)}")
        seen |= P


def build_branches(G: FiniteGroup, spec: LayerSpec, layer: int = 0) -> list[Branch]:
    """One branch ``C_i(P_lam)`` per coset ``C_i`` of each ``H_lam``."""
    _check_spec(G, spec)
    out = []
    for lam, (H, P) in enumerate(spec.entries):
        for i, coset in enumerate(left_cosets(G, H)):
            out.append(Branch(apply_set_to_set(coset.members, P), layer, lam, i))
    return out


def build_plan(G: FiniteGroup, specs: Sequence[LayerSpec]) -> SplitPlan:
    layers = tuple(Layer(tuple(build_branches(G, s, k)), s) for k, s in enumerate(specs))
    return SplitPlan(G, layers)


def plan_from_branches(G: FiniteGroup, layers: Sequence[Sequence[Iterable[int]]]) -> SplitPlan:
    """Wrap hand-written branch sets (no subgroup provenance) into a plan."""
    out = []
    for k, sets in enumerate(layers):
        out.append(Layer(tuple(Branch(frozenset(s), k, 0, i) for i, s in enumerate(sets))))
    return SplitPlan(G, tuple(out))


def layer_conditions(G: FiniteGroup, spec: LayerSpec) -> dict[str, bool]:
    """The orbit-ratio, independence and completeness conditions for one layer."""
    P = [q for _, Ps in spec.entries for q in Ps]
    return {
        "well_behaved": all(is_well_behaved(q, H, G) for H, Ps in spec.entries for q in Ps),
        "independent": is_g_independent(G, P),
        "complete": is_g_complete(G, P),
    }


def refines(deeper: LayerSpec, shallower: LayerSpec) -> bool:
    """Every deeper entry sits inside some shallower entry (subgroup and subset)."""
    return all(
        any(H.is_subgroup_of(H2) and P <= P2 for H2, P2 in shallower.entries)
        for H, P in deeper.entries
    )


# ---------------------------------------------------------------------------
# validation


@dataclass
class Check:
    requirement: str
    layer: int
    passed: bool
    violations: list[dict] = field(default_factory=list)


@dataclass
class ValidationReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"requirement": c.requirement, "layer": c.layer, "passed": c.passed,
                 "violations": c.violations}
                for c in self.checks
            ],
        }


def _elements_generators_first(G: FiniteGroup) -> list[Permutation]:
    gens = [g for g in G.generating_set() if not g.is_identity()]
    return gens + [g for g in G.elements if g not in gens and not g.is_identity()]


def validate_plan(plan: SplitPlan) -> ValidationReport:
    """Check partition, symmetry and no-merge requirements for every layer.

    Requirements are named ``disjoint``, ``cover``, ``g-invariance`` and
    ``no-merge`` (the latter relates layer ``k`` to layer ``k-1``). All
    violations are reported, each with a witness.
    """
    G = plan.group
    n = plan.n
    checks: list[Check] = []
    elements = _elements_generators_first(G)
    for k, layer in enumerate(plan.layers):
        sets = [b.qubits for b in layer.branches]

        bad = []
        for i in range(len(sets)):
            if not sets[i]:
                bad.append({"empty_branch": i})
            for j in range(i + 1, len(sets)):
                common = sets[i] & sets[j]
                if common:
                    bad.append({"branches": [i, j], "shared_qubits": sorted(common)})
        checks.append(Check("disjoint", k, not bad, bad))

        covered = frozenset().union(*sets) if sets else frozenset()
        missing = sorted(set(range(n)) - covered)
        stray = sorted(q for q in covered if not 0 <= q < n)
        bad = []
        if missing:
            bad.append({"missing_qubits": missing})
        if stray:
            bad.append({"out_of_range": stray})
        checks.append(Check("cover", k, not bad, bad))

        family = set(sets)
        bad = []
        for g in elements:
            for i, s in enumerate(sets):
                image = apply_to_set(g, s)
                if image not in family:
                    bad.append({"g": list(g.images), "branch": i, "image": sorted(image)})
        checks.append(Check("g-invariance", k, not bad, bad))

        if k > 0:
            parents = [b.qubits for b in plan.layers[k - 1].branches]
            bad = []
            for i, s in enumerate(sets):
                if not any(s <= p for p in parents):
                    hits = [j for j, p in enumerate(parents) if s & p]
                    bad.append({"branch": i, "overlapping_parents": hits})
            checks.append(Check("no-merge", k, not bad, bad))
    return ValidationReport(checks)


# ---------------------------------------------------------------------------
# refinement (deep layer -> shallower layer)


@dataclass(frozen=True)
class Merge:
    first: int
    second: int


@dataclass(frozen=True)
class Enlarge:
    index: int
    subgroup: FiniteGroup


RefineOp = Union[Merge, Enlarge]


def refine_layer(spec_next: LayerSpec, ops: Sequence[RefineOp]) -> LayerSpec:
    """Apply merge / enlarge operations in order to obtain the shallower layer."""
    entries = list(spec_next.entries)
    for op in ops:
        if isinstance(op, Merge):
            a, b = sorted((op.first, op.second))
            if a == b:
                raise ValueError("cannot merge an entry with itself")
            (Ha, Pa), (Hb, Pb) = entries[a], entries[b]
            if Ha != Hb:
                raise ValueError(f"illegal merge: entries {a} and {b} carry different subgroups")
            entries[a] = (Ha, Pa | Pb)
            del entries[b]
        elif isinstance(op, Enlarge):
            H, P = entries[op.index]
            if not H.is_subgroup_of(op.subgroup):
                raise ValueError(f"illegal enlarge: {H!r} is not contained in {op.subgroup!r}")
            entries[op.index] = (op.subgroup, P)
        else:
            raise TypeError(f"unknown refine op {op!r}")
    return LayerSpec(tuple(entries))


# ---------------------------------------------------------------------------
# automatic construction


def _key(H: FiniteGroup):
    return (H.order, tuple(g.images for g in H.elements))


def seed_final_layer(
    G: FiniteGroup,
    candidates: Sequence[tuple[FiniteGroup, int]] | None = None,
    subgroups: Sequence[FiniteGroup] | None = None,
) -> LayerSpec:
    """Pick one well-behaved qubit per orbit for the finest layer.

    A single subgroup serving every orbit is preferred (smallest first, which
    gives the most branches); otherwise each orbit gets its own smallest
    subgroup and entries sharing a subgroup are merged.
    """
    if candidates is None:
        subs = list(subgroups) if subgroups is not None else all_subgroups(G)
        candidates = [(H, q) for H in subs for q in range(G.n)]
    cands = sorted(candidates, key=lambda hq: (_key(hq[0]), hq[1]))
    orbs = orbits(G)

    good: dict[FiniteGroup, dict[int, int]] = {}
    for H, q in cands:
        if is_well_behaved(q, H, G):
            o = next(i for i, orb in enumerate(orbs) if q in orb)
            good.setdefault(H, {}).setdefault(o, q)

    for H in sorted(good, key=_key):
        if len(good[H]) == len(orbs):
            return LayerSpec(((H, frozenset(good[H].values())),))

    chosen: dict[FiniteGroup, set[int]] = {}
    for o, orb in enumerate(orbs):
        pick = next(((H, good[H][o]) for H in sorted(good, key=_key) if o in good[H]), None)
        if pick is None:
            raise SplitConstructionError(
                f"orbit {sorted(orb)} has no well-behaved candidate under any subgroup"
            )
        chosen.setdefault(pick[0], set()).add(pick[1])
    entries = sorted(((H, frozenset(P)) for H, P in chosen.items()), key=lambda e: (_key(e[0]), min(e[1])))
    return LayerSpec(tuple(entries))


def seed_alternatives(G: FiniteGroup, subgroups: Sequence[FiniteGroup] | None = None) -> list[LayerSpec]:
    """Every single-subgroup seed, in the order :func:`seed_final_layer` tries them.

    Each subgroup contributes its canonically-first well-behaved qubit per
    orbit; subgroups that miss an orbit are left out.
    """
    subs = list(subgroups) if subgroups is not None else all_subgroups(G)
    orbs = orbits(G)
    out = []
    for H in sorted(subs, key=_key):
        picks = []
        for orb in orbs:
            q = next((q for q in sorted(orb) if is_well_behaved(q, H, G)), None)
            if q is None:
                break
            picks.append(q)
        else:
            out.append(LayerSpec(((H, frozenset(picks)),)))
    return out


def _longest_chains(G: FiniteGroup, subs: Sequence[FiniteGroup]) -> dict[FiniteGroup, list[FiniteGroup]]:
    """For every subgroup, a longest strictly increasing chain up to ``G``."""
    chains: dict[FiniteGroup, list[FiniteGroup]] = {}
    for A in sorted(subs, key=_key, reverse=True):
        if A == G:
            chains[A] = [G]
            continue
        best: list[FiniteGroup] | None = None
        for B in sorted(subs, key=_key):
            if B.order > A.order and A.is_subgroup_of(B):
                cand = [A] + chains[B]
                if best is None or len(cand) > len(best):
                    best = cand
        chains[A] = best if best is not None else [A, G]
    return chains


def auto_split(G: FiniteGroup, n_layers: int) -> SplitPlan:
    """Build a valid ``n_layers``-deep plan from the finest seed upward.

    Each step towards the input enlarges every entry's subgroup along a
    longest subgroup chain (spreading the steps evenly over the remaining
    layers) and merges entries whose subgroups coincide. The first layer is
    always a single branch holding every qubit.
    """
    if n_layers < 1:
        raise ValueError("n_layers must be at least 1")
    subs = all_subgroups(G)
    chains = _longest_chains(G, subs)
    seed = seed_final_layer(G, subgroups=subs)
    if n_layers == 1:
        top = refine_layer(seed, _steps_towards(seed, chains, 1))
        return build_plan(G, [top])

    specs = [seed]
    current = seed
    for remaining in range(n_layers - 1, 0, -1):
        current = refine_layer(current, _steps_towards(current, chains, remaining))
        if not refines(specs[-1], current):
            raise SplitConstructionError(f"refinement broke containment at layer {remaining}")
        specs.append(current)
    if len(current.entries) != 1 or current.entries[0][0] != G:
        raise SplitConstructionError(
            f"could not reach a single branch; shallowest layer has {len(current.entries)} entries"
        )
    plan = build_plan(G, specs[::-1])
    report = validate_plan(plan)
    if not report.passed:
        raise SplitConstructionError(f"auto_split produced an invalid plan: {report.failures()[0]}")
    return plan


def _steps_towards(spec: LayerSpec, chains, remaining: int) -> list[RefineOp]:
    """Merge/enlarge ops moving ``spec`` one step up, ``remaining`` steps left."""
    ops: list[RefineOp] = []
    entries = list(spec.entries)

    def merge_equal():
        changed = True
        while changed:
            changed = False
            for a in range(len(entries)):
                for b in range(a + 1, len(entries)):
                    if entries[a][0] == entries[b][0]:
                        ops.append(Merge(a, b))
                        entries[a] = (entries[a][0], entries[a][1] | entries[b][1])
                        del entries[b]
                        changed = True
                        break
                if changed:
                    break

    merge_equal()
    for i, (H, P) in enumerate(entries):
        chain = chains[H]
        steps = len(chain) - 1
        advance = steps if remaining <= 1 else math.ceil(steps / remaining)
        if advance:
            target = chain[advance]
            ops.append(Enlarge(i, target))
            entries[i] = (target, P)
    merge_equal()
    return ops
