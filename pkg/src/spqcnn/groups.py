"""Finite permutation groups acting on qubit indices.

Qubits are labelled ``0 .. n-1``. A :class:`Permutation` stores the image of
every qubit, so ``p(i) == p.images[i]``. Composition follows the usual
right-to-left convention: ``(p * q)(i) == p(q(i))``.

Elements, subgroups and cosets are always listed in a canonical order
(lexicographic on image tuples) so that every derived object is
reproducible from run to run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence


class DimensionError(ValueError):
    """Two objects disagree on the number of qubits."""


class ContainmentError(ValueError):
    """A group was expected to be a subgroup of another one and is not."""


class CapacityError(ValueError):
    """An exhaustive search was requested on a group that is too large."""


@dataclass(frozen=True, order=True)
class Permutation:
    images: tuple[int, ...]

    def __post_init__(self):
        images = tuple(int(i) for i in self.images)
        if sorted(images) != list(range(len(images))):
            raise ValueError(f"not a bijection on range({len(images)}): {images}")
        object.__setattr__(self, "images", images)

    @property
    def n(self) -> int:
        return len(self.images)

    @classmethod
    def identity(cls, n: int) -> Permutation:
        return cls(tuple(range(n)))

    @classmethod
    def from_cycles(cls, n: int, *cycles: Sequence[int]) -> Permutation:
        images = list(range(n))
        for cycle in cycles:
            for a, b in zip(cycle, tuple(cycle[1:]) + (cycle[0],)):
                images[a] = b
        return cls(tuple(images))

    def __call__(self, i: int) -> int:
        if not 0 <= i < self.n:
            raise IndexError(f"qubit {i} out of range for n={self.n}")
        return self.images[i]

    def __mul__(self, other: Permutation) -> Permutation:
        return compose(self, other)

    def inverse(self) -> Permutation:
        inv = [0] * self.n
        for i, j in enumerate(self.images):
            inv[j] = i
        return Permutation(tuple(inv))

    def is_identity(self) -> bool:
        return self.images == tuple(range(self.n))

    def cycles(self) -> list[tuple[int, ...]]:
        """Non-trivial cycles, each starting at its smallest element."""
        seen, out = set(), []
        for start in range(self.n):
            if start in seen:
                continue
            cyc, i = [], start
            while i not in seen:
                seen.add(i)
                cyc.append(i)
                i = self.images[i]
            if len(cyc) > 1:
                out.append(tuple(cyc))
        return out

    def __repr__(self) -> str:
        if self.is_identity():
            return "Permutation(e)"
        return "Permutation(" + "".join(str(c) for c in self.cycles()) + ")"


def compose(p: Permutation, q: Permutation) -> Permutation:
    """Return ``p ∘ q``, i.e. apply ``q`` first."""
    if p.n != q.n:
        raise DimensionError(f"cannot compose permutations on {p.n} and {q.n} qubits")
    return Permutation(tuple(p.images[j] for j in q.images))


@dataclass(frozen=True)
class FiniteGroup:
    """A finite group of permutations, stored as its full sorted element list."""

    elements: tuple[Permutation, ...]
    n: int
    generators: tuple[Permutation, ...] = field(default=(), compare=False)

    def __post_init__(self):
        elems = tuple(sorted(set(self.elements)))
        if any(g.n != self.n for g in elems):
            raise DimensionError("group elements act on different numbers of qubits")
        object.__setattr__(self, "elements", elems)
        object.__setattr__(self, "_members", frozenset(elems))

    @property
    def order(self) -> int:
        return len(self.elements)

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __contains__(self, g: Permutation) -> bool:
        return g in self._members

    def __hash__(self) -> int:
        return hash(self.elements)

    def identity(self) -> Permutation:
        return Permutation.identity(self.n)

    def is_subgroup_of(self, other: FiniteGroup) -> bool:
        return self.n == other.n and self._members <= other._members

    def is_closed(self) -> bool:
        return all(compose(a, b) in self for a in self for b in self)

    def generating_set(self) -> tuple[Permutation, ...]:
        """Stored generators, or a small generating set found greedily."""
        if self.generators:
            return self.generators
        gens: list[Permutation] = []
        span = {self.identity()}
        for g in self.elements:
            if g not in span:
                gens.append(g)
                span = set(_closure(gens, self.n))
        return tuple(gens)

    def to_json(self) -> dict:
        return {"n": self.n, "generators": [list(g.images) for g in self.generating_set()]}

    @classmethod
    def from_json(cls, data: dict) -> FiniteGroup:
        n = int(data["n"])
        return generate_group([Permutation(tuple(g)) for g in data["generators"]], n=n)

    def __repr__(self) -> str:
        return f"FiniteGroup(order={self.order}, n={self.n})"


@dataclass(frozen=True)
class Coset:
    representative: Permutation
    members: frozenset[Permutation]

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(sorted(self.members))


def _closure(generators: Sequence[Permutation], n: int) -> set[Permutation]:
    elems = {Permutation.identity(n)}
    frontier = list(elems)
    while frontier:
        nxt = []
        for a in frontier:
            for g in generators:
                b = compose(g, a)
                if b not in elems:
                    elems.add(b)
                    nxt.append(b)
        frontier = nxt
    return elems


def generate_group(generators: Iterable[Permutation], n: int | None = None) -> FiniteGroup:
    """Smallest group containing ``generators``.

    ``n`` is required when ``generators`` is empty (the result is then the
    trivial group).
    """
    gens = tuple(generators)
    sizes = {g.n for g in gens}
    if len(sizes) > 1:
        raise DimensionError(f"generators act on different qubit counts: {sorted(sizes)}")
    if n is None:
        if not gens:
            raise ValueError("n must be given for an empty generator set")
        n = gens[0].n
    elif sizes and sizes != {n}:
        raise DimensionError(f"generators act on {sizes.pop()} qubits, expected {n}")
    return FiniteGroup(tuple(_closure(gens, n)), n, generators=gens)


def trivial_group(n: int) -> FiniteGroup:
    return generate_group((), n=n)


def _subgroup_key(H: FiniteGroup):
    return (H.order, tuple(g.images for g in H.elements))


def all_subgroups(G: FiniteGroup, cap: int = 64) -> list[FiniteGroup]:
    """Every subgroup of ``G`` exactly once, ordered by size then elements.

    Uses cyclic subgroups as seeds and closes under joins with them; any
    subgroup is the join of the cyclic subgroups it contains, so the
    fixed point is the full lattice.
    """
    if G.order > cap:
        raise CapacityError(f"|G| = {G.order} exceeds the subgroup enumeration cap {cap}")
    cyclic = {frozenset(_closure([g], G.n)) for g in G}
    found = set(cyclic) | {frozenset([G.identity()])}
    frontier = set(found)
    while frontier:
        nxt = set()
        for A in frontier:
            for C in cyclic:
                if C <= A:
                    continue
                J = frozenset(_closure(sorted(A | C), G.n))
                if J not in found:
                    found.add(J)
                    nxt.add(J)
        frontier = nxt
    subgroups = [FiniteGroup(tuple(S), G.n) for S in found]
    return sorted(subgroups, key=_subgroup_key)


def brute_force_subgroups(G: FiniteGroup, cap: int = 12) -> list[FiniteGroup]:
    """Reference enumeration: test closure of every element subset.

    Exponential in ``|G|``; only meant as an independent check.
    """
    if G.order > cap:
        raise CapacityError(f"|G| = {G.order} too large for subset enumeration (cap {cap})")
    e = G.identity()
    rest = [g for g in G if g != e]
    out = []
    for k in range(len(rest) + 1):
        for combo in combinations(rest, k):
            S = set(combo) | {e}
            if all(compose(a, b) in S for a in S for b in S):
                out.append(FiniteGroup(tuple(S), G.n))
    return sorted(out, key=_subgroup_key)


def _require_subgroup(H: FiniteGroup, G: FiniteGroup) -> None:
    if not H.is_subgroup_of(G):
        raise ContainmentError(f"{H!r} is not a subgroup of {G!r}")


def left_cosets(G: FiniteGroup, H: FiniteGroup) -> list[Coset]:
    """Left cosets ``gH``, ordered by their minimal element (``H`` comes first)."""
    _require_subgroup(H, G)
    seen: set[Permutation] = set()
    cosets = []
    for g in G.elements:
        if g in seen:
            continue
        members = frozenset(compose(g, h) for h in H)
        seen |= members
        cosets.append(Coset(min(members), members))
    return sorted(cosets, key=lambda c: c.representative)


def _check_qubit(q: int, n: int) -> None:
    if not 0 <= q < n:
        raise IndexError(f"qubit {q} out of range for n={n}")


def orbit(G: FiniteGroup, q: int) -> frozenset[int]:
    _check_qubit(q, G.n)
    return frozenset(g.images[q] for g in G)


def orbits(G: FiniteGroup) -> list[frozenset[int]]:
    """Partition of the qubits into ``G``-orbits, ordered by smallest member."""
    seen: set[int] = set()
    out = []
    for q in range(G.n):
        if q not in seen:
            o = orbit(G, q)
            seen |= o
            out.append(o)
    return out


def apply_to_set(g: Permutation, qubits: Iterable[int]) -> frozenset[int]:
    return frozenset(g(q) for q in qubits)


def apply_set_to_set(elements: Iterable[Permutation], qubits: Iterable[int]) -> frozenset[int]:
    """``C(P) = {g(q) | g in C, q in P}`` for any collection of elements."""
    qs = tuple(qubits)
    return frozenset(g(q) for g in elements for q in qs)


def is_well_behaved(q: int, H: FiniteGroup, G: FiniteGroup) -> bool:
    """True when ``|G(q)| / |H(q)| == |G| / |H|``."""
    _require_subgroup(H, G)
    return len(orbit(G, q)) * H.order == len(orbit(H, q)) * G.order


def is_g_independent(G: FiniteGroup, qubits: Iterable[int]) -> bool:
    qs = list(qubits)
    for q in qs:
        _check_qubit(q, G.n)
    reps = [min(orbit(G, q)) for q in qs]
    return len(set(reps)) == len(reps)


def is_g_complete(G: FiniteGroup, qubits: Iterable[int]) -> bool:
    qs = list(qubits)
    for q in qs:
        _check_qubit(q, G.n)
    covered = set()
    for q in qs:
        covered |= orbit(G, q)
    return len(covered) == G.n


def subgroups_json(subgroups: Sequence[FiniteGroup]) -> list[list[list[int]]]:
    return [[list(g.images) for g in H.elements] for H in subgroups]
