"""Built-in lattices and their symmetry groups.

All labels are 0-based. On the 2x2x2 cube, site ``k`` here is site ``k+1``
in the usual 1-based drawing: the top face is the 4-cycle 0-1-3-2 and the
bottom face is 4-5-7-6, with vertical bonds 0-4, 1-5, 2-6, 3-7.

The 4x4 grid is numbered quadrant by quadrant so that the fourfold rotation
is ``q -> q + 4 (mod 16)``. Inside the top-left quadrant the order is
corner, edge, centre, edge; every other quadrant is the rotated copy. With
this labelling qubits 0, 1, 2 sit on the three distinct orbits.
"""

from __future__ import annotations

from .groups import FiniteGroup, Permutation, compose, generate_group

CUBE_N = 8

# (j, k, bond class); A = top face, B = verticals, C = bottom face
CUBE_BONDS: tuple[tuple[int, int, str], ...] = (
    (0, 1, "A"), (1, 3, "A"), (3, 2, "A"), (2, 0, "A"),
    (0, 4, "B"), (1, 5, "B"), (2, 6, "B"), (3, 7, "B"),
    (4, 5, "C"), (5, 7, "C"), (7, 6, "C"), (6, 4, "C"),
)


def cube_elements() -> dict[str, Permutation]:
    c4 = Permutation.from_cycles(CUBE_N, (0, 1, 3, 2), (4, 5, 7, 6))
    # reflection through the diagonal holding sites 0 and 3 (and 4, 7 below)
    sigma3 = Permutation.from_cycles(CUBE_N, (1, 2), (5, 6))
    return _d4_names(c4, sigma3)


def grid_coordinates() -> list[tuple[int, int]]:
    """(row, col) of each of the 16 grid qubits."""
    base = [(0, 0), (0, 1), (1, 1), (1, 0)]
    coords = []
    for m in range(4):
        for r, c in base:
            for _ in range(m):
                r, c = c, 3 - r
            coords.append((r, c))
    return coords


def grid_elements() -> dict[str, Permutation]:
    coords = grid_coordinates()
    index = {rc: i for i, rc in enumerate(coords)}
    c4 = Permutation(tuple(index[(c, 3 - r)] for r, c in coords))
    sigma3 = Permutation(tuple(index[(c, r)] for r, c in coords))
    return _d4_names(c4, sigma3)


def _d4_names(c4: Permutation, sigma3: Permutation) -> dict[str, Permutation]:
    c2 = compose(c4, c4)
    c3 = compose(c2, c4)
    return {
        "e": Permutation.identity(c4.n),
        "c4": c4,
        "c4^2": c2,
        "c4^3": c3,
        "sigma1": compose(c4, sigma3),
        "sigma2": compose(c3, sigma3),
        "sigma3": sigma3,
        "sigma4": compose(c2, sigma3),
    }


def d4_cube() -> FiniteGroup:
    el = cube_elements()
    return generate_group([el["c4"], el["sigma3"]])


def d4_grid4x4() -> FiniteGroup:
    el = grid_elements()
    return generate_group([el["c4"], el["sigma3"]])


def translation(n: int) -> Permutation:
    """``T(j) = j + 1 mod n``."""
    return Permutation(tuple((i + 1) % n for i in range(n)))


def translation_ring(n: int) -> FiniteGroup:
    return generate_group([translation(n)])


def group_preset(name: str) -> FiniteGroup:
    """Resolve ``d4-cube``, ``d4-grid4x4`` or ``translation-ring(n)``."""
    if name == "d4-cube":
        return d4_cube()
    if name == "d4-grid4x4":
        return d4_grid4x4()
    if name.startswith("translation-ring"):
        arg = name[len("translation-ring"):].strip("()- ")
        if not arg.isdigit() or int(arg) < 1:
            raise ValueError(f"bad ring size in {name!r}")
        return translation_ring(int(arg))
    raise ValueError(f"unknown group preset {name!r}")


def subgroup_from(G: FiniteGroup, *elements: Permutation) -> FiniteGroup:
    H = generate_group(elements, n=G.n)
    if not H.is_subgroup_of(G):
        raise ValueError("generated group escapes the ambient group")
    return H


def cube_demo_plan():
    """The three-layer cube plan: [8] -> {0,3,5,6},{1,2,4,7} -> four pairs.

    Layers 2 and 3 use ``H = {e, c4^2, sigma3, sigma4}``; the last layer has
    two entries, seeded at qubits 0 and 5.
    """
    from .splitting import LayerSpec, build_plan

    G = d4_cube()
    el = cube_elements()
    H = subgroup_from(G, el["c4^2"], el["sigma3"])
    return build_plan(G, [
        LayerSpec.of((G, {0, 5})),
        LayerSpec.of((H, {0, 5})),
        LayerSpec.of((H, {0}), (H, {5})),
    ])


def ring_halves_plan(interleaved: bool = True):
    """Two-layer plan on the 8-site ring: all qubits, then two halves.

    Interleaved halves (even and odd sites) are swapped by the translation;
    contiguous halves are not, so that plan breaks g-invariance.
    """
    from .splitting import plan_from_branches

    if interleaved:
        halves = [range(0, 8, 2), range(1, 8, 2)]
    else:
        halves = [range(0, 4), range(4, 8)]
    return plan_from_branches(translation_ring(8), [[range(8)], halves])
