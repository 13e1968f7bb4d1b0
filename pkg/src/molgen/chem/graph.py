"""Molecular graph data structures: atoms, bonds, rings, valence rules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class SmilesError(ValueError):
    """Base class for all SMILES parsing and validation errors."""


class EmptyInput(SmilesError):
    pass


class UnbalancedBranch(SmilesError):
    pass


class UnclosedRing(SmilesError):
    pass


class UnknownElement(SmilesError):
    pass


class ValenceError(SmilesError):
    pass


class KekulizationError(SmilesError):
    """No alternating single/double assignment exists for an aromatic system."""


# Elements the parser accepts. Organic-subset atoms may appear bare; anything
# else must be bracketed.
ORGANIC_SUBSET = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}

KNOWN_ELEMENTS = ORGANIC_SUBSET | {
    "H", "He", "Li", "Be", "Na", "Mg", "Al", "Si", "K", "Ca", "Se", "Zn",
    "Fe", "Cu", "Mn", "Sn", "As", "Hg", "Pb",
}

# Allowed valence states per element, ascending. Implicit hydrogens fill to
# the smallest state that covers the existing bond order sum.
ALLOWED_VALENCES: dict[str, tuple[int, ...]] = {
    "B": (3,),
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
    "H": (1,),
}

# Standard atomic masses (g/mol), abridged IUPAC 2021 values.
ATOMIC_MASSES: dict[str, float] = {
    "H": 1.008, "B": 10.81, "C": 12.011, "N": 14.007, "O": 15.999,
    "F": 18.998, "Na": 22.990, "Mg": 24.305, "Al": 26.982, "Si": 28.085,
    "P": 30.974, "S": 32.06, "Cl": 35.45, "K": 39.098, "Ca": 40.078,
    "Mn": 54.938, "Fe": 55.845, "Cu": 63.546, "Zn": 65.38, "As": 74.922,
    "Se": 78.971, "Br": 79.904, "Sn": 118.71, "I": 126.904, "Hg": 200.59,
    "Pb": 207.2, "He": 4.003, "Li": 6.94, "Be": 9.012,
}


@dataclass
class Atom:
    element: str
    charge: int = 0
    hcount: int = 0          # total hydrogens (explicit + implicit) after finalize
    aromatic: bool = False
    in_ring: bool = False
    explicit_h: int | None = None   # bracket H count, None when implicit
    bracket: bool = False
    stereo: str | None = None       # "@", "@@" recorded but unused downstream
    isotope: int | None = None      # accepted and ignored


@dataclass
class Bond:
    a: int
    b: int
    order: int               # kekulized order: 1, 2 or 3
    aromatic: bool = False
    stereo: str | None = None       # "/" or "\\" recorded but unused downstream

    def other(self, idx: int) -> int:
        return self.b if idx == self.a else self.a


@dataclass
class Molecule:
    """Immutable-after-parse molecular graph.

    ``rings`` holds the smallest set of smallest rings as atom-index cycles in
    traversal order. Do not mutate a Molecule after it leaves the parser; all
    downstream operations treat it as read-only.
    """

    atoms: list[Atom] = field(default_factory=list)
    bonds: list[Bond] = field(default_factory=list)
    rings: list[list[int]] = field(default_factory=list)
    _adj: list[list[int]] = field(default_factory=list, repr=False)

    def finalize_adjacency(self) -> None:
        self._adj = [[] for _ in self.atoms]
        for bi, bond in enumerate(self.bonds):
            self._adj[bond.a].append(bi)
            self._adj[bond.b].append(bi)

    def neighbors(self, idx: int) -> list[tuple[int, Bond]]:
        """(neighbor atom index, bond) pairs for one atom."""
        return [(self.bonds[bi].other(idx), self.bonds[bi]) for bi in self._adj[idx]]

    def bond_between(self, a: int, b: int) -> Bond | None:
        for bi in self._adj[a]:
            bond = self.bonds[bi]
            if bond.other(a) == b:
                return bond
        return None

    def degree(self, idx: int) -> int:
        return len(self._adj[idx])

    def bond_order_sum(self, idx: int) -> int:
        return sum(self.bonds[bi].order for bi in self._adj[idx])

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    @property
    def has_stereo(self) -> bool:
        return any(a.stereo for a in self.atoms) or any(b.stereo for b in self.bonds)

    def heavy_formula_weight(self) -> float:
        terms = []
        for atom in self.atoms:
            terms.append(ATOMIC_MASSES[atom.element])
            terms.append(atom.hcount * ATOMIC_MASSES["H"])
        return math.fsum(terms)  # exact: independent of atom ordering

    def net_charge(self) -> int:
        return sum(a.charge for a in self.atoms)

    def check_valences(self) -> None:
        """Raise ValenceError when any atom exceeds its element's maximum.

        Effective valence is bond order sum plus hydrogens minus the formal
        charge, so e.g. tetravalent N+ reduces to 3 and passes.
        """
        for idx, atom in enumerate(self.atoms):
            allowed = ALLOWED_VALENCES.get(atom.element)
            if allowed is None:
                continue  # metals etc.: accept whatever was written
            effective = self.bond_order_sum(idx) + atom.hcount - atom.charge
            if effective > allowed[-1]:
                raise ValenceError(
                    f"atom {idx} ({atom.element}) has valence {effective}, "
                    f"maximum is {allowed[-1]}"
                )


def smallest_allowed_valence(element: str, occupied: int) -> int | None:
    """Smallest allowed valence state >= occupied, or None if none fits."""
    for v in ALLOWED_VALENCES.get(element, ()):
        if v >= occupied:
            return v
    return None


def sssr(num_atoms: int, bonds: list[Bond]) -> list[list[int]]:
    """Smallest set of smallest rings via a spanning-tree cycle basis.

    Candidate cycles come from the shortest cycle through every edge; a
    greedy pass ordered by (ring size, lowest atom indices) keeps cycles that
    are independent over GF(2) until the cyclomatic number is reached.
    """
    adj: list[list[tuple[int, int]]] = [[] for _ in range(num_atoms)]
    for bi, bond in enumerate(bonds):
        adj[bond.a].append((bond.b, bi))
        adj[bond.b].append((bond.a, bi))

    seen = [False] * num_atoms
    components = 0
    for start in range(num_atoms):
        if seen[start]:
            continue
        components += 1
        stack = [start]
        seen[start] = True
        while stack:
            node = stack.pop()
            for nbr, _ in adj[node]:
                if not seen[nbr]:
                    seen[nbr] = True
                    stack.append(nbr)
    n_rings = len(bonds) - num_atoms + components
    if n_rings <= 0:
        return []

    def shortest_cycle_through(bi: int) -> list[int] | None:
        # BFS from bond.a to bond.b avoiding the bond itself.
        source, target = bonds[bi].a, bonds[bi].b
        prev: dict[int, int] = {source: -1}
        queue = [source]
        while queue:
            nxt: list[int] = []
            for node in queue:
                for nbr, ei in adj[node]:
                    if ei == bi or nbr in prev:
                        continue
                    prev[nbr] = node
                    if nbr == target:
                        path = [nbr]
                        while path[-1] != source:
                            path.append(prev[path[-1]])
                        return path
                    nxt.append(nbr)
            queue = nxt
        return None

    candidates: list[list[int]] = []
    for bi in range(len(bonds)):
        cyc = shortest_cycle_through(bi)
        if cyc is not None:
            candidates.append(cyc)

    def edge_mask(cycle: list[int]) -> int:
        mask = 0
        for i, a in enumerate(cycle):
            b = cycle[(i + 1) % len(cycle)]
            for nbr, ei in adj[a]:
                if nbr == b:
                    mask |= 1 << ei
                    break
        return mask

    def canon_cycle(cycle: list[int]) -> list[int]:
        # Rotate/reflect so the listing starts at the lowest index and the
        # smaller neighbor follows; makes ordering deterministic.
        k = cycle.index(min(cycle))
        rot = cycle[k:] + cycle[:k]
        if rot[-1] < rot[1]:
            rot = [rot[0]] + rot[:0:-1]
        return rot

    uniq: dict[tuple[int, ...], list[int]] = {}
    for cyc in candidates:
        c = canon_cycle(cyc)
        uniq.setdefault(tuple(c), c)
    ordered = sorted(uniq.values(), key=lambda c: (len(c), c))

    rings: list[list[int]] = []
    basis: dict[int, int] = {}  # leading bit -> echelon row

    def try_add(cyc: list[int]) -> None:
        vec = edge_mask(cyc)
        while vec:
            lead = vec.bit_length() - 1
            if lead not in basis:
                basis[lead] = vec
                rings.append(cyc)
                return
            vec ^= basis[lead]

    for cyc in ordered:
        if len(rings) == n_rings:
            break
        try_add(cyc)

    if len(rings) < n_rings:
        # Fallback for exotic topologies: fundamental cycles of a BFS tree
        # complete the basis even when per-edge shortest cycles do not.
        parent = {0: (-1, -1)} if num_atoms else {}
        for start in range(num_atoms):
            if start in parent:
                continue
            parent[start] = (-1, -1)
            queue = [start]
            while queue:
                node = queue.pop(0)
                for nbr, ei in adj[node]:
                    if nbr not in parent:
                        parent[nbr] = (node, ei)
                        queue.append(nbr)
        for bi, bond in enumerate(bonds):
            if len(rings) == n_rings:
                break
            if parent.get(bond.a, (-1, -1))[1] == bi or parent.get(bond.b, (-1, -1))[1] == bi:
                continue  # tree edge
            path_a = [bond.a]
            while parent[path_a[-1]][0] != -1:
                path_a.append(parent[path_a[-1]][0])
            path_b = [bond.b]
            while parent[path_b[-1]][0] != -1:
                path_b.append(parent[path_b[-1]][0])
            common = set(path_a) & set(path_b)
            if not common:
                continue
            cut_a = next(i for i, v in enumerate(path_a) if v in common)
            anchor = path_a[cut_a]
            cut_b = path_b.index(anchor)
            cyc = path_a[: cut_a + 1] + path_b[:cut_b][::-1]
            try_add(canon_cycle(cyc))
    return rings
