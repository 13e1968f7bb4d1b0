"""Canonical SMILES serialization.

Atom ranking uses Morgan-style iterative refinement of local invariants with
symmetry-breaking until every atom has a unique rank, then a deterministic
DFS writes the string starting from the lowest-ranked atom. Output is
invariant under relabeling of the input atom order but is not interoperable
with other toolkits' canonical SMILES.
"""

from __future__ import annotations

import sys

from .graph import ORGANIC_SUBSET, Molecule, smallest_allowed_valence

_BOND_SYMBOL = {1: "", 2: "=", 3: "#"}


def canonical_ranks(mol: Molecule) -> list[int]:
    """Dense canonical rank per atom; the rank-0 atom is the canonical root."""
    n = mol.num_atoms
    invariants = [
        (
            atom.element,
            mol.degree(i),
            atom.charge,
            atom.hcount,
            atom.in_ring,
            atom.aromatic,
        )
        for i, atom in enumerate(mol.atoms)
    ]
    ranks = _dense_ranks(invariants)

    def refine(ranks: list[int]) -> list[int]:
        while True:
            signature = [
                (
                    ranks[i],
                    tuple(sorted((ranks[nbr], _bond_key(b)) for nbr, b in mol.neighbors(i))),
                )
                for i in range(n)
            ]
            new = _dense_ranks(signature)
            if new == ranks:
                return new
            ranks = new

    ranks = refine(ranks)
    while len(set(ranks)) < n:
        # Break the lowest tied class at its member with the smallest
        # neighborhood signature; tied signatures mean symmetric atoms, for
        # which any choice yields the same canonical string.
        by_rank: dict[int, list[int]] = {}
        for i, r in enumerate(ranks):
            by_rank.setdefault(r, []).append(i)
        tied_rank = min(r for r, members in by_rank.items() if len(members) > 1)
        members = by_rank[tied_rank]
        chosen = min(members, key=lambda i: _bfs_signature(mol, i, ranks))
        ranks = _dense_ranks(
            [(r, 0 if i == chosen else 1) for i, r in enumerate(ranks)]
        )
        ranks = refine(ranks)
    return ranks


def _bond_key(bond) -> int:
    return 4 if bond.aromatic else bond.order


def _dense_ranks(keys: list) -> list[int]:
    # Keys within one call share a structure, so tuple comparison is total;
    # never compare by repr (string order is not numeric order).
    order = {k: i for i, k in enumerate(sorted(set(keys)))}
    return [order[k] for k in keys]


def _bfs_signature(mol: Molecule, root: int, ranks: list[int]) -> tuple:
    """Relabeling-invariant breadth-first neighborhood signature of an atom."""
    seen = {root}
    frontier = [root]
    levels: list[tuple] = []
    while frontier:
        levels.append(tuple(sorted(ranks[i] for i in frontier)))
        nxt: list[int] = []
        for i in frontier:
            for nbr, _ in mol.neighbors(i):
                if nbr not in seen:
                    seen.add(nbr)
                    nxt.append(nbr)
        frontier = nxt
    return tuple(levels)


def canonical_smiles(mol: Molecule) -> str:
    """Deterministic canonical SMILES; dot-joined for multi-fragment input."""
    if mol.num_atoms == 0:
        return ""
    ranks = canonical_ranks(mol)
    visited: set[int] = set()
    fragments: list[str] = []
    for root in sorted(range(mol.num_atoms), key=lambda i: ranks[i]):
        if root in visited:
            continue
        fragments.append(_Writer(mol, ranks).write(root, visited))
    return ".".join(sorted(fragments))


class _Writer:
    def __init__(self, mol: Molecule, ranks: list[int]):
        self.mol = mol
        self.ranks = ranks
        self.parent: dict[int, int] = {}
        self.order_in: dict[int, int] = {}
        self.closures: dict[int, list[tuple[str, object]]] = {}
        self._digit = 0

    def write(self, root: int, visited: set[int]) -> str:
        limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(limit, 6 * self.mol.num_atoms + 200))
        try:
            self._discover(root, -1)
            visited.update(self.order_in)
            return self._emit(root, -1, None)
        finally:
            sys.setrecursionlimit(limit)

    def _sorted_neighbors(self, idx: int):
        return sorted(self.mol.neighbors(idx), key=lambda t: self.ranks[t[0]])

    def _discover(self, idx: int, parent: int) -> None:
        self.parent[idx] = parent
        self.order_in[idx] = len(self.order_in)
        for nbr, bond in self._sorted_neighbors(idx):
            if nbr == parent:
                continue
            if nbr in self.order_in:
                if any(b is bond for _, b in self.closures.get(idx, [])):
                    continue
                self._digit += 1
                digit = str(self._digit) if self._digit < 10 else f"%{self._digit:02d}"
                self.closures.setdefault(nbr, []).append((digit, bond))
                self.closures.setdefault(idx, []).append((digit, bond))
            else:
                self._discover(nbr, idx)

    def _emit(self, idx: int, parent: int, via_bond) -> str:
        parts: list[str] = []
        if via_bond is not None:
            parts.append(_bond_text(self.mol, via_bond))
        parts.append(_atom_text(self.mol, idx))
        for digit, bond in sorted(self.closures.get(idx, []), key=lambda t: t[0]):
            # The bond symbol goes on the opening mention only.
            if self.order_in[idx] < self.order_in[bond.other(idx)]:
                parts.append(_bond_text(self.mol, bond))
            parts.append(digit)
        children = [
            (nbr, bond)
            for nbr, bond in self._sorted_neighbors(idx)
            if self.parent.get(nbr) == idx
        ]
        for i, (nbr, bond) in enumerate(children):
            text = self._emit(nbr, idx, bond)
            parts.append(text if i == len(children) - 1 else f"({text})")
        return "".join(parts)


def _bond_text(mol: Molecule, bond) -> str:
    if bond.aromatic:
        return ""
    symbol = _BOND_SYMBOL[bond.order]
    if symbol == "" and mol.atoms[bond.a].aromatic and mol.atoms[bond.b].aromatic:
        return "-"  # single bond between two aromatic systems (e.g. biphenyl)
    return symbol


def _atom_text(mol: Molecule, idx: int) -> str:
    atom = mol.atoms[idx]
    symbol = atom.element.lower() if atom.aromatic else atom.element
    needs_bracket = (
        atom.charge != 0
        or atom.element not in ORGANIC_SUBSET
        or (atom.aromatic and atom.element != "C" and atom.hcount > 0)
    )
    if not needs_bracket and not atom.aromatic:
        needs_bracket = atom.hcount != _reparse_hcount(mol, idx)
    if not needs_bracket:
        return symbol
    h = ""
    if atom.hcount == 1:
        h = "H"
    elif atom.hcount > 1:
        h = f"H{atom.hcount}"
    charge = ""
    if atom.charge > 0:
        charge = "+" if atom.charge == 1 else f"+{atom.charge}"
    elif atom.charge < 0:
        charge = "-" if atom.charge == -1 else f"-{-atom.charge}"
    return f"[{symbol}{h}{charge}]"


def _reparse_hcount(mol: Molecule, idx: int) -> int:
    """Hydrogens the parser would infer for this atom written bare."""
    atom = mol.atoms[idx]
    occupied = mol.bond_order_sum(idx)
    target = smallest_allowed_valence(atom.element, occupied)
    if target is None:
        return -1
    return target - occupied
