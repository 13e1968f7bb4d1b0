"""Subgraph monomorphism search for substructure queries.

VF2-flavored backtracking: pattern atoms are matched one at a time, always
extending from atoms adjacent to the partial mapping, with degree-based
pruning. Pattern atoms written in brackets additionally constrain formal
charge and total hydrogen count (SMARTS-lite semantics).
"""

from __future__ import annotations

from .graph import Molecule

MODE_ELEMENT = "exact-element"
MODE_AROMATIC = "element+aromaticity"


def match_substructure(
    mol: Molecule, pattern: Molecule, mode: str = MODE_AROMATIC
) -> bool:
    """True iff pattern embeds into mol as a subgraph monomorphism."""
    if pattern.num_atoms == 0 or pattern.num_atoms > mol.num_atoms:
        return False
    if len(pattern.bonds) > len(mol.bonds):
        return False

    order = _match_order(pattern)
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def atoms_compatible(p: int, t: int) -> bool:
        pa, ta = pattern.atoms[p], mol.atoms[t]
        if pa.element != ta.element:
            return False
        if mode == MODE_AROMATIC and pa.aromatic != ta.aromatic:
            return False
        if pa.bracket:
            if pa.charge != ta.charge:
                return False
            if pa.explicit_h is not None and pa.explicit_h != ta.hcount:
                return False
        if pattern.degree(p) > mol.degree(t):
            return False
        return True

    def bonds_compatible(pb, tb) -> bool:
        if mode == MODE_AROMATIC:
            if pb.aromatic != tb.aromatic:
                return False
            return pb.aromatic or pb.order == tb.order
        # exact-element mode: aromatic bonds stand in for single or double.
        if pb.aromatic or tb.aromatic:
            return True
        return pb.order == tb.order

    def extend(depth: int) -> bool:
        if depth == len(order):
            return True
        p = order[depth]
        anchors = [
            (nbr, bond)
            for nbr, bond in pattern.neighbors(p)
            if nbr in mapping
        ]
        if anchors:
            first_nbr, first_bond = anchors[0]
            candidates = [
                (t, tb)
                for t, tb in mol.neighbors(mapping[first_nbr])
                if t not in used and bonds_compatible(first_bond, tb)
            ]
            candidate_atoms = [t for t, _ in candidates]
        else:
            candidate_atoms = [t for t in range(mol.num_atoms) if t not in used]
        for t in candidate_atoms:
            if not atoms_compatible(p, t):
                continue
            ok = True
            for nbr, pbond in anchors:
                tbond = mol.bond_between(t, mapping[nbr])
                if tbond is None or not bonds_compatible(pbond, tbond):
                    ok = False
                    break
            if not ok:
                continue
            mapping[p] = t
            used.add(t)
            if extend(depth + 1):
                return True
            del mapping[p]
            used.remove(t)
        return False

    return extend(0)


def _match_order(pattern: Molecule) -> list[int]:
    """Connectivity-first visit order: after the first atom, every atom is
    adjacent to an earlier one (per connected component)."""
    order: list[int] = []
    seen: set[int] = set()
    remaining = sorted(range(pattern.num_atoms), key=lambda i: -pattern.degree(i))
    for start in remaining:
        if start in seen:
            continue
        stack = [start]
        seen.add(start)
        while stack:
            idx = stack.pop()
            order.append(idx)
            for nbr, _ in sorted(pattern.neighbors(idx), key=lambda t: -pattern.degree(t[0])):
                if nbr not in seen:
                    seen.add(nbr)
                    stack.append(nbr)
    return order
