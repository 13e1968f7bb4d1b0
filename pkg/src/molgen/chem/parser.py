"""SMILES tokenizer and parser for the organic subset plus bracket atoms.

Supported: organic-subset atoms, bracket atoms with isotope/charge/explicit H,
branches, ring closures (including %nn), dots, bond symbols - = # : / \\ and
aromatic lowercase atoms. Stereo markers are recorded as flags and otherwise
ignored. Aromaticity on Kekulé input is perceived with a 4n+2 pi-electron
count on rings of size 5-7; lowercase input is validated by finding an
alternating single/double assignment.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import (
    ALLOWED_VALENCES,
    KNOWN_ELEMENTS,
    ORGANIC_SUBSET,
    Atom,
    Bond,
    EmptyInput,
    KekulizationError,
    Molecule,
    SmilesError,
    UnbalancedBranch,
    UnclosedRing,
    UnknownElement,
    ValenceError,
    smallest_allowed_valence,
    sssr,
)

AROMATIC_ORGANIC = {"b", "c", "n", "o", "p", "s"}
BOND_CHARS = {"-": 1, "=": 2, "#": 3, ":": -1, "/": 1, "\\": 1}


@dataclass
class SmilesToken:
    kind: str   # atom | bond | open-branch | close-branch | ring-closure | dot
    text: str


def tokenize(smiles: str) -> list[SmilesToken]:
    """Split a SMILES string into tokens; concatenating token texts
    reproduces the input exactly."""
    tokens: list[SmilesToken] = []
    i = 0
    n = len(smiles)
    while i < n:
        ch = smiles[i]
        if ch == "[":
            j = smiles.find("]", i)
            if j < 0:
                raise SmilesError(f"unterminated bracket atom at position {i}")
            tokens.append(SmilesToken("atom", smiles[i : j + 1]))
            i = j + 1
        elif ch == "(":
            tokens.append(SmilesToken("open-branch", ch))
            i += 1
        elif ch == ")":
            tokens.append(SmilesToken("close-branch", ch))
            i += 1
        elif ch == ".":
            tokens.append(SmilesToken("dot", ch))
            i += 1
        elif ch in BOND_CHARS:
            tokens.append(SmilesToken("bond", ch))
            i += 1
        elif ch.isdigit():
            tokens.append(SmilesToken("ring-closure", ch))
            i += 1
        elif ch == "%":
            if i + 2 >= n or not smiles[i + 1 : i + 3].isdigit():
                raise SmilesError(f"malformed %nn ring closure at position {i}")
            tokens.append(SmilesToken("ring-closure", smiles[i : i + 3]))
            i += 3
        elif ch.isalpha() or ch == "*":
            # Two-letter organic-subset symbols first.
            if smiles[i : i + 2] in ("Cl", "Br"):
                tokens.append(SmilesToken("atom", smiles[i : i + 2]))
                i += 2
            else:
                tokens.append(SmilesToken("atom", ch))
                i += 1
        else:
            raise SmilesError(f"unexpected character {ch!r} at position {i}")
    return tokens


@dataclass
class _BracketSpec:
    element: str
    aromatic: bool
    charge: int
    explicit_h: int
    isotope: int | None
    stereo: str | None


def _parse_bracket(text: str) -> _BracketSpec:
    body = text[1:-1]
    if not body:
        raise SmilesError("empty bracket atom")
    i = 0
    isotope = None
    if body[i].isdigit():
        j = i
        while j < len(body) and body[j].isdigit():
            j += 1
        isotope = int(body[i:j])
        i = j
    if i >= len(body):
        raise SmilesError(f"bracket atom {text!r} has no element")
    if i + 1 < len(body) and body[i : i + 2] in KNOWN_ELEMENTS and body[i : i + 2][1].islower():
        element = body[i : i + 2]
        aromatic = False
        i += 2
    else:
        sym = body[i]
        if sym.islower():
            element = sym.upper()
            aromatic = True
            if element not in {"B", "C", "N", "O", "P", "S"} and body[i : i + 2] not in ("se", "as"):
                raise UnknownElement(f"aromatic symbol {sym!r} not supported")
            if body[i : i + 2] in ("se", "as"):
                element = body[i : i + 2].capitalize()
                i += 1
        else:
            element = sym
            aromatic = False
        i += 1
        if element not in KNOWN_ELEMENTS:
            raise UnknownElement(f"unknown element {element!r} in {text!r}")
    stereo = None
    if i < len(body) and body[i] == "@":
        if i + 1 < len(body) and body[i + 1] == "@":
            stereo = "@@"
            i += 2
        else:
            stereo = "@"
            i += 1
    explicit_h = 0
    if i < len(body) and body[i] == "H":
        i += 1
        if i < len(body) and body[i].isdigit():
            explicit_h = int(body[i])
            i += 1
        else:
            explicit_h = 1
    charge = 0
    while i < len(body) and body[i] in "+-":
        sign = 1 if body[i] == "+" else -1
        i += 1
        if i < len(body) and body[i].isdigit():
            charge += sign * int(body[i])
            i += 1
        else:
            charge += sign
    if i != len(body):
        raise SmilesError(f"trailing characters in bracket atom {text!r}")
    return _BracketSpec(element, aromatic, charge, explicit_h, isotope, stereo)


def parse_pattern(smiles: str) -> Molecule:
    """Parse a substructure pattern with relaxed validation.

    Patterns may be molecule fragments ("cc", "C(=O)Cl"): aromatic atoms need
    not close a ring, kekulization and valence checks are skipped, and
    unspecified bonds between aromatic atoms are aromatic regardless of ring
    membership.
    """
    mol, explicit_single = _build_graph(smiles)
    mol.finalize_adjacency()
    mol.rings = sssr(len(mol.atoms), mol.bonds)
    for ring in mol.rings:
        for idx in ring:
            mol.atoms[idx].in_ring = True
    for bond in mol.bonds:
        key = (min(bond.a, bond.b), max(bond.a, bond.b))
        if (
            key not in explicit_single
            and mol.atoms[bond.a].aromatic
            and mol.atoms[bond.b].aromatic
        ):
            bond.aromatic = True
    return mol


def parse_smiles(smiles: str) -> Molecule:
    """Parse a SMILES string into a validated Molecule.

    Raises EmptyInput, UnbalancedBranch, UnclosedRing, UnknownElement,
    ValenceError or KekulizationError on malformed input.
    """
    mol, explicit_single = _build_graph(smiles)
    _finalize(mol, explicit_single)
    return mol


def _build_graph(smiles: str) -> tuple[Molecule, set[tuple[int, int]]]:
    if not smiles or not smiles.strip():
        raise EmptyInput("empty SMILES string")
    smiles = smiles.strip()
    tokens = tokenize(smiles)

    mol = Molecule()
    # (bond order or None, aromatic-candidate flag, stereo) pending before next atom
    pending_bond: tuple[int | None, str | None] | None = None
    prev_atom: int | None = None
    branch_stack: list[int | None] = []
    ring_table: dict[str, tuple[int, int | None, str | None]] = {}
    explicit_single: set[tuple[int, int]] = set()
    after_dot = False

    def add_bond(a: int, b: int, order: int | None, stereo: str | None) -> None:
        if a == b:
            raise SmilesError("self-bond")
        for bond in mol.bonds:
            if {bond.a, bond.b} == {a, b}:
                raise SmilesError(f"duplicate bond between atoms {a} and {b}")
        if order is None:
            # Unspecified: aromatic when both ends aromatic and the bond turns
            # out to lie in a ring; resolved after ring perception.
            mol.bonds.append(Bond(a, b, 1, stereo=stereo))
        else:
            mol.bonds.append(Bond(a, b, order, stereo=stereo))
            explicit_single.add((min(a, b), max(a, b)))

    for token in tokens:
        if token.kind == "atom":
            atom = _make_atom(token.text)
            mol.atoms.append(atom)
            idx = len(mol.atoms) - 1
            if prev_atom is not None and not after_dot:
                order, stereo = pending_bond if pending_bond else (None, None)
                add_bond(prev_atom, idx, order, stereo)
            pending_bond = None
            prev_atom = idx
            after_dot = False
        elif token.kind == "bond":
            order = BOND_CHARS[token.text]
            stereo = token.text if token.text in "/\\" else None
            if order == -1:
                pending_bond = (None, None)  # ':' aromatic bond, resolved later
            else:
                pending_bond = (order, stereo)
        elif token.kind == "open-branch":
            if prev_atom is None:
                raise UnbalancedBranch("branch with no preceding atom")
            branch_stack.append(prev_atom)
        elif token.kind == "close-branch":
            if not branch_stack:
                raise UnbalancedBranch("unmatched ')'")
            prev_atom = branch_stack.pop()
        elif token.kind == "ring-closure":
            if prev_atom is None:
                raise UnclosedRing("ring closure before any atom")
            key = token.text.lstrip("%")
            order, stereo = pending_bond if pending_bond else (None, None)
            pending_bond = None
            if key in ring_table:
                other, open_order, open_stereo = ring_table.pop(key)
                final = order if order is not None else open_order
                add_bond(other, prev_atom, final, stereo or open_stereo)
            else:
                ring_table[key] = (prev_atom, order, stereo)
        elif token.kind == "dot":
            after_dot = True
            pending_bond = None

    if branch_stack:
        raise UnbalancedBranch("unmatched '('")
    if ring_table:
        raise UnclosedRing(f"dangling ring closure digit(s): {sorted(ring_table)}")
    if pending_bond is not None:
        raise SmilesError("trailing bond symbol")
    if not mol.atoms:
        raise EmptyInput("no atoms in SMILES string")
    return mol, explicit_single


def _make_atom(text: str) -> Atom:
    if text.startswith("["):
        spec = _parse_bracket(text)
        return Atom(
            element=spec.element,
            charge=spec.charge,
            hcount=spec.explicit_h,
            aromatic=spec.aromatic,
            explicit_h=spec.explicit_h,
            bracket=True,
            stereo=spec.stereo,
            isotope=spec.isotope,
        )
    if text in ORGANIC_SUBSET:
        return Atom(element=text)
    if text in AROMATIC_ORGANIC:
        return Atom(element=text.upper(), aromatic=True)
    raise UnknownElement(f"unknown atom symbol {text!r}")


def _finalize(mol: Molecule, explicit_single: set[tuple[int, int]]) -> None:
    mol.finalize_adjacency()
    mol.rings = sssr(len(mol.atoms), mol.bonds)
    ring_bonds: set[tuple[int, int]] = set()
    for ring in mol.rings:
        for i in range(len(ring)):
            a, b = ring[i], ring[(i + 1) % len(ring)]
            ring_bonds.add((min(a, b), max(a, b)))
    for atom in mol.atoms:
        atom.in_ring = False
    for ring in mol.rings:
        for idx in ring:
            mol.atoms[idx].in_ring = True

    # Input-declared aromatic atoms must sit in rings.
    for idx, atom in enumerate(mol.atoms):
        if atom.aromatic and not atom.in_ring:
            raise KekulizationError(f"aromatic atom {idx} is not in a ring")

    # Mark aromatic bonds from lowercase input: unspecified ring bonds whose
    # ends are both aromatic.
    for bond in mol.bonds:
        key = (min(bond.a, bond.b), max(bond.a, bond.b))
        if (
            key in ring_bonds
            and key not in explicit_single
            and mol.atoms[bond.a].aromatic
            and mol.atoms[bond.b].aromatic
        ):
            bond.aromatic = True

    _kekulize(mol)
    _fill_implicit_h(mol)
    _perceive_aromaticity(mol, ring_bonds)
    mol.check_valences()


def _needs_ring_double(mol: Molecule, idx: int) -> bool:
    """Whether an input-aromatic atom must carry one double bond in the
    alternating assignment (as opposed to contributing a lone pair)."""
    atom = mol.atoms[idx]
    if any(b.order == 2 and not b.aromatic for _, b in mol.neighbors(idx)):
        return False  # exocyclic double bond takes the slot
    sigma = mol.degree(idx) + (atom.explicit_h or 0)
    if atom.element == "C":
        return atom.charge >= 0
    if atom.element in ("N", "P"):
        if atom.charge > 0:
            return True   # pyridinium-type
        if atom.charge < 0:
            return False
        # Bare aromatic N never gains implicit H (pyrrole is written [nH]),
        # so three sigma partners mark the lone-pair donor type.
        return sigma < 3
    if atom.element in ("O", "S", "Se"):
        return False
    return False


def _kekulize(mol: Molecule) -> None:
    """Assign alternating orders to aromatic bonds via backtracking matching."""
    arom_bonds = [bi for bi, b in enumerate(mol.bonds) if b.aromatic]
    if not arom_bonds:
        return
    need = {
        idx
        for idx in range(len(mol.atoms))
        if mol.atoms[idx].aromatic and _needs_ring_double(mol, idx)
    }
    # Only atoms already double-bonded through a written aromatic-ring double
    # are excluded above; now match the rest pairwise along aromatic bonds.
    cand: dict[int, list[int]] = {idx: [] for idx in need}
    for bi in arom_bonds:
        bond = mol.bonds[bi]
        if bond.a in need and bond.b in need:
            cand[bond.a].append(bi)
            cand[bond.b].append(bi)

    matched: dict[int, int] = {}

    def backtrack(remaining: list[int]) -> bool:
        if not remaining:
            return True
        remaining = sorted(remaining, key=lambda i: len([b for b in cand[i] if _free(b)]))
        atom = remaining[0]
        options = [b for b in cand[atom] if _free(b)]
        if not options:
            return False
        for bi in options:
            bond = mol.bonds[bi]
            other = bond.other(atom)
            matched[atom] = bi
            matched[other] = bi
            rest = [i for i in remaining if i not in (atom, other)]
            if backtrack(rest):
                return True
            del matched[atom]
            del matched[other]
        return False

    def _free(bi: int) -> bool:
        bond = mol.bonds[bi]
        return bond.a not in matched and bond.b not in matched

    if not backtrack(sorted(need)):
        raise KekulizationError("no alternating bond assignment for aromatic system")
    chosen = set(matched.values())
    for bi in arom_bonds:
        mol.bonds[bi].order = 2 if bi in chosen else 1


def _fill_implicit_h(mol: Molecule) -> None:
    for idx, atom in enumerate(mol.atoms):
        if atom.bracket:
            continue  # bracket atoms carry exactly their written hydrogens
        occupied = mol.bond_order_sum(idx) - atom.charge
        target = smallest_allowed_valence(atom.element, max(occupied, 0))
        if target is None:
            raise ValenceError(
                f"atom {idx} ({atom.element}) bond order sum {occupied} exceeds "
                f"all allowed valences"
            )
        atom.hcount = target - max(occupied, 0)


def _perceive_aromaticity(mol: Molecule, ring_bonds: set[tuple[int, int]]) -> None:
    """Mark 4n+2 rings of size 5-7 aromatic on Kekulé-form input."""
    changed = True
    while changed:
        changed = False
        for ring in mol.rings:
            if not 5 <= len(ring) <= 7:
                continue
            if all(mol.atoms[i].aromatic for i in ring):
                continue
            pi = _ring_pi_electrons(mol, ring)
            if pi is None or pi % 4 != 2:
                continue
            for i in ring:
                if not mol.atoms[i].aromatic:
                    mol.atoms[i].aromatic = True
                    changed = True
            for i in range(len(ring)):
                a, b = ring[i], ring[(i + 1) % len(ring)]
                bond = mol.bond_between(a, b)
                if bond is not None and not bond.aromatic:
                    bond.aromatic = True
                    changed = True


def _ring_pi_electrons(mol: Molecule, ring: list[int]) -> int | None:
    """Pi electrons contributed by each ring atom, or None if ineligible."""
    total = 0
    for idx in ring:
        atom = mol.atoms[idx]
        if atom.element not in ("C", "N", "O", "S", "P", "Se"):
            return None
        heavy = mol.degree(idx)
        if heavy + atom.hcount > 3:
            return None  # sp3 center breaks conjugation
        double_to_ring = False
        double_to_exo = False
        for nbr, bond in mol.neighbors(idx):
            if bond.order == 2:
                # Doubles to any ring atom count toward the pi system; this
                # covers fused-ring Kekule forms where the double bond sits in
                # the neighboring ring.
                if mol.atoms[nbr].in_ring:
                    double_to_ring = True
                else:
                    double_to_exo = True
            if bond.order == 3:
                return None
        if double_to_ring:
            total += 1
        elif double_to_exo:
            total += 0
        else:
            # Saturated ring member: heteroatoms donate a lone pair,
            # carbanions donate a pair, neutral carbons break aromaticity.
            if atom.element == "C":
                if atom.charge < 0:
                    total += 2
                elif atom.charge > 0:
                    total += 0
                else:
                    return None
            else:
                total += 2
    return total
