"""Scalar molecular properties: weight, logP, QED, synthetic accessibility,
and the medicinal-chemistry pass/fail filter.

Contribution tables (logP, TPSA) are reduced to common pharmaceutical atom
types and ship as versioned data files; they provide self-consistent labels
for model training, not certified ADMET values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .chem import MODE_ELEMENT, Molecule, match_substructure, parse_pattern
from .fingerprint import atom_environments

_DATA_DIR = Path(__file__).parent / "data"

FILTER_ELEMENTS = {"C", "N", "S", "O", "F", "Cl", "Br", "H"}
MAX_FILTER_RING_SIZE = 8

QED_DESCRIPTORS = ("MW", "ALOGP", "HBA", "HBD", "PSA", "ROTB", "AROM", "ALERTS")


class UntypedAtom(ValueError):
    """Atom element outside the bundled contribution tables."""


class EmptyFragmentDb(ValueError):
    pass


def _load_table(name: str) -> dict[str, float]:
    table: dict[str, float] = {}
    with open(_DATA_DIR / name, encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            key, value = line.split("\t")
            table[key] = float(value)
    return table


_LOGP = _load_table("logp_contributions.tsv")
_TPSA = _load_table("tpsa_contributions.tsv")


def _load_qed_params() -> dict[str, tuple[float, ...]]:
    params: dict[str, tuple[float, ...]] = {}
    with open(_DATA_DIR / "qed_desirability.tsv", encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            params[parts[0]] = tuple(float(x) for x in parts[1:])
    return params


_QED_PARAMS = _load_qed_params()


def _load_alerts() -> list[tuple[str, Molecule]]:
    alerts = []
    with open(_DATA_DIR / "structural_alerts.tsv", encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            name, pattern = line.split("\t")
            alerts.append((name, parse_pattern(pattern)))
    return alerts


_ALERTS = _load_alerts()


@dataclass(frozen=True)
class PropertyVector:
    mol_wt: float
    logp: float
    qed: float
    sa: float
    passes_filters: bool


def mol_weight(mol: Molecule) -> float:
    """Sum of standard atomic masses, implicit hydrogens included."""
    return mol.heavy_formula_weight()


def _logp_type(mol: Molecule, idx: int) -> str:
    atom = mol.atoms[idx]
    el = atom.element
    nbr_elements = [mol.atoms[j].element for j, _ in mol.neighbors(idx)]
    has_het_nbr = any(e not in ("C", "H") for e in nbr_elements)
    has_multiple = any(b.order >= 2 and not b.aromatic for _, b in mol.neighbors(idx))
    if el == "C":
        if atom.aromatic:
            return "C.arom.het" if has_het_nbr else "C.arom"
        if has_multiple:
            return "C.unsat"
        return "C.sp3.het" if has_het_nbr else "C.sp3"
    if el == "N":
        if atom.charge != 0:
            return "N.charged"
        if atom.aromatic:
            return "N.arom"
        if has_multiple:
            return "N.unsat"
        for j, bond in mol.neighbors(idx):
            if bond.order == 1 and mol.atoms[j].element == "C":
                if any(
                    b.order == 2 and mol.atoms[k].element == "O"
                    for k, b in mol.neighbors(j)
                ):
                    return "N.amide"
        return "N.amine"
    if el == "O":
        if atom.charge < 0:
            return "O.charged"
        if atom.aromatic:
            return "O.arom"
        if has_multiple:
            return "O.carbonyl"
        return "O.hydroxyl" if atom.hcount >= 1 else "O.ether"
    if el == "S":
        if atom.aromatic:
            return "S.arom"
        if has_multiple:
            return "S.oxidized"
        return "S.aliphatic"
    if el in ("P", "F", "Cl", "Br", "I"):
        return {"P": "P.any", "F": "F.any", "Cl": "Cl.any", "Br": "Br.any", "I": "I.any"}[el]
    raise UntypedAtom(f"no logP contribution for element {el!r} (atom {idx})")


def crippen_logp(mol: Molecule) -> float:
    """Atomic-contribution logP over the bundled reduced type table."""
    terms = []
    for idx, atom in enumerate(mol.atoms):
        terms.append(_LOGP[_logp_type(mol, idx)])
        h_key = "H.on_carbon" if atom.element == "C" else "H.on_hetero"
        terms.extend([_LOGP[h_key]] * atom.hcount)
    # fsum is exact, so the result is independent of atom ordering
    return math.fsum(terms)


def _tpsa_type(mol: Molecule, idx: int) -> str | None:
    atom = mol.atoms[idx]
    el = atom.element
    if el not in ("N", "O", "S", "P"):
        return None
    doubles = sum(1 for _, b in mol.neighbors(idx) if b.order == 2 and not b.aromatic)
    triples = sum(1 for _, b in mol.neighbors(idx) if b.order == 3)
    h = atom.hcount
    if el == "N":
        if atom.charge > 0:
            if doubles >= 2:
                return "N.nitro"
            return {0: "N.pos_0H", 1: "N.pos_1H", 2: "N.pos_2H"}.get(h, "N.pos_3H")
        if atom.aromatic:
            if h >= 1:
                return "N.arom_1H"
            if mol.degree(idx) >= 3:
                return "N.arom_3conn"
            return "N.arom_0H"
        if triples:
            return "N.triple"
        if doubles:
            return "N.double_1H" if h >= 1 else "N.double_0H"
        return {0: "N.sp3_0H", 1: "N.sp3_1H"}.get(h, "N.sp3_2H")
    if el == "O":
        if atom.charge < 0:
            return "O.neg"
        if atom.aromatic:
            return "O.arom"
        if doubles:
            return "O.carbonyl"
        return "O.hydroxyl" if h >= 1 else "O.ether"
    if el == "S":
        if atom.aromatic:
            return "S.arom"
        if doubles >= 2:
            return "S.sulfone"
        if doubles == 1:
            exo_o = any(
                b.order == 2 and mol.atoms[j].element == "O" for j, b in mol.neighbors(idx)
            )
            return "S.sulfoxide" if exo_o else "S.double"
        return "S.thiol" if h >= 1 else "S.thioether"
    return "P.any"


def tpsa(mol: Molecule) -> float:
    terms = []
    for idx in range(mol.num_atoms):
        key = _tpsa_type(mol, idx)
        if key is not None:
            terms.append(_TPSA[key])
    return math.fsum(terms)


def hbond_donors(mol: Molecule) -> int:
    return sum(1 for a in mol.atoms if a.element in ("N", "O") and a.hcount >= 1)


def hbond_acceptors(mol: Molecule) -> int:
    return sum(1 for a in mol.atoms if a.element in ("N", "O"))


def rotatable_bonds(mol: Molecule) -> int:
    """Single, non-ring bonds between atoms of degree >= 2, amide C-N excluded."""
    ring_bonds = set()
    for ring in mol.rings:
        for i in range(len(ring)):
            a, b = ring[i], ring[(i + 1) % len(ring)]
            ring_bonds.add((min(a, b), max(a, b)))
    count = 0
    for bond in mol.bonds:
        if bond.order != 1 or bond.aromatic:
            continue
        if (min(bond.a, bond.b), max(bond.a, bond.b)) in ring_bonds:
            continue
        if mol.degree(bond.a) < 2 or mol.degree(bond.b) < 2:
            continue
        if _is_amide_cn(mol, bond.a, bond.b) or _is_amide_cn(mol, bond.b, bond.a):
            continue
        count += 1
    return count


def _is_amide_cn(mol: Molecule, c: int, n: int) -> bool:
    if mol.atoms[c].element != "C" or mol.atoms[n].element != "N":
        return False
    return any(
        b.order == 2 and mol.atoms[j].element == "O" for j, b in mol.neighbors(c)
    )


def aromatic_ring_count(mol: Molecule) -> int:
    return sum(1 for ring in mol.rings if all(mol.atoms[i].aromatic for i in ring))


def alert_matches(mol: Molecule) -> list[str]:
    """Names of bundled structural alerts present in the molecule."""
    return [name for name, pattern in _ALERTS if match_substructure(mol, pattern)]


def alert_count(mol: Molecule) -> int:
    return len(alert_matches(mol))


def qed_descriptors(mol: Molecule) -> dict[str, float]:
    return {
        "MW": mol_weight(mol),
        "ALOGP": crippen_logp(mol),
        "HBA": float(hbond_acceptors(mol)),
        "HBD": float(hbond_donors(mol)),
        "PSA": tpsa(mol),
        "ROTB": float(rotatable_bonds(mol)),
        "AROM": float(aromatic_ring_count(mol)),
        "ALERTS": float(alert_count(mol)),
    }


def desirability(descriptor: str, x: float) -> float:
    a, b, c, d, e, f, dmax = _QED_PARAMS[descriptor]
    ads = a + b / (1 + math.exp(-(x - c + d / 2) / e)) * (
        1 - 1 / (1 + math.exp(-(x - c - d / 2) / f))
    )
    return max(ads / dmax, 1e-9)


def qed_from_descriptors(descriptors: dict[str, float]) -> float:
    """Unweighted geometric mean of the eight desirability values."""
    log_sum = sum(math.log(desirability(name, descriptors[name])) for name in QED_DESCRIPTORS)
    return math.exp(log_sum / len(QED_DESCRIPTORS))


def qed(mol: Molecule) -> float:
    return qed_from_descriptors(qed_descriptors(mol))


# ---------------------------------------------------------------------------
# Synthetic accessibility

SA_FRAGMENT_RADIUS = 2
_SA_FRAG_WEIGHT = 0.9
_SA_RAW_MAX = 11.0


class FragmentScores:
    """Radius-2 environment log-frequencies fitted on a training corpus."""

    def __init__(self, counts: dict[int, int]):
        if not counts:
            raise EmptyFragmentDb("fragment database has no entries")
        self.counts = counts
        self.max_count = max(counts.values())

    @classmethod
    def fit(cls, molecules: list[Molecule]) -> "FragmentScores":
        counts: dict[int, int] = {}
        for mol in molecules:
            for env in atom_environments(mol, SA_FRAGMENT_RADIUS, ring_flag=False)[SA_FRAGMENT_RADIUS]:
                counts[env] = counts.get(env, 0) + 1
        return cls(counts)

    def rarity(self, env: int) -> float:
        """0 for the most frequent fragment, growing for rare/unseen ones."""
        count = self.counts.get(env, 0)
        return math.log2(self.max_count + 1) - math.log2(count + 1)

    def to_json_dict(self) -> dict:
        return {"version": 1, "radius": SA_FRAGMENT_RADIUS,
                "counts": {str(k): v for k, v in self.counts.items()}}

    @classmethod
    def from_json_dict(cls, payload: dict) -> "FragmentScores":
        return cls({int(k): v for k, v in payload["counts"].items()})


def sa_fragment_term(mol: Molecule, fragment_db: FragmentScores) -> float:
    """Mean radius-2 fragment rarity under the fitted database."""
    envs = atom_environments(mol, SA_FRAGMENT_RADIUS, ring_flag=False)[SA_FRAGMENT_RADIUS]
    return sum(fragment_db.rarity(e) for e in envs) / max(len(envs), 1)


def sa_score(mol: Molecule, fragment_db: FragmentScores) -> float:
    """Synthetic-accessibility heuristic in [1, 10]; lower is easier.

    Mean fragment rarity plus ring-complexity, macrocycle and size penalties,
    affinely mapped onto the [1, 10] scale.
    """
    frag_term = sa_fragment_term(mol, fragment_db)

    ring_penalty = math.log2(1 + len(mol.rings))
    fused_atoms = 0
    membership: dict[int, int] = {}
    for ring in mol.rings:
        for i in ring:
            membership[i] = membership.get(i, 0) + 1
    fused_atoms = sum(1 for c in membership.values() if c >= 2)
    fused_penalty = math.log2(1 + fused_atoms)
    macro_penalty = 1.0 if any(len(r) > 8 for r in mol.rings) else 0.0
    size_penalty = mol.num_atoms ** 1.005 - mol.num_atoms

    raw = (
        _SA_FRAG_WEIGHT * frag_term
        + ring_penalty
        + fused_penalty
        + macro_penalty
        + size_penalty
    )
    return 1.0 + 9.0 * min(max(raw / _SA_RAW_MAX, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Filters

def passes_filters(mol: Molecule) -> bool:
    """Allowed atom set, ring sizes <= 8, neutral net charge, no alerts."""
    if any(a.element not in FILTER_ELEMENTS for a in mol.atoms):
        return False
    if any(len(ring) > MAX_FILTER_RING_SIZE for ring in mol.rings):
        return False
    if mol.net_charge() != 0:
        return False
    if alert_matches(mol):
        return False
    return True


def property_vector(mol: Molecule, fragment_db: FragmentScores) -> PropertyVector:
    return PropertyVector(
        mol_wt=mol_weight(mol),
        logp=crippen_logp(mol),
        qed=qed(mol),
        sa=sa_score(mol, fragment_db),
        passes_filters=passes_filters(mol),
    )


def format_property_tsv(records: list[tuple[str, str, PropertyVector]]) -> str:
    """Deterministic 6-decimal TSV: id, smiles, mol_wt, logp, qed, sa, passes_filters."""
    lines = ["id\tsmiles\tmol_wt\tlogp\tqed\tsa\tpasses_filters"]
    for mol_id, smiles, props in records:
        lines.append(
            f"{mol_id}\t{smiles}\t{props.mol_wt:.6f}\t{props.logp:.6f}"
            f"\t{props.qed:.6f}\t{props.sa:.6f}\t{str(props.passes_filters).lower()}"
        )
    return "\n".join(lines) + "\n"
