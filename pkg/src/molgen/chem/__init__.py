"""SMILES parsing, canonicalization, scaffolds and substructure matching."""

from __future__ import annotations

import logging
from pathlib import Path

from .canon import canonical_ranks, canonical_smiles
from .graph import (
    ATOMIC_MASSES,
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
)
from .match import MODE_AROMATIC, MODE_ELEMENT, match_substructure
from .parser import SmilesToken, parse_pattern, parse_smiles, tokenize
from .scaffold import Scaffold, murcko_scaffold

log = logging.getLogger(__name__)

__all__ = [
    "ATOMIC_MASSES",
    "Atom",
    "Bond",
    "EmptyInput",
    "KekulizationError",
    "MODE_AROMATIC",
    "MODE_ELEMENT",
    "Molecule",
    "Scaffold",
    "SmilesError",
    "SmilesToken",
    "UnbalancedBranch",
    "UnclosedRing",
    "UnknownElement",
    "ValenceError",
    "canonical_ranks",
    "canonical_smiles",
    "match_substructure",
    "murcko_scaffold",
    "parse_pattern",
    "parse_smiles",
    "read_smiles_file",
    "tokenize",
]


def read_smiles_file(path: str | Path) -> list[tuple[str, str]]:
    """Read a SMILES file: one molecule per line, optional tab-separated id,
    '#' comment lines skipped. Returns (id, smiles) pairs; lines that fail to
    parse are logged and dropped rather than guessed at.
    """
    records: list[tuple[str, str]] = []
    skipped = 0
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            smiles = parts[0].strip()
            mol_id = parts[1].strip() if len(parts) > 1 else f"line{lineno}"
            try:
                parse_smiles(smiles)
            except SmilesError as exc:
                skipped += 1
                log.warning("%s:%d: skipping unparseable SMILES (%s)", path, lineno, exc)
                continue
            records.append((mol_id, smiles))
    if skipped:
        log.warning("%s: skipped %d unparseable line(s)", path, skipped)
    return records
