import random

import pytest

from molgen.chem.graph import Atom, Bond, Molecule


def permute_molecule(mol: Molecule, rng: random.Random) -> Molecule:
    """Relabel atoms with a random permutation and shuffle bond order."""
    perm = list(range(mol.num_atoms))
    rng.shuffle(perm)
    inv = [0] * len(perm)
    for new_idx, old_idx in enumerate(perm):
        inv[old_idx] = new_idx
    new = Molecule()
    for old_idx in perm:
        a = mol.atoms[old_idx]
        new.atoms.append(
            Atom(a.element, a.charge, a.hcount, a.aromatic, a.in_ring,
                 a.explicit_h, a.bracket, a.stereo, a.isotope)
        )
    bonds = [Bond(inv[b.a], inv[b.b], b.order, b.aromatic, b.stereo) for b in mol.bonds]
    rng.shuffle(bonds)
    new.bonds = bonds
    new.finalize_adjacency()
    new.rings = [[inv[i] for i in ring] for ring in mol.rings]
    return new


@pytest.fixture(scope="session")
def small_corpus():
    from molgen.datasets import make_corpus

    return make_corpus(200, seed=20240601)
