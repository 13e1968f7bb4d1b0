import itertools
import random

import pytest

from molgen.chem import parse_smiles
from molgen.fingerprint import (
    EmptyReference,
    Fingerprint,
    FingerprintIndex,
    KindMismatch,
    build_index,
    circular_fingerprint,
    key_fingerprint,
    load_key_definitions,
    novelty,
    tanimoto,
)

from conftest import permute_molecule


class TestCircular:
    def test_ethanol_radius0_three_environments(self):
        # CH3 carbon, CH2 carbon and OH oxygen have distinct invariants.
        fp = circular_fingerprint(parse_smiles("CCO"), radius=0, nbits=2048)
        assert fp.popcount() == 3

    def test_determinism(self):
        mol = parse_smiles("C")
        a = circular_fingerprint(mol, radius=2)
        b = circular_fingerprint(mol, radius=2)
        assert a.bits == b.bits

    def test_benzene_radius1_two_environments(self):
        # All atoms are symmetric at radius 0 and radius 1.
        fp = circular_fingerprint(parse_smiles("c1ccccc1"), radius=1, nbits=2048)
        assert fp.popcount() == 2

    def test_relabeling_invariance(self, small_corpus):
        rng = random.Random(4)
        for smiles in small_corpus[:40]:
            mol = parse_smiles(smiles)
            ref = circular_fingerprint(mol, radius=2)
            for _ in range(5):
                permuted = permute_molecule(mol, rng)
                assert circular_fingerprint(permuted, radius=2).bits == ref.bits

    def test_parameter_validation(self):
        mol = parse_smiles("CC")
        with pytest.raises(ValueError):
            circular_fingerprint(mol, radius=5)
        with pytest.raises(ValueError):
            circular_fingerprint(mol, radius=2, nbits=100)


class TestKeys:
    def test_key_list_is_120(self):
        assert len(load_key_definitions()) == 120

    def test_ethanol_keys(self):
        fp = key_fingerprint(parse_smiles("CCO"))
        bits = set(fp.bit_list())
        assert 2 in bits      # oxygen present
        assert 1 not in bits  # no nitrogen

    def test_benzene_aromatic_ring_key(self):
        fp = key_fingerprint(parse_smiles("c1ccccc1"))
        bits = set(fp.bit_list())
        assert 19 in bits  # aromatic ring
        assert 15 in bits  # six-membered ring
        assert 84 in bits  # benzene pattern

    def test_self_identity(self, small_corpus):
        for smiles in small_corpus[:20]:
            mol = parse_smiles(smiles)
            assert key_fingerprint(mol).bits == key_fingerprint(mol).bits


class TestTanimoto:
    def test_identical_nonempty(self):
        fp = key_fingerprint(parse_smiles("CCO"))
        assert tanimoto(fp, fp) == 1.0

    def test_disjoint(self):
        a = Fingerprint(0b0011, 120, "keys")
        b = Fingerprint(0b1100, 120, "keys")
        assert tanimoto(a, b) == 0.0

    def test_partial_overlap(self):
        a = Fingerprint(0b0110, 120, "keys")  # bits {1,2}
        b = Fingerprint(0b1100, 120, "keys")  # bits {2,3}
        assert tanimoto(a, b) == pytest.approx(1 / 3)

    def test_both_empty_convention(self):
        a = Fingerprint(0, 120, "keys")
        assert tanimoto(a, a) == 1.0

    def test_kind_mismatch(self):
        a = Fingerprint(1, 120, "keys")
        b = Fingerprint(1, 2048, "circular(2)")
        with pytest.raises(KindMismatch):
            tanimoto(a, b)

    def test_symmetry_and_bounds(self, small_corpus):
        fps = [key_fingerprint(parse_smiles(s)) for s in small_corpus[:30]]
        for a, b in itertools.combinations(fps, 2):
            sab = tanimoto(a, b)
            assert sab == tanimoto(b, a)
            assert 0.0 <= sab <= 1.0


class TestNovelty:
    def test_member_has_zero_novelty(self, small_corpus):
        records = [(f"m{i}", parse_smiles(s)) for i, s in enumerate(small_corpus)]
        index = build_index(records)
        for i, smiles in enumerate(small_corpus):
            score = novelty(parse_smiles(smiles), index)
            assert score.value == 0.0

    def test_disjoint_reference(self):
        index = FingerprintIndex("keys", 120)
        index.add("ref", Fingerprint(0b111 << 100, 120, "keys"))
        mol = parse_smiles("CCO")
        fp = key_fingerprint(mol)
        assert fp.bits & (0b111 << 100) == 0
        assert novelty(mol, index).value == 1.0

    def test_max_similarity_three_entries(self):
        # Tanimotos of 0.2, 0.5, 0.4 against the query; max is 0.5.
        query = Fingerprint(0b1111111111, 120, "keys")  # 10 bits
        index = FingerprintIndex("keys", 120)
        index.add("a", Fingerprint(0b11 | (0b11111111 << 20), 120, "keys"))
        index.add("b", Fingerprint(0b11111, 120, "keys"))
        index.add("c", Fingerprint(0b1111 | (0b11 << 30), 120, "keys"))
        sims = [tanimoto(query, fp) for fp in index.fingerprints]
        assert sims == [pytest.approx(2 / 18), pytest.approx(0.5), pytest.approx(4 / 12)]
        nearest_id, sim = index.nearest(query)
        assert nearest_id == "b" and sim == 0.5

    def test_empty_reference(self):
        index = FingerprintIndex("keys", 120)
        with pytest.raises(EmptyReference):
            novelty(parse_smiles("C"), index)

    def test_nearest_equals_brute_force(self, small_corpus):
        records = [(f"m{i}", parse_smiles(s)) for i, s in enumerate(small_corpus)]
        index = build_index(records)
        for smiles in small_corpus[::20]:
            fp = key_fingerprint(parse_smiles(smiles))
            best = max(
                zip(index.ids, index.fingerprints),
                key=lambda pair: (tanimoto(fp, pair[1]), [-ord(c) for c in pair[0]]),
            )
            nearest_id, sim = index.nearest(fp)
            assert sim == tanimoto(fp, best[1])


class TestIndexRoundTrip:
    def test_save_load_bit_exact(self, tmp_path, small_corpus):
        records = [(f"m{i}", parse_smiles(s)) for i, s in enumerate(small_corpus[:50])]
        index = build_index(records)
        path = tmp_path / "ref.fpix"
        index.save(path)
        loaded = FingerprintIndex.load(path)
        assert loaded.ids == index.ids
        assert [f.bits for f in loaded.fingerprints] == [f.bits for f in index.fingerprints]
        # saving again is byte-identical
        path2 = tmp_path / "ref2.fpix"
        loaded.save(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.fpix"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError):
            FingerprintIndex.load(path)
