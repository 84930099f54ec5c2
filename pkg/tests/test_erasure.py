import hashlib
import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from dumbo_ng.erasure import (InsufficientFragments, ec_decode, ec_encode, leaf_hash, merkle_branch,
                              merkle_root, merkle_tree, merkle_verify)
from dumbo_ng.types import ProtocolConfig

CFG4 = ProtocolConfig(4, 1)
CFG10 = ProtocolConfig(10, 3)


def _oracle_root(leaves):
    """Independent recursive construction: split at the largest power of
    two that leaves a non-empty right part."""
    hashed = [hashlib.sha256(b"\x00" + x).digest() for x in leaves]

    def build(level):
        if len(level) == 1:
            return level[0]
        nxt = []
        for i in range(0, len(level), 2):
            if i + 1 < len(level):
                nxt.append(hashlib.sha256(b"\x01" + level[i] + level[i + 1]).digest())
            else:
                nxt.append(level[i])
        return build(nxt)

    return build(hashed)


def test_full_set_and_pairs_recover():
    data = b"hello fragments"
    frs = ec_encode(data, CFG4)
    assert [f.index for f in frs] == [1, 2, 3, 4]
    assert ec_decode(frs, CFG4) == data
    for pair in itertools.combinations(frs, 2):
        assert ec_decode(list(pair), CFG4) == data


def test_random_payloads_random_subsets():
    rng = random.Random(5)
    for _ in range(1000):
        data = rng.randbytes(rng.randrange(0, 300))
        frs = ec_encode(data, CFG10)
        assert ec_decode(rng.sample(frs, CFG10.coding_k), CFG10) == data


def test_too_few_fragments():
    frs = ec_encode(b"abc", CFG4)
    with pytest.raises(InsufficientFragments):
        ec_decode(frs[:1], CFG4)
    with pytest.raises(InsufficientFragments):
        ec_decode([frs[0], frs[0]], CFG4)


def test_distinct_payloads_give_distinct_fragments():
    rng = random.Random(6)
    for _ in range(500):
        a, b = rng.randbytes(40), rng.randbytes(40)
        if a != b:
            assert [f.payload for f in ec_encode(a, CFG4)] != [f.payload for f in ec_encode(b, CFG4)]


def test_mixed_encodings_do_not_return_either_payload():
    rng = random.Random(7)
    for _ in range(200):
        a, b = rng.randbytes(64), rng.randbytes(64)
        mixed = [ec_encode(a, CFG4)[0], ec_encode(b, CFG4)[3]]
        out = ec_decode(mixed, CFG4)
        assert hashlib.sha256(out).digest() not in (hashlib.sha256(a).digest(), hashlib.sha256(b).digest())


def test_fragment_size_is_one_kth():
    for size in (0, 1, 100, 10_000):
        frs = ec_encode(bytes(size), CFG10)
        assert all(len(f.payload) <= -(-size // CFG10.coding_k) + 4 for f in frs)


def test_single_leaf_tree():
    assert merkle_root([b"x"]) == leaf_hash(b"x")
    assert merkle_verify(merkle_root([b"x"]), 1, b"x", (), 1)


@pytest.mark.parametrize("width", [1, 2, 3, 4, 5, 7, 10, 16])
def test_root_matches_oracle_and_branches_verify(width):
    leaves = [bytes([i]) * (i + 1) for i in range(width)]
    root, branches = merkle_tree(leaves)
    assert root == merkle_root(leaves) == _oracle_root(leaves)
    for i, leaf in enumerate(leaves, 1):
        assert branches[i - 1] == merkle_branch(leaves, i)
        assert merkle_verify(root, i, leaf, branches[i - 1], width)


def test_frozen_root():
    assert merkle_root([b"a", b"b", b"c", b"d"]).hex() == \
        "33376a3bd63e9993708a84ddfe6c28ae58b83505dd1fed711bd924ec5a6239f0"


def test_branch_index_out_of_range():
    with pytest.raises(IndexError):
        merkle_branch([b"a", b"b"], 3)


def test_mutations_never_verify():
    rng = random.Random(8)
    leaves = [rng.randbytes(32) for _ in range(10)]
    root, branches = merkle_tree(leaves)
    for _ in range(10_000):
        i = rng.randrange(10)
        leaf, branch = bytearray(leaves[i]), [bytearray(b) for b in branches[i]]
        what = rng.randrange(3)
        if what == 0:
            leaf[rng.randrange(len(leaf))] ^= 1 << rng.randrange(8)
        elif what == 1 and branch:
            b = rng.choice(branch)
            b[rng.randrange(len(b))] ^= 1 << rng.randrange(8)
        else:
            j = rng.randrange(10)
            if j == i:
                j = (i + 1) % 10
            assert not merkle_verify(root, j + 1, leaves[i], branches[i], 10)
            continue
        assert not merkle_verify(root, i + 1, bytes(leaf), tuple(bytes(b) for b in branch), 10)


@settings(max_examples=100)
@given(st.binary(max_size=500), st.sampled_from([(4, 1), (7, 2), (10, 3)]), st.randoms(use_true_random=False))
def test_any_k_subset_reconstructs(data, nf, rnd):
    cfg = ProtocolConfig(*nf)
    frs = ec_encode(data, cfg)
    assert ec_decode(rnd.sample(frs, cfg.coding_k), cfg) == data
