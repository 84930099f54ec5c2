"""(n-2f, n) systematic erasure coding and binary Merkle commitments."""
import hashlib
import struct
from dataclasses import dataclass

import zfec


class InsufficientFragments(ValueError):
    pass


class InconsistentLengths(ValueError):
    pass


@dataclass(frozen=True)
class Fragment:
    index: int
    payload: bytes


def ec_encode(data: bytes, cfg) -> list:
    """Split ``data`` into n fragments, any n-2f of which rebuild it.

    A 4-byte length header is prepended and the result zero-padded to a
    multiple of k before striping; fragments 1..k are the plain stripes.
    """
    k, n = cfg.coding_k, cfg.n
    framed = struct.pack(">I", len(data)) + data
    size = -(-len(framed) // k)
    framed += bytes(size * k - len(framed))
    stripes = [framed[i * size:(i + 1) * size] for i in range(k)]
    blocks = zfec.Encoder(k, n).encode(stripes)
    return [Fragment(i + 1, bytes(b)) for i, b in enumerate(blocks)]


def ec_decode(fragments, cfg) -> bytes:
    k, n = cfg.coding_k, cfg.n
    chosen = {}
    for fr in fragments:
        if 1 <= fr.index <= n:
            chosen.setdefault(fr.index, fr)
    if len(chosen) < k:
        raise InsufficientFragments(f"{len(chosen)} distinct fragments, need {k}")
    picked = [chosen[i] for i in sorted(chosen)[:k]]
    if len({len(fr.payload) for fr in picked}) != 1:
        raise InconsistentLengths("fragment payloads differ in length")
    stripes = zfec.Decoder(k, n).decode([fr.payload for fr in picked],
                                        [fr.index - 1 for fr in picked])
    framed = b"".join(stripes)
    size = struct.unpack_from(">I", framed)[0]
    if size > len(framed) - 4:
        raise InconsistentLengths("length header exceeds decoded data")
    return framed[4:4 + size]


def leaf_hash(leaf: bytes) -> bytes:
    return hashlib.sha256(b"\x00" + leaf).digest()


def node_hash(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(b"\x01" + left + right).digest()


def _levels(leaves):
    if not leaves:
        raise ValueError("empty tree")
    level = [leaf_hash(x) for x in leaves]
    levels = [level]
    while len(level) > 1:
        nxt = [node_hash(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
        levels.append(level)
    return levels


def merkle_root(leaves) -> bytes:
    return _levels(leaves)[-1][0]


def merkle_branch(leaves, i: int) -> tuple:
    """Authentication path for 1-based leaf ``i``."""
    if not 1 <= i <= len(leaves):
        raise IndexError(f"leaf {i} out of range")
    pos = i - 1
    path = []
    for level in _levels(leaves)[:-1]:
        sib = pos ^ 1
        if sib < len(level):
            path.append(level[sib])
        pos //= 2
    return tuple(path)


def merkle_tree(leaves):
    """Root and every branch from one pass."""
    levels = _levels(leaves)
    branches = []
    for i in range(len(leaves)):
        pos, path = i, []
        for level in levels[:-1]:
            if pos ^ 1 < len(level):
                path.append(level[pos ^ 1])
            pos //= 2
        branches.append(tuple(path))
    return levels[-1][0], branches


def merkle_verify(root: bytes, i: int, leaf: bytes, branch, width: int) -> bool:
    """Check leaf ``i`` of a ``width``-leaf tree against ``root``.

    The width fixes where promotions happen, so a branch of the wrong shape
    never verifies.
    """
    if not 1 <= i <= width:
        return False
    acc = leaf_hash(leaf)
    pos, size = i - 1, width
    it = iter(branch)
    while size > 1:
        sib = pos ^ 1
        if sib < size:
            s = next(it, None)
            if s is None:
                return False
            acc = node_hash(acc, s) if pos % 2 == 0 else node_hash(s, acc)
        pos //= 2
        size = (size + 1) // 2
    if next(it, None) is not None:
        return False
    return acc == root
