"""Deterministic test crypto provider.

Partial signatures are HMAC-SHA256 tags under a per-node key; every node
holds all keys as verification material, the adversary model being that a
corrupted node only ever uses its own key.  Aggregates are the sorted
concatenation of at least 2f+1 distinct-signer parts.  The election coin is
a PRF of the instance id under a shared secret, released once 2f+1 valid
coin shares are collected.
"""
import hashlib
import hmac
from dataclasses import dataclass

from .types import AggregateSig, PartialSig, ProtocolConfig


class InsufficientShares(ValueError):
    pass


class MixedTags(ValueError):
    pass


def _mac(key: bytes, msg: bytes) -> bytes:
    return hmac.digest(key, msg, "sha256")


@dataclass(frozen=True)
class KeyRegistry:
    n: int
    f: int
    sign_keys: tuple[bytes, ...]
    coin_keys: tuple[bytes, ...]
    coin_secret: bytes

    @property
    def quorum(self):
        return 2 * self.f + 1


@dataclass(frozen=True)
class KeyMaterial:
    node: int
    secret: bytes
    coin_key: bytes
    registry: KeyRegistry


def keygen(cfg: ProtocolConfig, seed=0) -> list:
    """Trusted dealer: derive every node's keys from one seed."""
    root = hashlib.sha256(b"dumbo-ng keygen" + str(seed).encode()).digest()

    def derive(label, i):
        return hashlib.sha256(root + label + i.to_bytes(4, "big")).digest()

    sign = tuple(derive(b"sign", i) for i in cfg.nodes())
    coin = tuple(derive(b"coin", i) for i in cfg.nodes())
    reg = KeyRegistry(cfg.n, cfg.f, sign, coin, derive(b"coin-master", 0))
    return [KeyMaterial(i, sign[i - 1], coin[i - 1], reg) for i in cfg.nodes()]


def share_sign(key: KeyMaterial, tag: bytes) -> PartialSig:
    if not tag:
        raise ValueError("empty tag")
    return PartialSig(key.node, tag, _mac(key.secret, tag))


def share_verify(reg: KeyRegistry, part: PartialSig) -> bool:
    if not 1 <= part.signer <= reg.n:
        return False
    return hmac.compare_digest(part.sig, _mac(reg.sign_keys[part.signer - 1], part.tag))


def combine(parts, cfg) -> AggregateSig:
    """Aggregate distinct-signer parts over one tag.

    Parts are assumed individually verified by the caller; duplicates of a
    signer count once.
    """
    parts = list(parts)
    tags = {p.tag for p in parts}
    if len(tags) > 1:
        raise MixedTags("parts cover different tags")
    by_signer = {}
    for p in parts:
        by_signer.setdefault(p.signer, p)
    if len(by_signer) < cfg.quorum:
        raise InsufficientShares(f"{len(by_signer)} distinct signers, need {cfg.quorum}")
    return AggregateSig(tuple(by_signer[s] for s in sorted(by_signer)))


def sig_verify(reg: KeyRegistry, tag: bytes, agg: AggregateSig) -> bool:
    seen = set()
    for p in agg.parts:
        if p.tag != tag or p.signer in seen or not share_verify(reg, p):
            return False
        seen.add(p.signer)
    return len(seen) >= reg.quorum


def coin_share(key: KeyMaterial, ident: bytes) -> PartialSig:
    tag = b"coin" + ident
    return PartialSig(key.node, tag, _mac(key.coin_key, tag))


def coin_share_verify(reg: KeyRegistry, ident: bytes, part: PartialSig) -> bool:
    if part.tag != b"coin" + ident or not 1 <= part.signer <= reg.n:
        return False
    return hmac.compare_digest(part.sig, _mac(reg.coin_keys[part.signer - 1], part.tag))


def elect_leader(reg: KeyRegistry, ident: bytes, shares) -> int:
    """Leader in [1, n] for ``ident`` given at least 2f+1 valid coin shares."""
    signers = {s.signer for s in shares if coin_share_verify(reg, ident, s)}
    if len(signers) < reg.quorum:
        raise InsufficientShares(f"{len(signers)} coin shares, need {reg.quorum}")
    coin = _mac(reg.coin_secret, b"elect" + ident)
    return int.from_bytes(coin, "big") % reg.n + 1
