"""Protocol vocabulary shared by every layer: configuration, batches,
certificates and blocks.  Node indices are 1-based."""
import hashlib
import struct
from dataclasses import dataclass, replace

from .codec import encode, encode_as

HASH_LEN = 32
EMPTY_DIGEST = b""
NO_TS = -1.0  # timestamp unknown (batch rebuilt from fragments)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    f: int
    batch_size: int = 1
    tx_size: int = 250
    lambda_note: str = "hmac-sha256"

    def __post_init__(self):
        if self.f < 1 or self.n < 3 * self.f + 1:
            raise ConfigError(f"need n >= 3f+1 with f >= 1, got n={self.n} f={self.f}")
        if self.batch_size < 1 or self.tx_size < 1:
            raise ConfigError("batch_size and tx_size must be positive")

    @property
    def quorum(self):
        return 2 * self.f + 1

    @property
    def coding_k(self):
        """Data fragments needed to rebuild a batch."""
        return self.n - 2 * self.f

    def nodes(self):
        return range(1, self.n + 1)

    def check_node(self, j):
        if not 1 <= j <= self.n:
            raise ConfigError(f"node index {j} outside [1, {self.n}]")
        return j


def H(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class PartialSig:
    signer: int
    tag: bytes
    sig: bytes


@dataclass(frozen=True)
class AggregateSig:
    parts: tuple[PartialSig, ...] = ()

    def signers(self):
        return [p.signer for p in self.parts]

    def __bool__(self):
        return bool(self.parts)


EMPTY_AGG = AggregateSig()


@dataclass(frozen=True)
class TxBatch:
    sender: int
    slot: int
    txs: tuple[bytes, ...]
    broadcast_ts: float = 0.0

    def content(self) -> bytes:
        """Canonical bytes of everything but the timestamp."""
        return encode_as(tuple[int, int, tuple[bytes, ...]], (self.sender, self.slot, self.txs))


def digest_batch(batch: TxBatch) -> bytes:
    return H(b"batch" + batch.content())


def vote_tag(sender: int, slot: int, digest: bytes) -> bytes:
    return struct.pack(">QQ", sender, slot) + digest


@dataclass(frozen=True)
class QuorumCert:
    sender: int
    slot: int
    digest: bytes = EMPTY_DIGEST
    agg: AggregateSig = EMPTY_AGG

    @classmethod
    def genesis(cls, sender):
        return cls(sender, 0)

    @property
    def tag(self):
        return vote_tag(self.sender, self.slot, self.digest)


@dataclass(frozen=True)
class CertVector:
    entries: tuple[QuorumCert, ...]

    @classmethod
    def genesis(cls, n):
        return cls(tuple(QuorumCert.genesis(j) for j in range(1, n + 1)))

    def __getitem__(self, j) -> QuorumCert:
        return self.entries[j - 1]

    def __len__(self):
        return len(self.entries)

    def slots(self):
        return [e.slot for e in self.entries]

    def well_formed(self, n):
        return len(self.entries) == n and all(
            e.sender == j for j, e in enumerate(self.entries, 1))


def digest_value(v: CertVector) -> bytes:
    return H(b"certvec" + encode(v))


def batch_sort_key(b: TxBatch):
    return (b.sender, b.slot, b.content())


@dataclass(frozen=True)
class Block:
    epoch: int
    decided: CertVector
    batches: tuple[TxBatch, ...]

    def content(self) -> bytes:
        """Timestamp-free canonical bytes; equal at every honest node."""
        stripped = tuple(replace(b, broadcast_ts=0.0) for b in self.batches)
        return encode(Block(self.epoch, self.decided, stripped))

    def transactions(self):
        for b in self.batches:
            yield from b.txs


def filler_tx(sender: int, slot: int, pos: int, size: int) -> bytes:
    """Deterministic placeholder transaction for harness mode."""
    head = struct.pack(">IQI", sender, slot, pos)
    if size >= len(head):
        return head + bytes(size - len(head))
    return hashlib.blake2b(head, digest_size=max(size, 1)).digest()[:size]
