"""Wire messages and their one-byte type tags."""
from dataclasses import dataclass

from .codec import decode, encode
from .erasure import Fragment
from .types import EMPTY_AGG, AggregateSig, CertVector, PartialSig, TxBatch

PROPOSAL = 0x01
VOTE = 0x02
CALLHELP = 0x03
HELP = 0x04
PB_SEND = 0x05
PB_ACK = 0x06
LOCK_DIFFUSE = 0x07
ELECT_SHARE = 0x08
COMMIT_SHARE = 0x09
DECIDE_CERT = 0x0A
DECIDE_PULL = 0x0B

BROADCAST_TAGS = frozenset({PROPOSAL, VOTE, CALLHELP, HELP})
CONSENSUS_TAGS = frozenset({PB_SEND, PB_ACK, LOCK_DIFFUSE, ELECT_SHARE,
                            COMMIT_SHARE, DECIDE_CERT, DECIDE_PULL})


@dataclass(frozen=True)
class Proposal:
    TAG = PROPOSAL
    sender: int
    slot: int
    batch: TxBatch
    prev_digest: bytes = b""
    prev_cert: AggregateSig = EMPTY_AGG


@dataclass(frozen=True)
class Vote:
    TAG = VOTE
    voter: int
    target_sender: int
    slot: int
    share: PartialSig


@dataclass(frozen=True)
class CallHelp:
    TAG = CALLHELP
    sender: int
    slot: int
    cert: AggregateSig = EMPTY_AGG


@dataclass(frozen=True)
class Help:
    TAG = HELP
    sender: int
    slot: int
    root: bytes
    fragment: Fragment
    branch: tuple[bytes, ...]


@dataclass(frozen=True)
class Justification:
    """Why a view-v proposal is safe: the freshest leader lock the proposer
    saw (``key_view`` 0 means none) plus skip certificates for every later
    view up to v-1."""
    key_view: int = 0
    key_lock: AggregateSig = EMPTY_AGG
    skips: tuple[AggregateSig, ...] = ()


@dataclass(frozen=True)
class PbSend:
    """Stage 1 carries the proposal and its justification; stage 2 carries
    the stage-1 lock so that receivers can vouch for it."""
    TAG = PB_SEND
    epoch: int
    view: int
    stage: int
    value: CertVector
    just: Justification = Justification()
    lock: AggregateSig = EMPTY_AGG


@dataclass(frozen=True)
class PbAck:
    TAG = PB_ACK
    epoch: int
    view: int
    stage: int
    share: PartialSig


FINISH = 0
PREVOTE = 1


@dataclass(frozen=True)
class LockDiffuse:
    """FINISH announces the sender's own stage-2 lock; PREVOTE forwards the
    elected leader's stage-1 lock (with its value) or an empty hand."""
    TAG = LOCK_DIFFUSE
    epoch: int
    view: int
    kind: int
    origin: int
    value: CertVector | None = None
    lock: AggregateSig = EMPTY_AGG
    digest: bytes = b""


@dataclass(frozen=True)
class ElectShare:
    TAG = ELECT_SHARE
    epoch: int
    view: int
    share: PartialSig


@dataclass(frozen=True)
class CommitShare:
    TAG = COMMIT_SHARE
    epoch: int
    view: int
    yes: bool
    share: PartialSig
    value: CertVector | None = None
    lock: AggregateSig = EMPTY_AGG


@dataclass(frozen=True)
class DecideCert:
    TAG = DECIDE_CERT
    epoch: int
    view: int
    value: CertVector
    cert: AggregateSig


@dataclass(frozen=True)
class DecidePull:
    TAG = DECIDE_PULL
    epoch: int


BY_TAG = {cls.TAG: cls for cls in (Proposal, Vote, CallHelp, Help, PbSend, PbAck,
                                  LockDiffuse, ElectShare, CommitShare, DecideCert,
                                  DecidePull)}


def encode_msg(msg) -> tuple:
    return msg.TAG, encode(msg)


def decode_msg(tag: int, payload: bytes):
    cls = BY_TAG.get(tag)
    if cls is None:
        raise ValueError(f"unknown type tag {tag:#x}")
    return decode(cls, payload)
