"""Multi-shot certified broadcast: one sender per node, one receiver per
observed sender, and the write-once store of fixed batches."""
from dataclasses import dataclass

from . import crypto
from .messages import Proposal, Vote
from .types import EMPTY_DIGEST, QuorumCert, TxBatch, digest_batch, vote_tag


class ConflictingFix(AssertionError):
    """Two different batches were fixed for one (sender, slot)."""


class FixedTxStore:
    """``fixed-TX_j[s]``: write-once per (sender, slot).

    ``on_fix(j, s)`` fires after every fresh write.  An optional journal
    file receives one hex line per write.
    """

    def __init__(self, n, on_fix=None, journal=None):
        self.n = n
        self._batches = [dict() for _ in range(n + 1)]
        self._certs = [dict() for _ in range(n + 1)]
        self._contiguous = [0] * (n + 1)
        self.on_fix = on_fix
        self.journal = journal

    def get(self, j, s):
        return self._batches[j].get(s)

    def has(self, j, s):
        return s in self._batches[j]

    def cert(self, j, s):
        return self._certs[j].get(s)

    def contiguous(self, j):
        """Largest s with slots 1..s all fixed."""
        return self._contiguous[j]

    def fix(self, j, s, batch: TxBatch, cert: QuorumCert | None = None) -> bool:
        old = self._batches[j].get(s)
        if old is not None:
            if old.content() != batch.content():
                raise ConflictingFix(f"sender {j} slot {s}")
            if cert is not None and s not in self._certs[j]:
                self._certs[j][s] = cert
            return False
        self._batches[j][s] = batch
        if cert is not None:
            self._certs[j][s] = cert
        c = self._contiguous[j]
        while c + 1 in self._batches[j]:
            c += 1
        self._contiguous[j] = c
        if self.journal is not None:
            self.journal.write(f"{j} {s} {batch.content().hex()}\n")
        if self.on_fix is not None:
            self.on_fix(j, s)
        return True

    def batches(self, j):
        return dict(self._batches[j])


@dataclass(frozen=True)
class PullRequest:
    target_sender: int
    up_to_slot: int
    digest: bytes
    cert: object


class Sender:
    """Drafts, proposes and certifies this node's slots one at a time.

    ``draft(slot)`` returns the batch for a slot.  ``gate(slot)`` may hold
    back a proposal; the owner calls :meth:`resume` when it may open.
    """

    def __init__(self, ctx, draft, gate=None, on_cert=None, equivocate=False):
        self.ctx = ctx
        self.draft = draft
        self.gate = gate
        self.on_cert = on_cert
        self.equivocate = equivocate
        self.slot = 0
        self.waiting = False
        self.pending = {}
        self.last_cert = QuorumCert.genesis(ctx.me)
        self.certified = 0

    def start(self):
        self.slot = 1
        self._propose()

    def resume(self):
        if self.waiting and self.slot >= 1:
            self._propose()

    def _propose(self):
        if self.gate is not None and not self.gate(self.slot):
            self.waiting = True
            return
        self.waiting = False
        ctx, s, prev = self.ctx, self.slot, self.last_cert
        batch = self.draft(s)
        self.pending = {digest_batch(batch): {}}
        if not self.equivocate:
            ctx.multicast(Proposal(ctx.me, s, batch, prev.digest, prev.agg))
            return
        # conflicting batches to the two halves of the committee
        alt = TxBatch(batch.sender, s, tuple(bytes([t[0] ^ 0xFF]) + t[1:] for t in batch.txs),
                      batch.broadcast_ts)
        self.pending[digest_batch(alt)] = {}
        half = ctx.cfg.n // 2
        for dst in ctx.cfg.nodes():
            b = batch if dst <= half else alt
            ctx.send(dst, Proposal(ctx.me, s, b, prev.digest, prev.agg))

    def on_vote(self, vote: Vote):
        if vote.slot != self.slot or vote.share.signer != vote.voter:
            return
        share = vote.share
        for digest, shares in self.pending.items():
            if share.tag == vote_tag(self.ctx.me, self.slot, digest):
                break
        else:
            return
        if share.signer in shares or not crypto.share_verify(self.ctx.registry, share):
            return
        shares[share.signer] = share
        if len(shares) < self.ctx.cfg.quorum:
            return
        agg = crypto.combine(shares.values(), self.ctx.cfg)
        self.last_cert = QuorumCert(self.ctx.me, self.slot, digest, agg)
        self.certified = self.slot
        self.pending = {}
        self.slot += 1
        if self.on_cert is not None:
            self.on_cert(self.last_cert)
        self._propose()


class Receiver:
    """Tracks sender ``j``: votes on its slots in order, fixes the previous
    slot when the next one arrives, and asks for retrieval on gaps."""

    BACKLOG_CAP = 8

    def __init__(self, ctx, j, store: FixedTxStore, view, pull, on_view=None):
        self.ctx = ctx
        self.j = j
        self.store = store
        self.view = view
        self.pull = pull
        self.on_view = on_view
        self.expected = 1
        self.held = None
        self.voted_digest = None
        self.paused = None
        self.backlog = []
        self.equivocations = 0
        self.rejected = 0

    def _well_formed(self, msg: Proposal):
        b, cfg = msg.batch, self.ctx.cfg
        if b.sender != self.j or b.slot != msg.slot or msg.slot < 1:
            return False
        if len(b.txs) != cfg.batch_size or any(len(t) != cfg.tx_size for t in b.txs):
            return False
        if msg.slot == 1:
            return msg.prev_digest == EMPTY_DIGEST and not msg.prev_cert
        return True

    def on_proposal(self, msg: Proposal):
        if not self._well_formed(msg):
            self.rejected += 1
            return
        if self.paused is not None:
            if msg.slot > self.paused[0].slot and len(self.backlog) < self.BACKLOG_CAP:
                self.backlog.append(msg)
            return
        s = msg.slot
        if s < self.expected:
            if (s == self.expected - 1 and self.voted_digest is not None
                    and digest_batch(msg.batch) != self.voted_digest):
                self.equivocations += 1
            return
        if s == 1:
            self._accept(msg, None)
            return
        qc = QuorumCert(self.j, s - 1, msg.prev_digest, msg.prev_cert)
        if not self.ctx.verify_qc(qc):
            self.rejected += 1
            return
        held = self.held
        if held is not None and held.slot == s - 1 and not self.store.has(self.j, s - 1):
            if digest_batch(held) == msg.prev_digest:
                self.store.fix(self.j, s - 1, held, qc)
        if self.store.contiguous(self.j) >= s - 1:
            self._accept(msg, qc)
        else:
            self.paused = (msg, qc)
            self.pull(PullRequest(self.j, s - 1, msg.prev_digest, msg.prev_cert))

    def _accept(self, msg, qc):
        s = msg.slot
        if qc is not None and qc.slot > self.view[self.j - 1].slot:
            self._set_view(qc)
        if self.held is not None and self.held.slot < s:
            self.held = None
        if not self.store.has(self.j, s):
            self.held = msg.batch
        d = digest_batch(msg.batch)
        self.voted_digest = d
        self.expected = max(self.expected, s + 1)
        share = crypto.share_sign(self.ctx.keys, vote_tag(self.j, s, d))
        self.ctx.send(self.j, Vote(self.ctx.me, self.j, s, share))

    def _set_view(self, qc):
        self.view[self.j - 1] = qc
        if self.on_view is not None:
            self.on_view(self.j)

    def on_fixed(self, slot):
        if self.paused is None:
            return
        msg, qc = self.paused
        if self.store.contiguous(self.j) < qc.slot:
            return
        self.paused = None
        self._accept(msg, qc)
        backlog, self.backlog = self.backlog, []
        for m in backlog:
            self.on_proposal(m)

    def sync(self, qc: QuorumCert):
        """Adopt a decided certificate whose prefix is already fixed."""
        if qc.slot <= self.view[self.j - 1].slot or self.store.contiguous(self.j) < qc.slot:
            return
        self._set_view(qc)
        if self.held is not None and self.held.slot <= qc.slot:
            self.held = None
        if self.paused is None:
            self.expected = max(self.expected, qc.slot + 1)
        else:
            self.on_fixed(qc.slot)
