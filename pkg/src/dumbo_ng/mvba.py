"""Validated agreement on one CertVector per epoch.

Each view runs a two-stage provable broadcast of every node's proposal.
Stage 1 yields a lock (2f+1 acks of validity); stage 2 re-broadcasts that
lock and yields a second lock proving f+1 honest nodes hold the first.
Once n-f second locks are seen a node releases its coin share; 2f+1
shares elect a leader.  Nodes then exchange the leader's stage-1 lock
(prevote) and cast a signed commit: yes with the lock, or skip.

* 2f+1 yes shares on one value decide it.
* A node leaving a view after n-f commits carries any yes lock it saw as
  its next proposal, or keeps a skip certificate (2f+1 skips) proving
  nothing was decided there.
* A proposal is accepted only with a lock from some view k plus skip
  certificates for every view after k, so a decided value is the only one
  any later view can lock.
"""
import struct
from collections import defaultdict

from . import crypto
from .messages import (FINISH, PREVOTE, CommitShare, DecideCert, ElectShare, Justification,
                       LockDiffuse, PbAck, PbSend)
from .types import EMPTY_AGG, CertVector, digest_value


def pb_tag(stage, epoch, view, sender, h):
    return b"pb" + struct.pack(">BQQQ", stage, epoch, view, sender) + h


def commit_tag(epoch, view, h):
    return b"commit" + struct.pack(">QQ", epoch, view) + h


def skip_tag(epoch, view):
    return b"skip" + struct.pack(">QQ", epoch, view)


def elect_id(epoch, view):
    return struct.pack(">QQ", epoch, view)


class CertCache:
    """Memo of broadcast certificates already verified."""

    LIMIT = 1 << 16

    def __init__(self, registry):
        self.registry = registry
        self._ok = set()

    def check(self, qc) -> bool:
        if qc.slot == 0:
            return qc.digest == b"" and not qc.agg
        key = (qc.sender, qc.slot, qc.digest, qc.agg)
        if key in self._ok:
            return True
        if not crypto.sig_verify(self.registry, qc.tag, qc.agg):
            return False
        if len(self._ok) >= self.LIMIT:
            self._ok.clear()
        self._ok.add(key)
        return True


def evaluate_Q(ordered, v: CertVector, registry, cfg, cache: CertCache | None = None) -> bool:
    """External validity of an epoch input against the ordered frontier."""
    if not isinstance(v, CertVector) or not v.well_formed(cfg.n):
        return False
    advanced = 0
    for e, floor in zip(v.entries, ordered):
        if e.slot < floor:
            return False
        if e.slot > floor:
            advanced += 1
    if advanced < cfg.n - cfg.f:
        return False
    cache = cache or CertCache(registry)
    return all(cache.check(e) for e in v.entries)


def verify_decision(registry, dc: DecideCert) -> bool:
    return crypto.sig_verify(registry, commit_tag(dc.epoch, dc.view, digest_value(dc.value)), dc.cert)


class _View:
    def __init__(self):
        self.my_value = None
        self.my_h = None
        self.acked1 = set()
        self.acked2 = set()
        self.locks1 = {}
        self.shares1 = {}
        self.shares2 = {}
        self.lock1 = None
        self.lock2 = None
        self.finished = set()
        self.abandoned = False
        self.elect_sent = False
        self.coin = {}
        self.leader = None
        self.early = []
        self.prevotes = {}
        self.commit_sent = False
        self.commits = {}
        self.yes = defaultdict(dict)
        self.no = {}
        self.done = False


class MVBA:
    """One epoch's agreement instance; a passive message handler."""

    FUTURE_CAP = 64

    def __init__(self, ctx, epoch, ordered, my_input, on_decide, validate, cache=None):
        self.ctx = ctx
        self.cfg = ctx.cfg
        self.epoch = epoch
        self.ordered = tuple(ordered)
        self.my_input = my_input
        self.on_decide = on_decide
        self.validate = validate
        self.cache = cache
        self.view = 0
        self.views = {}
        self.leaders = {}
        self.key = None
        self.skips = {}
        self.future = defaultdict(list)
        self.decision = None
        self._digests = {}
        self._skip_ok = set()

    # -- helpers ------------------------------------------------------
    def _h(self, value):
        hit = self._digests.get(id(value))
        if hit is None or hit[0] is not value:
            hit = (value, digest_value(value))
            self._digests[id(value)] = hit
        return hit[1]

    def _sign(self, tag):
        return crypto.share_sign(self.ctx.keys, tag)

    def _valid_share(self, src, share, tag):
        return share.signer == src and share.tag == tag and crypto.share_verify(self.ctx.registry, share)

    # -- lifecycle ------------------------------------------------------
    def start(self):
        self._enter(1)

    def _enter(self, v):
        self.view = v
        vs = self.views[v] = _View()
        if v == 1:
            value, just = self.my_input, Justification()
        elif self.key is not None:
            kv, value, lock = self.key
            just = Justification(kv, lock, tuple(self.skips[u] for u in range(kv + 1, v)))
        else:
            value = self.my_input
            just = Justification(0, EMPTY_AGG, tuple(self.skips[u] for u in range(1, v)))
        vs.my_value, vs.my_h = value, self._h(value)
        self.ctx.multicast(PbSend(self.epoch, v, 1, value, just))
        for src, msg in self.future.pop(v, []):
            if self.decision is None and self.view == v:
                self.handle(src, msg)

    def handle(self, src, msg):
        if self.decision is not None:
            return
        if isinstance(msg, DecideCert):
            if msg.epoch == self.epoch and verify_decision(self.ctx.registry, msg):
                self._decide(msg.value, msg.view, msg.cert)
            return
        v = msg.view
        if v > self.view:
            if v <= self.view + self.FUTURE_CAP and len(self.future[v]) < 16 * self.cfg.n:
                self.future[v].append((src, msg))
            return
        vs = self.views.get(v)
        if vs is None:
            return
        if isinstance(msg, CommitShare):
            self._on_commit(vs, src, msg)
        elif v < self.view:
            return
        elif isinstance(msg, PbSend):
            self._on_pb_send(vs, src, msg)
        elif isinstance(msg, PbAck):
            self._on_pb_ack(vs, src, msg)
        elif isinstance(msg, LockDiffuse):
            if msg.kind == FINISH:
                self._on_finish(vs, src, msg)
            elif msg.kind == PREVOTE:
                self._on_prevote(vs, src, msg)
        elif isinstance(msg, ElectShare):
            self._on_elect(vs, src, msg)

    # -- provable broadcast -------------------------------------------------
    def _justified(self, value, just, v):
        k = just.key_view
        if k >= v or len(just.skips) != v - 1 - k:
            return False
        if not self.validate(value):
            return False
        if k > 0:
            leader = self.leaders.get(k)
            if leader is None:
                return False
            tag = pb_tag(1, self.epoch, k, leader, self._h(value))
            if not crypto.sig_verify(self.ctx.registry, tag, just.key_lock):
                return False
        for u, cert in enumerate(just.skips, k + 1):
            if (u, cert) in self._skip_ok:
                continue
            if not crypto.sig_verify(self.ctx.registry, skip_tag(self.epoch, u), cert):
                return False
            self._skip_ok.add((u, cert))
        return True

    def _on_pb_send(self, vs, src, msg):
        v, h = msg.view, self._h(msg.value)
        if msg.stage == 1:
            if src in vs.acked1 or vs.abandoned or not self._justified(msg.value, msg.just, v):
                return
            vs.acked1.add(src)
            share = self._sign(pb_tag(1, self.epoch, v, src, h))
            self.ctx.send(src, PbAck(self.epoch, v, 1, share))
        elif msg.stage == 2:
            if src in vs.locks1:
                return
            if not crypto.sig_verify(self.ctx.registry, pb_tag(1, self.epoch, v, src, h), msg.lock):
                return
            vs.locks1[src] = (msg.value, msg.lock)
            if vs.leader == src:
                self._commit(vs)
            if src in vs.acked2 or vs.abandoned:
                return
            vs.acked2.add(src)
            share = self._sign(pb_tag(2, self.epoch, v, src, h))
            self.ctx.send(src, PbAck(self.epoch, v, 2, share))

    def _on_pb_ack(self, vs, src, msg):
        me, v = self.ctx.me, msg.view
        if msg.stage == 1 and vs.lock1 is None:
            if src in vs.shares1 or not self._valid_share(src, msg.share, pb_tag(1, self.epoch, v, me, vs.my_h)):
                return
            vs.shares1[src] = msg.share
            if len(vs.shares1) >= self.cfg.quorum:
                vs.lock1 = crypto.combine(vs.shares1.values(), self.cfg)
                self.ctx.multicast(PbSend(self.epoch, v, 2, vs.my_value, lock=vs.lock1))
        elif msg.stage == 2 and vs.lock1 is not None and vs.lock2 is None:
            if src in vs.shares2 or not self._valid_share(src, msg.share, pb_tag(2, self.epoch, v, me, vs.my_h)):
                return
            vs.shares2[src] = msg.share
            if len(vs.shares2) >= self.cfg.quorum:
                vs.lock2 = crypto.combine(vs.shares2.values(), self.cfg)
                self.ctx.multicast(LockDiffuse(self.epoch, v, FINISH, me, lock=vs.lock2, digest=vs.my_h))

    # -- election -----------------------------------------------------------
    def _on_finish(self, vs, src, msg):
        if msg.origin != src or src in vs.finished:
            return
        if not crypto.sig_verify(self.ctx.registry, pb_tag(2, self.epoch, msg.view, src, msg.digest), msg.lock):
            return
        vs.finished.add(src)
        if len(vs.finished) >= self.cfg.n - self.cfg.f and not vs.elect_sent:
            vs.elect_sent = vs.abandoned = True
            share = crypto.coin_share(self.ctx.keys, elect_id(self.epoch, msg.view))
            self.ctx.multicast(ElectShare(self.epoch, msg.view, share))

    def _on_elect(self, vs, src, msg):
        if vs.leader is not None or src in vs.coin or msg.share.signer != src:
            return
        ident = elect_id(self.epoch, msg.view)
        if not crypto.coin_share_verify(self.ctx.registry, ident, msg.share):
            return
        vs.coin[src] = msg.share
        if len(vs.coin) < self.cfg.quorum:
            return
        vs.leader = crypto.elect_leader(self.ctx.registry, ident, vs.coin.values())
        vs.abandoned = True
        self.leaders[msg.view] = vs.leader
        held = vs.locks1.get(vs.leader)
        if held is None:
            self.ctx.multicast(LockDiffuse(self.epoch, msg.view, PREVOTE, vs.leader))
        else:
            self.ctx.multicast(LockDiffuse(self.epoch, msg.view, PREVOTE, vs.leader, held[0], held[1]))
            self._commit(vs)
        early, vs.early = vs.early, []
        for s, m in early:
            self.handle(s, m)

    # -- prevote / commit ---------------------------------------------------
    def _leader_lock_ok(self, vs, view, value, lock):
        h = self._h(value)
        held = vs.locks1.get(vs.leader)
        if held is not None and held[1] == lock and self._h(held[0]) == h:
            return True
        if crypto.sig_verify(self.ctx.registry, pb_tag(1, self.epoch, view, vs.leader, h), lock):
            vs.locks1.setdefault(vs.leader, (value, lock))
            return True
        return False

    def _on_prevote(self, vs, src, msg):
        if vs.leader is None:
            vs.early.append((src, msg))
            return
        if src in vs.prevotes or msg.origin != vs.leader:
            return
        yes = msg.value is not None and self._leader_lock_ok(vs, msg.view, msg.value, msg.lock)
        vs.prevotes[src] = yes
        if yes or len(vs.prevotes) >= self.cfg.n - self.cfg.f:
            self._commit(vs)

    def _commit(self, vs):
        """Cast this view's single commit: yes if the leader's lock is held."""
        if vs.commit_sent or vs.leader is None:
            return
        v = self.view if vs is self.views.get(self.view) else None
        if v is None:
            return
        held = vs.locks1.get(vs.leader)
        if held is None and len(vs.prevotes) < self.cfg.n - self.cfg.f and not vs.done:
            return
        vs.commit_sent = True
        if held is not None:
            value, lock = held
            share = self._sign(commit_tag(self.epoch, v, self._h(value)))
            self.ctx.multicast(CommitShare(self.epoch, v, True, share, value, lock))
        else:
            share = self._sign(skip_tag(self.epoch, v))
            self.ctx.multicast(CommitShare(self.epoch, v, False, share))

    def _on_commit(self, vs, src, msg):
        if src in vs.commits:
            return
        if vs.leader is None:
            # later views need this view's leader to check carried locks
            vs.early.append((src, msg))
            return
        v = msg.view
        if msg.yes:
            if msg.value is None:
                return
            h = self._h(msg.value)
            if not self._valid_share(src, msg.share, commit_tag(self.epoch, v, h)):
                return
            if not self._leader_lock_ok(vs, v, msg.value, msg.lock):
                return
            vs.commits[src] = True
            vs.yes[h][src] = msg.share
            if len(vs.yes[h]) >= self.cfg.quorum:
                self._decide(msg.value, v, crypto.combine(vs.yes[h].values(), self.cfg))
                return
            self._commit(vs)
        else:
            if not self._valid_share(src, msg.share, skip_tag(self.epoch, v)):
                return
            vs.commits[src] = False
            vs.no[src] = msg.share
        if v == self.view and not vs.done and len(vs.commits) >= self.cfg.n - self.cfg.f:
            self._finish(vs, v)

    def _finish(self, vs, v):
        vs.done = True
        self._commit(vs)
        held = vs.locks1.get(vs.leader)
        if held is not None:
            self.key = (v, held[0], held[1])
        else:
            self.skips[v] = crypto.combine(vs.no.values(), self.cfg)
        self._enter(v + 1)

    def _decide(self, value, v, cert):
        if self.decision is not None:
            return
        self.decision = DecideCert(self.epoch, v, value, cert)
        for dst in self.cfg.nodes():
            if dst != self.ctx.me:
                self.ctx.send(dst, self.decision)
        self.on_decide(self.decision)

