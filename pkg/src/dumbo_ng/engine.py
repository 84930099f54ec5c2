"""A full node: n certified broadcasts running beside a sequence of
agreement epochs, plus block assembly and the test fault profiles."""
from collections import defaultdict
from dataclasses import dataclass

from .broadcast import FixedTxStore, PullRequest, Receiver, Sender
from .messages import (CallHelp, DecideCert, DecidePull, Help, Proposal, Vote, CONSENSUS_TAGS)
from .mvba import MVBA, CertCache, evaluate_Q, verify_decision
from .retrieval import CallHelpDaemon, HelpDaemon
from .types import Block, CertVector, QuorumCert, TxBatch, batch_sort_key, digest_batch, digest_value, filler_tx

HONEST = "honest"
CRASHED = "crashed"
MUTE_SENDER = "mute_sender"
CENSOR_VICTIM = "censor_victim"
EQUIVOCATOR = "equivocator"
MVBA_RACER = "mvba_racer"
BEHAVIORS = (HONEST, CRASHED, MUTE_SENDER, CENSOR_VICTIM, EQUIVOCATOR, MVBA_RACER)


@dataclass(frozen=True)
class FaultProfile:
    behavior: str = HONEST
    after_event: int = 0
    targets: tuple = ()

    def __post_init__(self):
        if self.behavior not in BEHAVIORS:
            raise ValueError(f"unknown behavior {self.behavior!r}")

    @property
    def byzantine(self):
        # censor victims are honest nodes the scheduler slows down
        return self.behavior not in (HONEST, CENSOR_VICTIM)


def epoch_trigger(view, ordered, cfg) -> bool:
    """Ready once n-f distinct senders advanced past the ordered frontier."""
    advanced = sum(1 for qc, o in zip(view, ordered) if qc.slot > o)
    return advanced >= cfg.n - cfg.f


def assemble_block(epoch, decision: CertVector, ordered, store: FixedTxStore) -> Block:
    """Deterministic block from a decision; every needed slot must be fixed."""
    batches = []
    for qc, floor in zip(decision.entries, ordered):
        for s in range(floor + 1, qc.slot + 1):
            b = store.get(qc.sender, s)
            if b is None:
                raise LookupError(f"slot {s} of sender {qc.sender} not fixed")
            batches.append(b)
    batches.sort(key=batch_sort_key)
    return Block(epoch, decision, tuple(batches))


class Node:
    """One protocol participant driven by ``deliver``.

    ``net`` must offer ``send(src, dst, msg)``, ``multicast(src, msg)`` and
    ``now()``.  ``mode`` is ``"ng"`` (broadcasts never wait on agreement) or
    ``"sequential"`` (the control, where a sender waits until its slots are
    ordered).
    """

    FUTURE_EPOCHS = 64
    FUTURE_MSGS = 4096
    REPLY_EPOCHS = 16

    def __init__(self, cfg, keys, net, fault=None, mode="ng", on_block=None):
        self.cfg = cfg
        self.keys = keys
        self.registry = keys.registry
        self.me = keys.node
        self.net = net
        self.fault = fault or FaultProfile()
        self.mode = mode
        self.on_block = on_block
        self.events = 0
        self.halted = False

        self.cache = CertCache(self.registry)
        self.store = FixedTxStore(cfg.n, on_fix=self._on_fix)
        self.view = [QuorumCert.genesis(j) for j in cfg.nodes()]
        self.ordered = [0] * cfg.n
        self.last_decided = CertVector.genesis(cfg.n)
        self.callhelp = CallHelpDaemon(self, self.store, self.view)
        self.receivers = {j: Receiver(self, j, self.store, self.view, self.callhelp.on_pull, self._on_view)
                          for j in cfg.nodes()}
        self.help = HelpDaemon(self, self.store, lambda j: self.receivers[j].held)
        gate = self._sequential_gate if mode == "sequential" else None
        self.sender = Sender(self, self._draft, gate=gate, equivocate=self.fault.behavior == EQUIVOCATOR)

        self.buffer = {}
        self._inflight = set()
        self.epoch = 1
        self.mvba = None
        self.decision = None
        self.decisions = {}
        self.future_decisions = {}
        self.future = defaultdict(list)
        self._future_count = 0
        self.early = []
        self._replied = set()
        self._pulled = set()
        self.log = []
        self.inputs = {}
        self.epoch_stats = []
        self.view_times = {}
        self.watch = ()

    # -- ctx interface used by the components ---------------------------
    def send(self, dst, msg):
        if not self.halted:
            self.net.send(self.me, dst, msg)

    def multicast(self, msg):
        if not self.halted:
            self.net.multicast(self.me, msg)

    def verify_qc(self, qc):
        return self.cache.check(qc)

    def now(self):
        return self.net.now()

    # -- lifecycle ------------------------------------------------------
    def start(self):
        if self.fault.behavior != MUTE_SENDER:
            self.sender.start()

    def submit(self, tx: bytes):
        self.buffer.setdefault(tx, None)

    def _draft(self, slot):
        cfg, txs = self.cfg, []
        for tx in self.buffer:
            if len(txs) == cfg.batch_size:
                break
            if tx not in self._inflight and len(tx) == cfg.tx_size:
                txs.append(tx)
        self._inflight.update(txs)
        # harness load: top up with unique filler transactions
        for pos in range(len(txs), cfg.batch_size):
            txs.append(filler_tx(self.me, slot, pos, cfg.tx_size))
        return TxBatch(self.me, slot, tuple(txs), self.now())

    def _sequential_gate(self, slot):
        return self.ordered[self.me - 1] >= slot - 2

    # -- message dispatch ---------------------------------------------
    def deliver(self, src, msg):
        if self.halted:
            return
        self.events += 1
        if self.fault.behavior == CRASHED and self.events > self.fault.after_event:
            self.halted = True
            return
        if msg.TAG in CONSENSUS_TAGS:
            self._consensus(src, msg)
        elif isinstance(msg, Proposal):
            r = self.receivers.get(msg.sender)
            if r is not None and msg.sender == src:
                r.on_proposal(msg)
        elif isinstance(msg, Vote):
            if msg.voter == src and msg.target_sender == self.me:
                self.sender.on_vote(msg)
        elif isinstance(msg, CallHelp):
            self.help.on_callhelp(src, msg)
        elif isinstance(msg, Help):
            self.callhelp.on_help(src, msg)

    def _consensus(self, src, msg):
        if isinstance(msg, DecidePull):
            self._reply_decisions(src, msg.epoch)
            return
        e = msg.epoch
        if e < self.epoch:
            if (src, e) not in self._replied and e in self.decisions and src != self.me:
                self._replied.add((src, e))
                self.send(src, self.decisions[e])
            return
        if e > self.epoch:
            if isinstance(msg, DecideCert):
                if e not in self.future_decisions and verify_decision(self.registry, msg):
                    self.future_decisions[e] = msg
                    if (src, self.epoch) not in self._pulled:
                        self._pulled.add((src, self.epoch))
                        self.send(src, DecidePull(self.epoch))
            elif e <= self.epoch + self.FUTURE_EPOCHS and self._future_count < self.FUTURE_MSGS:
                self.future[e].append((src, msg))
                self._future_count += 1
            return
        if self.decision is not None:
            return
        if self.mvba is not None:
            self.mvba.handle(src, msg)
        elif isinstance(msg, DecideCert):
            if verify_decision(self.registry, msg):
                self._decided(msg)
        elif len(self.early) < self.FUTURE_MSGS:
            self.early.append((src, msg))

    def _reply_decisions(self, src, from_epoch):
        for e in range(from_epoch, min(self.epoch, from_epoch + self.REPLY_EPOCHS)):
            dc = self.decisions.get(e)
            if dc is not None and (src, e) not in self._replied:
                self._replied.add((src, e))
                self.send(src, dc)

    # -- broadcast side ---------------------------------------------------
    def _on_fix(self, j, s):
        self.receivers[j].on_fixed(s)
        if self.decision is not None:
            self._try_assemble()

    def _on_view(self, j):
        if j in self.watch:
            self.view_times.setdefault((j, self.view[j - 1].slot), self.now())
        self._poll()

    # -- epoch loop -----------------------------------------------------
    def _poll(self):
        if self.mvba is not None or self.decision is not None or self.halted:
            return
        if not epoch_trigger(self.view, self.ordered, self.cfg):
            return
        snapshot = CertVector(tuple(self.view))
        if self.fault.behavior == MVBA_RACER:
            snapshot = self._racer_input(snapshot)
        ordered = tuple(self.ordered)
        self.inputs[self.epoch] = digest_value(snapshot)
        self._epoch_start = self.now()
        self.mvba = MVBA(self, self.epoch, ordered, snapshot, self._decided,
                         lambda v: evaluate_Q(ordered, v, self.registry, self.cfg, self.cache), self.cache)
        self.mvba.start()
        early, self.early = self.early, []
        for src, msg in early:
            if self.mvba is None or self.decision is not None:
                break
            self.mvba.handle(src, msg)

    def _racer_input(self, snapshot):
        """Push the ordered frontier back for as many honest senders as
        validity allows, starving their batches."""
        entries = list(snapshot.entries)
        advanced = sum(1 for e, o in zip(entries, self.ordered) if e.slot > o)
        budget = advanced - (self.cfg.n - self.cfg.f)
        for j in self.fault.targets:
            if budget <= 0:
                break
            if j != self.me and entries[j - 1].slot > self.ordered[j - 1]:
                entries[j - 1] = self.last_decided[j]
                budget -= 1
        return CertVector(tuple(entries))

    def _decided(self, dc):
        if self.decision is not None or dc.epoch != self.epoch:
            return
        self.decision = dc
        self.decisions[dc.epoch] = dc
        views = self.mvba.view if self.mvba is not None else 0
        started = getattr(self, "_epoch_start", None) if self.mvba is not None else None
        self.epoch_stats.append((dc.epoch, views, started, self.now()))
        self._try_assemble()

    def _try_assemble(self):
        dc = self.decision
        value = dc.value
        complete = True
        for qc, floor in zip(value.entries, self.ordered):
            j = qc.sender
            if qc.slot <= floor or self.store.contiguous(j) >= qc.slot:
                continue
            complete = False
            if not self.store.has(j, qc.slot):
                held = self.receivers[j].held
                if held is not None and held.slot == qc.slot and digest_batch(held) == qc.digest:
                    self.store.fix(j, qc.slot, held, qc)
                    if self.decision is not dc:
                        return
            self.callhelp.on_pull(PullRequest(j, qc.slot, qc.digest, qc.agg))
        if complete and self.decision is dc:
            self._output()

    def _output(self):
        dc = self.decision
        block = assemble_block(self.epoch, dc.value, self.ordered, self.store)
        t = self.now()
        self.log.append((t, block))
        for tx in block.transactions():
            if tx in self.buffer:
                del self.buffer[tx]
                self._inflight.discard(tx)
        self.ordered = dc.value.slots()
        self.last_decided = dc.value
        for qc in dc.value.entries:
            if qc.slot > 0:
                self.receivers[qc.sender].sync(qc)
        self.epoch += 1
        self.mvba = None
        self.decision = None
        if self.on_block is not None:
            self.on_block(self, t, block)
        self._future_count -= len(self.future.get(self.epoch, ()))
        for e in [e for e in self.future if e < self.epoch]:
            self._future_count -= len(self.future.pop(e))
        self.early = self.future.pop(self.epoch, [])
        for e in [e for e in self.future_decisions if e < self.epoch]:
            del self.future_decisions[e]
        self.sender.resume()
        nxt = self.future_decisions.pop(self.epoch, None)
        if nxt is not None:
            self._decided(nxt)
        else:
            self._poll()

    # -- introspection --------------------------------------------------
    def fixed_conflicts(self):
        return sum(r.equivocations for r in self.receivers.values())
