"""Missing-batch retrieval: the CallHelp daemon pulls erasure-coded
fragments of fixed batches, the Help daemon serves them."""
from collections import OrderedDict
from dataclasses import replace

from . import crypto
from .codec import MalformedEncoding, decode, encode
from .erasure import Fragment, ec_decode, ec_encode, merkle_tree, merkle_verify
from .messages import CallHelp, Help
from .types import EMPTY_AGG, NO_TS, QuorumCert, TxBatch, digest_batch, vote_tag


class _SenderPull:
    __slots__ = ("max_missing", "known", "cursor", "running", "buckets", "bad_roots")

    def __init__(self):
        self.max_missing = 0
        self.known = {}
        self.cursor = 0
        self.running = False
        self.buckets = {}
        self.bad_roots = set()


class CallHelpDaemon:
    """Walks each sender's missing slots one at a time, reconstructing every
    slot from n-2f same-root fragments before asking for the next."""

    def __init__(self, ctx, store, view):
        self.ctx = ctx
        self.store = store
        self.view = view
        self.state = {j: _SenderPull() for j in ctx.cfg.nodes()}
        self.reconstructed = 0
        self.poisoned = 0

    def on_pull(self, req):
        j, s = req.target_sender, req.up_to_slot
        st = self.state.get(j)
        if st is None or s <= self.view[j - 1].slot or s in st.known:
            return
        if s <= st.max_missing and (not st.running or s < st.cursor):
            return
        if not crypto.sig_verify(self.ctx.registry, vote_tag(j, s, req.digest), req.cert):
            return
        # certified digests double as reconstruction checks for their slots
        st.known[s] = (req.digest, req.cert)
        if s <= st.max_missing:
            return
        st.max_missing = s
        if not st.running:
            st.running = True
            st.cursor = self.view[j - 1].slot + 1
            self._advance(j)

    def _advance(self, j):
        st = self.state[j]
        while st.cursor <= st.max_missing and self.store.has(j, st.cursor):
            st.cursor += 1
        if st.cursor > st.max_missing:
            st.running = False
            return
        k = st.cursor
        st.buckets = {}
        st.bad_roots = set()
        for old in [s for s in st.known if s < k]:
            del st.known[old]
        cert = st.known[k][1] if k in st.known else EMPTY_AGG
        self.ctx.multicast(CallHelp(j, k, cert))

    def on_help(self, src, msg: Help):
        j, k = msg.sender, msg.slot
        st = self.state.get(j)
        if st is None or not st.running or k != st.cursor or msg.root in st.bad_roots:
            return
        fr = msg.fragment
        if fr.index != src or not merkle_verify(msg.root, src, fr.payload, msg.branch, self.ctx.cfg.n):
            return
        bucket = st.buckets.setdefault(msg.root, {})
        bucket.setdefault(src, fr)
        if len(bucket) < self.ctx.cfg.coding_k:
            return
        batch = self._rebuild(bucket.values(), j, k, st)
        if batch is None:
            st.bad_roots.add(msg.root)
            del st.buckets[msg.root]
            self.poisoned += 1
            return
        qc = None
        if k in st.known:
            qc = QuorumCert(j, k, *st.known[k])
        self.reconstructed += 1
        st.cursor += 1
        # store.fix may re-enter on_pull through the fix callbacks
        self.store.fix(j, k, batch, qc)
        if st.running and st.cursor == k + 1:
            self._advance(j)

    def _rebuild(self, fragments, j, k, st):
        try:
            batch = decode(TxBatch, ec_decode(list(fragments), self.ctx.cfg))
        except (MalformedEncoding, ValueError):
            return None
        if batch.sender != j or batch.slot != k:
            return None
        if k in st.known and digest_batch(batch) != st.known[k][0]:
            return None
        return batch


class HelpDaemon:
    """Answers CallHelp with this node's own fragment of a fixed batch, at
    most once per (requester, sender, slot)."""

    CACHE = 64

    def __init__(self, ctx, store, held):
        self.ctx = ctx
        self.store = store
        self.held = held
        self.answered = set()
        self._cache = OrderedDict()

    def on_callhelp(self, src, msg: CallHelp):
        j, k = msg.sender, msg.slot
        key = (src, j, k)
        if key in self.answered or not 1 <= j <= self.ctx.cfg.n:
            return
        if not self.store.has(j, k) and msg.cert:
            latest = self.held(j)
            if latest is not None and latest.slot == k:
                d = digest_batch(latest)
                if crypto.sig_verify(self.ctx.registry, vote_tag(j, k, d), msg.cert):
                    self.store.fix(j, k, latest, QuorumCert(j, k, d, msg.cert))
        if not self.store.has(j, k):
            return
        self.answered.add(key)
        root, fragments, branches = self._encoded(j, k)
        me = self.ctx.me
        self.ctx.send(src, Help(j, k, root, fragments[me - 1], branches[me - 1]))

    def _encoded(self, j, k):
        hit = self._cache.get((j, k))
        if hit is not None:
            return hit
        # timestamps are outside the digest, so they stay out of the coding too:
        # every honest helper must commit to identical bytes
        batch = replace(self.store.get(j, k), broadcast_ts=NO_TS)
        fragments = ec_encode(encode(batch), self.ctx.cfg)
        root, branches = merkle_tree([fr.payload for fr in fragments])
        hit = (root, fragments, branches)
        self._cache[(j, k)] = hit
        if len(self._cache) > self.CACHE:
            self._cache.popitem(last=False)
        return hit


__all__ = ["CallHelpDaemon", "HelpDaemon", "Fragment"]
