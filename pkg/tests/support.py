"""Shared builders for unit tests."""
from dumbo_ng import crypto
from dumbo_ng.mvba import CertCache
from dumbo_ng.types import ProtocolConfig, QuorumCert, TxBatch, digest_batch, filler_tx, vote_tag


class Ctx:
    """Stand-in for a node: records every outgoing message."""

    def __init__(self, cfg, keys, me):
        self.cfg = cfg
        self.keys = keys[me - 1]
        self.registry = self.keys.registry
        self.me = me
        self.sent = []
        self.cache = CertCache(self.registry)

    def send(self, dst, msg):
        self.sent.append((dst, msg))

    def multicast(self, msg):
        self.sent.append((None, msg))

    def verify_qc(self, qc):
        return self.cache.check(qc)

    def take(self, cls=object):
        out = [m for _, m in self.sent if isinstance(m, cls)]
        self.sent = [(d, m) for d, m in self.sent if not isinstance(m, cls)]
        return out


def setup(n=4, f=1, batch_size=2, tx_size=16, seed=0):
    cfg = ProtocolConfig(n, f, batch_size, tx_size)
    return cfg, crypto.keygen(cfg, seed)


def make_batch(cfg, j, s, ts=0.0, salt=0):
    txs = tuple(filler_tx(j, s, p + salt * 1000, cfg.tx_size) for p in range(cfg.batch_size))
    return TxBatch(j, s, txs, ts)


def certify(cfg, keys, batch, signers=None):
    d = digest_batch(batch)
    tag = vote_tag(batch.sender, batch.slot, d)
    signers = signers or range(1, cfg.quorum + 1)
    agg = crypto.combine([crypto.share_sign(keys[i - 1], tag) for i in signers], cfg)
    return QuorumCert(batch.sender, batch.slot, d, agg)
