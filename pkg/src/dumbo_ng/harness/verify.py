"""Cross-node safety check over output logs."""
from dataclasses import dataclass


@dataclass(frozen=True)
class Violation:
    kind: str
    logs: tuple
    epoch: int
    offset: int
    detail: str = ""

    def __str__(self):
        return f"{self.kind} between logs {self.logs} at epoch {self.epoch}, offset {self.offset}: {self.detail}"


def _gaps(entries):
    for i, (_, b) in enumerate(entries, 1):
        if b.epoch != i:
            return b.epoch
    return None


def verify_logs(logs):
    """``logs`` is a list of per-node entry lists (output_time, Block).

    Checks epochs are gap-free, blocks are byte-equal per epoch (timestamps
    aside), and output transaction sequences are prefix-consistent.
    Returns a list of violations, empty on pass.
    """
    if len(logs) < 2:
        raise ValueError("need at least two logs")
    out = []
    for i, entries in enumerate(logs):
        bad = _gaps(entries)
        if bad is not None:
            out.append(Violation("epoch-gap", (i,), bad, 0))
    for a in range(len(logs)):
        for b in range(a + 1, len(logs)):
            v = _compare(a, logs[a], b, logs[b])
            if v is not None:
                out.append(v)
    return out


def _compare(a, la, b, lb):
    offset = 0
    for (_, x), (_, y) in zip(la, lb):
        if x.content() != y.content():
            tx_a, tx_b = list(x.transactions()), list(y.transactions())
            k = next((i for i, (p, q) in enumerate(zip(tx_a, tx_b)) if p != q), min(len(tx_a), len(tx_b)))
            return Violation("block-mismatch", (a, b), x.epoch, offset + k,
                             "transaction order diverges" if k < min(len(tx_a), len(tx_b)) else "block contents differ")
        offset += sum(len(t.txs) for t in x.batches)
    return None
