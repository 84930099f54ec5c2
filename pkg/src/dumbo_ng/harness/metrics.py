"""Throughput and per-batch latency from output logs."""
import csv
from dataclasses import dataclass

import numpy as np

from ..types import NO_TS

COLUMNS = ("epoch", "t_start", "t_end", "txs", "bytes", "mean_latency_s", "p50", "p95")


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    t_start: float
    t_end: float
    txs: int
    bytes: int
    mean_latency_s: float
    p50: float
    p95: float
    missing_ts: int = 0

    def row(self):
        return [getattr(self, c) for c in COLUMNS]


@dataclass(frozen=True)
class Summary:
    epochs: int
    txs: int
    bytes: int
    elapsed: float
    throughput_tps: float
    mean_latency_s: float
    p50: float
    p95: float
    missing_ts: int


def _pct(xs, q):
    return float(np.percentile(xs, q)) if len(xs) else float("nan")


def compute_metrics(entries, warmup=0.1):
    """Per-epoch records plus a steady-state summary.

    ``entries`` is a list of (output_time, Block).  Latency is sampled once
    per batch as output time minus the batch's broadcast timestamp; batches
    rebuilt from fragments carry no timestamp and are counted as missing.
    The first ``warmup`` fraction of epochs is left out of the summary.
    """
    records, samples = [], []
    prev_t = 0.0
    for t, block in entries:
        lat, missing = [], 0
        txs = nbytes = 0
        for b in block.batches:
            txs += len(b.txs)
            nbytes += sum(len(x) for x in b.txs)
            if b.broadcast_ts == NO_TS:
                missing += 1
            else:
                lat.append(t - b.broadcast_ts)
        mean = float(np.mean(lat)) if lat else float("nan")
        records.append(MetricsRecord(block.epoch, prev_t, t, txs, nbytes, mean, _pct(lat, 50), _pct(lat, 95), missing))
        samples.append(lat)
        prev_t = t
    skip = int(len(records) * warmup)
    kept, kept_lat = records[skip:], [x for lat in samples[skip:] for x in lat]
    if not kept:
        return records, Summary(0, 0, 0, 0.0, 0.0, float("nan"), float("nan"), float("nan"), 0)
    elapsed = kept[-1].t_end - kept[0].t_start
    txs = sum(r.txs for r in kept)
    return records, Summary(
        epochs=len(kept), txs=txs, bytes=sum(r.bytes for r in kept), elapsed=elapsed,
        throughput_tps=txs / elapsed if elapsed > 0 else 0.0,
        mean_latency_s=float(np.mean(kept_lat)) if kept_lat else float("nan"),
        p50=_pct(kept_lat, 50), p95=_pct(kept_lat, 95),
        missing_ts=sum(r.missing_ts for r in kept))


def write_csv(records, path):
    with open(path, "w", newline="") as fp:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([repr(x) if isinstance(x, float) else x for x in r.row()])


def increment_ratio(low_latency, high_latency):
    """Relative latency growth from the low-load to the high-load point."""
    return (high_latency - low_latency) / low_latency
