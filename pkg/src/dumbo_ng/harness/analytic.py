"""Closed-form throughput/latency model of the two protocol families.

Units: B in transactions, w in tx/s, tau/tba/ttpke in seconds.
"""
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class AnalyticParams:
    n: int
    B: float
    w: float
    tau: float
    tba: float
    ttpke: float = 0.0

    def __post_init__(self):
        if self.n <= 0 or self.B < 0 or self.w <= 0 or self.tau <= 0 or self.tba <= 0 or self.ttpke < 0:
            raise ValueError("parameters must be positive")


def analytic_ng(p: AnalyticParams):
    """(tps, latency) when dissemination never waits for agreement."""
    transfer = p.n * p.B / p.w
    return p.n * p.B / (transfer + p.tau), transfer + p.tau + 1.5 * p.tba


def analytic_hbbft(p: AnalyticParams):
    """(tps, latency) when every batch waits for agreement (and decryption)."""
    transfer = p.n * p.B / p.w
    stall = p.tau + p.tba + p.ttpke
    return p.n * p.B / (transfer + stall), transfer + stall


def batch_for_fraction(model, p: AnalyticParams, rho):
    """Batch size whose throughput is ``rho`` of ``w`` (0 <= rho < 1)."""
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    stall = p.tau if model is analytic_ng else p.tau + p.tba + p.ttpke
    # n B / w = rho * stall / (1 - rho)
    return rho * stall / (1 - rho) * p.w / p.n


def latency_increment(model, p: AnalyticParams, low=0.2, high=0.9):
    """Latency growth between throughput fractions ``low`` and ``high``."""
    lo = model(replace(p, B=batch_for_fraction(model, p, low)))[1]
    hi = model(replace(p, B=batch_for_fraction(model, p, high)))[1]
    return hi - lo, (hi - lo) / lo


def sweep(p: AnalyticParams, batches):
    """Rows (B, ng_tps, ng_latency, hb_tps, hb_latency)."""
    rows = []
    for b in batches:
        q = replace(p, B=b)
        rows.append((b, *analytic_ng(q), *analytic_hbbft(q)))
    return rows
