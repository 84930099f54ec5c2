"""Measurements behind the acceptance checks, shared by tests and CLI."""
import bisect
import random
from dataclasses import dataclass

from ..engine import CENSOR_VICTIM
from ..types import digest_value
from .metrics import compute_metrics
from .runner import ExperimentSpec, run_sim
from .verify import verify_logs


def store_conflicts(nodes, honest):
    """(sender, slot) pairs fixed to different contents at two honest nodes."""
    seen, bad = {}, []
    for j in honest:
        st = nodes[j].store
        for sender in range(1, st.n + 1):
            for s, b in st.batches(sender).items():
                c = b.content()
                prev = seen.setdefault((sender, s), c)
                if prev != c:
                    bad.append((sender, s))
    return bad


@dataclass
class SafetyRun:
    spec: ExperimentSpec
    reason: str
    violations: list
    conflicts: list
    epochs: int


def safety_run(n, seed, epochs=12):
    """One randomized adversarial run at maximal f."""
    rng = random.Random(seed)
    f = (n - 1) // 3
    k = rng.randint(1, f)
    kind = rng.choice(["crash", "equivocate", "censor", "racer"])
    faults = f"censor:{k}:100" if kind == "censor" else f"{kind}:{k}"
    delay = rng.choice(["uniform:0.001,0.1", "lognormal:-3.5,1.0"])
    spec = ExperimentSpec(n=n, f=f, epochs=epochs, seed=seed, faults=faults, delay=delay,
                          batch_size=rng.randint(1, 4), tx_size=rng.choice([16, 64]),
                          max_events=4_000_000)
    res = run_sim(spec)
    logs = res.honest_logs()
    return SafetyRun(spec, res.reason, verify_logs(logs), store_conflicts(res.nodes, res.honest),
                     min(len(x) for x in logs))


def honest_origin(res):
    """Fraction of epochs whose decision equals some honest node's input."""
    nodes, honest = res.nodes, res.honest
    ref = nodes[honest[0]]
    hits = total = 0
    for e, dc in sorted(ref.decisions.items()):
        d = digest_value(dc.value)
        total += 1
        hits += any(nodes[j].inputs.get(e) == d for j in honest)
    return hits, total


def mean_views(res):
    views = [v for j in res.honest for (_, v, started, _) in res.nodes[j].epoch_stats if started is not None]
    return sum(views) / len(views)


def censorship_lags(res, victim):
    """Epoch lag of each ordered victim batch after its certificate became
    held by every honest node.

    The lag is the ordering epoch minus the highest epoch any honest node
    had output when the last honest node adopted the certificate (floored
    at zero).  Returns (lags, unordered) where ``unordered`` lists victim
    slots universally certified well before the run ended yet never
    ordered.
    """
    nodes = [res.nodes[j] for j in res.honest]
    outs = sorted((t, b.epoch) for x in nodes for t, b in x.log)
    times, best, m = [], [], 0
    for t, e in outs:
        m = max(m, e)
        times.append(t)
        best.append(m)
    ordered_in = {}
    for _, b in nodes[0].log:
        for bt in b.batches:
            if bt.sender == victim:
                ordered_in[bt.slot] = b.epoch
    seen = [sorted((s, t) for (j, s), t in x.view_times.items() if j == victim) for x in nodes]

    def universal(s):
        worst = 0.0
        for rows in seen:
            t = min((t for ss, t in rows if ss >= s), default=None)
            if t is None:
                return None
            worst = max(worst, t)
        return worst

    lags = []
    for s, e in sorted(ordered_in.items()):
        t = universal(s)
        if t is None:
            continue
        i = bisect.bisect_right(times, t)
        lags.append(max(0, e - (best[i - 1] if i else 0)))
    # anything certified everywhere five epochs before the end must be in
    horizon = min(t for t, b in nodes[0].log if b.epoch == max(1, len(nodes[0].log) - 5))
    top = min(x.view[victim - 1].slot for x in nodes)
    unordered = [s for s in range(1, top + 1)
                 if s not in ordered_in and (universal(s) or float("inf")) < horizon]
    return lags, unordered


def censorship_experiment(seed, epochs=200, D=50.0):
    victim = 4

    def watch(nodes):
        for x in nodes.values():
            x.watch = (victim,)

    spec = ExperimentSpec(n=4, f=1, epochs=epochs, seed=seed, faults=f"censor:1:{D}",
                          batch_size=1, tx_size=32)
    res = run_sim(spec, setup=watch)
    assert res.nodes[victim].fault.behavior == CENSOR_VICTIM
    return res, censorship_lags(res, victim)


def slots_per_second(mode, seed=3, factor=20.0, horizon=30.0):
    """Mean certified slots per sim-second per honest sender with agreement
    traffic slowed by ``factor``."""
    spec = ExperimentSpec(n=4, f=1, epochs=10 ** 9, seed=seed, mode=mode, consensus_factor=factor,
                          max_time=horizon, batch_size=1, tx_size=32)
    res = run_sim(spec)
    slots = [res.nodes[j].sender.certified for j in res.honest]
    return sum(slots) / len(slots) / res.sim.time


def load_point(mode, batch, w, tau, seed=3, epochs=30):
    """(throughput tps, mean latency s) at one batch size under the
    bandwidth delay model with separate broadcast/agreement lanes."""
    spec = ExperimentSpec(n=4, f=1, epochs=epochs, seed=seed, mode=mode, batch_size=batch, tx_size=250,
                          delay=f"bandwidth:{w},{tau},0,1")
    res = run_sim(spec)
    _, s = compute_metrics(res.nodes[res.honest[0]].log, warmup=0.2)
    return s.throughput_tps, s.mean_latency_s


def uplink_capacity(n, w, tx_size):
    """Throughput ceiling when every node pushes its batches to n-1 peers."""
    return n * w / ((n - 1) * tx_size)
