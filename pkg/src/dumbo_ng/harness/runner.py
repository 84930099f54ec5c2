"""Experiment description, simulated and multi-process runs."""
import json
import math
import os
import random
import socket
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field

from ..crypto import keygen
from ..engine import CENSOR_VICTIM, CRASHED, EQUIVOCATOR, MVBA_RACER, FaultProfile, Node
from ..net.sim import AdversaryPolicy, BandwidthDelay, LogNormalDelay, Simulator, UniformDelay
from ..types import ConfigError, ProtocolConfig
from .logs import read_log, write_log
from .metrics import compute_metrics, write_csv


@dataclass
class ExperimentSpec:
    n: int = 4
    f: int = 1
    batch_size: int = 1
    tx_size: int = 250
    epochs: int = 20
    seed: int = 0
    transport: str = "sim"
    delay: str = "uniform:0.01,0.05"
    faults: str = "none"
    out: str | None = None
    mode: str = "ng"
    consensus_factor: float = 1.0
    reorder: bool = True
    racer_speedup: float = 0.05
    max_time: float = math.inf
    max_events: int | None = None
    kill_node: int | None = None
    kill_at_epoch: int | None = None
    timeout: float = 600.0

    def config(self):
        return ProtocolConfig(self.n, self.f, self.batch_size, self.tx_size)

    def to_json(self):
        d = asdict(self)
        if d["max_time"] == math.inf:
            d["max_time"] = None
        return d


def parse_delay(text):
    kind, _, args = text.partition(":")
    vals = [float(x) for x in args.split(",")] if args else []
    if kind == "uniform" and len(vals) == 2:
        return UniformDelay(*vals)
    if kind == "lognormal" and len(vals) == 2:
        return LogNormalDelay(*vals)
    if kind == "bandwidth" and 2 <= len(vals) <= 4:
        w, tau = vals[:2]
        jitter = vals[2] if len(vals) > 2 else 0.0
        lanes = len(vals) > 3 and vals[3] != 0
        return BandwidthDelay(w, tau, jitter, lanes)
    raise ConfigError(f"bad delay model {text!r}")


def parse_faults(text, cfg, seed=0):
    """Map a fault string to (profiles by node, scheduler policy)."""
    parts = text.split(":")
    kind = parts[0]
    profiles = {j: FaultProfile() for j in cfg.nodes()}
    policy = {}
    if kind == "none":
        return profiles, policy
    try:
        k = int(parts[1])
    except (IndexError, ValueError):
        raise ConfigError(f"bad fault spec {text!r}") from None
    if not 1 <= k <= cfg.f:
        raise ConfigError(f"fault count {k} must lie in [1, f={cfg.f}]")
    bad = list(range(1, k + 1))
    honest = tuple(j for j in cfg.nodes() if j not in bad)
    rng = random.Random(seed)
    if kind == "crash" and len(parts) == 2:
        for j in bad:
            profiles[j] = FaultProfile(CRASHED, after_event=rng.randrange(0, 400 * cfg.n))
    elif kind == "censor" and len(parts) == 3:
        victims = tuple(range(cfg.n - k + 1, cfg.n + 1))
        for j in victims:
            profiles[j] = FaultProfile(CENSOR_VICTIM, targets=victims)
        policy = {"victims": victims, "D": float(parts[2])}
    elif kind == "equivocate" and len(parts) == 2:
        for j in bad:
            profiles[j] = FaultProfile(EQUIVOCATOR)
    elif kind == "racer" and len(parts) == 2:
        for j in bad:
            profiles[j] = FaultProfile(MVBA_RACER, targets=honest)
        policy = {"fast": tuple(bad)}
    else:
        raise ConfigError(f"bad fault spec {text!r}")
    return profiles, policy


@dataclass
class SimResult:
    spec: ExperimentSpec
    sim: Simulator
    nodes: dict
    honest: list
    reason: str
    wall: float
    logs: dict = field(default_factory=dict)

    def honest_logs(self):
        return [self.nodes[j].log for j in self.honest]


def build_sim(spec: ExperimentSpec, keep_trace=False):
    cfg = spec.config()
    profiles, pol = parse_faults(spec.faults, cfg, spec.seed)
    if "fast" in pol:
        pol["fast_factor"] = spec.racer_speedup
    policy = AdversaryPolicy(consensus_factor=spec.consensus_factor, reorder=spec.reorder, **pol)
    sim = Simulator(parse_delay(spec.delay), policy, seed=spec.seed, keep_trace=keep_trace)
    keys = keygen(cfg, spec.seed)
    nodes = {}
    for k in keys:
        node = Node(cfg, k, sim, fault=profiles[k.node], mode=spec.mode)
        nodes[k.node] = node
        sim.add(node)
    honest = [j for j, p in profiles.items() if not p.byzantine]
    return sim, nodes, honest


def run_sim(spec: ExperimentSpec, keep_trace=False, setup=None) -> SimResult:
    """Run until every honest node output ``spec.epochs`` blocks (or a
    budget stops the run).  ``setup(nodes)`` may adjust nodes before start."""
    sim, nodes, honest = build_sim(spec, keep_trace)
    if setup is not None:
        setup(nodes)
    t = time.perf_counter()
    sim.start()
    target = spec.epochs + 1
    live = [nodes[j] for j in honest]
    reason = sim.run(until=lambda: all(x.epoch >= target for x in live),
                     max_time=spec.max_time, max_events=spec.max_events)
    res = SimResult(spec, sim, nodes, honest, reason, time.perf_counter() - t)
    if spec.out:
        save_sim(res)
    return res


def save_sim(res: SimResult):
    out = res.spec.out
    os.makedirs(out, exist_ok=True)
    for j in res.honest:
        write_log(os.path.join(out, f"node{j}.log"), res.nodes[j].log)
    records, summary = compute_metrics(res.nodes[res.honest[0]].log)
    write_csv(records, os.path.join(out, "metrics.csv"))
    manifest = {"spec": res.spec.to_json(), "seed": res.spec.seed, "honest": res.honest,
                "stop_reason": res.reason, "sim_time": res.sim.time,
                "events": res.sim.delivered, "trace_digest": res.sim.trace_digest(),
                "summary": asdict(summary)}
    with open(os.path.join(out, "manifest.json"), "w") as fp:
        json.dump(manifest, fp, indent=2, sort_keys=True, default=str)


# -- multi-process TCP runs ---------------------------------------------

def _free_ports(k):
    socks, ports = [], []
    for _ in range(k):
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        socks.append(s)
        ports.append(s.getsockname()[1])
    for s in socks:
        s.close()
    return ports


def _count_lines(path):
    try:
        with open(path, "rb") as fp:
            return fp.read().count(b"\n")
    except FileNotFoundError:
        return 0


def run_tcp(spec: ExperimentSpec, jitter=(0.0, 0.002)):
    """Launch one OS process per node on localhost and wait until every
    surviving node logged ``spec.epochs`` blocks.  Returns a dict with the
    log paths, the killed node (if any) and the stop reason."""
    if spec.out is None:
        raise ConfigError("tcp runs need an output directory")
    cfg = spec.config()
    os.makedirs(spec.out, exist_ok=True)
    ports = _free_ports(cfg.n)
    setup = {"n": cfg.n, "f": cfg.f, "batch_size": cfg.batch_size, "tx_size": cfg.tx_size,
             "seed": spec.seed, "jitter": list(jitter), "t0": time.time(),
             "addresses": {str(j): ["127.0.0.1", ports[j - 1]] for j in cfg.nodes()}}
    setup_path = os.path.join(spec.out, "setup.json")
    with open(setup_path, "w") as fp:
        json.dump(setup, fp, indent=2)
    logs = {j: os.path.join(spec.out, f"node{j}.log") for j in cfg.nodes()}
    for p in logs.values():
        open(p, "w").close()
    procs = {j: subprocess.Popen([sys.executable, "-m", "dumbo_ng", "node", "--setup", setup_path,
                                  "--id", str(j), "--log", logs[j]],
                                 stdout=subprocess.DEVNULL, stderr=open(logs[j] + ".err", "w"))
             for j in cfg.nodes()}
    killed, reason = None, "timeout"
    deadline = time.time() + spec.timeout
    try:
        while time.time() < deadline:
            time.sleep(0.2)
            counts = {j: _count_lines(p) for j, p in logs.items()}
            if killed is None and spec.kill_node and spec.kill_at_epoch:
                if counts[spec.kill_node] >= spec.kill_at_epoch:
                    procs[spec.kill_node].kill()
                    killed = spec.kill_node
            alive = [j for j in cfg.nodes() if j != killed]
            if all(counts[j] >= spec.epochs for j in alive):
                reason = "done"
                break
            if any(procs[j].poll() is not None for j in alive):
                reason = "node exited"
                break
    finally:
        for p in procs.values():
            if p.poll() is None:
                p.terminate()
        for p in procs.values():
            try:
                p.wait(5)
            except subprocess.TimeoutExpired:
                p.kill()
    with open(os.path.join(spec.out, "manifest.json"), "w") as fp:
        json.dump({"spec": spec.to_json(), "seed": spec.seed, "killed": killed, "stop_reason": reason},
                  fp, indent=2, sort_keys=True)
    return {"logs": logs, "killed": killed, "reason": reason}


def node_main(setup_path, me, log_path):
    """Entry point of one TCP node process."""
    import asyncio
    from ..net.tcp import TcpNet, load_setup
    from .logs import format_entry

    setup = load_setup(setup_path)
    cfg = ProtocolConfig(setup["n"], setup["f"], setup["batch_size"], setup["tx_size"])
    keys = keygen(cfg, setup["seed"])[me - 1]
    net = TcpNet(me, setup["addresses"], tuple(setup["jitter"]), setup["seed"], setup["t0"])
    fp = open(log_path, "a")

    def on_block(node, t, block):
        fp.write(format_entry(t, block))
        fp.flush()

    node = Node(cfg, keys, net, on_block=on_block)
    asyncio.run(net.run(node))


def load_logs(paths):
    return [read_log(p) for p in paths]
