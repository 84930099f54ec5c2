"""Command-line entry point: ``run``, ``model`` and ``verify``."""
import argparse
import csv
import json
import sys
from dataclasses import asdict, fields

from .analytic import AnalyticParams, analytic_hbbft, analytic_ng, latency_increment, sweep
from .logs import read_log
from .metrics import compute_metrics
from .runner import ExperimentSpec, node_main, run_sim, run_tcp
from .verify import verify_logs

_RUN_FLAGS = {"n": int, "f": int, "batch_size": int, "tx_size": int, "epochs": int, "seed": int,
              "transport": str, "delay": str, "faults": str, "out": str, "mode": str}


def _build_parser():
    p = argparse.ArgumentParser(prog="dumbo-ng")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config", help="JSON file with experiment fields; flags override it")
    for name, tp in _RUN_FLAGS.items():
        run.add_argument("--" + name.replace("_", "-"), dest=name, type=tp, default=None)
    run.add_argument("--kill-node", type=int, default=None)
    run.add_argument("--kill-at-epoch", type=int, default=None)

    model = sub.add_parser("model", help="analytic throughput/latency model, CSV to stdout")
    model.add_argument("--n", type=int, default=16)
    model.add_argument("--w", type=float, default=75000.0, help="per-node bandwidth, tx/s")
    model.add_argument("--tau", type=float, default=0.1)
    model.add_argument("--tba", type=float, default=1.0)
    model.add_argument("--ttpke", type=float, default=0.0)
    model.add_argument("--sweep", default="", help="comma-separated batch sizes")

    ver = sub.add_parser("verify", help="cross-check node output logs")
    ver.add_argument("logs", nargs="+")

    node = sub.add_parser("node")
    node.add_argument("--setup", required=True)
    node.add_argument("--id", type=int, required=True)
    node.add_argument("--log", required=True)
    return p


def spec_from_args(args):
    values = {}
    if args.config:
        with open(args.config) as fp:
            values.update(json.load(fp))
    known = {f.name for f in fields(ExperimentSpec)}
    unknown = set(values) - known
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    for name in list(_RUN_FLAGS) + ["kill_node", "kill_at_epoch"]:
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    return ExperimentSpec(**values)


def cmd_run(args):
    spec = spec_from_args(args)
    spec.config()
    if spec.transport == "tcp":
        res = run_tcp(spec)
        print(json.dumps({"reason": res["reason"], "killed": res["killed"]}))
        return 0 if res["reason"] == "done" else 1
    if spec.transport != "sim":
        raise SystemExit(f"unknown transport {spec.transport!r}")
    res = run_sim(spec)
    _, summary = compute_metrics(res.nodes[res.honest[0]].log)
    print(json.dumps({"reason": res.reason, "sim_time": res.sim.time, "trace_digest": res.sim.trace_digest(),
                      "summary": asdict(summary)}, default=str))
    return 0 if res.reason == "done" else 1


def cmd_model(args):
    base = AnalyticParams(args.n, 1.0, args.w, args.tau, args.tba, args.ttpke)
    out = csv.writer(sys.stdout, lineterminator="\n")
    if args.sweep:
        out.writerow(["B", "ng_tps", "ng_latency", "hb_tps", "hb_latency"])
        for row in sweep(base, [float(b) for b in args.sweep.split(",")]):
            out.writerow([repr(x) for x in row])
        return 0
    out.writerow(["model", "anchor", "increment_s", "increment_ratio"])
    for name, m in (("dumbo-ng", analytic_ng), ("hbbft", analytic_hbbft)):
        for low in (0.2, 0.0):
            inc, ratio = latency_increment(m, base, low=low, high=0.9)
            out.writerow([name, repr(low), repr(inc), repr(ratio)])
    return 0


def cmd_verify(args):
    try:
        logs = [read_log(p) for p in args.logs]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    problems = verify_logs(logs)
    for v in problems:
        print(v)
    print("PASS" if not problems else f"FAIL ({len(problems)} violations)")
    return 0 if not problems else 1


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.command == "node":
        node_main(args.setup, args.id, args.log)
        return 0
    return {"run": cmd_run, "model": cmd_model, "verify": cmd_verify}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
