"""Command-line front end: generate / solve / train / evaluate / ttest."""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import dqn, gnn, rb, report
from .network import InstanceFormatError, load_instance
from .search import CUTOFF, SAT, UNSAT, solve


def _write_run_manifest(out_dir: str, args: argparse.Namespace, extra: dict | None = None):
    os.makedirs(out_dir, exist_ok=True)
    payload = {"argv": sys.argv[1:], "args": {k: str(v) for k, v in vars(args).items()}}
    if extra:
        payload.update(extra)
    blob = json.dumps(payload, indent=2, sort_keys=True)
    payload["config_hash"] = hashlib.sha256(blob.encode()).hexdigest()
    with open(os.path.join(out_dir, "run.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def cmd_generate(args) -> int:
    files = rb.generate_corpus(args.out, args.preset, args.n, args.count,
                               args.seed if args.seed is not None else 0)
    _write_run_manifest(args.out, args)
    print(f"wrote {len(files)} instances + manifest to {args.out}")
    return 0


def cmd_solve(args) -> int:
    try:
        net = load_instance(args.instance)
    except InstanceFormatError as exc:
        print(f"parse error in {args.instance}: {exc}", file=sys.stderr)
        return 3
    params = gnn.load_params(args.checkpoint) if args.checkpoint else None
    policy = report.make_policy(
        args.policy, params=params, k_depth=args.k_depth,
        seed=args.seed if args.seed is not None else 0,
    )
    trace = open(args.trace, "w") if args.trace else None
    try:
        stats = solve(
            net, policy, node_cutoff=args.cutoff_nodes, trace=trace,
            transition_sink=None,
        )
    finally:
        if trace:
            trace.close()
    record = {
        "instance": net.instance_id,
        "policy": args.policy,
        "solved": stats.solved,
        "nodes": stats.nodes,
        "failures": stats.failures,
        "steps": stats.steps,
        "total_seconds": round(stats.total_seconds, 6),
        "inference_seconds": round(stats.inference_seconds, 6),
    }
    if stats.solution is not None:
        record["solution"] = list(stats.solution)
    print(json.dumps(record))
    return {SAT: 0, UNSAT: 1, CUTOFF: 2}[stats.solved]


def cmd_train(args) -> int:
    cfg = dqn.load_config(args.config) if args.config else dqn.TrainConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    dist = rb.preset(args.preset, args.n, seed=cfg.seed)
    os.makedirs(args.out, exist_ok=True)
    _write_run_manifest(args.out, args, extra={"train_config": vars(cfg)})

    def progress(row):
        print(
            f"episode {row['episode']:5d}  step {row['global_step']:7d}  "
            f"eps {row['epsilon']:.3f}  loss {row['loss_mean']:.4f}  "
            f"val nodes {row['val_mean_nodes']:.2f}  "
            f"val failures {row['val_mean_failures']:.2f}",
            flush=True,
        )

    result = dqn.train(cfg, dist, progress=progress)
    gnn.save_params(result.best_params, os.path.join(args.out, "best.ckpt"))
    gnn.save_params(result.final_params, os.path.join(args.out, "final.ckpt"))
    dqn.write_log_csv(result.log_rows, os.path.join(args.out, "train_log.csv"))
    print(
        f"done: {result.total_steps} steps in {result.seconds:.1f}s, "
        f"best validation mean nodes {result.best_val_nodes:.2f}"
    )
    return 0


def cmd_evaluate(args) -> int:
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    params = gnn.load_params(args.checkpoint) if args.checkpoint else None
    rep = report.evaluate_corpus(
        args.corpus,
        policies,
        reference=args.reference,
        node_cutoff=args.cutoff_nodes,
        params=params,
        k_depth=args.k_depth,
        seed=args.seed if args.seed is not None else 0,
        workers=args.workers,
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_run_manifest(args.out, args)
        report.write_rows_csv(rep.rows, os.path.join(args.out, "instances.csv"))
        report.write_summary_csv(rep, os.path.join(args.out, "summary.csv"))
        with open(os.path.join(args.out, "table.txt"), "w") as fh:
            fh.write(report.render_table(rep) + "\n")
    print(report.render_table(rep))
    return 0


def cmd_ttest(args) -> int:
    def read_col(path):
        with open(path) as fh:
            return [float(line.strip()) for line in fh if line.strip()]

    p = report.paired_t_test(read_col(args.a), read_col(args.b))
    print(json.dumps({"p_value": p}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="csplab",
        description="Random-CSP solving laboratory with learned variable ordering",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a seeded instance corpus",
                       parents=[common])
    g.add_argument("--preset", choices=sorted(rb.PRESETS), required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one instance file", parents=[common])
    s.add_argument("instance")
    s.add_argument("--policy", choices=report.POLICY_NAMES, default="domddeg")
    s.add_argument("--checkpoint")
    s.add_argument("--k-depth", type=int, default=3)
    s.add_argument("--cutoff-nodes", type=int, default=500_000)
    s.add_argument("--trace", help="write a transition trace file")
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("train", help="train the value network on a distribution",
                       parents=[common])
    t.add_argument("--preset", choices=sorted(rb.PRESETS), required=True)
    t.add_argument("--n", type=int, required=True)
    t.add_argument("--config", help="key=value training config file")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="solve a corpus under several policies",
                       parents=[common])
    e.add_argument("--corpus", required=True, help="corpus dir or manifest file")
    e.add_argument("--policies", required=True, help="comma-separated policy names")
    e.add_argument("--reference", required=True)
    e.add_argument("--checkpoint")
    e.add_argument("--k-depth", type=int, default=3)
    e.add_argument("--cutoff-nodes", type=int, default=500_000)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    tt = sub.add_parser("ttest", help="one-sided paired t-test on two value files",
                        parents=[common])
    tt.add_argument("--a", required=True, help="file with one value per line")
    tt.add_argument("--b", required=True)
    tt.set_defaults(func=cmd_ttest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
