"""Benchmark harness: batch evaluation, reductions, paired t-tests, tables."""
from __future__ import annotations

import csv
import math
import os
import random
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from . import gnn
from .heuristics import DomDdegPolicy, ImpactPolicy, MinDomPolicy, RandomPolicy
from .network import load_instance
from .policy import GreedyNetPolicy, HybridPolicy
from .search import CUTOFF, solve

POLICY_NAMES = ("mindom", "domddeg", "impact", "random", "drl", "drl-k")


def paired_t_test(a, b) -> float:
    """One-sided paired t-test p-value for mean(a) < mean(b).

    Degenerate spreads use the natural limits: all differences zero -> 1;
    zero variance with negative mean difference -> 0, positive -> 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("need two equal-length 1-d samples")
    n = a.size
    if n < 2:
        raise ValueError("need at least two pairs")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0.0:
        return 0.0 if d[0] < 0 else 1.0
    t = d.mean() / (sd / math.sqrt(n))
    return float(sstats.t.sf(-t, n - 1))


def make_policy(
    name: str,
    params: gnn.NetParams | None = None,
    k_depth: int = 3,
    seed: int = 0,
):
    """Fresh policy instance (stateful ones must not be shared across solves)."""
    if name == "mindom":
        return MinDomPolicy()
    if name == "domddeg":
        return DomDdegPolicy()
    if name == "impact":
        return ImpactPolicy()
    if name == "random":
        return RandomPolicy(random.Random(seed))
    if name == "drl":
        if params is None:
            raise ValueError("policy 'drl' needs a checkpoint")
        return GreedyNetPolicy(params)
    if name == "drl-k":
        if params is None:
            raise ValueError("policy 'drl-k' needs a checkpoint")
        return HybridPolicy(params, DomDdegPolicy(), k_depth)
    raise ValueError(f"unknown policy {name!r} (have {POLICY_NAMES})")


@dataclass
class InstanceRow:
    instance: str
    policy: str
    solved: str
    nodes: int
    failures: int
    steps: int
    total_seconds: float
    inference_seconds: float


ROW_COLUMNS = (
    "instance", "policy", "solved", "nodes", "failures", "steps",
    "total_seconds", "inference_seconds",
)


@dataclass
class PolicySummary:
    policy: str
    mean_nodes: float
    mean_failures: float
    timeouts: int
    mean_total_seconds: float
    mean_inference_seconds: float
    inference_share_pct: float
    reduction_vs_ref_pct: float | None = None
    p_value: float | None = None


@dataclass
class EvalReport:
    reference: str
    rows: list[InstanceRow] = field(default_factory=list)
    summaries: list[PolicySummary] = field(default_factory=list)

    def summary_for(self, policy: str) -> PolicySummary:
        for s in self.summaries:
            if s.policy == policy:
                return s
        raise KeyError(policy)


def corpus_files(corpus) -> list[str]:
    """Instance files of a corpus directory (via its manifest) or a manifest path."""
    if os.path.isdir(corpus):
        manifest = os.path.join(corpus, "manifest.txt")
        base = corpus
    else:
        manifest = corpus
        base = os.path.dirname(corpus)
    if not os.path.exists(manifest):
        raise FileNotFoundError(f"missing manifest {manifest}")
    files = []
    with open(manifest) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            fname = line.split()[0]
            path = os.path.join(base, fname)
            if not os.path.exists(path):
                raise FileNotFoundError(f"manifest names missing instance {path}")
            files.append(path)
    return files


def _solve_one(args):
    path, policy_name, params, k_depth, node_cutoff, seed = args
    net = load_instance(path)
    policy = make_policy(policy_name, params=params, k_depth=k_depth, seed=seed)
    stats = solve(net, policy, node_cutoff=node_cutoff)
    return InstanceRow(
        instance=net.instance_id,
        policy=policy_name,
        solved=stats.solved,
        nodes=stats.nodes,
        failures=stats.failures,
        steps=stats.steps,
        total_seconds=stats.total_seconds,
        inference_seconds=stats.inference_seconds,
    )


def evaluate_corpus(
    corpus,
    policies: list[str],
    reference: str,
    node_cutoff: int = 500_000,
    params: gnn.NetParams | None = None,
    k_depth: int = 3,
    seed: int = 0,
    workers: int = 1,
) -> EvalReport:
    """Solve every corpus instance under every policy and summarize.

    Reductions and t-tests compare each policy against the reference on the
    subset of instances both solved within the cutoff.
    """
    if reference not in policies:
        raise ValueError(f"reference {reference!r} not among policies {policies}")
    files = corpus_files(corpus)
    jobs = [
        (path, pol, params, k_depth, node_cutoff, seed + i)
        for pol in policies
        for i, path in enumerate(files)
    ]
    if workers > 1:
        import multiprocessing as mp

        with mp.Pool(workers) as pool:
            rows = pool.map(_solve_one, jobs, chunksize=8)
    else:
        rows = [_solve_one(j) for j in jobs]
    return build_report(rows, reference)


def build_report(rows: list[InstanceRow], reference: str) -> EvalReport:
    report = EvalReport(reference=reference, rows=list(rows))
    by_policy: dict[str, dict[str, InstanceRow]] = {}
    for row in rows:
        by_policy.setdefault(row.policy, {})[row.instance] = row
    if reference not in by_policy:
        raise ValueError(f"no rows for reference policy {reference!r}")
    ref_rows = by_policy[reference]
    for policy, per_inst in by_policy.items():
        vals = list(per_inst.values())
        total = sum(r.total_seconds for r in vals)
        infer = sum(r.inference_seconds for r in vals)
        summary = PolicySummary(
            policy=policy,
            mean_nodes=float(np.mean([r.nodes for r in vals])),
            mean_failures=float(np.mean([r.failures for r in vals])),
            timeouts=sum(1 for r in vals if r.solved == CUTOFF),
            mean_total_seconds=total / len(vals),
            mean_inference_seconds=infer / len(vals),
            inference_share_pct=100.0 * infer / total if total > 0 else 0.0,
        )
        common = [
            k for k, r in per_inst.items()
            if r.solved != CUTOFF and k in ref_rows and ref_rows[k].solved != CUTOFF
        ]
        if common:
            mine = np.array([per_inst[k].nodes for k in common], dtype=np.float64)
            ref = np.array([ref_rows[k].nodes for k in common], dtype=np.float64)
            if mine.mean() > 0:
                summary.reduction_vs_ref_pct = float(
                    100.0 * (mine.mean() - ref.mean()) / mine.mean()
                )
            if len(common) >= 2:
                summary.p_value = paired_t_test(ref, mine)
        report.summaries.append(summary)
    report.summaries.sort(key=lambda s: s.mean_nodes)
    return report


def write_rows_csv(rows: list[InstanceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROW_COLUMNS)
        for r in rows:
            writer.writerow([getattr(r, c) for c in ROW_COLUMNS])


def read_rows_csv(path) -> list[InstanceRow]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(
                InstanceRow(
                    instance=rec["instance"],
                    policy=rec["policy"],
                    solved=rec["solved"],
                    nodes=int(rec["nodes"]),
                    failures=int(rec["failures"]),
                    steps=int(rec["steps"]),
                    total_seconds=float(rec["total_seconds"]),
                    inference_seconds=float(rec["inference_seconds"]),
                )
            )
    return out


def write_summary_csv(report: EvalReport, path) -> None:
    cols = (
        "policy", "mean_nodes", "mean_failures", "timeouts",
        "mean_total_seconds", "mean_inference_seconds", "inference_share_pct",
        "reduction_vs_ref_pct", "p_value",
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for s in report.summaries:
            writer.writerow([getattr(s, c) for c in cols])


def render_table(report: EvalReport) -> str:
    """Aligned text table of the per-policy summaries."""
    head = [
        "Heuristic", "Nodes", "Red.%", "Failures", "Timeout",
        "Time(s)", "Infer(%)", "p-value",
    ]
    body = []
    for s in report.summaries:
        red = "-" if s.reduction_vs_ref_pct is None else f"{s.reduction_vs_ref_pct:.2f}"
        pv = "-" if s.p_value is None else f"{s.p_value:.3g}"
        body.append([
            s.policy,
            f"{s.mean_nodes:.2f}",
            red,
            f"{s.mean_failures:.2f}",
            str(s.timeouts),
            f"{s.mean_total_seconds:.4f}",
            f"{s.inference_share_pct:.1f}",
            pv,
        ])
    widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(head, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for r in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    lines.append(f"(reference: {report.reference}; reductions on commonly solved instances)")
    return "\n".join(lines)
