"""Double-DQN training of the value network on solver transitions.

Each episode solves one freshly sampled instance with an epsilon-greedy
policy; every created child node stores one unit-cost experience. After
each stored experience one gradient step is taken on a uniform minibatch,
with targets evaluated by a periodically synced target network (action
argmin under the online network, value under the target network).
Episodes truncated by the step limit keep their last experience
non-terminal so its value still bootstraps.
"""
from __future__ import annotations

import random
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import gnn, rb
from .network import ConstraintNetwork
from .policy import EpsilonGreedyPolicy, GreedyNetPolicy
from .search import Transition, solve

VAL_SEED_OFFSET = 900_000


@dataclass
class TrainConfig:
    episodes: int = 1000
    t_max: int = 10_000
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_steps: int = 20_000
    lr: float = 0.00005
    batch_size: int = 128
    capacity: int = 100_000
    target_sync_episodes: int = 100
    val_size: int = 200
    val_period: int = 10
    val_node_cutoff: int = 500_000
    p: int = 128
    k_rounds: int = 5
    hidden: int = 128
    seed: int = 0
    dtype: str = "float64"

    def validate(self) -> None:
        positive = (
            "episodes", "t_max", "gamma", "eps_anneal_steps", "lr", "batch_size",
            "capacity", "target_sync_episodes", "val_size", "val_period",
            "val_node_cutoff", "p", "k_rounds", "hidden",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ValueError("need 0 <= eps_end <= eps_start <= 1")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")


def load_config(path) -> TrainConfig:
    """Parse a key=value config file; unknown keys are rejected."""
    known = {f.name: f.type for f in fields(TrainConfig)}
    kwargs = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValueError(f"{path}:{ln}: unknown key {key!r}")
            if key == "dtype":
                kwargs[key] = val
            elif known[key] == "float" or key in ("gamma", "eps_start", "eps_end", "lr"):
                kwargs[key] = float(val)
            else:
                kwargs[key] = int(val)
    cfg = TrainConfig(**kwargs)
    cfg.validate()
    return cfg


def epsilon_at(step: int, cfg: TrainConfig) -> float:
    """Linear anneal from eps_start to eps_end over eps_anneal_steps."""
    if step < 0:
        raise ValueError("step must be >= 0")
    span = cfg.eps_start - cfg.eps_end
    return max(cfg.eps_end, cfg.eps_start - step * span / cfg.eps_anneal_steps)


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform without-replacement sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.items: list[Transition] = []
        self.pos = 0

    def __len__(self) -> int:
        return len(self.items)

    def push(self, item: Transition) -> None:
        if len(self.items) < self.capacity:
            self.items.append(item)
        else:
            self.items[self.pos] = item
            self.pos = (self.pos + 1) % self.capacity

    def sample(self, rng: random.Random, k: int) -> list[Transition]:
        return [self.items[i] for i in rng.sample(range(len(self.items)), k)]


# --------------------------------------------------------------------------
# Targets
# --------------------------------------------------------------------------


def compute_targets(
    batch: list[Transition],
    online: gnn.NetParams,
    target: gnn.NetParams,
    gamma: float,
    nets: dict[str, ConstraintNetwork],
    warn=None,
) -> np.ndarray:
    """DDQN targets: y = r for terminal children, else
    y = r + gamma * Q_target(s', argmin_a Q_online(s', a))."""
    y = np.full(len(batch), 1.0, dtype=np.float64)
    open_idx = []
    caches, xvs, xcs, act_lists = [], [], [], []
    for i, tr in enumerate(batch):
        if tr.terminal:
            continue
        cid, masks = tr.child
        net = nets[cid]
        cache = gnn.graph_cache(net)
        mem = cache.member_from_masks(masks)
        sizes = mem.sum(axis=1).astype(np.int64)
        actions = np.nonzero(sizes > 1)[0]
        if actions.size == 0:
            # should be unreachable: such children are recorded terminal
            if warn is not None:
                warn(f"non-terminal child of {cid} has no open variables")
            continue
        live = cache.live_from_member(mem)
        xv, xc = cache.features_from_counts(sizes, live)
        open_idx.append(i)
        caches.append(cache)
        xvs.append(xv)
        xcs.append(xc)
        act_lists.append(actions)
    if not open_idx:
        return y
    gb = gnn.GraphBatch(caches, xvs, xcs, dtype=online.dtype)
    counts = np.array([len(a) for a in act_lists])
    q_graph = np.repeat(np.arange(len(open_idx)), counts)
    q_var = np.concatenate(
        [a + off for a, off in zip(act_lists, gb.var_offsets[:-1])]
    )
    q_on, _ = gnn.q_values(online, gb, q_graph, q_var)
    bounds = np.concatenate([[0], np.cumsum(counts)])
    best_rows = np.array(
        [b + int(np.argmin(q_on[b:e])) for b, e in zip(bounds[:-1], bounds[1:])]
    )
    q_tg, _ = gnn.q_values(
        target, gb, q_graph[best_rows], q_var[best_rows]
    )
    for row, (i, qt) in enumerate(zip(open_idx, q_tg)):
        y[i] = 1.0 + gamma * float(qt)
    return y


def ddqn_target(
    item: Transition,
    online: gnn.NetParams,
    target: gnn.NetParams,
    gamma: float,
    nets: dict[str, ConstraintNetwork],
) -> float:
    return float(compute_targets([item], online, target, gamma, nets)[0])


# --------------------------------------------------------------------------
# Training loop
# --------------------------------------------------------------------------


@dataclass
class TrainResult:
    best_params: gnn.NetParams
    best_val_nodes: float
    final_params: gnn.NetParams
    log_rows: list[dict] = field(default_factory=list)
    total_steps: int = 0
    seconds: float = 0.0


LOG_COLUMNS = (
    "episode", "global_step", "epsilon", "loss_mean",
    "val_mean_nodes", "val_mean_failures",
)


def validate(
    params: gnn.NetParams,
    instances: list[ConstraintNetwork],
    node_cutoff: int,
) -> tuple[float, float]:
    """Mean nodes/failures of the greedy policy over a fixed instance set."""
    policy = GreedyNetPolicy(params)
    nodes, fails = 0, 0
    for net in instances:
        stats = solve(net, policy, node_cutoff=node_cutoff)
        nodes += stats.nodes
        fails += stats.failures
    return nodes / len(instances), fails / len(instances)


def make_validation_set(dist: rb.RbParams, size: int) -> list[ConstraintNetwork]:
    out = []
    for j in range(size):
        p = rb.RbParams(
            dist.m, dist.n, dist.alpha, dist.beta, dist.rho,
            seed=dist.seed + VAL_SEED_OFFSET + j,
        )
        out.append(rb.generate(p, instance_id=f"val-{j}"))
    return out


def train(
    cfg: TrainConfig,
    dist: rb.RbParams,
    val_instances: list[ConstraintNetwork] | None = None,
    progress=None,
) -> TrainResult:
    cfg.validate()
    t0 = time.perf_counter()
    dtype = np.dtype(cfg.dtype)
    rng = random.Random(cfg.seed)
    online = gnn.init_params(cfg.p, cfg.k_rounds, cfg.hidden, seed=cfg.seed, dtype=dtype)
    target = online.copy()
    adam = gnn.Adam(online, lr=cfg.lr)
    buffer = ReplayBuffer(cfg.capacity)
    if val_instances is None:
        val_instances = make_validation_set(dist, cfg.val_size)
    nets: dict[str, ConstraintNetwork] = {n.instance_id: n for n in val_instances}

    global_step = 0
    losses: list[float] = []
    log_rows: list[dict] = []
    best_params = online.copy()
    best_val = float("inf")

    def grad_step():
        batch = buffer.sample(rng, cfg.batch_size)
        y = compute_targets(batch, online, target, cfg.gamma, nets)
        caches, xvs, xcs, act = [], [], [], []
        for tr in batch:
            pid, masks = tr.parent
            net = nets[pid]
            xv, xc = gnn.snapshot_features(net, masks)
            caches.append(gnn.graph_cache(net))
            xvs.append(xv)
            xcs.append(xc)
            act.append(tr.action)
        gb = gnn.GraphBatch(caches, xvs, xcs, dtype=dtype)
        q_graph = np.arange(len(batch))
        q_var = np.asarray(act) + gb.var_offsets[:-1]
        preds, fwd = gnn.q_values(online, gb, q_graph, q_var, want_cache=True)
        err = preds - y.astype(preds.dtype)
        loss = float(np.mean(err ** 2))
        if not np.isfinite(loss):
            dump = [
                (tr.parent[0], tr.action, tr.terminal, float(y[i]), float(preds[i]))
                for i, tr in enumerate(batch)
            ]
            raise RuntimeError(f"non-finite loss {loss}; batch: {dump}")
        dq = (2.0 / len(batch)) * err
        grads = gnn.backward(online, fwd, dq)
        adam.step(online, grads)
        losses.append(loss)

    for episode in range(1, cfg.episodes + 1):
        inst_params = rb.RbParams(
            dist.m, dist.n, dist.alpha, dist.beta, dist.rho,
            seed=dist.seed + episode,
        )
        net = rb.generate(inst_params, instance_id=f"ep-{episode}")
        nets[net.instance_id] = net

        def sink(tr: Transition):
            nonlocal global_step
            buffer.push(tr)
            global_step += 1
            if len(buffer) >= cfg.batch_size:
                grad_step()

        policy = EpsilonGreedyPolicy(
            online, rng, lambda: epsilon_at(global_step, cfg)
        )
        solve(
            net, policy,
            node_cutoff=2 ** 62,
            step_cutoff=cfg.t_max,
            transition_sink=sink,
        )
        if episode % cfg.target_sync_episodes == 0:
            target = online.copy()
        if episode % cfg.val_period == 0 or episode == cfg.episodes:
            val_nodes, val_fails = validate(online, val_instances, cfg.val_node_cutoff)
            row = {
                "episode": episode,
                "global_step": global_step,
                "epsilon": epsilon_at(global_step, cfg),
                "loss_mean": float(np.mean(losses)) if losses else float("nan"),
                "val_mean_nodes": val_nodes,
                "val_mean_failures": val_fails,
            }
            losses.clear()
            log_rows.append(row)
            if val_nodes < best_val:
                best_val = val_nodes
                best_params = online.copy()
            if progress is not None:
                progress(row)

    return TrainResult(
        best_params=best_params,
        best_val_nodes=best_val,
        final_params=online,
        log_rows=log_rows,
        total_steps=global_step,
        seconds=time.perf_counter() - t0,
    )


def write_log_csv(rows: list[dict], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
