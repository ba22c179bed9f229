"""Depth-first backtracking search with 2-way branching.

At each decision node the ordering policy is queried once and the chosen
(variable, value) pair is cached: the left child posts var = val, the right
child (created only when the search backtracks into the node) posts
var != val. Both children are recorded against the same cached action.
"""
from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from .network import ConstraintNetwork
from .state import SearchState

SAT = "sat"
UNSAT = "unsat"
CUTOFF = "cutoff"

DEFAULT_NODE_CUTOFF = 500_000


def action_set(state: SearchState) -> list[int]:
    """Unbounded variables (|domain| > 1) in ascending index order."""
    return [int(v) for v in np.nonzero(state.sizes > 1)[0]]


def lexicographic_value(state: SearchState, var: int) -> int:
    """Minimum value remaining in the variable's domain."""
    row = state.mem[var]
    idx = int(np.argmax(row))
    if not row[idx]:
        raise ValueError(f"variable {var} has an empty domain")
    return idx


class OrderingPolicy:
    """Variable/value selection callbacks driving the solver."""

    # set by policies that want assignment-impact observations
    observes_assignments = False

    def choose_variable(self, state: SearchState, actions: list[int]) -> int:
        raise NotImplementedError

    def choose_value(self, state: SearchState, var: int) -> int:
        return lexicographic_value(state, var)

    def prepare_root(self, state: SearchState) -> None:
        """Called once after root propagation, before the first decision."""

    def observe_assignment(self, var: int, val: int, d_before: float, d_after: float) -> None:
        """Called after each assignment child with search-space products."""


@dataclass
class Transition:
    """One child creation: (s, a, s') with unit cost."""

    parent: tuple[str, tuple[int, ...]]
    action: int
    child: tuple[str, tuple[int, ...]]
    reward: int = 1
    terminal: bool = False


@dataclass
class SearchStats:
    solved: str = CUTOFF
    nodes: int = 0
    failures: int = 0
    steps: int = 0
    inference_seconds: float = 0.0
    total_seconds: float = 0.0
    solution: tuple[int, ...] | None = None


@dataclass
class _Node:
    level: int
    var: int
    val: int
    branch: int = 0  # 0 = assign pending, 1 = refute pending, 2 = exhausted


def _mask_hash(masks: tuple[int, ...]) -> str:
    h = hashlib.sha1(repr(masks).encode())
    return h.hexdigest()[:12]


def solve(
    net: ConstraintNetwork,
    policy: OrderingPolicy,
    node_cutoff: int = DEFAULT_NODE_CUTOFF,
    step_cutoff: int | None = None,
    transition_sink=None,
    trace=None,
) -> SearchStats:
    """Solve one instance; the root propagation counts as node 1.

    `transition_sink` receives a Transition per created child; `trace` is an
    optional text stream getting one `T <parent> <action> <child> <terminal>`
    line per transition.
    """
    if node_cutoff < 1:
        raise ValueError("node_cutoff must be >= 1")
    if step_cutoff is not None and step_cutoff < 1:
        raise ValueError("step_cutoff must be >= 1")
    t_start = time.perf_counter()
    stats = SearchStats(nodes=1)
    state = SearchState(net)
    emitting = transition_sink is not None or trace is not None

    def emit(parent_masks, act, terminal):
        child_masks = state.masks()
        tr = Transition(
            parent=(net.instance_id, parent_masks),
            action=act,
            child=(net.instance_id, child_masks),
            terminal=terminal,
        )
        if transition_sink is not None:
            transition_sink(tr)
        if trace is not None:
            trace.write(
                f"T {_mask_hash(parent_masks)} {act} "
                f"{_mask_hash(child_masks)} {int(terminal)}\n"
            )

    def decide() -> _Node:
        actions = action_set(state)
        t0 = time.perf_counter()
        var = policy.choose_variable(state, actions)
        val = policy.choose_value(state, var)
        stats.inference_seconds += time.perf_counter() - t0
        if state.sizes[var] <= 1:
            raise RuntimeError(f"policy chose bounded variable {var}")
        if not state.mem[var, val]:
            raise RuntimeError(f"policy chose value {val} outside domain of {var}")
        return _Node(level=state.level, var=var, val=val)

    root = state.propagate(range(net.e))
    if root is not None:
        stats.failures = 1
        stats.solved = UNSAT
        stats.total_seconds = time.perf_counter() - t_start
        return stats
    if state.all_bound():
        if not state.is_solution():
            raise RuntimeError("consistent all-singleton state failed final check")
        stats.solved = SAT
        stats.solution = state.assignment()
        stats.total_seconds = time.perf_counter() - t_start
        return stats

    t0 = time.perf_counter()
    policy.prepare_root(state)
    stats.inference_seconds += time.perf_counter() - t0

    stack = [decide()]
    verdict = None
    while stack:
        nd = stack[-1]
        state.undo_to_level(nd.level)
        if nd.branch == 2:
            stack.pop()
            continue
        if stats.nodes >= node_cutoff or (
            step_cutoff is not None and stats.steps >= step_cutoff
        ):
            verdict = CUTOFF
            break
        parent_masks = state.masks() if emitting else None
        want_impact = nd.branch == 0 and policy.observes_assignments
        if want_impact:
            d_before = float(np.prod(state.sizes, dtype=np.float64))
        branch = nd.branch
        nd.branch += 1
        if branch == 0:
            res = state.assign(nd.var, nd.val)
        else:
            res = state.refute(nd.var, nd.val)
        stats.nodes += 1
        stats.steps += 1
        if res is not None:
            stats.failures += 1
            if emitting:
                emit(parent_masks, nd.var, True)
            if want_impact:
                policy.observe_assignment(nd.var, nd.val, d_before, 0.0)
            state.undo_to_level(nd.level)
        else:
            if want_impact:
                d_after = float(np.prod(state.sizes, dtype=np.float64))
                policy.observe_assignment(nd.var, nd.val, d_before, d_after)
            if state.all_bound():
                if emitting:
                    emit(parent_masks, nd.var, True)
                if not state.is_solution():
                    raise RuntimeError(
                        "consistent all-singleton state failed final check"
                    )
                verdict = SAT
                stats.solution = state.assignment()
                break
            if emitting:
                emit(parent_masks, nd.var, False)
            stack.append(decide())

    stats.solved = UNSAT if verdict is None else verdict
    stats.total_seconds = time.perf_counter() - t_start
    return stats
