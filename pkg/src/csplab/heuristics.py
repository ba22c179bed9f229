"""Hand-crafted variable-ordering baselines: MinDom, Dom/Ddeg, Impact, random."""
from __future__ import annotations

import math
import random

import numpy as np

from .search import OrderingPolicy, action_set
from .state import SearchState


class MinDomPolicy(OrderingPolicy):
    """Smallest current domain; ties broken by smallest variable index."""

    def choose_variable(self, state, actions):
        sizes = state.sizes
        best = actions[0]
        for v in actions[1:]:
            if sizes[v] < sizes[best]:
                best = v
        return int(best)


def dom_ddeg_scores(state: SearchState, actions: list[int]) -> list[float]:
    """|domain| / Ddeg per action; Ddeg = covering constraints with another
    unbounded variable, scoring +inf when Ddeg is zero."""
    sizes = state.sizes
    scores = []
    for v in actions:
        ddeg = 0
        for j in state.net.covering[v]:
            if any(u != v and sizes[u] > 1 for u in state.net.constraints[j].scope):
                ddeg += 1
        scores.append(float(sizes[v]) / ddeg if ddeg else math.inf)
    return scores


class DomDdegPolicy(OrderingPolicy):
    """Smallest Dom/Ddeg ratio; ties broken by smallest variable index."""

    def choose_variable(self, state, actions):
        scores = dom_ddeg_scores(state, actions)
        best = 0
        for i in range(1, len(actions)):
            if scores[i] < scores[best]:
                best = i
        return int(actions[best])


class ImpactStore:
    """Running-average impact per (variable, value) pair."""

    def __init__(self):
        self.avg: dict[tuple[int, int], float] = {}
        self.count: dict[tuple[int, int], int] = {}

    def update(self, var: int, val: int, impact: float) -> None:
        key = (var, val)
        c = self.count.get(key, 0)
        self.avg[key] = (self.avg.get(key, 0.0) * c + impact) / (c + 1)
        self.count[key] = c + 1

    def get(self, var: int, val: int) -> float:
        return self.avg.get((var, val), 0.0)


class ImpactPolicy(OrderingPolicy):
    """Maximum summed search-space reduction.

    The impact of an assignment is 1 - D_after/D_before where D is the
    product of all current domain sizes before/after assignment plus
    propagation (a failed assignment counts as D_after = 0, i.e. impact 1).
    Every (variable, value) pair is probed once at the root; afterwards the
    running averages are refreshed from the assignments the search makes.
    Picks the variable with maximum summed average impact, then the value
    with minimum average impact.
    """

    observes_assignments = True

    def __init__(self):
        self.store = ImpactStore()

    def prepare_root(self, state):
        base = state.level
        d_before = float(np.prod(state.sizes, dtype=np.float64))
        for var in action_set(state):
            for val in state.domain_values(var):
                res = state.assign(var, val)
                if res is not None:
                    d_after = 0.0
                else:
                    d_after = float(np.prod(state.sizes, dtype=np.float64))
                state.undo_to_level(base)
                self.store.update(var, val, 1.0 - d_after / d_before)

    def observe_assignment(self, var, val, d_before, d_after):
        self.store.update(var, val, 1.0 - d_after / d_before)

    def choose_variable(self, state, actions):
        best, best_score = actions[0], -1.0
        for v in actions:
            score = sum(self.store.get(v, val) for val in state.domain_values(v))
            if score > best_score:
                best, best_score = v, score
        return int(best)

    def choose_value(self, state, var):
        vals = state.domain_values(var)
        best, best_imp = vals[0], math.inf
        for val in vals:
            imp = self.store.get(var, val)
            if imp < best_imp:
                best, best_imp = val, imp
        return int(best)


class RandomPolicy(OrderingPolicy):
    """Uniform choice over the action set (training baseline / epsilon arm)."""

    def __init__(self, rng: random.Random):
        self.rng = rng

    def choose_variable(self, state, actions):
        return int(self.rng.choice(actions))
