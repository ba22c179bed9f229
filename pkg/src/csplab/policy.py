"""Ordering policies backed by the value network."""
from __future__ import annotations

import random

import numpy as np

from . import gnn
from .search import OrderingPolicy
from .state import SearchState


def state_q_values(params: gnn.NetParams, state: SearchState, actions) -> np.ndarray:
    """Q(s, a) for each action variable of a live state."""
    batch = gnn.batch_from_state(state, dtype=params.dtype)
    q, _ = gnn.q_values(params, batch, np.zeros(len(actions), dtype=np.int64), actions)
    return q


def greedy_action(params: gnn.NetParams, state: SearchState, actions) -> int:
    """Action with minimum predicted value; ties go to the smallest index."""
    q = state_q_values(params, state, actions)
    return int(actions[int(np.argmin(q))])


class GreedyNetPolicy(OrderingPolicy):
    """Always pick the argmin-Q variable; lexicographic values."""

    def __init__(self, params: gnn.NetParams):
        self.params = params

    def choose_variable(self, state, actions):
        return greedy_action(self.params, state, actions)


class EpsilonGreedyPolicy(GreedyNetPolicy):
    """Uniform-random action with probability epsilon(), greedy otherwise."""

    def __init__(self, params: gnn.NetParams, rng: random.Random, epsilon_fn):
        super().__init__(params)
        self.rng = rng
        self.epsilon_fn = epsilon_fn

    def choose_variable(self, state, actions):
        if self.rng.random() < self.epsilon_fn():
            return int(self.rng.choice(actions))
        return super().choose_variable(state, actions)


class HybridPolicy(OrderingPolicy):
    """Net inference on the topmost layers, fallback heuristic below.

    Nodes at depth < k_depth are decided by the network, deeper ones by the
    fallback policy. Value ordering stays lexicographic throughout.
    """

    def __init__(self, params: gnn.NetParams, fallback: OrderingPolicy, k_depth: int):
        if k_depth < 0:
            raise ValueError("k_depth must be >= 0")
        self.net = GreedyNetPolicy(params)
        self.fallback = fallback
        self.k_depth = k_depth

    def choose_variable(self, state, actions):
        if state.depth < self.k_depth:
            return self.net.choose_variable(state, actions)
        return self.fallback.choose_variable(state, actions)
