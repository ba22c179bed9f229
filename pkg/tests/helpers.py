"""Shared test utilities: random instances and independent oracles."""
from __future__ import annotations

import itertools
import random

import numpy as np

from csplab.network import ConstraintNetwork
from csplab.state import SearchState


def rand_net(
    rng: random.Random,
    n_max: int = 6,
    d_max: int = 4,
    arity: int = 2,
    e_max: int = 8,
    allow_empty: bool = True,
    instance_id: str = "t",
) -> ConstraintNetwork:
    """Random table-constraint network with small dimensions."""
    n = rng.randint(arity, n_max)
    domains = [list(range(rng.randint(1, d_max))) for _ in range(n)]
    e = rng.randint(1, e_max)
    constraints = []
    for _ in range(e):
        scope = sorted(rng.sample(range(n), arity))
        full = list(itertools.product(*[domains[v] for v in scope]))
        lo = 0 if allow_empty else 1
        k = rng.randint(lo, len(full))
        allowed = sorted(rng.sample(full, k))
        constraints.append((scope, allowed))
    return ConstraintNetwork(domains, constraints, instance_id=instance_id)


def consistent_rand_net(rng: random.Random, **kw) -> ConstraintNetwork:
    """Random network whose root propagation succeeds."""
    kw.setdefault("allow_empty", False)
    while True:
        net = rand_net(rng, **kw)
        if SearchState(net).propagate(range(net.e)) is None:
            return net


def domains_of(state: SearchState) -> list[set[int]]:
    return [set(np.nonzero(state.mem[i])[0].tolist()) for i in range(state.net.n)]


def brute_solutions(net: ConstraintNetwork, domains=None) -> list[tuple[int, ...]]:
    """All assignments satisfying every constraint, by exhaustive enumeration."""
    if domains is None:
        domains = [list(d) for d in net.domains]
    sols = []
    for combo in itertools.product(*domains):
        ok = True
        for con in net.constraints:
            if tuple(combo[v] for v in con.scope) not in con.allowed_set:
                ok = False
                break
        if ok:
            sols.append(tuple(combo))
    return sols


def naive_gac(net: ConstraintNetwork, domains: list[set[int]]):
    """Repeat-until-stable support filtering; None when a domain empties."""
    doms = [set(d) for d in domains]
    changed = True
    while changed:
        changed = False
        for con in net.constraints:
            for k, v in enumerate(con.scope):
                supported = set()
                for t in con.allowed:
                    if all(t[i] in doms[con.scope[i]] for i in range(len(t))):
                        supported.add(t[k])
                new = doms[v] & supported
                if new != doms[v]:
                    doms[v] = new
                    changed = True
                    if not new:
                        return None
    return doms


def random_restriction(state: SearchState, rng: random.Random) -> None:
    """Trailed random value removals, no propagation (partial assignment setup)."""
    n = state.net.n
    for _ in range(rng.randint(0, 2 * n)):
        var = rng.randrange(n)
        vals = state.domain_values(var)
        if len(vals) > 1:
            state.remove_value(var, rng.choice(vals))


def collect_transitions(net, policy, **kw):
    """Solve while recording every emitted transition."""
    from csplab.search import solve

    out = []
    stats = solve(net, policy, transition_sink=out.append, **kw)
    return stats, out


def mask_popcounts(masks) -> list[int]:
    return [bin(m).count("1") for m in masks]
