"""Seeded random CSP instance generation (model RB).

An instance class is specified by <m, n, alpha, beta, rho>: constraints of
arity m over n variables, domain size d = round(n^alpha), e = round(beta *
n * ln n) constraints, and q = round(rho * d^m) distinct disallowed tuples
per constraint. Rounding is half-up on the real value.
"""
from __future__ import annotations

import math
import os
import random
from dataclasses import dataclass

from .network import ConstraintNetwork, save_instance


@dataclass(frozen=True)
class RbParams:
    m: int
    n: int
    alpha: float
    beta: float
    rho: float
    seed: int = 0


# Named parameter families: (m, alpha, beta, rho).
PRESETS = {
    "D1": (2, 0.7, 3.0, 0.21),
    "D2": (3, 0.7, 2.5, 0.24),
}


def preset(name: str, n: int, seed: int = 0) -> RbParams:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r} (have {sorted(PRESETS)})")
    if n < 2:
        raise ValueError("n must be >= 2")
    m, alpha, beta, rho = PRESETS[name]
    return RbParams(m=m, n=n, alpha=alpha, beta=beta, rho=rho, seed=seed)


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def derive_counts(params: RbParams) -> tuple[int, int, int]:
    """Return (d, e, q) for the given parameters, validating the invariants."""
    if params.m < 2:
        raise ValueError("arity m must be >= 2")
    if params.n < 2:
        raise ValueError("n must be >= 2")
    if params.alpha <= 0 or params.beta <= 0:
        raise ValueError("alpha and beta must be positive")
    if not 0.0 < params.rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    d = round_half_up(params.n ** params.alpha)
    e = round_half_up(params.beta * params.n * math.log(params.n))
    q = round_half_up(params.rho * d ** params.m)
    if d < 2:
        raise ValueError(f"derived domain size {d} < 2")
    if e < 1:
        raise ValueError(f"derived constraint count {e} < 1")
    if not 0 < q < d ** params.m:
        raise ValueError(f"derived disallowed count {q} outside (0, {d ** params.m})")
    return d, e, q


def _decode(code: int, d: int, m: int) -> tuple[int, ...]:
    vals = []
    for _ in range(m):
        code, r = divmod(code, d)
        vals.append(r)
    return tuple(reversed(vals))


def generate(params: RbParams, instance_id: str | None = None) -> ConstraintNetwork:
    """Build one instance, deterministic in (params, seed)."""
    d, e, q = derive_counts(params)
    rng = random.Random(params.seed)
    domains = [list(range(d))] * params.n
    constraints = []
    total = d ** params.m
    for _ in range(e):
        scope = sorted(rng.sample(range(params.n), params.m))
        disallowed = set(rng.sample(range(total), q))
        allowed = [_decode(c, d, params.m) for c in range(total) if c not in disallowed]
        constraints.append((scope, allowed))
    if instance_id is None:
        instance_id = f"rb{params.m}-{params.n}-s{params.seed}"
    return ConstraintNetwork(domains, constraints, instance_id=instance_id)


def manifest_line(filename: str, params: RbParams) -> str:
    return (
        f"{filename} m={params.m} n={params.n} alpha={params.alpha} "
        f"beta={params.beta} rho={params.rho} seed={params.seed}"
    )


def generate_corpus(out_dir, name: str, n: int, count: int, seed: int) -> list[str]:
    """Write `count` instances plus a manifest; returns the instance filenames."""
    os.makedirs(out_dir, exist_ok=True)
    files = []
    lines = []
    for i in range(count):
        p = preset(name, n, seed=seed + i)
        fname = f"{name.lower()}_n{n}_{i:04d}.csp"
        net = generate(p, instance_id=os.path.splitext(fname)[0])
        save_instance(net, os.path.join(out_dir, fname))
        files.append(fname)
        lines.append(manifest_line(fname, p))
    with open(os.path.join(out_dir, "manifest.txt"), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return files
