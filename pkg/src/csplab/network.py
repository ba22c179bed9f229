"""Immutable constraint networks over explicit table constraints.

A network holds finite integer domains (small non-negative values, normally
0..d-1) and a list of constraints, each given by a scope of distinct
variables and the full table of allowed value tuples.
"""
from __future__ import annotations

import numpy as np


class InstanceFormatError(ValueError):
    """Raised when an instance file cannot be parsed."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class Constraint:
    """One table constraint: scope of distinct variable indices + allowed tuples."""

    __slots__ = ("scope", "allowed", "allowed_set", "cols")

    def __init__(self, scope, allowed):
        self.scope = tuple(int(v) for v in scope)
        self.allowed = tuple(tuple(int(x) for x in t) for t in allowed)
        self.allowed_set = frozenset(self.allowed)
        m = len(self.scope)
        if self.allowed:
            arr = np.asarray(self.allowed, dtype=np.int64)
        else:
            arr = np.empty((0, m), dtype=np.int64)
        # per-position value columns, used for support scans
        self.cols = tuple(np.ascontiguousarray(arr[:, k]) for k in range(m))

    @property
    def arity(self) -> int:
        return len(self.scope)


class ConstraintNetwork:
    """Immutable CSP instance. Do not mutate after construction."""

    def __init__(self, domains, constraints, instance_id: str = "anon"):
        self.instance_id = str(instance_id)
        self.domains = tuple(tuple(int(v) for v in d) for d in domains)
        self.n = len(self.domains)
        self.constraints = tuple(
            c if isinstance(c, Constraint) else Constraint(*c) for c in constraints
        )
        self._validate()
        self.d_max = max(max(d) for d in self.domains) + 1
        covering = [[] for _ in range(self.n)]
        for j, con in enumerate(self.constraints):
            for v in con.scope:
                covering[v].append(j)
        self.covering = tuple(tuple(c) for c in covering)
        # scratch slot for the neural module's per-network caches
        self.caches: dict = {}

    def _validate(self) -> None:
        for i, d in enumerate(self.domains):
            if not d:
                raise ValueError(f"variable {i}: empty domain")
            if any(v < 0 for v in d):
                raise ValueError(f"variable {i}: negative domain value")
            if list(d) != sorted(set(d)):
                raise ValueError(f"variable {i}: domain not sorted/distinct")
        for j, con in enumerate(self.constraints):
            if con.arity < 2:
                raise ValueError(f"constraint {j}: arity must be >= 2")
            if len(set(con.scope)) != con.arity:
                raise ValueError(f"constraint {j}: repeated variable in scope")
            if any(v < 0 or v >= self.n for v in con.scope):
                raise ValueError(f"constraint {j}: scope variable out of range")
            if len(con.allowed_set) != len(con.allowed):
                raise ValueError(f"constraint {j}: duplicate allowed tuples")
            for t in con.allowed:
                if len(t) != con.arity:
                    raise ValueError(f"constraint {j}: tuple arity mismatch")
                for k, v in enumerate(t):
                    if v not in self.domains[con.scope[k]]:
                        raise ValueError(
                            f"constraint {j}: tuple value {v} outside domain "
                            f"of variable {con.scope[k]}"
                        )

    @property
    def e(self) -> int:
        return len(self.constraints)

    def initial_member(self) -> np.ndarray:
        """Boolean (n, d_max) membership matrix of the initial domains."""
        mem = np.zeros((self.n, self.d_max), dtype=bool)
        for i, d in enumerate(self.domains):
            mem[i, list(d)] = True
        return mem


def save_instance(net: ConstraintNetwork, path) -> None:
    """Write the network in the line-based CSPINST text format."""
    lines = ["CSPINST 1", f"vars {net.n}"]
    for i, d in enumerate(net.domains):
        lines.append(f"dom {i} {len(d)} " + " ".join(str(v) for v in d))
    for j, con in enumerate(net.constraints):
        scope = " ".join(str(v) for v in con.scope)
        lines.append(f"con {j} {con.arity} {scope} {len(con.allowed)}")
        for t in con.allowed:
            lines.append("tup " + " ".join(str(v) for v in t))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_instance(path, instance_id: str | None = None) -> ConstraintNetwork:
    """Parse a CSPINST file; raises InstanceFormatError with the line number."""
    with open(path) as fh:
        raw = fh.read().splitlines()

    def ints(line_no, parts, k=None):
        try:
            vals = [int(x) for x in parts]
        except ValueError:
            raise InstanceFormatError(line_no, f"expected integers, got {parts!r}")
        if k is not None and len(vals) != k:
            raise InstanceFormatError(line_no, f"expected {k} fields, got {len(vals)}")
        return vals

    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(raw) and not raw[pos].strip():
            pos += 1
        if pos >= len(raw):
            raise InstanceFormatError(len(raw), "unexpected end of file")
        pos += 1
        return pos, raw[pos - 1].split()

    ln, parts = next_line()
    if parts != ["CSPINST", "1"]:
        raise InstanceFormatError(ln, "missing 'CSPINST 1' header")
    ln, parts = next_line()
    if len(parts) != 2 or parts[0] != "vars":
        raise InstanceFormatError(ln, "expected 'vars <n>'")
    n = ints(ln, parts[1:], 1)[0]
    if n < 1:
        raise InstanceFormatError(ln, "need at least one variable")

    domains: list[list[int]] = [None] * n  # type: ignore[list-item]
    for _ in range(n):
        ln, parts = next_line()
        if not parts or parts[0] != "dom":
            raise InstanceFormatError(ln, "expected 'dom' record")
        head = ints(ln, parts[1:3], 2)
        i, k = head
        if not 0 <= i < n:
            raise InstanceFormatError(ln, f"variable index {i} out of range")
        if domains[i] is not None:
            raise InstanceFormatError(ln, f"duplicate domain for variable {i}")
        vals = ints(ln, parts[3:], k)
        domains[i] = vals

    constraints = []
    while True:
        while pos < len(raw) and not raw[pos].strip():
            pos += 1
        if pos >= len(raw):
            break
        ln, parts = next_line()
        if parts[0] != "con":
            raise InstanceFormatError(ln, f"expected 'con' record, got {parts[0]!r}")
        if len(parts) < 4:
            raise InstanceFormatError(ln, "truncated 'con' record")
        j, m = ints(ln, parts[1:3], 2)
        rest = ints(ln, parts[3:], m + 1)
        scope, t = rest[:m], rest[m]
        tuples = []
        for _ in range(t):
            ln2, tparts = next_line()
            if tparts[0] != "tup":
                raise InstanceFormatError(ln2, "expected 'tup' record")
            tuples.append(tuple(ints(ln2, tparts[1:], m)))
        constraints.append((scope, tuples))

    try:
        if instance_id is None:
            import os

            instance_id = os.path.splitext(os.path.basename(str(path)))[0]
        return ConstraintNetwork(domains, constraints, instance_id=instance_id)
    except ValueError as exc:
        raise InstanceFormatError(0, f"invalid instance: {exc}") from exc
