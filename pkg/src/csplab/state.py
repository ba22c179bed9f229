"""Mutable search state: trailed domains, live-tuple counts, GAC propagation.

Propagation enforces generalized arc consistency on the table constraints:
a value survives only while some allowed tuple using it is fully alive in
the current domains. All domain/count changes are trailed so any prefix of
the search path can be undone exactly.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from .network import ConstraintNetwork


class SearchState:
    """Current subinstance of a network during backtracking search.

    Propagation methods return ``None`` when consistent, or the index of the
    first variable whose domain wiped out (the trail is left intact so the
    caller can roll back). ``live`` holds per-constraint live-tuple counts;
    they match a from-scratch recount at every consistent fixpoint and after
    every undo (a failed propagation aborts early and leaves counts pending
    rollback).
    """

    def __init__(self, net: ConstraintNetwork):
        self.net = net
        self.mem = net.initial_member()
        self.sizes = self.mem.sum(axis=1).astype(np.int64)
        self.live = np.array([len(c.allowed) for c in net.constraints], dtype=np.int64)
        self.trail: list[tuple] = []
        self.level_marks: list[int] = []
        if net.d_max <= 63:
            self._mask_weights = (np.uint64(1) << np.arange(net.d_max, dtype=np.uint64))
        else:
            self._mask_weights = None

    # ----- levels & trail -------------------------------------------------

    @property
    def level(self) -> int:
        return len(self.level_marks)

    @property
    def depth(self) -> int:
        """Search-tree depth: number of branching decisions currently applied."""
        return len(self.level_marks)

    def push_level(self) -> None:
        self.level_marks.append(len(self.trail))

    def undo_to_level(self, level: int) -> None:
        if not 0 <= level <= len(self.level_marks):
            raise ValueError(f"bad level {level} (current {self.level})")
        mem, sizes, live = self.mem, self.sizes, self.live
        while len(self.level_marks) > level:
            mark = self.level_marks.pop()
            trail = self.trail
            while len(trail) > mark:
                entry = trail.pop()
                if entry[0] == "d":
                    _, v, row, sz = entry
                    mem[v] = row
                    sizes[v] = sz
                else:
                    _, j, cnt = entry
                    live[j] = cnt

    # ----- queries ----------------------------------------------------------

    def domain_values(self, var: int) -> list[int]:
        return [int(v) for v in np.nonzero(self.mem[var])[0]]

    def unbounded(self) -> np.ndarray:
        return np.nonzero(self.sizes > 1)[0]

    def all_bound(self) -> bool:
        return bool((self.sizes == 1).all())

    def assignment(self) -> tuple[int, ...]:
        if not self.all_bound():
            raise ValueError("assignment requested on a state with open domains")
        return tuple(int(v) for v in self.mem.argmax(axis=1))

    def is_solution(self) -> bool:
        """All domains singleton and every induced tuple explicitly allowed."""
        if not self.all_bound():
            return False
        vals = self.mem.argmax(axis=1)
        for con in self.net.constraints:
            if tuple(int(vals[v]) for v in con.scope) not in con.allowed_set:
                return False
        return True

    def masks(self) -> tuple[int, ...]:
        """Current domains as one little-endian bit-mask integer per variable."""
        if self._mask_weights is not None:
            packed = self.mem.astype(np.uint64) @ self._mask_weights
            return tuple(int(x) for x in packed)
        out = []
        for i in range(self.net.n):
            bits = np.packbits(self.mem[i], bitorder="little").tobytes()
            out.append(int.from_bytes(bits, "little"))
        return tuple(out)

    # ----- mutation ---------------------------------------------------------

    def remove_value(self, var: int, val: int) -> None:
        """Low-level trailed removal without propagation."""
        if not self.mem[var, val]:
            raise ValueError(f"value {val} not in current domain of variable {var}")
        self.trail.append(("d", var, self.mem[var].copy(), int(self.sizes[var])))
        self.mem[var, val] = False
        self.sizes[var] -= 1

    def propagate(self, seed_constraints) -> int | None:
        """Run GAC to a fixpoint starting from the given constraint indices."""
        net = self.net
        mem, sizes, live, trail = self.mem, self.sizes, self.live, self.trail
        e = net.e
        queued = np.zeros(e, dtype=bool)
        queue: deque[int] = deque()
        for j in seed_constraints:
            if not queued[j]:
                queued[j] = True
                queue.append(j)
        while queue:
            j = queue.popleft()
            queued[j] = False
            con = net.constraints[j]
            scope, cols = con.scope, con.cols
            alive = mem[scope[0], cols[0]]
            for k in range(1, len(scope)):
                alive = alive & mem[scope[k], cols[k]]
            cnt = int(alive.sum())
            if cnt != live[j]:
                trail.append(("c", j, int(live[j])))
                live[j] = cnt
            for k, v in enumerate(scope):
                keep = np.zeros(net.d_max, dtype=bool)
                keep[cols[k][alive]] = True
                newrow = mem[v] & keep
                ns = int(newrow.sum())
                if ns == sizes[v]:
                    continue
                trail.append(("d", v, mem[v].copy(), int(sizes[v])))
                mem[v] = newrow
                sizes[v] = ns
                if ns == 0:
                    return v
                for j2 in net.covering[v]:
                    if j2 != j and not queued[j2]:
                        queued[j2] = True
                        queue.append(j2)
        return None

    def assign(self, var: int, val: int) -> int | None:
        """Post var = val at a new level and propagate."""
        if not self.mem[var, val]:
            raise ValueError(f"assign({var}, {val}): value not in current domain")
        self.push_level()
        if self.sizes[var] == 1:
            return None
        self.trail.append(("d", var, self.mem[var].copy(), int(self.sizes[var])))
        self.mem[var] = False
        self.mem[var, val] = True
        self.sizes[var] = 1
        return self.propagate(self.net.covering[var])

    def refute(self, var: int, val: int) -> int | None:
        """Post var != val at a new level and propagate."""
        if not self.mem[var, val]:
            raise ValueError(f"refute({var}, {val}): value not in current domain")
        self.push_level()
        self.remove_value(var, val)
        if self.sizes[var] == 0:
            return var
        return self.propagate(self.net.covering[var])

    # ----- verification helper (used by tests) ------------------------------

    def recount_live(self) -> np.ndarray:
        """From-scratch live-tuple counts; must always equal ``self.live``."""
        out = np.zeros(self.net.e, dtype=np.int64)
        for j, con in enumerate(self.net.constraints):
            if not con.allowed:
                continue
            alive = self.mem[con.scope[0], con.cols[0]]
            for k in range(1, len(con.scope)):
                alive = alive & self.mem[con.scope[k], con.cols[k]]
            out[j] = alive.sum()
        return out
