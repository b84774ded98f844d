"""Pure-literal peeling down to the impure core, and sign unbalancing."""
from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import Configuration, DegreeSequence, degree_sequence

__all__ = ["PeelTrace", "peel", "unbalance", "core_degree_sequence", "has_pure_literal"]

DEFAULT_TRACKED = ((1, 0), (2, 0), (3, 0), (1, 1), (2, 1), (2, 2), (3, 1))


@dataclass
class PeelTrace:
    steps: int
    n: int
    core: Configuration
    # rows of (step, Y_0, L, Y_ij...) as raw counts
    snapshots: list = field(default_factory=list)
    tracked: tuple = DEFAULT_TRACKED

    @property
    def scaled_steps(self) -> float:
        return self.steps / self.n

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t/n", "Y_0/n", "L/n"] + [f"Y_{i}_{j}/n" for i, j in self.tracked])
            for row in self.snapshots:
                w.writerow([repr(v / self.n) for v in row])


class _IndexedSet:
    """Set with O(1) insert, delete and uniform sampling."""

    def __init__(self):
        self.items: list = []
        self.pos: dict = {}

    def add(self, x) -> None:
        if x not in self.pos:
            self.pos[x] = len(self.items)
            self.items.append(x)

    def discard(self, x) -> None:
        p = self.pos.pop(x, None)
        if p is None:
            return
        last = self.items.pop()
        if p < len(self.items):
            self.items[p] = last
            self.pos[last] = p

    def __len__(self) -> int:
        return len(self.items)

    def choice(self, rng: random.Random):
        return self.items[rng.randrange(len(self.items))]


def _snapshot(step, deg, pure, tracked) -> tuple:
    alive = int(deg.sum())
    top = max(max(k) for k in tracked) + 1
    d = np.minimum(deg, top)
    hist = np.bincount(d[:, 0] * (top + 1) + d[:, 1], minlength=(top + 1) ** 2)
    return (step, len(pure), alive, *[int(hist[i * (top + 1) + j]) for i, j in tracked])


def peel(c: Configuration, seed=None, record_stride: int | None = None,
         tracked: tuple = DEFAULT_TRACKED) -> PeelTrace:
    """Delete the clause of a uniformly random pure occurrence until none is left."""
    rng = random.Random(seed)
    n = c.n
    var_of = c.copy_variable()
    sign_of = c.copy_sign()
    clause_of = np.empty(c.copy_count, dtype=np.int64)
    clause_of[c.clauses.ravel()] = np.repeat(np.arange(c.m), 3)
    offsets = np.concatenate([[0], np.cumsum(c.degrees.sum(axis=1))])
    deg = c.degrees.copy()
    alive = np.ones(c.m, dtype=bool)
    clauses = c.clauses.tolist()
    var_l, sign_l, clause_l, off_l = var_of.tolist(), sign_of.tolist(), clause_of.tolist(), offsets.tolist()

    pure = _IndexedSet()

    def add_pure(v):
        for cid in range(off_l[v], off_l[v + 1]):
            if alive[clause_l[cid]]:
                pure.add(cid)

    for v in np.flatnonzero((deg.sum(axis=1) > 0) & (deg.min(axis=1) == 0)).tolist():
        add_pure(v)

    snaps = []
    steps = 0
    if record_stride:
        snaps.append(_snapshot(0, deg, pure, tracked))
    while len(pure):
        k = clause_l[pure.choice(rng)]
        alive[k] = False
        steps += 1
        for cid in clauses[k]:
            pure.discard(cid)
            v = var_l[cid]
            s = 0 if sign_l[cid] > 0 else 1
            deg[v, s] -= 1
            if deg[v, s] == 0 and deg[v, 1 - s] > 0:
                add_pure(v)
        if record_stride and steps % record_stride == 0:
            snaps.append(_snapshot(steps, deg, pure, tracked))
    if record_stride and steps % record_stride:
        snaps.append(_snapshot(steps, deg, pure, tracked))

    core = _restrict(c, alive)
    return PeelTrace(steps, n, core, snaps, tuple(tracked))


def _restrict(c: Configuration, keep: np.ndarray) -> Configuration:
    """Sub-configuration on the kept clauses, copies renumbered canonically."""
    kept = c.clauses[keep]
    live = np.zeros(c.copy_count, dtype=bool)
    live[kept.ravel()] = True
    new_id = np.cumsum(live) - 1
    var = c.copy_variable()
    sign = c.copy_sign()
    deg = np.zeros((c.n, 2), dtype=np.int64)
    np.add.at(deg, (var[live], (sign[live] < 0).astype(np.int64)), 1)
    return Configuration(c.n, deg, new_id[kept])


def has_pure_literal(c: Configuration) -> bool:
    d = c.degrees
    return bool(np.any((d.sum(axis=1) > 0) & (d.min(axis=1) == 0)))


def unbalance(c: Configuration) -> Configuration:
    """Flip the signs of every variable with more negative than positive copies."""
    d = c.degrees
    flip = d[:, 1] > d[:, 0]
    if not flip.any():
        return Configuration(c.n, d.copy(), c.clauses.copy())
    var = c.copy_variable()
    offsets = np.concatenate([[0], np.cumsum(d.sum(axis=1))])[:-1]
    local = np.arange(c.copy_count) - offsets[var]
    i_old = d[var, 0]
    j_old = d[var, 1]
    pos = local < i_old
    # flipped: old positive k -> new negative k (after j_old new positives),
    #          old negative k -> new positive k
    new_local = np.where(flip[var], np.where(pos, j_old + local, local - i_old), local)
    mapping = offsets[var] + new_local
    new_deg = np.where(flip[:, None], d[:, ::-1], d)
    return Configuration(c.n, new_deg, mapping[c.clauses])


def core_degree_sequence(c: Configuration, seed=None) -> DegreeSequence:
    return degree_sequence(unbalance(peel(c, seed).core))
