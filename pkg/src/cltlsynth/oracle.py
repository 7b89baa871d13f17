"""Ground-truth semantics, independent of every encoder.

Evaluates inner formulas over single lasso traces and outer formulas over
collective executions, decides both exactly through the eventual
periodicity of the execution, searches for asynchronous counterexamples
to robust satisfaction, and synthesizes solutions by exhaustive search at
tiny scale for cross-checking the optimization pipeline.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .formula import (IAlways, IAnd, IAtom, IEventually, INext, INot, IOr,
                      IRelease, ITrue, IUntil, InnerFormula, OAlways, OAnd,
                      OEventually, ONext, ONot, OOr, ORelease, OTrue, OUntil,
                      OuterFormula, Tcp)
from .system import MultiRobotInstance, TransitionSystem
from .trajectory import LassoTrajectory


# ---------------------------------------------------------------------------
# Labeled lasso traces
# ---------------------------------------------------------------------------

class Lasso:
    """A labeled lasso word; evaluation positions wrap through the loop."""

    def __init__(self, labels: Sequence[frozenset], loop_start: int,
                 states: Optional[Sequence[int]] = None):
        h = len(labels) - 1
        if h < 1 or not (0 <= loop_start <= h - 1):
            raise ValueError("need labels for positions 0..h with loop_start < h")
        self.labels = tuple(frozenset(s) for s in labels)
        self.loop_start = loop_start
        self.states = tuple(states) if states is not None else None
        self._memo: dict = {}

    @classmethod
    def from_trajectory(cls, traj: LassoTrajectory, ts: TransitionSystem) -> "Lasso":
        return cls([ts.labels[s] for s in traj.states], traj.loop_start, traj.states)

    @property
    def horizon(self) -> int:
        return len(self.labels) - 1

    @property
    def period(self) -> int:
        return self.horizon - self.loop_start

    def position(self, k: int) -> int:
        # Position h is identified with the loop start, so canonical
        # positions always lie in [0, h-1].
        if k < self.horizon:
            return k
        return self.loop_start + (k - self.loop_start) % self.period

    def label_at(self, k: int) -> frozenset:
        return self.labels[self.position(k)]


def eval_inner(lasso: Lasso, t: int, phi: InnerFormula) -> bool:
    """Exact LTL satisfaction of ``phi`` at position ``t`` of the lasso's
    infinite expansion.  Until/release are decided by scanning one full
    period past the later of ``t`` and the loop, which covers every
    distinct suffix."""
    t = lasso.position(t)
    key = (phi, t)
    memo = lasso._memo
    if key in memo:
        return memo[key]
    if isinstance(phi, ITrue):
        value = True
    elif isinstance(phi, IAtom):
        value = phi.name in lasso.labels[t]
    elif isinstance(phi, INot):
        value = not eval_inner(lasso, t, phi.child)
    elif isinstance(phi, IAnd):
        value = all(eval_inner(lasso, t, c) for c in phi.children)
    elif isinstance(phi, IOr):
        value = any(eval_inner(lasso, t, c) for c in phi.children)
    elif isinstance(phi, INext):
        value = eval_inner(lasso, t + 1, phi.child)
    elif isinstance(phi, IEventually):
        end = max(t, lasso.loop_start) + lasso.period
        value = any(eval_inner(lasso, j, phi.child) for j in range(t, end + 1))
    elif isinstance(phi, IAlways):
        end = max(t, lasso.loop_start) + lasso.period
        value = all(eval_inner(lasso, j, phi.child) for j in range(t, end + 1))
    elif isinstance(phi, IUntil):
        end = max(t, lasso.loop_start) + lasso.period
        value = False
        for j in range(t, end + 1):
            if eval_inner(lasso, j, phi.rhs):
                value = True
                break
            if not eval_inner(lasso, j, phi.lhs):
                break
    elif isinstance(phi, IRelease):
        end = max(t, lasso.loop_start) + lasso.period
        value = True
        for j in range(t, end + 1):
            if not eval_inner(lasso, j, phi.rhs):
                value = False
                break
            if eval_inner(lasso, j, phi.lhs):
                break
    else:
        raise TypeError(f"not an inner formula: {phi!r}")
    memo[key] = value
    return value


# ---------------------------------------------------------------------------
# Collective executions
# ---------------------------------------------------------------------------

class CollectiveExecution:
    """Local counters for every robot, represented by an explicit increment
    matrix up to some horizon; after it, every counter advances each step
    (which keeps counters divergent and the spread constant)."""

    def __init__(self, increments: Union[np.ndarray, Sequence[Sequence[int]]]):
        inc = np.asarray(increments, dtype=np.int64)
        if inc.ndim != 2:
            raise ValueError("increments must be a (steps, robots) matrix")
        if inc.size and (inc.min() < 0 or inc.max() > 1):
            raise ValueError("increments are 0/1")
        self.increments = inc
        # cumulative[t][n] = k_n(t); row 0 is all zeros
        self.cumulative = np.vstack([np.zeros((1, inc.shape[1]), dtype=np.int64),
                                     np.cumsum(inc, axis=0)])

    @classmethod
    def synchronous(cls, n_robots: int) -> "CollectiveExecution":
        """The globally synchronous execution: k_n(t) = t."""
        return cls(np.zeros((0, n_robots), dtype=np.int64))

    @property
    def n_robots(self) -> int:
        return self.increments.shape[1]

    @property
    def horizon(self) -> int:
        return self.increments.shape[0]

    def counter(self, n: int, t: int) -> int:
        if t <= self.horizon:
            return int(self.cumulative[t][n])
        return int(self.cumulative[self.horizon][n]) + (t - self.horizon)

    def counters(self, t: int) -> tuple[int, ...]:
        if t <= self.horizon:
            return tuple(int(x) for x in self.cumulative[t])
        tail = t - self.horizon
        return tuple(int(x) + tail for x in self.cumulative[self.horizon])

    def anchor(self, t: int) -> int:
        return min(self.counters(t))

    def max_spread(self) -> int:
        if self.n_robots <= 1:
            return 0
        spreads = self.cumulative.max(axis=1) - self.cumulative.min(axis=1)
        return int(spreads.max())


def anchor_map(execution: CollectiveExecution, t: int) -> int:
    """Anchor time: the smallest local counter value at global time t."""
    return execution.anchor(t)


# ---------------------------------------------------------------------------
# Outer evaluation
# ---------------------------------------------------------------------------

class CollectionOracle:
    """Evaluator for a fixed collection of lassos; inner results are cached
    across executions since they depend only on counter values."""

    def __init__(self, lassos: Sequence[Lasso]):
        self.lassos = list(lassos)

    def tcp_count(self, tcp: Tcp, counters: Sequence[int]) -> int:
        if isinstance(tcp.group, str):
            raise ValueError(f"unresolved robot group {tcp.group!r}")
        scope = range(len(self.lassos)) if tcp.group is None else sorted(tcp.group)
        return sum(
            1 for n in scope if eval_inner(self.lassos[n], counters[n], tcp.inner))

    def evaluate(self, execution: CollectiveExecution, mu: OuterFormula, t: int = 0) -> bool:
        if execution.n_robots != len(self.lassos):
            raise ValueError("execution robot count differs from the collection")
        periods = [l.period for l in self.lassos]
        joint_period = math.lcm(*periods) if periods else 1
        t_rep = execution.horizon
        # After lock, every robot is inside its loop, so the collective state
        # is periodic in global time with the joint period.
        lock = t_rep + max(
            [0] + [l.loop_start - execution.counter(n, t_rep)
                   for n, l in enumerate(self.lassos)])
        memo: dict = {}

        def canon(u: int) -> int:
            if u <= lock:
                return u
            return lock + (u - lock) % joint_period

        def ev(node: OuterFormula, u: int) -> bool:
            u = canon(u)
            key = (node, u)
            if key in memo:
                return memo[key]
            if isinstance(node, OTrue):
                value = True
            elif isinstance(node, Tcp):
                value = self.tcp_count(node, execution.counters(u)) >= node.m
            elif isinstance(node, ONot):
                value = not ev(node.child, u)
            elif isinstance(node, OAnd):
                value = all(ev(c, u) for c in node.children)
            elif isinstance(node, OOr):
                value = any(ev(c, u) for c in node.children)
            elif isinstance(node, ONext):
                value = ev(node.child, u + 1)
            elif isinstance(node, OEventually):
                end = max(u, lock) + joint_period
                value = any(ev(node.child, j) for j in range(u, end + 1))
            elif isinstance(node, OAlways):
                end = max(u, lock) + joint_period
                value = all(ev(node.child, j) for j in range(u, end + 1))
            elif isinstance(node, OUntil):
                end = max(u, lock) + joint_period
                value = False
                for j in range(u, end + 1):
                    if ev(node.rhs, j):
                        value = True
                        break
                    if not ev(node.lhs, j):
                        break
            elif isinstance(node, ORelease):
                end = max(u, lock) + joint_period
                value = True
                for j in range(u, end + 1):
                    if not ev(node.rhs, j):
                        value = False
                        break
                    if ev(node.lhs, j):
                        break
            else:
                raise TypeError(f"not an outer formula: {node!r}")
            memo[key] = value
            return value

        return ev(mu, t)


def eval_outer(lassos: Sequence[Lasso], execution: CollectiveExecution,
               t: int, mu: OuterFormula) -> bool:
    """Exact satisfaction of ``mu`` by the executed collection at time ``t``."""
    return CollectionOracle(lassos).evaluate(execution, mu, t)


# ---------------------------------------------------------------------------
# Robust falsification search
# ---------------------------------------------------------------------------

@dataclass
class Verdict:
    """Outcome of a bounded falsification search.

    ``verified_bounded`` means no counterexample exists *within the searched
    window*; it is not a proof over all executions unless the search was
    exhaustive and the window arguments cover the formula's horizon.
    """

    status: str  # "verified_bounded" | "falsified"
    counterexample: Optional[tuple[CollectiveExecution, int]] = None
    stats: dict = field(default_factory=dict)

    @property
    def falsified(self) -> bool:
        return self.status == "falsified"


def _valid_steps(counters: tuple[int, ...], tau: int) -> Iterable[tuple[int, ...]]:
    """Increment vectors keeping the counter spread within tau, in ascending
    lexicographic order."""
    n = len(counters)
    for bits in itertools.product((0, 1), repeat=n):
        new = tuple(c + b for c, b in zip(counters, bits))
        if max(new) - min(new) <= tau:
            yield bits


def _count_sequences(n: int, tau: int, max_t: int, cap: int) -> int:
    """Number of tau-bounded counter sequences of length max_t, halting at cap."""
    total = 0
    stack = [((0,) * n, 0)]
    while stack:
        counters, depth = stack.pop()
        if depth == max_t:
            total += 1
            if total > cap:
                return total
            continue
        for bits in _valid_steps(counters, tau):
            stack.append((tuple(c + b for c, b in zip(counters, bits)), depth + 1))
    return total


def check_robust(lassos: Sequence[Lasso], mu: OuterFormula, tau: int,
                 max_T: Optional[int] = None, enumeration_cap: int = 100000,
                 seed: int = 0) -> Verdict:
    """Search for a tau-bounded execution and a time with anchor 0 violating
    ``mu``.  Exhaustive when the number of executions fits the cap, else a
    seeded random sample.  The first counterexample in exhaustive mode is
    the lexicographically least increment matrix."""
    n = len(lassos)
    if max_T is None:
        max_T = max(l.horizon for l in lassos) + tau + 1
    oracle = CollectionOracle(lassos)
    total = _count_sequences(n, tau, max_T, enumeration_cap)
    exhaustive = total <= enumeration_cap
    evaluated = 0

    def violation(increments: list[tuple[int, ...]]) -> Optional[tuple[CollectiveExecution, int]]:
        nonlocal evaluated
        execution = CollectiveExecution(np.array(increments, dtype=np.int64))
        for t in range(max_T + 1):
            if execution.anchor(t) == 0:
                evaluated += 1
                if not oracle.evaluate(execution, mu, t):
                    return execution, t
        return None

    if exhaustive:
        def dfs(counters: tuple[int, ...], prefix: list[tuple[int, ...]]):
            if len(prefix) == max_T:
                return violation(prefix)
            for bits in _valid_steps(counters, tau):
                found = dfs(tuple(c + b for c, b in zip(counters, bits)), prefix + [bits])
                if found:
                    return found
            return None

        found = dfs((0,) * n, [])
    else:
        rng = np.random.default_rng(seed)
        found = None
        for _ in range(enumeration_cap):
            counters = (0,) * n
            increments = []
            for _ in range(max_T):
                options = list(_valid_steps(counters, tau))
                bits = options[rng.integers(len(options))]
                increments.append(bits)
                counters = tuple(c + b for c, b in zip(counters, bits))
            found = violation(increments)
            if found:
                break

    stats = {"mode": "exhaustive" if exhaustive else "sampled",
             "sequences": total if exhaustive else enumeration_cap,
             "evaluations": evaluated, "max_T": max_T}
    if found:
        return Verdict("falsified", found, stats)
    return Verdict("verified_bounded", None, stats)


def tcp_windowed_violation(lassos: Sequence[Lasso], tcp: Tcp, tau: int,
                           t: int) -> Optional[tuple[int, ...]]:
    """Anchored window check for a single counting proposition: a local-time
    combination k_n in [t, t+tau] with min = t where fewer than m robots
    satisfy the inner formula, or None."""
    n = len(lassos)
    oracle = CollectionOracle(lassos)
    for combo in itertools.product(range(t, t + tau + 1), repeat=n):
        if min(combo) != t:
            continue
        if oracle.tcp_count(tcp, combo) < tcp.m:
            return combo
    return None


# ---------------------------------------------------------------------------
# Exhaustive synthesis at tiny scale
# ---------------------------------------------------------------------------

def _enumerate_paths(ts: TransitionSystem, init: int, h: int) -> list[tuple[int, ...]]:
    paths: list[tuple[int, ...]] = []

    def dfs(path: list[int]):
        if len(path) == h + 1:
            paths.append(tuple(path))
            return
        for succ in ts.successors(path[-1]):
            path.append(succ)
            dfs(path)
            path.pop()

    dfs([init])
    return paths


def brute_force_synth(inst: MultiRobotInstance, mu: OuterFormula, h: int,
                      tau: int = 0, space_cap: int = 10_000_000,
                      max_T: Optional[int] = None,
                      enumeration_cap: int = 100000) -> Optional[list[LassoTrajectory]]:
    """First (lexicographic) joint lasso with a common loop point whose
    collection satisfies ``mu`` (robustly, when tau > 0); None if the whole
    space is exhausted without a hit."""
    n = inst.n_robots
    largest = max(ts.n_states for ts in inst.systems)
    if largest ** (n * (h + 1)) > space_cap:
        raise ValueError(
            f"joint search space {largest}^{n * (h + 1)} exceeds the cap {space_cap}")
    per_robot = [_enumerate_paths(ts, s0, h)
                 for ts, s0 in zip(inst.systems, inst.initial_states)]
    if any(not paths for paths in per_robot):
        return None
    for joint in itertools.product(*per_robot):
        for l in range(h):
            if not all(path[h] == path[l] for path in joint):
                continue
            trajectories = [LassoTrajectory(path, l) for path in joint]
            lassos = [Lasso.from_trajectory(traj, ts)
                      for traj, ts in zip(trajectories, inst.systems)]
            if tau == 0:
                ok = eval_outer(lassos, CollectiveExecution.synchronous(n), 0, mu)
            else:
                verdict = check_robust(lassos, mu, tau, max_T=max_T,
                                       enumeration_cap=enumeration_cap)
                if verdict.stats["mode"] != "exhaustive":
                    raise ValueError("enumeration cap too small for exhaustive search")
                ok = not verdict.falsified
            if ok:
                return trajectories
    return None
