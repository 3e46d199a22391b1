"""Exact branch-and-bound over machine orderings.

Both searches branch on the disjunction of a same-machine task pair. A node
fixes some pair orientations. Dropping the remaining no-overlap constraints
gives a relaxation that is solved exactly: by longest paths for the makespan
and by the proximal LP for the L1 distance. When the relaxed solution happens
to have no overlapping pair it is feasible, and the node becomes a leaf.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .instance import JssInstance, Schedule, is_feasible, makespan
from .lpkernel import (
    Arc,
    InfeasibleError,
    Ordering,
    _lexmin_schedule,
    earliest_starts,
    proximal_relaxation,
)


@dataclass(frozen=True)
class SolveBudget:
    time_limit: float = 60.0
    node_limit: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")
        if self.node_limit is not None and self.node_limit < 1:
            raise ValueError("node_limit must be positive")

    def with_seed(self, seed: int) -> "SolveBudget":
        return SolveBudget(self.time_limit, self.node_limit, seed)


@dataclass(frozen=True)
class SolveResult:
    schedule: Schedule
    objective: int
    optimal: bool
    nodes_explored: int
    elapsed: float


class _Search:
    """Bookkeeping shared by both searches: pairs, budget and seeded ties."""

    def __init__(self, inst: JssInstance, budget: SolveBudget):
        self.inst = inst
        self.budget = budget
        self.rng = np.random.default_rng(budget.seed)
        T = inst.machines
        self.d = inst.duration.reshape(-1)
        pairs = [(a[0] * T + a[1], b[0] * T + b[1]) for a, b in inst.machine_pairs()]
        # seeded tie-break rank among pairs with equal duration sums
        rank = self.rng.permutation(len(pairs))
        self.pairs = pairs
        self.priority = {p: (int(self.d[p[0]] + self.d[p[1]]), int(r)) for p, r in zip(pairs, rank)}
        self.nodes = 0
        self.t0 = time.perf_counter()
        self.truncated = False

    def out_of_budget(self) -> bool:
        if self.budget.node_limit is not None and self.nodes >= self.budget.node_limit:
            self.truncated = True
        elif self.nodes % 64 == 0 and time.perf_counter() - self.t0 > self.budget.time_limit:
            self.truncated = True
        return self.truncated

    def conflicts(self, s: np.ndarray, fixed: set) -> List[Tuple[int, int]]:
        d = self.d
        out = []
        for a, b in self.pairs:
            if (a, b) in fixed:
                continue
            if s[a] < s[b] + d[b] and s[b] < s[a] + d[a]:
                out.append((a, b))
        return out

    def pick(self, conflicts):
        return max(conflicts, key=self.priority.__getitem__)

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0


def _realized_arcs(inst: JssInstance, s: np.ndarray) -> List[Arc]:
    """Consecutive-task arcs of the machine orders realized by flat starts ``s``."""
    T = inst.machines
    d = inst.duration.reshape(-1)
    arcs = []
    for m in range(inst.machines):
        tasks = [j * T + t for j, t in inst.tasks_on(m)]
        tasks.sort(key=lambda k: (s[k], s[k] + d[k], k))
        arcs.extend(zip(tasks, tasks[1:]))
    return arcs


def ordering_of(inst: JssInstance, sched: Schedule) -> Ordering:
    """Machine orders realized by a feasible schedule."""
    T = inst.machines
    s = sched.start.reshape(-1)
    d = inst.duration.reshape(-1)
    seqs = []
    for m in range(inst.machines):
        tasks = sorted(inst.tasks_on(m), key=lambda jt: (s[jt[0] * T + jt[1]], s[jt[0] * T + jt[1]] + d[jt[0] * T + jt[1]], jt))
        seqs.append(tuple(tasks))
    return Ordering(tuple(seqs))


def _check_hotstart(inst: JssInstance, sched: Optional[Schedule], what: str) -> None:
    if sched is None:
        return
    if sched.shape != inst.shape or not is_feasible(inst, sched):
        raise ValueError(f"{what} is not a feasible schedule for this instance")
    # the searches need Model-10 disjunctions, which are stricter for zero durations
    s = sched.start.reshape(-1)
    d = inst.duration.reshape(-1)
    T = inst.machines
    for a, b in inst.machine_pairs():
        ka, kb = a[0] * T + a[1], b[0] * T + b[1]
        if s[ka] < s[kb] + d[kb] and s[kb] < s[ka] + d[ka]:
            raise ValueError(f"{what} places a zero-length task inside another task")


def scatter_within_slack(
    inst: JssInstance, sched: Schedule, cap: int, rng: np.random.Generator
) -> Schedule:
    """Random schedule with the same machine orders and makespan at most ``cap``.

    Tasks are visited in topological order. Each start is drawn uniformly
    between its earliest start (given the tasks already placed) and its
    latest start under the cap.
    """
    T = inst.machines
    n = inst.n_tasks
    d = inst.duration.reshape(-1)
    arcs = [(j * T + t, j * T + t + 1) for j in range(inst.jobs) for t in range(T - 1)]
    arcs += _realized_arcs(inst, sched.start.reshape(-1))
    succ: List[List[int]] = [[] for _ in range(n)]
    pred: List[List[int]] = [[] for _ in range(n)]
    indeg = [0] * n
    for a, b in arcs:
        succ[a].append(b)
        pred[b].append(a)
        indeg[b] += 1
    topo = []
    ready = [k for k in range(n) if indeg[k] == 0]
    while ready:
        a = ready.pop()
        topo.append(a)
        for b in succ[a]:
            indeg[b] -= 1
            if indeg[b] == 0:
                ready.append(b)
    tail = [0] * n
    for a in reversed(topo):
        tail[a] = int(d[a]) + max((tail[b] for b in succ[a]), default=0)
    s = np.zeros(n, dtype=np.int64)
    for a in topo:
        lo = max((int(s[p] + d[p]) for p in pred[a]), default=0)
        hi = cap - tail[a]
        s[a] = rng.integers(lo, hi + 1)
    return Schedule(s.reshape(inst.shape))


def greedy_schedule(inst: JssInstance) -> Schedule:
    """Append tasks one at a time, always the job task that can start earliest."""
    J, T = inst.shape
    d = inst.duration
    nxt = [0] * J
    job_free = [0] * J
    mach_free = [0] * inst.machines
    start = np.zeros(inst.shape, dtype=np.int64)
    for _ in range(inst.n_tasks):
        j = min(
            (j for j in range(J) if nxt[j] < T),
            key=lambda j: (max(job_free[j], mach_free[inst.machine[j, nxt[j]]]), j),
        )
        t = nxt[j]
        m = inst.machine[j, t]
        start[j, t] = max(job_free[j], mach_free[m])
        job_free[j] = mach_free[m] = int(start[j, t] + d[j, t])
        nxt[j] += 1
    return Schedule(start)


def solve_makespan(
    inst: JssInstance,
    budget: SolveBudget = SolveBudget(),
    hotstart: Optional[Schedule] = None,
    sample_ties: bool = False,
    scatter: bool = False,
) -> SolveResult:
    """Minimize the makespan by depth-first branch-and-bound.

    The incumbent starts from ``hotstart`` when given, so the result is never
    worse than it. ``optimal`` is True iff the search tree was exhausted.
    The seed permutes the branching order among ties and the order in which
    children are visited, which selects among co-optimal schedules. With
    ``sample_ties`` the search also keeps exploring nodes whose bound equals
    the incumbent and returns a seeded uniform sample among the co-optimal
    leaves it reaches. ``scatter`` then redraws the start times of the
    returned schedule uniformly within their slack under the found makespan,
    as a solver that does not left-justify would.
    """
    _check_hotstart(inst, hotstart, "hotstart")
    search = _Search(inst, budget)
    d = search.d
    best_val = np.inf
    best = None
    ties = 0
    if hotstart is not None:
        best_val = makespan(inst, hotstart)
        best = hotstart
        ties = 1

    stack: List[Tuple[Arc, ...]] = [()]
    while stack:
        if search.out_of_budget():
            break
        arcs = stack.pop()
        search.nodes += 1
        s = earliest_starts(inst, arcs)
        if s is None:
            continue
        lb = int((s + d).max())
        if lb > best_val or (lb == best_val and not sample_ties):
            continue
        fixed = {tuple(sorted(a)) for a in arcs}
        conflicts = search.conflicts(s, fixed)
        if not conflicts:
            if lb < best_val:
                best_val, best, ties = lb, Schedule(s.reshape(inst.shape)), 1
            else:
                ties += 1
                if search.rng.random() * ties < 1.0:
                    best = Schedule(s.reshape(inst.shape))
            continue
        a, b = search.pick(conflicts)
        children = [arcs + ((a, b),), arcs + ((b, a),)]
        if search.rng.random() < 0.5:
            children.reverse()
        # pushed last is explored first
        stack.extend(reversed(children))

    if best is None:
        # truncated before any leaf: fall back to a greedy feasible schedule
        best = greedy_schedule(inst)
        best_val = makespan(inst, best)
    if scatter:
        best = scatter_within_slack(inst, best, int(best_val), search.rng)
    return SolveResult(best, int(best_val), not search.truncated, search.nodes, search.elapsed())


def solve_proximal(
    inst: JssInstance,
    reference: Schedule,
    makespan_cap,
    budget: SolveBudget = SolveBudget(),
    incumbent: Optional[Schedule] = None,
) -> SolveResult:
    """Schedule closest to ``reference`` in L1 with makespan at most the cap.

    ``makespan_cap`` may be ``None`` or ``inf`` for no cap. ``incumbent``, a
    feasible cap-respecting schedule, seeds the search so that a truncated
    run still returns something. The objective is the L1 distance.
    """
    cap = np.inf if makespan_cap is None else makespan_cap
    ref = reference.start if isinstance(reference, Schedule) else np.asarray(reference)
    if ref.shape != inst.shape:
        raise ValueError(f"reference shape {ref.shape} does not match instance {inst.shape}")
    _check_hotstart(inst, incumbent, "incumbent")
    if incumbent is not None and makespan(inst, incumbent) > cap:
        raise ValueError("incumbent violates the makespan cap")

    search = _Search(inst, budget)
    d = search.d
    r = ref.reshape(-1)
    best_val = np.inf
    best_arcs: Optional[List[Arc]] = None
    if incumbent is not None:
        s0 = incumbent.start.reshape(-1)
        best_val = int(np.abs(s0 - r).sum())
        best_arcs = _realized_arcs(inst, s0)

    stack: List[Tuple[Arc, ...]] = [()]
    while stack:
        if search.out_of_budget():
            break
        arcs = stack.pop()
        search.nodes += 1
        s_early = earliest_starts(inst, arcs)
        if s_early is None or (s_early + d).max() > cap:
            continue
        relaxed = proximal_relaxation(inst, arcs, ref, cap)
        if relaxed is None:
            continue
        val, s = relaxed
        if val >= best_val:
            continue
        fixed = {tuple(sorted(a)) for a in arcs}
        conflicts = search.conflicts(s, fixed)
        if not conflicts:
            best_val, best_arcs = val, _realized_arcs(inst, s)
            continue
        a, b = search.pick(conflicts)
        # try the orientation the reference already uses first
        if (r[a], r[a] + d[a], a) <= (r[b], r[b] + d[b], b):
            children = [arcs + ((a, b),), arcs + ((b, a),)]
        else:
            children = [arcs + ((b, a),), arcs + ((a, b),)]
        stack.extend(reversed(children))

    if best_arcs is None:
        if search.truncated:
            raise InfeasibleError("search budget exhausted before a cap-feasible schedule was found")
        raise InfeasibleError("makespan cap is below the optimal makespan")
    sched = _lexmin_schedule(inst, best_arcs, ref, cap)
    dist = int(np.abs(sched.start - ref).sum())
    return SolveResult(sched, dist, not search.truncated, search.nodes, search.elapsed())


def brute_force_optimal(inst: JssInstance, max_tasks: int = 9) -> Schedule:
    """Minimal-makespan schedule by enumerating every machine ordering.

    Ties go to the lexicographically smallest start vector.
    """
    if inst.n_tasks > max_tasks:
        raise ValueError(f"instance has {inst.n_tasks} tasks; enumeration is limited to {max_tasks}")
    T = inst.machines
    per_machine = [
        list(itertools.permutations([j * T + t for j, t in inst.tasks_on(m)]))
        for m in range(inst.machines)
    ]
    d = inst.duration.reshape(-1)
    best_key = None
    for combo in itertools.product(*per_machine):
        arcs = [arc for seq in combo for arc in zip(seq, seq[1:])]
        s = earliest_starts(inst, arcs)
        if s is None:
            continue
        key = (int((s + d).max()), tuple(s.tolist()))
        if best_key is None or key < best_key:
            best_key = key
    return Schedule(np.array(best_key[1], dtype=np.int64).reshape(inst.shape))
