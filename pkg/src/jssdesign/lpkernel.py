"""Start-time optimization for a fixed processing order on every machine.

Once the order of tasks on each machine is fixed, the no-overlap disjunctions
become plain difference constraints ``s[b] >= s[a] + d[a]``. Together with the
job chains they form a precedence DAG: earliest starts are longest paths, and
L1-closest starts under a makespan cap come from a small LP whose constraint
matrix is totally unimodular, so its vertices are integral.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .instance import JssInstance, Schedule, Task

Arc = Tuple[int, int]  # (before, after) as flat task indices j * T + t

_INT_TOL = 1e-6


class CyclicOrderingError(ValueError):
    """The machine orders contradict the job chains."""


class InfeasibleError(ValueError):
    """No schedule satisfies the precedences within the makespan cap."""


@dataclass(frozen=True)
class Ordering:
    """Processing sequence of tasks on each machine, indexed by machine."""

    sequences: Tuple[Tuple[Task, ...], ...]

    @classmethod
    def from_dict(cls, seqs: Dict[int, Sequence[Task]]) -> "Ordering":
        return cls(tuple(tuple(tuple(x) for x in seqs[m]) for m in sorted(seqs)))

    def validate(self, inst: JssInstance) -> None:
        if len(self.sequences) != inst.machines:
            raise ValueError(f"ordering covers {len(self.sequences)} machines, instance has {inst.machines}")
        for m, seq in enumerate(self.sequences):
            if sorted(seq) != inst.tasks_on(m):
                raise ValueError(f"machine {m}: ordering does not list each of its tasks exactly once")

    def arcs(self, inst: JssInstance) -> List[Arc]:
        T = inst.machines
        out = []
        for seq in self.sequences:
            for (ja, ta), (jb, tb) in zip(seq, seq[1:]):
                out.append((ja * T + ta, jb * T + tb))
        return out


def job_arcs(inst: JssInstance) -> List[Arc]:
    J, T = inst.shape
    return [(j * T + t, j * T + t + 1) for j in range(J) for t in range(T - 1)]


def earliest_starts(inst: JssInstance, arcs: Iterable[Arc]) -> Optional[np.ndarray]:
    """Longest-path start times over job chains plus ``arcs``.

    Returns a flat int array, or None when the precedence graph has a cycle.
    """
    n = inst.n_tasks
    d = inst.duration.reshape(-1)
    succ: List[List[int]] = [[] for _ in range(n)]
    indeg = [0] * n
    for a, b in job_arcs(inst):
        succ[a].append(b)
        indeg[b] += 1
    for a, b in arcs:
        succ[a].append(b)
        indeg[b] += 1
    start = [0] * n
    stack = [k for k in range(n) if indeg[k] == 0]
    seen = 0
    while stack:
        a = stack.pop()
        seen += 1
        fa = start[a] + int(d[a])
        for b in succ[a]:
            if fa > start[b]:
                start[b] = fa
            indeg[b] -= 1
            if indeg[b] == 0:
                stack.append(b)
    if seen < n:
        return None
    return np.array(start, dtype=np.int64)


def earliest_start_schedule(inst: JssInstance, ordering: Ordering) -> Schedule:
    """Componentwise-minimal schedule respecting ``ordering``.

    It also minimizes the makespan among schedules with that ordering.
    """
    ordering.validate(inst)
    start = earliest_starts(inst, ordering.arcs(inst))
    if start is None:
        raise CyclicOrderingError("machine orders and job chains form a cycle")
    return Schedule(start.reshape(inst.shape))


# ---------------------------------------------------------------------------
# L1 proximal LP


class _ProximalLP:
    """LP ``min sum |s - r|`` over the difference system, built once per call."""

    def __init__(self, inst: JssInstance, arcs: Sequence[Arc], reference: np.ndarray, cap: float):
        n = inst.n_tasks
        d = inst.duration.reshape(-1).astype(float)
        all_arcs = job_arcs(inst) + list(arcs)
        m = len(all_arcs)
        rows = np.repeat(np.arange(m), 2)
        cols = np.array([k for a, b in all_arcs for k in (a, b)], dtype=np.int64)
        vals = np.tile([1.0, -1.0], m)
        prec = sparse.csr_matrix((vals, (rows, cols)), shape=(m, 2 * n))
        eye = sparse.identity(n, format="csr")
        dev = sparse.vstack(
            [sparse.hstack([eye, -eye]), sparse.hstack([-eye, -eye])], format="csr"
        )
        self.n = n
        r = np.asarray(reference, dtype=float).reshape(-1)
        self.A = sparse.vstack([prec, dev], format="csr")
        self.b = np.concatenate([-d[[a for a, _ in all_arcs]] if m else np.zeros(0), r, -r])
        upper = np.inf if cap is None or not np.isfinite(cap) else float(cap)
        self.s_bounds = [(0.0, upper - d[k]) for k in range(n)]
        self.t_bounds = [(0.0, None)] * n
        self.feasible_bounds = all(hi >= 0 for _, hi in self.s_bounds)

    def _solve(self, c, A, b, bounds):
        res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs-ds")
        if res.status == 2:
            return None
        if res.status != 0:
            raise RuntimeError(f"LP solver failed: {res.message}")
        return res

    def minimize(self) -> Optional[Tuple[int, np.ndarray]]:
        if not self.feasible_bounds:
            return None
        c = np.concatenate([np.zeros(self.n), np.ones(self.n)])
        res = self._solve(c, self.A, self.b, self.s_bounds + self.t_bounds)
        if res is None:
            return None
        return _integral(res.fun), _integral_array(res.x[: self.n])

    def lexmin(self, value: int) -> np.ndarray:
        """Lexicographically smallest start vector with objective ``value``."""
        n = self.n
        obj_row = sparse.csr_matrix(np.concatenate([np.zeros(n), np.ones(n)]))
        A = sparse.vstack([self.A, obj_row], format="csr")
        b = np.concatenate([self.b, [value]])
        bounds = list(self.s_bounds) + list(self.t_bounds)
        fixed = np.zeros(n, dtype=np.int64)
        for k in range(n):
            c = np.zeros(2 * n)
            c[k] = 1.0
            res = self._solve(c, A, b, bounds)
            if res is None:
                raise RuntimeError("optimal face vanished during lexicographic refinement")
            fixed[k] = _integral(res.x[k])
            bounds[k] = (float(fixed[k]), float(fixed[k]))
        return fixed


def _integral(x: float) -> int:
    r = round(float(x))
    if abs(r - x) > _INT_TOL * max(1.0, abs(x)):
        raise RuntimeError(f"LP vertex is not integral: {x}")
    return int(r)


def _integral_array(x: np.ndarray) -> np.ndarray:
    r = np.round(x)
    if np.abs(r - x).max(initial=0.0) > _INT_TOL * max(1.0, np.abs(x).max(initial=0.0)):
        raise RuntimeError("LP vertex is not integral")
    return r.astype(np.int64)


def proximal_relaxation(
    inst: JssInstance, arcs: Sequence[Arc], reference, cap
) -> Optional[Tuple[int, np.ndarray]]:
    """Min L1 distance to ``reference`` under job chains, ``arcs`` and the cap.

    Only the listed precedences are enforced, so with a partial machine order
    this is a lower bound for every completion of that order. Returns
    ``(distance, flat starts)`` or None if infeasible.
    """
    return _ProximalLP(inst, arcs, reference, cap).minimize()


def l1_proximal_schedule(
    inst: JssInstance, ordering: Ordering, reference: Schedule, makespan_cap
) -> Schedule:
    """Integral schedule under ``ordering`` closest to ``reference`` in L1.

    Every completion time is kept at or below ``makespan_cap`` (``None`` or
    ``inf`` means uncapped). Among co-optimal schedules the lexicographically
    smallest start vector (job-major) is returned.
    """
    ordering.validate(inst)
    arcs = ordering.arcs(inst)
    if earliest_starts(inst, arcs) is None:
        raise CyclicOrderingError("machine orders and job chains form a cycle")
    ref = reference.start if isinstance(reference, Schedule) else np.asarray(reference)
    if ref.shape != inst.shape:
        raise ValueError(f"reference shape {ref.shape} does not match instance {inst.shape}")
    return _lexmin_schedule(inst, arcs, ref, makespan_cap)


def _lexmin_schedule(inst, arcs, ref, cap) -> Schedule:
    lp = _ProximalLP(inst, arcs, ref, cap)
    best = lp.minimize()
    if best is None:
        raise InfeasibleError("makespan cap is below the minimal makespan of this ordering")
    value, _ = best
    return Schedule(lp.lexmin(value).reshape(inst.shape))
