"""Repairing predicted start times into feasible integral schedules."""

from __future__ import annotations

from typing import List

import numpy as np

from .instance import JssInstance, Schedule
from .lpkernel import Ordering, earliest_start_schedule, earliest_starts, job_arcs


def _predicted(inst: JssInstance, predicted) -> np.ndarray:
    pred = np.asarray(predicted, dtype=float)
    if pred.size != inst.n_tasks:
        raise ValueError(f"prediction has {pred.size} values, instance has {inst.n_tasks} tasks")
    if pred.ndim != 1 and pred.shape != inst.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match instance {inst.shape}")
    return pred.reshape(inst.shape)


def ordering_from_prediction(inst: JssInstance, predicted) -> Ordering:
    """Sort each machine's tasks by predicted start, ties by (job, position).

    Zero-length tasks precede positive-length ones with the same predicted
    start; with positive durations this is the plain (start, job, position)
    order.
    """
    pred = _predicted(inst, predicted)
    d = inst.duration
    seqs = []
    for m in range(inst.machines):
        seqs.append(tuple(sorted(inst.tasks_on(m), key=lambda jt: (pred[jt], d[jt] > 0, jt))))
    return Ordering(tuple(seqs))


def _reaches(succ: List[List[int]], src: int, dst: int) -> bool:
    stack, seen = [src], {src}
    while stack:
        u = stack.pop()
        if u == dst:
            return True
        for v in succ[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return False


def _repair(inst: JssInstance, ordering: Ordering, pred: np.ndarray) -> Ordering:
    """Acyclic total machine orders as close to ``ordering`` as greedy allows.

    Same-machine pairs are inserted by ascending predicted start. A pair
    whose predicted direction would close a cycle with the arcs already
    placed is inserted reversed, which can never close one.
    """
    T = inst.machines
    n = inst.n_tasks
    succ: List[List[int]] = [[] for _ in range(n)]
    for a, b in job_arcs(inst):
        succ[a].append(b)
    p = pred.reshape(-1)
    candidates = []
    for seq in ordering.sequences:
        flat = [j * T + t for j, t in seq]
        for i in range(len(flat)):
            for k in range(i + 1, len(flat)):
                a, b = flat[i], flat[k]
                candidates.append((p[a], p[b], a, b))
    candidates.sort()
    before = {}
    for _, _, a, b in candidates:
        if _reaches(succ, b, a):
            a, b = b, a
        succ[a].append(b)
        before[(a, b)] = True
    seqs = []
    for m in range(inst.machines):
        tasks = [j * T + t for j, t in inst.tasks_on(m)]
        # in a transitive tournament a task's rank is its number of predecessors
        rank = {k: sum((o, k) in before for o in tasks if o != k) for k in tasks}
        tasks.sort(key=rank.__getitem__)
        seqs.append(tuple((k // T, k % T) for k in tasks))
    return Ordering(tuple(seqs))


def project_feasible(inst: JssInstance, predicted) -> Schedule:
    """Earliest-start schedule under the machine orders of the prediction.

    This minimizes the makespan given the predicted orders. If those orders
    clash with the job chains, they are first repaired greedily. The result
    is then re-projected until it reproduces itself, which only matters
    when zero-length tasks tie with others; each pass can only move starts
    earlier, so this terminates.
    """
    ordering = ordering_from_prediction(inst, predicted)
    arcs = ordering.arcs(inst)
    if earliest_starts(inst, arcs) is None:
        ordering = _repair(inst, ordering, _predicted(inst, predicted))
    sched = earliest_start_schedule(inst, ordering)
    while True:
        flat = earliest_starts(inst, ordering_from_prediction(inst, sched.start).arcs(inst))
        # ties among zero-length tasks can in principle read back as a cycle
        if flat is None or np.array_equal(flat, sched.flat()):
            return sched
        sched = Schedule(flat.reshape(inst.shape))


def projection_distance(inst: JssInstance, predicted) -> float:
    """L1 distance between a prediction and its projection."""
    pred = _predicted(inst, predicted)
    return float(np.abs(project_feasible(inst, pred).start - pred).sum())
