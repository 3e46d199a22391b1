"""Standard and optimal-design (OD) training datasets over instance families.

Standard data solves every instance on its own with a different seed, so
co-optimal schedules get picked at random. OD data walks the family
backwards. Each instance receives the schedule closest in L1 to the one
chosen for its successor, subject to the makespan staying optimal.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .instance import JssInstance, Schedule, is_feasible, is_monotone_family, makespan
from .solver import SolveBudget, SolveResult, solve_makespan, solve_proximal

log = logging.getLogger(__name__)

STANDARD = "standard"
OD = "od"
MODES = (STANDARD, OD)


@dataclass(frozen=True)
class Entry:
    index: int
    instance: JssInstance
    solution: Schedule
    objective: int
    optimal: bool
    seed: int


@dataclass
class Dataset:
    entries: List[Entry]
    mode: str
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def solutions(self) -> np.ndarray:
        """Flattened start vectors, one row per entry."""
        return np.stack([e.solution.start.reshape(-1) for e in self.entries])

    def inputs(self) -> np.ndarray:
        """Flattened duration vectors, one row per entry."""
        return np.stack([e.instance.duration.reshape(-1) for e in self.entries])

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown dataset mode {self.mode!r}")
        for e in self.entries:
            if not is_feasible(e.instance, e.solution):
                raise ValueError(f"entry {e.index}: solution infeasible for its instance")
            if makespan(e.instance, e.solution) != e.objective:
                raise ValueError(f"entry {e.index}: objective is not the solution makespan")
        if not is_monotone_family([e.instance for e in self.entries]):
            raise ValueError("entries do not follow a monotone family order")


def _solve_one(args):
    inst, budget, scatter = args
    return solve_makespan(inst, budget, sample_ties=True, scatter=scatter)


def generate_standard(
    family: Sequence[JssInstance],
    budget: SolveBudget,
    base_seed: int = 0,
    workers: int = 1,
    scatter: bool = True,
) -> Dataset:
    """Solve each instance independently with seed ``base_seed + index``.

    Each solve returns a seeded sample among the co-optimal schedules it
    reaches. With ``scatter`` the starts are also spread within their slack.
    """
    if not family:
        raise ValueError("family is empty")
    jobs = [(inst, budget.with_seed(base_seed + i), scatter) for i, inst in enumerate(family)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_one, jobs))
    else:
        results = [_solve_one(job) for job in jobs]
    entries = [
        Entry(i, inst, res.schedule, res.objective, res.optimal, base_seed + i)
        for i, (inst, res) in enumerate(zip(family, results))
    ]
    prov = {"base_seed": base_seed, "time_limit": budget.time_limit,
            "node_limit": budget.node_limit, "scatter": scatter}
    return Dataset(entries, STANDARD, prov)


def generate_od(family: Sequence[JssInstance], budget: SolveBudget) -> Dataset:
    """Sequential proximal generation, from the last instance backwards.

    The last instance is solved for makespan with the budget's seed. Every
    earlier instance is first re-solved for makespan, hot-started with its
    successor's schedule, to get a cap. It then takes the schedule closest
    to that successor schedule whose makespan stays within the cap.
    """
    if not family:
        raise ValueError("family is empty")
    if not is_monotone_family(family):
        raise ValueError("OD generation needs durations nondecreasing along the family")
    n = len(family)
    seed = budget.seed
    entries: List[Optional[Entry]] = [None] * n
    last = solve_makespan(family[-1], budget)
    entries[-1] = Entry(n - 1, family[-1], last.schedule, last.objective, last.optimal, seed)
    nxt = last.schedule
    for i in range(n - 2, -1, -1):
        inst = family[i]
        capped = solve_makespan(inst, budget, hotstart=nxt)
        prox = solve_proximal(inst, nxt, capped.objective, budget, incumbent=capped.schedule)
        sched = prox.schedule
        entries[i] = Entry(i, inst, sched, makespan(inst, sched), capped.optimal, seed)
        log.debug("od step %d: cap=%d distance=%d", i, capped.objective, prox.objective)
        nxt = sched
    prov = {"seed": seed, "time_limit": budget.time_limit, "node_limit": budget.node_limit}
    return Dataset(list(entries), OD, prov)


# ---------------------------------------------------------------------------
# quality metrics


def total_variation(ds: Dataset, p: float = 1) -> float:
    """Half the summed p-norm distances between consecutive solutions."""
    if len(ds) < 2:
        raise ValueError("total variation needs at least 2 entries")
    y = ds.solutions().astype(float)
    return 0.5 * float(np.linalg.norm(np.diff(y, axis=0), ord=p, axis=1).sum())


def lipschitz_constant(ds: Dataset) -> float:
    """Largest ratio of solution change to duration change between neighbours (L1)."""
    if len(ds) < 2:
        raise ValueError("Lipschitz constant needs at least 2 entries")
    dy = np.abs(np.diff(ds.solutions(), axis=0)).sum(axis=1)
    dx = np.abs(np.diff(ds.inputs(), axis=0)).sum(axis=1)
    if (dx == 0).any():
        raise ValueError("adjacent entries have identical inputs")
    return float((dy / dx).max())


def distance_curve(ds: Dataset, reference: int = 0) -> List[int]:
    """L1 distance of every solution to the solution of entry ``reference``."""
    y = ds.solutions()
    return np.abs(y - y[reference]).sum(axis=1).astype(int).tolist()


# ---------------------------------------------------------------------------
# JSON Lines


def entry_to_json(entry: Entry, mode: str) -> Dict[str, Any]:
    return {
        "index": entry.index,
        "instance": instance_to_json(entry.instance),
        "solution": entry.solution.start.tolist(),
        "objective": entry.objective,
        "optimal": entry.optimal,
        "mode": mode,
        "seed": entry.seed,
    }


def instance_to_json(inst: JssInstance) -> Dict[str, Any]:
    tasks = [
        [[int(m), int(d)] for m, d in zip(inst.machine[j], inst.duration[j])]
        for j in range(inst.jobs)
    ]
    return {"jobs": inst.jobs, "machines": inst.machines, "tasks": tasks}


def instance_from_json(spec: Dict[str, Any]) -> JssInstance:
    tasks = np.array(spec["tasks"], dtype=np.int64).reshape(spec["jobs"], spec["machines"], 2)
    return JssInstance(tasks[:, :, 1], tasks[:, :, 0])


def save_family(family: Sequence[JssInstance], path) -> None:
    lines = (json.dumps({"index": i, "instance": instance_to_json(inst)}) + "\n"
             for i, inst in enumerate(family))
    Path(path).write_text("".join(lines), encoding="utf-8")


def load_family(path) -> List[JssInstance]:
    objs = [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    if not objs:
        raise ValueError("family file has no instances")
    objs.sort(key=lambda o: o["index"])
    return [instance_from_json(o["instance"]) for o in objs]


def entry_from_json(obj: Dict[str, Any]) -> Entry:
    inst = instance_from_json(obj["instance"])
    return Entry(
        int(obj["index"]),
        inst,
        Schedule(np.array(obj["solution"], dtype=np.int64)),
        int(obj["objective"]),
        bool(obj["optimal"]),
        int(obj["seed"]),
    )


def dumps_dataset(ds: Dataset) -> str:
    return "".join(json.dumps(entry_to_json(e, ds.mode)) + "\n" for e in ds.entries)


def loads_dataset(text: str) -> Dataset:
    objs = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not objs:
        raise ValueError("dataset file has no entries")
    modes = {o["mode"] for o in objs}
    if len(modes) != 1:
        raise ValueError(f"dataset mixes modes {sorted(modes)}")
    entries = sorted((entry_from_json(o) for o in objs), key=lambda e: e.index)
    return Dataset(entries, modes.pop())


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(dumps_dataset(ds), encoding="utf-8")


def load_dataset(path) -> Dataset:
    return loads_dataset(Path(path).read_text(encoding="utf-8"))
