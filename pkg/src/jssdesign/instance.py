"""Job shop instances, schedules, feasibility and slowdown families.

Tasks are addressed as ``(job, position)`` pairs, both 0-based. A job visits
every machine exactly once, so the number of tasks per job equals the number
of machines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Dict, List, Sequence, Tuple

import numpy as np

Task = Tuple[int, int]


class InstanceFormatError(ValueError):
    """Raised when instance text or arrays do not describe a valid job shop."""


def _frozen_int_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.int64)
    if arr.ndim != 2:
        raise InstanceFormatError(f"{name} must be a 2-D array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class JssInstance:
    """Durations and machine assignments of a job shop problem.

    ``duration[j, t]`` is the processing time of the t-th task of job j and
    ``machine[j, t]`` the machine it runs on.
    """

    duration: np.ndarray
    machine: np.ndarray

    def __post_init__(self):
        d = _frozen_int_array(self.duration, "duration")
        m = _frozen_int_array(self.machine, "machine")
        if d.shape != m.shape:
            raise InstanceFormatError(f"duration shape {d.shape} != machine shape {m.shape}")
        jobs, tasks = d.shape
        if jobs < 1 or tasks < 1:
            raise InstanceFormatError("instance needs at least one job and one machine")
        if (d < 0).any():
            raise InstanceFormatError("durations must be nonnegative")
        for j in range(jobs):
            row = m[j]
            if ((row < 0) | (row >= tasks)).any():
                raise InstanceFormatError(f"job {j}: machine index out of range [0, {tasks})")
            if len(set(row.tolist())) != tasks:
                raise InstanceFormatError(f"job {j}: duplicate machine in job")
        object.__setattr__(self, "duration", d)
        object.__setattr__(self, "machine", m)

    @property
    def jobs(self) -> int:
        return self.duration.shape[0]

    @property
    def machines(self) -> int:
        return self.duration.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.duration.shape

    @property
    def n_tasks(self) -> int:
        return self.duration.size

    def tasks_on(self, m: int) -> List[Task]:
        """Tasks assigned to machine ``m``, sorted by (job, position)."""
        js, ts = np.nonzero(self.machine == m)
        return [(int(j), int(t)) for j, t in zip(js, ts)]

    def machine_pairs(self) -> List[Tuple[Task, Task]]:
        """Every unordered pair of distinct tasks sharing a machine, once."""
        pairs = []
        for m in range(self.machines):
            pairs.extend(combinations(self.tasks_on(m), 2))
        return pairs

    def with_durations(self, duration) -> "JssInstance":
        return JssInstance(duration, self.machine)

    def __eq__(self, other):
        if not isinstance(other, JssInstance):
            return NotImplemented
        return np.array_equal(self.duration, other.duration) and np.array_equal(
            self.machine, other.machine
        )

    def __hash__(self):
        return hash((self.duration.tobytes(), self.machine.tobytes(), self.shape))

    def __repr__(self):
        return f"JssInstance(jobs={self.jobs}, machines={self.machines})"


@dataclass(frozen=True, eq=False)
class Schedule:
    """Integral start times ``start[j, t]`` for every task."""

    start: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.start)
        if arr.ndim != 2:
            raise ValueError(f"start must be 2-D, got shape {arr.shape}")
        if arr.dtype.kind == "f":
            if not np.all(np.isfinite(arr)) or not np.array_equal(arr, np.round(arr)):
                raise ValueError("schedule start times must be integral")
        arr = arr.astype(np.int64)
        if (arr < 0).any():
            raise ValueError("schedule start times must be nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "start", arr)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.start.shape

    def flat(self) -> np.ndarray:
        return self.start.reshape(-1)

    def shifted(self, c: int) -> "Schedule":
        return Schedule(self.start + c)

    def __eq__(self, other):
        if not isinstance(other, Schedule):
            return NotImplemented
        return np.array_equal(self.start, other.start)

    def __hash__(self):
        return hash((self.start.tobytes(), self.start.shape))

    def __repr__(self):
        return f"Schedule({self.start.tolist()})"


@dataclass(frozen=True)
class ViolationReport:
    """Constraint violation degrees of a (possibly infeasible) schedule.

    ``precedence[j, t]`` measures how far task ``t + 1`` of job ``j`` starts
    before task ``t`` ends. ``overlap`` maps each unordered same-machine task
    pair to the time one of the two would have to move to clear the other.
    """

    precedence: np.ndarray
    overlap: Dict[Tuple[Task, Task], int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return int(self.precedence.sum()) + int(sum(self.overlap.values()))


@dataclass(frozen=True)
class PerturbationSpec:
    machine: int
    steps: int
    max_increase: float = 0.5
    scale: int = 100

    def __post_init__(self):
        if not self.max_increase >= 0:
            raise ValueError("max_increase must be nonnegative")
        if self.steps < 2:
            raise ValueError("a family needs at least 2 steps")
        if self.scale < 1 or int(self.scale) != self.scale:
            raise ValueError("scale must be a positive integer")


def _check_shape(inst: JssInstance, sched) -> np.ndarray:
    start = sched.start if isinstance(sched, Schedule) else np.asarray(sched)
    if start.shape != inst.shape:
        raise ValueError(f"schedule shape {start.shape} does not match instance {inst.shape}")
    return start


# ---------------------------------------------------------------------------
# text format


def parse_instance(text: str) -> JssInstance:
    """Parse a JSPLIB-style instance.

    The first line holds ``J M``; each of the following ``J`` lines lists the
    job's tasks in processing order as ``machine duration`` pairs. Lines
    starting with ``#`` are ignored.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise InstanceFormatError("empty instance text")
    header = lines[0].split()
    if len(header) != 2:
        raise InstanceFormatError(f"malformed header {lines[0]!r}: expected 'J M'")
    try:
        jobs, machines = int(header[0]), int(header[1])
    except ValueError:
        raise InstanceFormatError(f"malformed header {lines[0]!r}") from None
    if jobs < 1 or machines < 1:
        raise InstanceFormatError("header counts must be positive")
    if len(lines) - 1 != jobs:
        raise InstanceFormatError(f"expected {jobs} job lines, found {len(lines) - 1}")
    machine = np.zeros((jobs, machines), dtype=np.int64)
    duration = np.zeros((jobs, machines), dtype=np.int64)
    for j, line in enumerate(lines[1:]):
        tokens = line.split()
        if len(tokens) != 2 * machines:
            raise InstanceFormatError(
                f"job {j}: expected {2 * machines} tokens, found {len(tokens)}"
            )
        try:
            values = [int(tok) for tok in tokens]
        except ValueError:
            raise InstanceFormatError(f"job {j}: non-integer token") from None
        machine[j] = values[0::2]
        duration[j] = values[1::2]
    return JssInstance(duration, machine)


def format_instance(inst: JssInstance) -> str:
    out = [f"{inst.jobs} {inst.machines}"]
    for j in range(inst.jobs):
        out.append(
            " ".join(f"{m} {d}" for m, d in zip(inst.machine[j].tolist(), inst.duration[j].tolist()))
        )
    return "\n".join(out) + "\n"


def random_instance(jobs: int, machines: int, rng: np.random.Generator, low: int = 1, high: int = 9) -> JssInstance:
    """Uniform durations in ``[low, high]`` and a random machine route per job."""
    duration = rng.integers(low, high + 1, size=(jobs, machines))
    machine = np.array([rng.permutation(machines) for _ in range(jobs)])
    return JssInstance(duration, machine)


# ---------------------------------------------------------------------------
# evaluation


def makespan(inst: JssInstance, sched) -> int:
    start = _check_shape(inst, sched)
    return int((start[:, -1] + inst.duration[:, -1]).max())


def _overlap(s1, d1, s2, d2):
    if d1 == 0 or d2 == 0:
        return 0
    return min(max(0, s1 + d1 - s2), max(0, s2 + d2 - s1))


def violation_degrees(inst: JssInstance, sched) -> ViolationReport:
    start = _check_shape(inst, sched)
    d = inst.duration
    prec = np.maximum(0, start[:, :-1] + d[:, :-1] - start[:, 1:])
    overlap = {}
    for a, b in inst.machine_pairs():
        overlap[(a, b)] = int(_overlap(start[a], d[a], start[b], d[b]))
    prec = prec.astype(np.int64)
    prec.setflags(write=False)
    return ViolationReport(prec, overlap)


def is_feasible(inst: JssInstance, sched) -> bool:
    start = np.asarray(_check_shape(inst, sched))
    if start.dtype.kind == "f":
        if not (np.isfinite(start).all() and np.array_equal(start, np.round(start))):
            return False
        start = start.astype(np.int64)
    if (start < 0).any():
        return False
    return violation_degrees(inst, start).total == 0


# ---------------------------------------------------------------------------
# slowdown families


def _round_half_up(x: Fraction) -> int:
    return int((x + Fraction(1, 2)).__floor__())


def perturb_family(base: JssInstance, spec: PerturbationSpec) -> List[JssInstance]:
    """Instances with durations on ``spec.machine`` growing linearly.

    Instance ``i`` (1-based) multiplies all base durations by ``spec.scale``
    and adds ``round(scale * d * max_increase * (i - 1) / (steps - 1))`` to
    each task on the slowed machine, rounding halves up.
    """
    if not 0 <= spec.machine < base.machines:
        raise ValueError(f"machine {spec.machine} out of range [0, {base.machines})")
    scaled = base.duration * int(spec.scale)
    on_machine = base.machine == spec.machine
    frac = Fraction(spec.max_increase)
    family = []
    for i in range(1, spec.steps + 1):
        ratio = frac * Fraction(i - 1, spec.steps - 1)
        extra = np.array(
            [[_round_half_up(Fraction(int(v)) * ratio) for v in row] for row in scaled],
            dtype=np.int64,
        )
        family.append(JssInstance(scaled + np.where(on_machine, extra, 0), base.machine))
    return family


def is_monotone_family(family: Sequence[JssInstance]) -> bool:
    return all(
        a.shape == b.shape
        and np.array_equal(a.machine, b.machine)
        and bool((a.duration <= b.duration).all())
        for a, b in zip(family, family[1:])
    )
