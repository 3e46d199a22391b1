import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import instances
from jssdesign.instance import JssInstance, Schedule, is_feasible, makespan, random_instance
from jssdesign.lpkernel import InfeasibleError
from jssdesign.solver import (
    SolveBudget,
    brute_force_optimal,
    ordering_of,
    scatter_within_slack,
    solve_makespan,
    solve_proximal,
)
from oracles import optimal_makespan, proximal_oracle


class TestSolveMakespan:
    def test_instance_a(self, inst_a):
        res = solve_makespan(inst_a)
        assert res.objective == 5 and res.optimal
        assert is_feasible(inst_a, res.schedule)

    def test_single_task(self):
        res = solve_makespan(JssInstance([[5]], [[0]]))
        assert res.schedule.start.tolist() == [[0]]
        assert res.objective == 5 and res.optimal

    def test_slowed_instance(self, inst_a_plus):
        res = solve_makespan(inst_a_plus)
        assert res.objective == 8 and res.optimal
        witness = np.array([[0, 3], [0, 3]])
        assert is_feasible(inst_a_plus, witness) and makespan(inst_a_plus, witness) == 8

    @settings(max_examples=40, deadline=None)
    @given(instances(max_jobs=3, max_machines=3))
    def test_matches_enumeration(self, inst):
        if inst.n_tasks > 9:
            return
        res = solve_makespan(inst)
        assert res.optimal
        assert res.objective == optimal_makespan(inst)
        assert is_feasible(inst, res.schedule)
        assert makespan(inst, res.schedule) == res.objective

    @settings(max_examples=25, deadline=None)
    @given(instances(max_jobs=3, max_machines=3, min_duration=1), st.integers(0, 10))
    def test_hotstart_never_worse(self, inst, slack):
        # a deliberately poor feasible hot-start: jobs one after another
        T = inst.machines
        d = inst.duration
        offsets = np.concatenate([[0], np.cumsum(d.sum(axis=1))[:-1]]) + slack
        start = offsets[:, None] + np.concatenate([np.zeros((inst.jobs, 1), int), np.cumsum(d, axis=1)[:, :-1]], axis=1)
        hot = Schedule(start)
        assert is_feasible(inst, hot)
        res = solve_makespan(inst, SolveBudget(node_limit=2), hotstart=hot)
        assert res.objective <= makespan(inst, hot)
        assert is_feasible(inst, res.schedule)

    def test_invalid_hotstart_rejected(self, inst_a):
        with pytest.raises(ValueError):
            solve_makespan(inst_a, hotstart=Schedule(np.array([[0, 1], [0, 2]])))

    def test_seed_determinism(self):
        inst = random_instance(4, 3, np.random.default_rng(7))
        for flags in ({}, {"sample_ties": True, "scatter": True}):
            a = solve_makespan(inst, SolveBudget(seed=3), **flags)
            b = solve_makespan(inst, SolveBudget(seed=3), **flags)
            assert a.schedule == b.schedule and a.nodes_explored == b.nodes_explored

    def test_seeds_scatter_co_optimal_schedules(self):
        inst = random_instance(4, 3, np.random.default_rng(7))
        results = [solve_makespan(inst, SolveBudget(seed=s), sample_ties=True, scatter=True) for s in range(8)]
        assert len({r.objective for r in results}) == 1
        assert len({r.schedule.start.tobytes() for r in results}) > 1
        assert all(is_feasible(inst, r.schedule) for r in results)

    def test_node_limit_truncates(self):
        inst = random_instance(4, 4, np.random.default_rng(1))
        res = solve_makespan(inst, SolveBudget(node_limit=3))
        assert not res.optimal
        assert is_feasible(inst, res.schedule)

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            SolveBudget(time_limit=0)
        with pytest.raises(ValueError):
            SolveBudget(node_limit=0)


class TestSolveProximal:
    def test_example(self, inst_a):
        res = solve_proximal(inst_a, Schedule(np.array([[0, 3], [0, 3]])), 5)
        assert res.schedule.start.tolist() == [[0, 3], [0, 2]]
        assert res.objective == 1 and res.optimal

    def test_feasible_reference_is_returned(self, inst_a):
        ref = Schedule(np.array([[0, 2], [0, 2]]))
        res = solve_proximal(inst_a, ref, 5)
        assert res.schedule == ref and res.objective == 0

    @pytest.mark.parametrize("cap", [None, math.inf])
    def test_uncapped(self, inst_a, cap):
        ref = Schedule(np.array([[10, 12], [0, 13]]))
        res = solve_proximal(inst_a, ref, cap)
        assert res.schedule == ref and res.objective == 0

    def test_cap_below_optimum(self, inst_a):
        with pytest.raises(InfeasibleError):
            solve_proximal(inst_a, np.zeros((2, 2), dtype=int), 4)

    def test_incumbent_must_respect_cap(self, inst_a):
        with pytest.raises(ValueError, match="cap"):
            solve_proximal(inst_a, np.zeros((2, 2), dtype=int), 5,
                           incumbent=Schedule(np.array([[4, 6], [0, 1]])))

    @settings(max_examples=40, deadline=None)
    @given(instances(max_jobs=2, max_machines=2, min_duration=1, max_duration=4), st.integers(0, 4), st.data())
    def test_matches_integer_enumeration(self, inst, extra, data):
        cap = optimal_makespan(inst) + extra
        ref = np.array(data.draw(st.lists(st.integers(0, 10), min_size=inst.n_tasks,
                                          max_size=inst.n_tasks))).reshape(inst.shape)
        res = solve_proximal(inst, ref, cap)
        dist, _ = proximal_oracle(inst, ref, cap)
        assert res.objective == dist
        assert is_feasible(inst, res.schedule)
        assert makespan(inst, res.schedule) <= cap

    def test_determinism(self):
        inst = random_instance(3, 3, np.random.default_rng(5))
        ref = np.random.default_rng(6).integers(0, 20, size=(3, 3))
        cap = solve_makespan(inst).objective
        a = solve_proximal(inst, ref, cap, SolveBudget(seed=2))
        b = solve_proximal(inst, ref, cap, SolveBudget(seed=2))
        assert a.schedule == b.schedule and a.objective == b.objective


class TestBruteForce:
    def test_examples(self, inst_a, inst_a_plus):
        assert makespan(inst_a, brute_force_optimal(inst_a)) == 5
        assert makespan(inst_a_plus, brute_force_optimal(inst_a_plus)) == 8

    def test_single_job_chain(self):
        inst = JssInstance([[3, 4]], [[1, 0]])
        assert brute_force_optimal(inst).start.tolist() == [[0, 3]]

    def test_too_large(self):
        with pytest.raises(ValueError, match="limited"):
            brute_force_optimal(random_instance(4, 3, np.random.default_rng(0)))


def test_ordering_of_and_scatter_keep_feasibility():
    rng = np.random.default_rng(11)
    inst = random_instance(3, 3, rng)
    res = solve_makespan(inst)
    order = ordering_of(inst, res.schedule)
    order.validate(inst)
    for _ in range(20):
        s = scatter_within_slack(inst, res.schedule, res.objective + 3, rng)
        assert is_feasible(inst, s)
        assert makespan(inst, s) <= res.objective + 3


@given(instances(max_jobs=4, max_machines=4))
def test_greedy_fallback_is_feasible(inst):
    from jssdesign.solver import greedy_schedule

    assert is_feasible(inst, greedy_schedule(inst))
