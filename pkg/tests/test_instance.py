import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import instance_and_starts, instances
from jssdesign.instance import (
    InstanceFormatError,
    JssInstance,
    PerturbationSpec,
    Schedule,
    format_instance,
    is_feasible,
    is_monotone_family,
    makespan,
    parse_instance,
    perturb_family,
    random_instance,
    violation_degrees,
)


class TestParse:
    def test_two_by_two(self, inst_a):
        assert inst_a.shape == (2, 2)
        assert inst_a.machine.tolist() == [[0, 1], [1, 0]]
        assert inst_a.duration.tolist() == [[2, 2], [1, 3]]

    def test_single_task(self):
        inst = parse_instance("1 1\n0 5")
        assert inst.shape == (1, 1)
        assert inst.duration[0, 0] == 5 and inst.machine[0, 0] == 0

    def test_comments_and_blank_lines_ignored(self):
        inst = parse_instance("# tiny\n\n1 1\n  0 5  \n")
        assert inst.duration.tolist() == [[5]]

    @pytest.mark.parametrize(
        "text, match",
        [
            ("2 2\n0 2 0 2\n1 1 0 3", "duplicate machine"),
            ("2\n0 2 1 2\n1 1 0 3", "header"),
            ("x 2\n0 2 1 2\n1 1 0 3", "header"),
            ("2 2\n0 2 1\n1 1 0 3", "tokens"),
            ("2 2\n0 2 2 2\n1 1 0 3", "out of range"),
            ("2 2\n0 2 1 2", "job lines"),
            ("", "empty"),
            ("1 1\n0 -1", "nonnegative"),
            ("1 1\n0 a", "non-integer"),
        ],
    )
    def test_rejects_malformed(self, text, match):
        with pytest.raises(InstanceFormatError, match=match):
            parse_instance(text)

    @given(instances())
    def test_round_trip_is_bit_exact(self, inst):
        text = format_instance(inst)
        again = parse_instance(text)
        assert again == inst
        assert format_instance(again) == text

    def test_instance_is_immutable(self, inst_a):
        with pytest.raises(ValueError):
            inst_a.duration[0, 0] = 7


class TestMakespan:
    def test_examples(self, inst_a):
        assert makespan(inst_a, Schedule(np.array([[0, 2], [0, 2]]))) == 5
        assert makespan(inst_a, Schedule(np.array([[0, 3], [0, 2]]))) == 5
        assert makespan(JssInstance([[5]], [[0]]), np.array([[0]])) == 5

    def test_shape_mismatch(self, inst_a):
        with pytest.raises(ValueError, match="shape"):
            makespan(inst_a, np.zeros((1, 2), dtype=int))

    @given(instance_and_starts(), st.integers(0, 50))
    def test_shift_adds_to_makespan(self, pair, c):
        inst, s = pair
        assert makespan(inst, s + c) == makespan(inst, s) + c


class TestViolations:
    def test_precedence_example(self, inst_a):
        rep = violation_degrees(inst_a, np.array([[0, 1], [0, 2]]))
        assert rep.precedence.tolist() == [[1], [0]]
        assert all(v == 0 for v in rep.overlap.values())
        assert rep.total == 1

    def test_feasible_optimum_all_zero(self, inst_a):
        rep = violation_degrees(inst_a, np.array([[0, 2], [0, 2]]))
        assert rep.total == 0
        assert len(rep.overlap) == 2  # one entry per unordered same-machine pair

    def test_overlap_example(self):
        inst = JssInstance([[5], [4]], [[0], [0]])
        rep = violation_degrees(inst, np.array([[0], [3]]))
        assert rep.overlap == {((0, 0), (1, 0)): 2}

    def test_zero_duration_never_overlaps(self):
        inst = JssInstance([[0], [4]], [[0], [0]])
        assert violation_degrees(inst, np.array([[2], [0]])).total == 0

    @given(instance_and_starts())
    def test_entries_nonnegative(self, pair):
        inst, s = pair
        rep = violation_degrees(inst, s)
        assert (rep.precedence >= 0).all()
        assert all(v >= 0 for v in rep.overlap.values())

    @given(instance_and_starts(), st.integers(0, 30))
    def test_shift_invariance(self, pair, c):
        inst, s = pair
        a, b = violation_degrees(inst, s), violation_degrees(inst, s + c)
        assert np.array_equal(a.precedence, b.precedence)
        assert a.overlap == b.overlap

    @given(instance_and_starts(), st.data())
    def test_job_relabeling_equivariance(self, pair, data):
        inst, s = pair
        perm = data.draw(st.permutations(range(inst.jobs)))
        inv = np.argsort(perm)
        relabeled = JssInstance(inst.duration[perm], inst.machine[perm])
        a = violation_degrees(inst, s)
        b = violation_degrees(relabeled, s[perm])
        assert np.array_equal(a.precedence[perm], b.precedence)
        mapped = {tuple(sorted(((int(inv[j]), t), (int(inv[k]), u)))): v
                  for ((j, t), (k, u)), v in a.overlap.items()}
        assert mapped == b.overlap

    @given(instance_and_starts(max_start=12))
    def test_zero_total_means_disjoint_intervals(self, pair):
        inst, s = pair
        if violation_degrees(inst, s).total != 0:
            return
        for m in range(inst.machines):
            busy = {}
            for j, t in inst.tasks_on(m):
                for x in range(s[j, t], s[j, t] + inst.duration[j, t]):
                    assert x not in busy
                    busy[x] = (j, t)


class TestFeasible:
    def test_examples(self, inst_a):
        assert is_feasible(inst_a, np.array([[0, 2], [0, 2]]))
        assert not is_feasible(inst_a, np.array([[0, 1], [0, 2]]))

    def test_all_zero_durations(self):
        inst = JssInstance(np.zeros((2, 2), dtype=int), [[0, 1], [1, 0]])
        assert is_feasible(inst, np.zeros((2, 2), dtype=int))

    def test_rejects_fractional_and_negative(self, inst_a):
        assert not is_feasible(inst_a, np.array([[0, 2.5], [0, 2]]))
        assert not is_feasible(inst_a, np.array([[-1, 2], [0, 2]]))

    @given(instance_and_starts())
    def test_matches_violation_total(self, pair):
        inst, s = pair
        assert is_feasible(inst, s) == (violation_degrees(inst, s).total == 0)

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            Schedule(np.array([[-1]]))
        with pytest.raises(ValueError):
            Schedule(np.array([[0.5]]))


class TestPerturbFamily:
    def test_two_step_example(self, inst_a, inst_a_plus):
        fam = perturb_family(inst_a, PerturbationSpec(machine=0, steps=2, max_increase=0.5, scale=1))
        assert fam[0] == inst_a
        assert fam[1] == inst_a_plus

    def test_zero_increase_gives_identical_instances(self, inst_a):
        fam = perturb_family(inst_a, PerturbationSpec(0, 2, 0.0, 1))
        assert fam[0] == fam[1] == inst_a

    def test_scaled_half_increase_is_exact(self):
        base = random_instance(4, 3, np.random.default_rng(3))
        fam = perturb_family(base, PerturbationSpec(1, 2, 0.5, 100))
        on = base.machine == 1
        assert np.array_equal(fam[0].duration, base.duration * 100)
        assert np.array_equal(2 * fam[1].duration[on], 3 * fam[0].duration[on])
        assert np.array_equal(fam[1].duration[~on], fam[0].duration[~on])

    def test_machine_out_of_range(self, inst_a):
        with pytest.raises(ValueError, match="out of range"):
            perturb_family(inst_a, PerturbationSpec(2, 3))

    @pytest.mark.parametrize("kw", [{"steps": 1}, {"max_increase": -0.1}, {"scale": 0}])
    def test_perturbation_spec_validation(self, kw):
        args = {"machine": 0, "steps": 3, **kw}
        with pytest.raises(ValueError):
            PerturbationSpec(**args)

    @settings(max_examples=40)
    @given(instances(min_duration=1), st.integers(2, 6), st.floats(0, 1), st.integers(1, 100), st.data())
    def test_family_is_monotone(self, inst, steps, inc, scale, data):
        m = data.draw(st.integers(0, inst.machines - 1))
        fam = perturb_family(inst, PerturbationSpec(m, steps, inc, scale))
        assert len(fam) == steps
        assert is_monotone_family(fam)
        assert np.array_equal(fam[0].duration, inst.duration * scale)

    @settings(max_examples=30, deadline=None)
    @given(instances(max_jobs=3, max_machines=2, min_duration=1), st.data())
    def test_successor_schedule_feasible_for_predecessor(self, inst, data):
        # a feasible schedule stays feasible when durations shrink
        from jssdesign.solver import solve_makespan

        m = data.draw(st.integers(0, inst.machines - 1))
        fam = perturb_family(inst, PerturbationSpec(m, 3, 0.5, 10))
        for prev, nxt in zip(fam, fam[1:]):
            sched = solve_makespan(nxt).schedule
            assert is_feasible(prev, sched)
