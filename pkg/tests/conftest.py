import numpy as np
import pytest
from hypothesis import strategies as st

from jssdesign.instance import JssInstance, parse_instance

A_TEXT = "2 2\n0 2 1 2\n1 1 0 3\n"


@pytest.fixture
def inst_a():
    """Two jobs on two machines: job 0 = (M0,2),(M1,2); job 1 = (M1,1),(M0,3)."""
    return parse_instance(A_TEXT)


@pytest.fixture
def inst_a_plus():
    """Instance A with machine 0 slowed by 50% (rounded half up)."""
    return JssInstance([[3, 2], [1, 5]], [[0, 1], [1, 0]])


@st.composite
def instances(draw, max_jobs=3, max_machines=3, max_duration=9, min_duration=0):
    jobs = draw(st.integers(1, max_jobs))
    machines = draw(st.integers(1, max_machines))
    routes = [draw(st.permutations(range(machines))) for _ in range(jobs)]
    dur = [[draw(st.integers(min_duration, max_duration)) for _ in range(machines)] for _ in range(jobs)]
    return JssInstance(np.array(dur), np.array(routes))


@st.composite
def instance_and_starts(draw, max_start=20, **kw):
    inst = draw(instances(**kw))
    starts = [[draw(st.integers(0, max_start)) for _ in range(inst.machines)] for _ in range(inst.jobs)]
    return inst, np.array(starts)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
