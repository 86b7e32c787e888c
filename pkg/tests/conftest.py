import numpy as np
import pytest
from hypothesis import settings

from hympc.dynamics import DroneState, GateObservation
from hympc.mpc.solver import MpcConfig, MpcRequest

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_request(rng: np.random.Generator, lam=None, t_p=None) -> MpcRequest:
    x0 = DroneState(p=rng.uniform([-6, -1, 1], [0, 1, 2]), v=rng.normal(0, 1, 3),
                    q=rng.normal(size=4) * 0.1 + np.array([1.0, 0, 0, 0]))
    g_now = GateObservation(rng.uniform([2, -1.5, 1], [2, 1.5, 1.8]), rng.normal(0, 1, 3))
    g_pred = GateObservation(rng.uniform([2, -1.5, 1], [2, 1.5, 1.8]), rng.normal(0, 1, 3))
    return MpcRequest(
        x0, g_now, g_pred,
        float(rng.uniform(0.1, 1.0)) if t_p is None else t_p,
        DroneState(p=np.array([4.0, 0.0, 1.5])),
        float(rng.uniform()) if lam is None else lam,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def mpc_cfg():
    return MpcConfig()


# one line per acceptance criterion, echoed again at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
