import pathlib

import numpy as np
import pytest

from artifact import cct as cctmod
from artifact import equilibrium as eqm
from artifact.lmi import CertificateMatrices
from artifact.netmodel import parse_network

CASES = pathlib.Path(__file__).resolve().parent.parent / "cases"


def load_model(name, **kwargs):
    return parse_network((CASES / name).read_text(), **kwargs)


@pytest.fixture(scope="session")
def model2():
    return load_model("case2.json")


@pytest.fixture(scope="session")
def model2_pre():
    return load_model("case2_pre.json")


@pytest.fixture(scope="session")
def model3():
    return load_model("case3.json")


@pytest.fixture(scope="session")
def model9():
    return load_model("case9.json")


@pytest.fixture(scope="session")
def eq2(model2):
    return eqm.solve_sep(model2)


@pytest.fixture(scope="session")
def eq2_pre(model2_pre):
    return eqm.solve_sep(model2_pre)


@pytest.fixture(scope="session")
def eq3(model3):
    return eqm.solve_sep(model3)


@pytest.fixture(scope="session")
def eq9(model9):
    return eqm.solve_sep(model9)


# Published witness certificates (printed to 4 decimals, hence the
# relaxed verification tolerances in the tests that use them).
@pytest.fixture(scope="session")
def witness2():
    return CertificateMatrices(
        Q=np.array([[0.0443, 0.0127], [0.0127, 0.0879]]),
        K=np.array([0.0968]), H=np.array([0.2412]),
        gamma=7.0, beta=0.5114)


WITNESS3_Q = np.array([
    [3.8376, 3.8012, 3.5779, 7.5549, 7.4619, 7.4166],
    [3.8012, 3.8457, 3.5698, 7.4776, 7.5530, 7.4029],
    [3.5779, 3.5698, 4.0690, 7.4010, 7.4185, 7.6140],
    [7.5549, 7.4776, 7.4010, 38.9402, 38.2449, 38.0704],
    [7.4619, 7.5530, 7.4185, 38.2449, 38.9534, 38.0571],
    [7.4166, 7.4029, 7.6140, 38.0704, 38.0571, 39.1280]])


@pytest.fixture(scope="session")
def witness3():
    beta = (1 - np.sin(np.pi / 10)) / (np.pi / 2 - np.pi / 10)
    return CertificateMatrices(
        Q=WITNESS3_Q,
        K=np.array([0.2554, 0.3638, 0.4386]),
        H=np.array([0.0943, 0.2533, 0.2960]),
        gamma=3.0, beta=beta)


@pytest.fixture(scope="session")
def cfg2():
    return cctmod.ScreenConfig(lam=np.pi / 10)


@pytest.fixture(scope="session")
def cfg9():
    return cctmod.ScreenConfig(lam=np.pi / 8)


#: wall-clock seconds spent building the expensive session fixtures,
#: consulted by the acceptance runtime budgets
FIXTURE_TIMES = {}


@pytest.fixture(scope="session")
def grid2_estimates(model2, model2_pre, cfg2):
    """Procedure-1 estimates on the two-bus system for gamma = 1..10."""
    import time
    t0 = time.monotonic()
    out = [cctmod.procedure1(model2, (1, 2), [float(g)], cfg=cfg2,
                             model_pre=model2_pre)
           for g in range(1, 11)]
    FIXTURE_TIMES["grid2"] = time.monotonic() - t0
    return out


@pytest.fixture(scope="session")
def estimates9(model9, cfg9):
    """Procedure-1 estimates for every line of the nine-bus system."""
    import time
    t0 = time.monotonic()
    out = {line: cctmod.procedure1(model9, line, [7e-6], cfg=cfg9)
           for line in model9.edges}
    FIXTURE_TIMES["nine"] = time.monotonic() - t0
    return out


@pytest.fixture(scope="session")
def true_cct_46(model9, eq9):
    """Bisection oracle for the nine-bus line {4, 6} (shared: expensive)."""
    import time

    from artifact.sim import true_cct
    t0 = time.monotonic()
    out = true_cct(model9, eq9, (4, 6), bisect_tol=5e-3, cap=16.0)
    FIXTURE_TIMES["true_cct_46"] = time.monotonic() - t0
    return out
