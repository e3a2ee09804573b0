import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def naive_lcs(a, b) -> int:
    """Quadratic dynamic-programming LCS, the reference for the bit-parallel kernel."""
    a, b = list(a), list(b)
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def lp_transport(left: dict, right: dict) -> float:
    """Optimal joining cost via scipy's HiGHS linear program (independent of POT)."""
    from scipy.optimize import linprog

    lw, rw = list(left), list(right)
    n = len(lw[0])
    cost = np.array([[1 - naive_lcs(u, v) / n for v in rw] for u in lw])
    m, k = cost.shape
    A = np.zeros((m + k, m * k))
    for i in range(m):
        A[i, i * k:(i + 1) * k] = 1
    for j in range(k):
        A[m + j, j::k] = 1
    b = np.concatenate([[left[u] for u in lw], [right[v] for v in rw]])
    res = linprog(cost.ravel(), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert res.status == 0
    return float(res.fun)


@pytest.fixture(scope="session")
def halving():
    from fbarlab.circle import shipped_halving_example

    return shipped_halving_example()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
