import numpy as np
import pytest
from hypothesis import strategies as st


def random_state(rng, n=4):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def random_density(rng, rank=4):
    w = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = w @ w.conj().T
    return rho / np.trace(rho).real


def random_matrix(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


finite = st.floats(min_value=-3, max_value=3, allow_nan=False, allow_infinity=False)
complexes = st.builds(complex, finite, finite)
vectors = st.lists(complexes, min_size=4, max_size=4).map(lambda v: np.array(v, dtype=complex))
mat2 = st.lists(complexes, min_size=4, max_size=4).map(lambda v: np.array(v, dtype=complex).reshape(2, 2))


# -- acceptance report ---------------------------------------------------------------
# Tests marked ``criterion(n)`` are grouped by n; the terminal summary prints one
# PASS/FAIL line per criterion together with the details the tests recorded.

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")
    config.stash[_RESULTS] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    entry = item.config.stash[_RESULTS].setdefault(mark.args[0], dict(ok=True, details=[]))
    if not rep.passed:
        entry["ok"] = False
    if rep.when == "call":
        entry["details"] += [v for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(results):
        entry = results[n]
        status = "PASS" if entry["ok"] else "FAIL"
        detail = "; ".join(entry["details"])
        terminalreporter.write_line(f"criterion {n}: {status}" + (f"  ({detail})" if detail else ""))


@pytest.fixture
def detail(request):
    """Record a short measured value for the acceptance report."""

    def add(text: str):
        request.node.user_properties.append(("detail", text))

    return add
