import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from maxsum_bethe.model import Model

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def binary_edge(table=((0.0, 1.0), (2.0, 0.0)), unary=((0.0, 0.0), (0.0, 0.0))) -> Model:
    return Model([2, 2], [list(u) for u in unary], [((0, 1), np.array(table, dtype=float))])


@st.composite
def small_models(draw, max_vars=4, max_domain=3, allow_ternary=True, max_states=2**10):
    """Random small models (possibly with a ternary factor) within an enumeration budget."""
    n = draw(st.integers(1, max_vars))
    domains = draw(st.lists(st.integers(1, max_domain), min_size=n, max_size=n))
    if math.prod(domains) > max_states:
        domains = [min(d, 2) for d in domains]
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    candidates = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if allow_ternary and n >= 3:
        candidates.append((0, 1, 2))
    mask = draw(st.lists(st.booleans(), min_size=len(candidates), max_size=len(candidates)))
    edges = [e for e, keep in zip(candidates, mask) if keep]
    unary = [rng.uniform(-1, 1, d) for d in domains]
    factors = [(e, rng.uniform(-1, 1, tuple(domains[v] for v in e))) for e in edges]
    return Model(domains, unary, factors)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records one acceptance verdict and returns ``ok``."""
    def record(n: int, ok: bool, detail: str = "") -> bool:
        CRITERIA[n] = ("PASS" if ok else "FAIL", detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        verdict, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2}: {verdict}  {detail}")
