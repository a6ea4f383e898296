from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dpmrater.data import RatingsTable, build_design

settings.register_profile("repo", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def two_cluster_table(n_raters=30, per_rater=10, q_var=0.1, sigma=0.5, beta=2.0, seed=0):
    rng = np.random.default_rng(seed)
    u = np.where(rng.random(n_raters) < 0.5, -3.0, 3.0) + np.sqrt(q_var) * rng.standard_normal(n_raters)
    r = np.repeat(np.arange(n_raters), per_rater)
    x = rng.standard_normal(r.size)
    y = beta * x + u[r] + sigma * rng.standard_normal(r.size)
    return RatingsTable.from_arrays(r + 1, np.arange(1, r.size + 1), y, x[:, None]), u


@pytest.fixture
def small_design():
    table, _ = two_cluster_table()
    return build_design(table)
