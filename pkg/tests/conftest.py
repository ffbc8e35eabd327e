"""Shared fixtures, hypothesis settings, and the acceptance summary hook."""

from __future__ import annotations

import time
from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cardionas.synthetic import make_synthetic_dataset

settings.register_profile(
    "repo", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


# Acceptance criteria record their outcome here; the terminal-summary hook
# prints one line per criterion at the end of the run.
ACCEPTANCE_RESULTS: dict[int, tuple[str, str, float]] = {}


@contextmanager
def acceptance_criterion(number: int, title: str, budget_seconds: float):
    """Track one acceptance criterion: outcome, elapsed time, and budget."""
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        ACCEPTANCE_RESULTS[number] = (title, "FAIL", time.perf_counter() - start)
        raise
    elapsed = time.perf_counter() - start
    status = "PASS" if elapsed <= budget_seconds else "FAIL"
    ACCEPTANCE_RESULTS[number] = (title, status, elapsed)
    print(f"criterion {number}: {status} - {title} ({elapsed:.1f}s)")
    assert elapsed <= budget_seconds, (
        f"criterion {number} exceeded its {budget_seconds:.0f}s budget: {elapsed:.1f}s")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        title, status, dt = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d} [{status}] {title} ({dt:.1f}s)")


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small synthetic beat dataset shared by the slower network tests.

    Treated as read-only by every consumer.
    """
    return make_synthetic_dataset(seed=7, per_class=30, length=64)


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.PCG64(1234))
