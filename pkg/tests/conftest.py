"""Shared fixtures plus session timing for the suite-runtime criterion.

The ``montecarlo`` marker tags statistical tests that repeat many seeded
trials; their wall time is tracked separately so the runtime budget check
(which excludes them) can run as the last test of the session.
"""

import time

import pytest

SESSION = {"start": 0.0, "montecarlo_seconds": 0.0}


def pytest_sessionstart(session):
    SESSION["start"] = time.perf_counter()


def pytest_collection_modifyitems(config, items):
    # acceptance runs last so its timing check observes the whole suite
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_protocol(item, nextitem):
    t0 = time.perf_counter()
    yield
    if item.get_closest_marker("montecarlo") is not None:
        SESSION["montecarlo_seconds"] += time.perf_counter() - t0
