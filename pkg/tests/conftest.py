"""Shared fixtures: instrumented benchmark runs, cached for the whole session."""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from afem_ocp.adapt import StopRule, run_adaptive
from afem_ocp.harness.problems import get_example
from afem_ocp.ocp import kkt_check


def brute_force_min_count(eta_sq, theta):
    """Smallest cardinality of any subset carrying a theta fraction (exhaustive)."""
    eta_sq = np.asarray(eta_sq, float)
    target = theta * math.fsum(eta_sq)
    n = len(eta_sq)
    for k in range(1, n + 1):
        for subset in itertools.combinations(range(n), k):
            if math.fsum(eta_sq[list(subset)]) >= target:
                return k
    return n


@dataclass
class IterationLog:
    iter: int
    n_elements: int
    osc_y_ok: bool
    osc_p_ok: bool
    marked_fraction: float
    doerfler_ok: bool
    marked_count: int
    brute_force_count: int | None
    argmax_radius: float
    kkt: object = None


@dataclass
class BenchRun:
    example: str
    theta: float
    mode: str
    run: object
    logs: list = field(default_factory=list)
    loop_seconds: float = 0.0

    @property
    def records(self):
        return self.run.records


def instrumented_run(example_id, theta=None, mode="adaptive", max_dofs=30000, mesh=None,
                     max_iters=math.inf, kkt=True):
    """Run one benchmark, auditing every iteration from the loop callback.

    Time spent in the audits is subtracted from the reported loop time.
    """
    ex = get_example(example_id)
    theta = ex.default_theta if theta is None else theta
    logs = []
    spent = [0.0]

    def audit_iteration(state):
        t0 = time.perf_counter()
        ind = state.indicators
        eta = ind.eta_sq
        total = math.fsum(eta)
        marked = np.asarray(state.marked)
        frac = math.fsum(eta[marked]) / total if (total > 0 and marked.size) else float("nan")
        bulk_ok = math.fsum(eta[marked]) >= theta * total
        brute = None
        if mode == "adaptive" and state.mesh.n_elements <= 12 and marked.size:
            brute = brute_force_min_count(eta, theta)
        top = int(np.argmax(eta))
        radius = float(np.hypot(*state.mesh.centroids[top]))
        logs.append(IterationLog(
            state.record.iter, state.mesh.n_elements,
            bool(np.all(ind.osc_y_sq <= ind.eta_y_sq)),
            bool(np.all(ind.osc_p_sq <= ind.eta_p_sq)),
            frac, bulk_ok, int(marked.size), brute, radius,
            kkt_check(state.solution, rng=state.record.iter) if kkt else None))
        spent[0] += time.perf_counter() - t0

    start = time.perf_counter()
    run = run_adaptive(ex.prob, ex.initial_mesh() if mesh is None else mesh, theta,
                       StopRule(max_iters=max_iters, max_dofs=max_dofs), mode=mode,
                       on_iteration=audit_iteration, check_conformity=True)
    loop = time.perf_counter() - start - spent[0]
    return BenchRun(str(example_id), theta, mode, run, logs, loop)


_CACHE = {}


def cached_run(key, **kwargs):
    if key not in _CACHE:
        _CACHE[key] = instrumented_run(**kwargs)
    return _CACHE[key]


@pytest.fixture(scope="session")
def ex1_adaptive():
    return cached_run("ex1", example_id="1", theta=0.4)


@pytest.fixture(scope="session")
def ex1_uniform():
    return cached_run("ex1u", example_id="1", mode="uniform")


@pytest.fixture(scope="session")
def ex2_adaptive():
    return cached_run("ex2", example_id="2", theta=0.5)


@pytest.fixture(scope="session")
def ex3_adaptive():
    return cached_run("ex3", example_id="3", theta=0.4)


@pytest.fixture(scope="session")
def all_adaptive(ex1_adaptive, ex2_adaptive, ex3_adaptive):
    return [ex1_adaptive, ex2_adaptive, ex3_adaptive]


# -------------------------------------------------- acceptance line printer

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _CRITERIA[number] = (title, rep.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcome, detail = _CRITERIA[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {number:2d} {verdict}: {title}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)
