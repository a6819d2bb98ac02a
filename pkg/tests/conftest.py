"""Shared fixtures: the heavy Monte-Carlo studies used by the acceptance tests.

Everything here is deterministic: designs are keyed by fixed seeds and
replicate streams, so repeated runs (and different worker counts) give
bit-identical results.  The acceptance summary hook prints one PASS/FAIL
line per acceptance criterion at the end of the run.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass

import numpy as np
import pytest

from causalsfa.did import lr_test_indirect
from causalsfa.simulate import SimDesign, generate, map_replicates, replicate_study
from causalsfa.staggered import confounding_audit

N_WORKERS = 4


@dataclass
class TimedResult:
    value: object
    elapsed: float


def _timed(fn):
    t0 = time.perf_counter()
    value = fn()
    return TimedResult(value=value, elapsed=time.perf_counter() - t0)


@pytest.fixture(scope="session")
def study_two_group():
    design = SimDesign(kind="two_group", seed=1101, params={"n": 50000})
    return _timed(
        lambda: replicate_study(design, reps=200, estimator="two_group_mle", n_workers=N_WORKERS)
    )


@pytest.fixture(scope="session")
def study_did():
    design = SimDesign(kind="did_2x2", seed=1202, params={"n_per_cell": 4000})
    return _timed(
        lambda: replicate_study(design, reps=200, estimator="did_sfa", n_workers=N_WORKERS)
    )


@pytest.fixture(scope="session")
def study_aps():
    design = SimDesign(kind="endogenous", seed=1303, params={"n": 20000})
    return _timed(
        lambda: replicate_study(design, reps=200, estimator="aps_mle", n_workers=N_WORKERS)
    )


@pytest.fixture(scope="session")
def study_srd():
    design = SimDesign(kind="rdd_sharp", seed=1404, params={"n": 20000})
    return _timed(
        lambda: replicate_study(design, reps=200, estimator="srd_sfa_mle", n_workers=N_WORKERS)
    )


@pytest.fixture(scope="session")
def study_naive_did():
    design = SimDesign(kind="did_2x2", seed=1505, params={"n_per_cell": 4000})
    return _timed(
        lambda: replicate_study(design, reps=200, estimator="naive_did", n_workers=N_WORKERS)
    )


@pytest.fixture(scope="session")
def audit_staggered():
    design = SimDesign(kind="staggered", seed=1626)
    return _timed(
        lambda: confounding_audit(design, reps=400, n_workers=N_WORKERS)
    )


@pytest.fixture(scope="session")
def audit_pure_inefficiency():
    design = SimDesign(
        kind="staggered", seed=1707, params={"tech": (0.0, 0.0, 0.0, 0.0)}
    )
    return _timed(
        lambda: confounding_audit(design, reps=400, n_workers=N_WORKERS)
    )


@pytest.fixture(scope="session")
def study_srd_local_linear():
    # level-only inefficiency jump: the conditional mean is exactly linear on
    # each side, so the local linear estimator is unbiased at any window
    design = SimDesign(
        kind="rdd_sharp", seed=1808, params={"n": 10000, "rho2": 0.0, "rho3": 0.0}
    )
    return _timed(
        lambda: replicate_study(
            design, reps=200, estimator="srd_local_linear", n_workers=N_WORKERS
        )
    )


def _lr_pvalues(design: SimDesign, reps: int) -> np.ndarray:
    def one(stream: int) -> float:
        return lr_test_indirect(generate(design, stream=stream), "gamma3").pvalue

    return np.asarray(map_replicates(one, reps, N_WORKERS))


@pytest.fixture(scope="session")
def lr_size_pvalues():
    design = SimDesign(
        kind="did_2x2", seed=1909, params={"n_per_cell": 2000, "gamma3": 0.0}
    )
    return _timed(lambda: _lr_pvalues(design, reps=500))


@pytest.fixture(scope="session")
def lr_power_pvalues():
    design = SimDesign(kind="did_2x2", seed=2010, params={"n_per_cell": 4000})
    return _timed(lambda: _lr_pvalues(design, reps=200))


@pytest.fixture(scope="session")
def endo_contrast():
    design = SimDesign(kind="endogenous", seed=2111, params={"n": 2000})

    def run():
        return {
            est: replicate_study(design, reps=200, estimator=est, n_workers=N_WORKERS)
            for est in ("cols_naive_endog", "c2sls", "gmm", "aps_mle")
        }

    return _timed(run)


_ACCEPTANCE_PATTERN = re.compile(r"test_criterion_(\d+)_(\w+)")
_acceptance_outcomes: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    match = _ACCEPTANCE_PATTERN.search(report.nodeid)
    if not match:
        return
    number, name = int(match.group(1)), match.group(2)
    if report.when == "call":
        _acceptance_outcomes[number] = (name, report.outcome)
    elif report.when == "setup" and report.outcome != "passed":
        _acceptance_outcomes[number] = (name, report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_outcomes:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for number in sorted(_acceptance_outcomes):
        name, outcome = _acceptance_outcomes[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"  criterion {number:2d} ({name}): {verdict}")
