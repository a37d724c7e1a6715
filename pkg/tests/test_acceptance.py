"""Acceptance criteria, each run at its stated size and tolerance.

Every criterion records one PASS/FAIL line (shown in the terminal summary)
with its worst observed value and wall time, then asserts.
"""

import time

import pytest

from abmediation.validation import (
    additivity_suite,
    consistency_suite,
    coverage_checks,
    delta_checks,
    exact_suite,
    identity_suite,
    residual_suite,
    null_suite,
    oracle_suite,
    reference_spec,
    sampling_study,
)

pytestmark = pytest.mark.slow


def record(log, label, checks, elapsed, budget=None):
    ok = all(c.passed for c in checks)
    timing = f"{elapsed:.1f}s" + (f" (budget {budget:g}s)" if budget is not None else "")
    within = budget is None or elapsed < budget
    status = "PASS" if ok and within else "FAIL"
    log.append(f"{status}  {label}  [{timing}]")
    for c in checks:
        log.append("      " + c.line())
    return ok, within


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


@pytest.fixture(scope="module")
def study():
    return timed(sampling_study, reference_spec(), 500, 10_000, 0)


def _assert(checks, ok, within):
    assert ok, "\n".join(c.line() for c in checks if not c.passed)
    assert within


def test_c1_decomposition_identity(acceptance_log):
    checks, dt = timed(identity_suite, reps=50, seed=0)
    _assert(checks, *record(acceptance_log, "C1 decomposition identity, 50 datasets", checks, dt, 10))


def test_c2_published_additivity(acceptance_log):
    checks, dt = timed(additivity_suite, tol=5e-5)
    _assert(checks, *record(acceptance_log, "C2 published %-change additivity", checks, dt))


def test_c3_consistency(acceptance_log):
    checks, dt = timed(consistency_suite, reps=20, seed=0, n=1_000_000)
    _assert(checks, *record(acceptance_log, "C3 consistency, 20 specs at N=1e6", checks, dt, 300))


def test_c4a_delta_standard_errors(acceptance_log, study):
    data, dt = study
    checks = delta_checks(data, rel_tol=0.15)
    _assert(checks, *record(acceptance_log, "C4a Delta-method SE vs replication SD, 500 reps", checks, dt, 600))


def test_c4b_coverage(acceptance_log, study):
    data, dt = study
    checks = coverage_checks(data, lo=0.92, hi=0.98)
    _assert(checks, *record(acceptance_log, "C4b 95% CI coverage, 500 reps", checks, dt, 600))


def test_c5_oracle_equivalence(acceptance_log):
    checks, dt = timed(oracle_suite, reps=10, seed=0, n_mc=200_000)
    _assert(checks, *record(acceptance_log, "C5 counterfactual oracle vs closed form, 10 specs", checks, dt, 120))


def test_c6_exact_identification(acceptance_log):
    checks, dt = timed(exact_suite, reps=20, seed=0)
    _assert(checks, *record(acceptance_log, "C6 GMM equals per-equation OLS", checks, dt, 30))


def test_c7_null_calibration(acceptance_log):
    checks, dt = timed(null_suite, reps=500, seed=0)
    _assert(checks, *record(acceptance_log, "C7 null p-value calibration, 500 reps", checks, dt, 600))


def test_c8_residual_means(acceptance_log):
    checks, dt = timed(residual_suite, seed=0, n=1_000_000)
    _assert(checks, *record(acceptance_log, "C8 conditional residual means, N=1e6", checks, dt))
