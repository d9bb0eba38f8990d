"""Randomized invariant suites over the documented parameter ranges."""
import pytest

from tests.property_harness import run_const_suite, run_oracle_suite, run_typed_suite


@pytest.fixture(scope="session")
def const_suite_results():
    return run_const_suite(n_draws=110)


@pytest.fixture(scope="session")
def typed_suite_results():
    return run_typed_suite(n_draws=25)


def test_constant_reservation_draws(const_suite_results):
    assert len(const_suite_results) >= 100


def test_typed_reservation_draws(typed_suite_results):
    assert len(typed_suite_results) == 25
    # both qualitative regimes appear among the draws
    assert any(s.b0 > 1e-9 for s in typed_suite_results)
    assert any(s.a0 < 1.0 - 1e-9 for s in typed_suite_results)


def test_oracle_budgeted_draws():
    run_oracle_suite(n_draws=2)
