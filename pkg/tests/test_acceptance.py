"""One test per acceptance criterion; each prints a single PASS/FAIL line
(visible with ``pytest -s`` and in the captured output of failures)."""
import pytest

from brittle_membrane import acceptance


def _check(number):
    res = acceptance.evaluate(number)
    print(res.line())
    assert res.passed, res.line()


def test_reduced_density_closed_form():
    _check(1)


def test_reduced_density_blows_up_at_parallel_columns():
    _check(2)


@pytest.mark.slow
def test_envelope_monotone_in_depth():
    _check(3)


def test_envelope_growth_bound():
    _check(4)


def test_crack_diffeomorphism():
    _check(5)


def test_laminate_lp_bound():
    _check(6)


def test_laminate_energy_identity():
    _check(7)


def test_aff_star_chain_through_crack_map():
    _check(8)


def test_limsup_bound():
    _check(9)


def test_bulk_gap_halves_with_rho():
    _check(10)


def test_gamma_csv_deterministic():
    _check(11)
