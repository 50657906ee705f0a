"""Shared fixtures: classical polynomials with known SoS status."""

from __future__ import annotations

import pytest

from soskit.parsing import parse

# Nonnegative everywhere, yet not a sum of squares.
MOTZKIN = "x1^4*x2^2 + x1^2*x2^4 + 1 - 3*x1^2*x2^2"
ROBINSON = (
    "x1^6 + x2^6 + x3^6"
    " - x1^4*x2^2 - x1^4*x3^2 - x2^4*x1^2 - x2^4*x3^2 - x3^4*x1^2 - x3^4*x2^2"
    " + 3*x1^2*x2^2*x3^2"
)
SHIFTED_COUPLED_QUARTIC = (
    "x1^4 + x2^4 + x3^4 + 2*x1^2 + 2*x2^2 + 2*x3^2"
    " + 8*x1*x2 + 8*x1*x3 + 8*x2*x3 + 9/4"
)
MOTZKIN_LIFTED = "x1^4*x2^2*x3^2 + x1^2*x2^4*x3^2 + x3^4 + 1 - 3*x1^2*x2^2*x3^2"

NONNEG_NOT_SOS = {
    "motzkin": MOTZKIN,
    "robinson": ROBINSON,
    "shifted_coupled_quartic": SHIFTED_COUPLED_QUARTIC,
    "motzkin_lifted": MOTZKIN_LIFTED,
}

# Sums of squares, given in expanded form.
SOS_EXAMPLES = {
    "coupled_quartic": "x1^4 + x2^4 + 1 - x1^2 - x2^2 - x1^2*x2^2",
    "difference_square": "x1^4 - 2*x1^2*x2^2 + x2^4",  # (x1^2 - x2^2)^2
    "binomial_square": "x1^4 + 2*x1^2*x2 - 2*x1^2 + x2^2 - 2*x2 + 1",  # (x1^2+x2-1)^2
    "univariate_even": "x^6 + 3*x^4 + 2*x^2",
    "perfect_quadratic": "x1^2 + x2^2 - 2*x1*x2",
    "octic_square_pair": "x1^2 - 2*x1^2*x2 + x1^2*x2^2 + x2^4 - 2*x1^4*x2^2 + x1^8",
}

# Take negative values somewhere; a witness point must be produced.
NEGATIVE_EXAMPLES = {
    "translated_quadratic": "1.8*x1^2 + 10.8*x1 + 1.2*x2^2 + 4.8*x2 + 20.82",
    "cubic_tail": "x^4 + x^3 - 1",
    "small_negative_shift": "x1^2 + x1^2*x2^2 + x2^4 - 0.1",
    "shifted_square_pair": "(x1 - x1*x2)^2 + (x2^2 - x1^4)^2 - 20",
    "odd_tail_univariate": "x^6 + 3*x^4 + 2*x",
    "coupled_quartic_neg": "x1^4 - 4*x1^3*x2 + 7*x1^2*x2^2 - 4*x1*x2^3 - 4*x1*x2 + x2^4",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from test_acceptance import CRITERIA_RESULTS
    except ImportError:
        return
    if not CRITERIA_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA_RESULTS):
        desc, status = CRITERIA_RESULTS[num]
        terminalreporter.write_line(f"criterion {num}: {status} - {desc}")


@pytest.fixture(scope="session")
def motzkin():
    return parse(MOTZKIN)


@pytest.fixture(scope="session")
def nonneg_not_sos():
    return {name: parse(text) for name, text in NONNEG_NOT_SOS.items()}


@pytest.fixture(scope="session")
def sos_examples():
    return {name: parse(text) for name, text in SOS_EXAMPLES.items()}


@pytest.fixture(scope="session")
def negative_examples():
    return {name: parse(text) for name, text in NEGATIVE_EXAMPLES.items()}
