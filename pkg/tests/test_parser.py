"""Parser: grammar coverage, error reporting, round trips."""

from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from soskit.parsing import ParseError, parse, parse_tree, tree_max_var
from soskit.poly import Polynomial, canonical_text


class TestBasics:
    def test_single_variable(self):
        assert parse("x1") == Polynomial.variable(1, 0)

    def test_bare_x_is_x1(self):
        assert parse("x^2 + 1") == parse("x1^2 + 1")

    def test_multi_digit_index_sets_n_vars(self):
        p = parse("x12^2")
        assert p.n_vars == 12
        assert p.degree == 2

    def test_n_vars_hint_widens(self):
        p = parse("x1 + 1", n_vars_hint=4)
        assert p.n_vars == 4

    def test_juxtaposition_is_product(self):
        assert parse("2x1x2") == parse("2*x1*x2")

    def test_explicit_product_and_power(self):
        p = parse("3*x1^2*x2^3")
        assert p.coefficient((2, 3)) == 3

    def test_unary_minus(self):
        assert parse("-x1^2 + 1") == parse("1 - x1^2")

    def test_scientific_notation(self):
        assert parse("1e2*x1").coefficient((1,)) == 100.0

    def test_decimal_coefficients(self):
        assert parse("0.25*x1^2").coefficient((2,)) == 0.25


class TestParenthesesAndPowers:
    def test_squared_subexpression(self):
        assert parse("(x1 - x2)^2") == parse("x1^2 - 2*x1*x2 + x2^2")

    def test_square_pair_expansion(self):
        got = parse("(x1 - x1*x2)^2 + (x2^2 - x1^4)^2")
        want = parse("x1^2 - 2*x1^2*x2 + x1^2*x2^2 + x2^4 - 2*x1^4*x2^2 + x1^8")
        assert got == want

    def test_nested_parentheses(self):
        assert parse("((x1 + 1))^2") == parse("x1^2 + 2*x1 + 1")

    def test_power_of_sum_cubed(self):
        assert parse("(x1 + x2)^3") == parse(
            "x1^3 + 3*x1^2*x2 + 3*x1*x2^2 + x2^3"
        )

    def test_coefficient_times_square(self):
        assert parse("3*(x1 + 1)^2") == parse("3*x1^2 + 6*x1 + 3")


class TestFractions:
    def test_integer_fraction(self):
        assert parse("9/4").constant_term == 2.25

    def test_fraction_coefficient(self):
        assert parse("1/2*x1^2") == parse("0.5*x1^2")

    def test_exact_mode_keeps_rationals(self):
        from fractions import Fraction

        assert parse("1/3", exact=True).constant_term == Fraction(1, 3)

    def test_division_by_expression_rejected(self):
        with pytest.raises(ParseError):
            parse("x1 / x2")

    def test_division_of_expression_rejected(self):
        with pytest.raises(ParseError):
            parse("(x1 + 1) / 2")


class TestErrors:
    @pytest.mark.parametrize(
        "text",
        ["", "x1 +", "(x1", "x1 ^ x2", "x1^-2", "x1^2.5", "y1 + 1", "x1 $ x2", "()"],
    )
    def test_rejected_inputs(self, text):
        with pytest.raises(ParseError):
            parse(text)

    def test_error_carries_offset(self):
        with pytest.raises(ParseError) as exc_info:
            parse("x1 + $")
        assert exc_info.value.offset == 5

    def test_unbalanced_close(self):
        with pytest.raises(ParseError):
            parse("x1 + 1)")


class TestTree:
    def test_tree_max_var(self):
        assert tree_max_var(parse_tree("x1 + x7*x3")) == 7

    def test_tree_preserves_square_structure(self):
        from soskit.parsing import Pow, Sum

        tree = parse_tree("(x1 + x2)^2 + (x1 - 1)^2")
        assert isinstance(tree, Sum)
        assert all(isinstance(t, Pow) and t.exponent == 2 for t in tree.terms)


def _poly_strategy():
    def build(n_vars, entries):
        terms = {}
        for exps, coeff in entries:
            key = tuple(exps[:n_vars]) + (0,) * max(0, n_vars - len(exps))
            terms[key] = coeff
        return Polynomial(n_vars, terms)

    return st.integers(1, 3).flatmap(
        lambda n: st.lists(
            st.tuples(
                st.tuples(*([st.integers(0, 4)] * n)),
                st.integers(-40, 40).map(lambda v: v / 8.0),
            ),
            max_size=6,
        ).map(lambda entries: build(n, entries))
    )


class TestRoundTrip:
    @settings(max_examples=80)
    @given(_poly_strategy())
    def test_canonical_text_parses_back(self, p):
        assert parse(canonical_text(p), n_vars_hint=p.n_vars) == p

    def test_whitespace_insensitive(self):
        assert parse(" x1^2+ 2 * x2 ") == parse("x1^2 + 2*x2")
