"""Sparse multivariate polynomial arithmetic.

A polynomial over x1..xn is a map from exponent tuples to coefficients.
Coefficients are floats by default; exact `fractions.Fraction` coefficients
flow through every operation unchanged, which is what the parser's exact
mode and the round-trip tests rely on. Zero coefficients are never stored,
and the zero polynomial has an empty term map and degree 0.

Term order everywhere is graded lexicographic: higher total degree first,
ties broken by exponent tuple (x1 outranks x2).
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

Exponents = tuple[int, ...]
Coeff = Union[int, float, Fraction]


def _grlex_key(exps: Exponents) -> tuple:
    return (sum(exps), exps)


class Polynomial:
    """Immutable sparse polynomial in ``n_vars`` variables."""

    __slots__ = ("n_vars", "terms", "_degree")

    def __init__(self, n_vars: int, terms: Mapping[Exponents, Coeff] | None = None):
        if n_vars < 1:
            raise ValueError(f"n_vars must be positive, got {n_vars}")
        clean: dict[Exponents, Coeff] = {}
        for exps, coeff in (terms or {}).items():
            exps = tuple(exps)
            if len(exps) != n_vars:
                raise ValueError(
                    f"exponent vector {exps} has length {len(exps)}, expected {n_vars}"
                )
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            if coeff != 0:
                clean[exps] = coeff
        self.n_vars = n_vars
        self.terms = clean
        self._degree = max((sum(e) for e in clean), default=0)

    # ---- constructors -------------------------------------------------

    @classmethod
    def zero(cls, n_vars: int) -> "Polynomial":
        return cls(n_vars, {})

    @classmethod
    def constant(cls, n_vars: int, value: Coeff) -> "Polynomial":
        return cls(n_vars, {(0,) * n_vars: value})

    @classmethod
    def variable(cls, n_vars: int, index: int) -> "Polynomial":
        """The polynomial x_{index+1}."""
        if not 0 <= index < n_vars:
            raise ValueError(f"variable index {index} out of range for n_vars={n_vars}")
        exps = [0] * n_vars
        exps[index] = 1
        return cls(n_vars, {tuple(exps): 1})

    # ---- basic queries -------------------------------------------------

    @property
    def degree(self) -> int:
        return self._degree

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, exps: Sequence[int]) -> Coeff:
        return self.terms.get(tuple(exps), 0)

    @property
    def constant_term(self) -> Coeff:
        return self.terms.get((0,) * self.n_vars, 0)

    def max_abs_coeff(self) -> float:
        return max((abs(float(c)) for c in self.terms.values()), default=0.0)

    def sorted_terms(self) -> list[tuple[Exponents, Coeff]]:
        """Terms in graded-lex order, highest degree first."""
        return sorted(self.terms.items(), key=lambda kv: _grlex_key(kv[0]), reverse=True)

    # ---- arithmetic ----------------------------------------------------

    def _check_compatible(self, other: "Polynomial") -> None:
        if self.n_vars != other.n_vars:
            raise ValueError(
                f"dimension mismatch: {self.n_vars} vs {other.n_vars} variables"
            )

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check_compatible(other)
        out = dict(self.terms)
        for exps, coeff in other.terms.items():
            out[exps] = out.get(exps, 0) + coeff
        return Polynomial(self.n_vars, out)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.n_vars, {e: -c for e, c in self.terms.items()})

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        self._check_compatible(other)
        out: dict[Exponents, Coeff] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                out[key] = out.get(key, 0) + c1 * c2
        return Polynomial(self.n_vars, out)

    def scale(self, factor: Coeff) -> "Polynomial":
        if factor == 0:
            return Polynomial.zero(self.n_vars)
        return Polynomial(self.n_vars, {e: c * factor for e, c in self.terms.items()})

    def power(self, exponent: int) -> "Polynomial":
        if exponent < 0:
            raise ValueError("negative polynomial power")
        result = Polynomial.constant(self.n_vars, 1)
        base = self
        k = exponent
        while k:
            if k & 1:
                result = result * base
            base = base * base if k > 1 else base
            k >>= 1
        return result

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.n_vars == other.n_vars and self.terms == other.terms

    def __hash__(self) -> int:
        return hash((self.n_vars, frozenset(self.terms.items())))

    def __repr__(self) -> str:
        return f"Polynomial({self.n_vars}, {canonical_text(self)!r})"

    # ---- evaluation ----------------------------------------------------

    def evaluate(self, point: Sequence[float]) -> float:
        if len(point) != self.n_vars:
            raise ValueError(
                f"point has {len(point)} coordinates, expected {self.n_vars}"
            )
        total = 0.0
        for exps, coeff in self.terms.items():
            term = float(coeff)
            for x, e in zip(point, exps):
                if e:
                    term *= float(x) ** e
            total += term
        return total

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at every row of ``points`` (shape (m, n_vars))."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.n_vars:
            raise ValueError(f"points must have shape (m, {self.n_vars})")
        m = points.shape[0]
        # cache per-variable power tables; exponents are small in practice
        max_exp = [0] * self.n_vars
        for exps in self.terms:
            for i, e in enumerate(exps):
                max_exp[i] = max(max_exp[i], e)
        powers = [None] * self.n_vars
        for i, me in enumerate(max_exp):
            col = points[:, i]
            tab = np.empty((me + 1, m))
            tab[0] = 1.0
            for e in range(1, me + 1):
                tab[e] = tab[e - 1] * col
            powers[i] = tab
        out = np.zeros(m)
        for exps, coeff in self.terms.items():
            term = np.full(m, float(coeff))
            for i, e in enumerate(exps):
                if e:
                    term *= powers[i][e]
            out += term
        return out

    # ---- transformations -------------------------------------------------

    def translate(self, shift: Sequence[Coeff], scale: Coeff = 1) -> "Polynomial":
        """Return q with q(x) = scale * p(x + shift), coefficient-exact."""
        if len(shift) != self.n_vars:
            raise ValueError(
                f"shift has {len(shift)} coordinates, expected {self.n_vars}"
            )
        if not float(scale) > 0:
            raise ValueError("scale must be positive")
        out: dict[Exponents, Coeff] = {}
        for exps, coeff in self.terms.items():
            # expand coeff * prod_i (x_i + d_i)^{e_i} via binomial coefficients
            partial: dict[Exponents, Coeff] = {(0,) * self.n_vars: coeff * scale}
            for i, e in enumerate(exps):
                if e == 0:
                    continue
                d = shift[i]
                nxt: dict[Exponents, Coeff] = {}
                for pexp, pc in partial.items():
                    for k in range(e + 1):
                        c = pc * math.comb(e, k) * (d ** (e - k) if e - k else 1)
                        if c == 0:
                            continue
                        key = list(pexp)
                        key[i] += k
                        key = tuple(key)
                        nxt[key] = nxt.get(key, 0) + c
                partial = nxt
            for key, c in partial.items():
                out[key] = out.get(key, 0) + c
        return Polynomial(self.n_vars, out)

    def as_float(self) -> "Polynomial":
        return Polynomial(self.n_vars, {e: float(c) for e, c in self.terms.items()})

    def as_fraction(self) -> "Polynomial":
        return Polynomial(
            self.n_vars, {e: Fraction(c) for e, c in self.terms.items()}
        )


def expand_squares(squares: Sequence[Polynomial]) -> Polynomial:
    """Expand sum_j squares[j]^2 into a single polynomial."""
    if not squares:
        raise ValueError("expand_squares requires a nonempty list")
    n_vars = squares[0].n_vars
    total = Polynomial.zero(n_vars)
    for q in squares:
        if q.n_vars != n_vars:
            raise ValueError("mixed n_vars in square list")
        total = total + q * q
    return total


def _fraction_text(value: Fraction) -> str:
    """Exact decimal when the denominator is 10-smooth, else 'p/q'."""
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{value.numerator}/{value.denominator}"
    shift = max(twos, fives)
    scaled = value * 10**shift
    assert scaled.denominator == 1
    digits = str(abs(scaled.numerator)).rjust(shift + 1, "0")
    sign = "-" if value < 0 else ""
    if shift == 0:
        return f"{sign}{digits}"
    return f"{sign}{digits[:-shift]}.{digits[-shift:]}"


def format_coeff(value: Coeff) -> str:
    """Shortest exact text for a coefficient; round-trips through parse."""
    if isinstance(value, Fraction):
        return _fraction_text(value)
    if isinstance(value, int):
        return str(value)
    f = float(value)
    if f.is_integer() and abs(f) < 1e16:
        return str(int(f))
    return repr(f)


def _monomial_text(exps: Exponents) -> str:
    parts = []
    for i, e in enumerate(exps):
        if e == 1:
            parts.append(f"x{i + 1}")
        elif e > 1:
            parts.append(f"x{i + 1}^{e}")
    return "*".join(parts)


def canonical_text(p: Polynomial) -> str:
    """Deterministic graded-lex rendering; parse(canonical_text(p)) == p."""
    if p.is_zero():
        return "0"
    pieces = []
    for exps, coeff in p.sorted_terms():
        mono = _monomial_text(exps)
        neg = float(coeff) < 0
        mag = -coeff if neg else coeff
        ctext = format_coeff(mag)
        if mono and ctext == "1":
            body = mono
        elif mono:
            body = f"{ctext}*{mono}"
        else:
            body = ctext
        if not pieces:
            pieces.append(f"-{body}" if neg else body)
        else:
            pieces.append(f"- {body}" if neg else f"+ {body}")
    return " ".join(pieces)
