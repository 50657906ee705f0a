"""Labeled benchmark generation for the SoS classification task.

Nineteen test sets with controlled structure and difficulty:

* Set 1 -- odd-degree polynomials (never SoS);
* Sets 2a/2b and 2.1a/2.1b -- sums of squares in expanded or squared
  (unexpanded) form, and negatively shifted counterparts;
* Sets 3.1/3.2/4 -- decidable special-case families (quadratics,
  bivariate quartics, quadratic-plus-quartic-regularization) and
  negatively shifted counterparts;
* Sets 5.1-5.4 -- polynomials built as phi^T Q phi from a structured
  Gram matrix Q (dense / sparse / low-rank / ill-conditioned PSD, or
  indefinite for the "b" variants).

Labels are true by construction for PSD/square builds; indefinite builds
are confirmed by the checker before a record is emitted. Construction
inputs are quantized to two decimals wherever exactness matters, so
rounding printed coefficients to four decimals is lossless for those
sets. Per-record RNG streams are derived from (suite seed, set id,
record index), making generation order-independent and byte-reproducible.
"""

from __future__ import annotations

import json
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from soskit.checker import CheckerConfig, Label, _descent, classify
from soskit.gram import _all_monomials
from soskit.poly import Polynomial, canonical_text, expand_squares, format_coeff


@dataclass
class GenSpec:
    test_set_id: str
    family: str
    count: int
    label: str  # "sos" or "not_sos" -- the intended label of the set
    difficulty: str  # "easy" | "medium" | "hard"
    n_vars_range: tuple[int, int] = (2, 4)
    degree_range: tuple[int, int] = (2, 4)
    coeff_range: tuple[float, float] = (-5.0, 5.0)
    sparsity: Optional[float] = None  # fraction of nonzero factor entries
    rank: Optional[int] = None
    eigenvalue_spread: Optional[float] = None  # max/min eigenvalue ratio
    length_cap: int = 4000
    rng_seed: int = 0


@dataclass
class DatasetRecord:
    id: str
    test_set: str
    polynomial: str
    n_vars: int
    degree: int
    label: str
    difficulty: str
    length_chars: int
    justification: str
    provenance: dict = field(default_factory=dict)

    def to_json_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)

    @classmethod
    def from_json_line(cls, line: str) -> "DatasetRecord":
        return cls(**json.loads(line))


def _record_rng(spec: GenSpec, idx: int) -> np.random.Generator:
    return np.random.default_rng(
        (spec.rng_seed, zlib.crc32(spec.test_set_id.encode()), idx)
    )


def _quantized(rng: np.random.Generator, lo: float, hi: float, decimals: int = 2) -> float:
    return float(np.round(rng.uniform(lo, hi), decimals))


def _round_coeffs(p: Polynomial, decimals: int = 4) -> Polynomial:
    terms = {e: round(float(c), decimals) for e, c in p.terms.items()}
    return Polynomial(p.n_vars, {e: c for e, c in terms.items() if c != 0})


def _random_poly(
    rng: np.random.Generator,
    n_vars: int,
    degree: int,
    n_terms: int,
    coeff_range: tuple[float, float],
    decimals: int = 2,
) -> Polynomial:
    """Random sparse polynomial with quantized coefficients, degree <= degree."""
    terms: dict[tuple[int, ...], float] = {}
    monos = _all_monomials(n_vars, degree)
    picks = rng.choice(len(monos), size=min(n_terms, len(monos)), replace=False)
    for k in picks:
        c = _quantized(rng, *coeff_range, decimals)
        if c != 0:
            terms[monos[k]] = c
    if not terms:
        terms[(0,) * n_vars] = 1.0
    return Polynomial(n_vars, terms)


# ---- set 1: odd degree -------------------------------------------------------


def _gen_odd_degree(spec: GenSpec, idx: int) -> DatasetRecord:
    rng = _record_rng(spec, idx)
    n = int(rng.integers(spec.n_vars_range[0], spec.n_vars_range[1] + 1))
    odd_degrees = [d for d in range(spec.degree_range[0], spec.degree_range[1] + 1) if d % 2]
    deg = int(rng.choice(odd_degrees))
    p = _random_poly(rng, n, deg - 1, int(rng.integers(3, 12)), spec.coeff_range)
    # force one term of odd total degree that dominates everything else
    exps = [0] * n
    budget = deg
    for i in rng.permutation(n):
        e = int(rng.integers(0, budget + 1))
        exps[i] = e
        budget -= e
        if budget == 0:
            break
    exps[int(rng.integers(0, n))] += budget
    lead = _quantized(rng, *spec.coeff_range)
    if lead == 0:
        lead = 1.0
    p = p + Polynomial(n, {tuple(exps): lead})
    text = canonical_text(p)
    return DatasetRecord(
        id=f"{spec.test_set_id}-{idx:04d}",
        test_set=spec.test_set_id,
        polynomial=text,
        n_vars=n,
        degree=p.degree,
        label="not_sos",
        difficulty=spec.difficulty,
        length_chars=len(text),
        justification=f"maximal total degree {p.degree} is odd",
        provenance={"family": "odd_degree"},
    )


# ---- sets 2 / 2.1: square lists ----------------------------------------------


def _square_list(rng: np.random.Generator, spec: GenSpec) -> list[Polynomial]:
    n = int(rng.integers(spec.n_vars_range[0], spec.n_vars_range[1] + 1))
    half = max(1, int(rng.integers(1, spec.degree_range[1] // 2 + 1)))
    k = int(rng.integers(2, 5))
    return [
        _random_poly(rng, n, half, int(rng.integers(2, 6)), spec.coeff_range)
        for _ in range(k)
    ]


def _squared_form_text(squares: Sequence[Polynomial], shift: float = 0.0) -> str:
    parts = [f"({canonical_text(q)})^2" for q in squares]
    text = " + ".join(parts)
    if shift:
        text += f" - {format_coeff(round(shift, 4))}"
    return text


def _estimate_minimum(p: Polynomial, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Grid + random sampling + descent estimate of the global minimum."""
    n = p.n_vars
    pts = rng.uniform(-2.0, 2.0, size=(512, n))
    vals = p.evaluate_many(pts)
    order = np.argsort(vals)[:8]
    X, fX = _descent(p, pts[order], 150, -np.inf)
    i = int(np.argmin(fX))
    return X[i], float(fX[i])


def _gen_square_form(spec: GenSpec, idx: int, expanded: bool, negative_shift: bool) -> DatasetRecord:
    rng = _record_rng(spec, idx)
    for _ in range(100):
        squares = _square_list(rng, spec)
        p = expand_squares(squares)
        p = _round_coeffs(p)  # exact: squared 2-decimal entries are 4-decimal
        if p.is_zero() or p.degree == 0:
            continue
        shift = 0.0
        witness = None
        if negative_shift:
            x_min, v_min = _estimate_minimum(p, rng)
            shift = round(max(v_min, 0.0), 4) + 1.0
            witness = x_min
        if expanded:
            q = p - Polynomial.constant(p.n_vars, shift) if shift else p
            text = canonical_text(q)
        else:
            q = p - Polynomial.constant(p.n_vars, shift) if shift else p
            text = _squared_form_text(squares, shift)
        if negative_shift:
            value = q.evaluate(witness)
            if value >= -0.5:  # shift estimate failed; resample
                continue
            justification = (
                f"value {value:.4g} at {np.round(witness, 4).tolist()} is negative"
            )
            label = "not_sos"
        else:
            justification = f"explicit sum of {len(squares)} squares"
            label = "sos"
        if len(text) > 2 * spec.length_cap:
            continue
        return DatasetRecord(
            id=f"{spec.test_set_id}-{idx:04d}",
            test_set=spec.test_set_id,
            polynomial=text,
            n_vars=q.n_vars,
            degree=q.degree,
            label=label,
            difficulty=spec.difficulty,
            length_chars=len(text),
            justification=justification,
            provenance={
                "family": "square_form",
                "expanded": expanded,
                "shift": shift,
                "squares": [canonical_text(s) for s in squares],
            },
        )
    raise RuntimeError(f"resampling exhausted for {spec.test_set_id} record {idx}")


# ---- sets 3.1 / 3.2 / 4: special-case families --------------------------------


def _psd_quadratic(rng: np.random.Generator, n: int, coeff_range) -> Polynomial:
    """Quadratic x^T R^T R x + linear-square terms, nonnegative by build."""
    linears = []
    for _ in range(rng.integers(1, n + 2)):
        terms = {(0,) * n: _quantized(rng, *coeff_range, 1)}
        for i in range(n):
            exps = tuple(1 if j == i else 0 for j in range(n))
            terms[exps] = _quantized(rng, *coeff_range, 1)
        linears.append(Polynomial(n, terms))
    return expand_squares(linears)


def _special_case_sample(rng: np.random.Generator, spec: GenSpec, family: str) -> Polynomial:
    n = int(rng.integers(spec.n_vars_range[0], spec.n_vars_range[1] + 1))
    if family == "quadratic":
        return _psd_quadratic(rng, n, spec.coeff_range)
    if family == "univariate_even":
        squares = [
            _random_poly(rng, 1, int(rng.integers(1, 4)), 3, spec.coeff_range, 1)
            for _ in range(rng.integers(2, 4))
        ]
        return expand_squares(squares)
    if family == "quartic_2var":
        squares = [
            _random_poly(rng, 2, 2, int(rng.integers(2, 5)), spec.coeff_range, 1)
            for _ in range(rng.integers(2, 4))
        ]
        return expand_squares(squares)
    if family == "quartic_homog_3var":
        squares = []
        monos = [e for e in _all_monomials(3, 2) if sum(e) == 2]
        for _ in range(rng.integers(2, 4)):
            terms = {}
            for e in monos:
                c = _quantized(rng, *spec.coeff_range, 1)
                if c != 0:
                    terms[e] = c
            if terms:
                squares.append(Polynomial(3, terms))
        if not squares:
            squares = [Polynomial(3, {(2, 0, 0): 1.0})]
        return expand_squares(squares)
    if family == "quad_quartic":
        # nonnegative quadratic plus a quartic regularizer sum(a_i x_i^4)
        p = _psd_quadratic(rng, n, spec.coeff_range)
        reg = {}
        for i in range(n):
            c = abs(_quantized(rng, 0.1, spec.coeff_range[1], 1))
            exps = tuple(4 if j == i else 0 for j in range(n))
            reg[exps] = c
        return p + Polynomial(n, reg)
    raise ValueError(f"unknown special-case family: {family}")


_SPECIAL_MIX = {
    # set family -> rotation of concrete sub-families
    "special_mixed": ("quadratic", "univariate_even", "quartic_homog_3var"),
    "quartic_2var": ("quartic_2var",),
    "quad_quartic": ("quad_quartic",),
}


def _gen_special_case(spec: GenSpec, idx: int, negative: bool) -> DatasetRecord:
    rng = _record_rng(spec, idx)
    mix = _SPECIAL_MIX[spec.family.removesuffix("_neg")]
    family = mix[idx % len(mix)]
    cfg = CheckerConfig(rng_seed=int(rng.integers(0, 2**31)))
    for _ in range(100):
        p = _round_coeffs(_special_case_sample(rng, spec, family))
        if p.is_zero() or p.degree == 0:
            continue
        if negative:
            x_min, v_min = _estimate_minimum(p, rng)
            shift = round(max(v_min, 0.0), 4) + 1.0
            p = p - Polynomial.constant(p.n_vars, shift)
            if p.evaluate(x_min) >= -0.5:
                continue
        verdict = classify(p, cfg)
        if negative and verdict.label in (Label.NOT_SOS, Label.LIKELY_NOT_SOS):
            justification = f"negative value confirmed (step {verdict.deciding_step})"
            label = "not_sos"
        elif not negative and verdict.label is Label.SOS:
            justification = (
                f"nonnegative {family} family; certified (step {verdict.deciding_step})"
            )
            label = "sos"
        else:
            continue
        text = canonical_text(p)
        return DatasetRecord(
            id=f"{spec.test_set_id}-{idx:04d}",
            test_set=spec.test_set_id,
            polynomial=text,
            n_vars=p.n_vars,
            degree=p.degree,
            label=label,
            difficulty=spec.difficulty,
            length_chars=len(text),
            justification=justification,
            provenance={"family": family, "checker_step": verdict.deciding_step},
        )
    raise RuntimeError(f"resampling exhausted for {spec.test_set_id} record {idx}")


# ---- sets 5.x: Gram-matrix constructions --------------------------------------


def _gram_basis(rng: np.random.Generator, spec: GenSpec) -> tuple[int, int, list]:
    n = int(rng.integers(spec.n_vars_range[0], spec.n_vars_range[1] + 1))
    d = int(rng.integers(1, spec.degree_range[1] // 2 + 1))
    return n, d, _all_monomials(n, d)


def _structured_psd(
    rng: np.random.Generator, size: int, structure: str, spec: GenSpec
) -> tuple[np.ndarray, dict]:
    if structure == "dense_psd":
        A = np.round(rng.uniform(-2, 2, size=(size, size)), 1)
        return A.T @ A, {"structure": "dense_psd"}
    if structure == "sparse_psd":
        density = spec.sparsity or 0.1
        A = np.round(rng.uniform(-2, 2, size=(size, size)), 1)
        mask = rng.random((size, size)) < density
        A = np.where(mask, A, 0.0)
        if not A.any():
            A[0, 0] = 1.0
        return A.T @ A, {"structure": "sparse_psd", "factor_density": density}
    if structure == "lowrank_psd":
        rank = min(spec.rank or 3, size)
        A = np.round(rng.uniform(-2, 2, size=(rank, size)), 1)
        return A.T @ A, {"structure": "lowrank_psd", "rank": rank}
    if structure == "illcond_psd":
        spread = spec.eigenvalue_spread or 1e12
        spectrum = np.logspace(0.0, np.log10(spread), size)
        M = rng.normal(size=(size, size))
        U, _ = np.linalg.qr(M)
        Q = (U * spectrum) @ U.T
        return Q, {
            "structure": "illcond_psd",
            "eigenvalue_spread": spread,
            "spectrum_min": float(spectrum[0]),
            "spectrum_max": float(spectrum[-1]),
        }
    raise ValueError(f"unknown Q structure: {structure}")


def _poly_from_gram(n: int, monos: list, Q: np.ndarray) -> Polynomial:
    terms: dict[tuple[int, ...], float] = {}
    for i, mi in enumerate(monos):
        for j, mj in enumerate(monos):
            exps = tuple(a + b for a, b in zip(mi, mj))
            terms[exps] = terms.get(exps, 0.0) + float(Q[i, j])
    return Polynomial(n, {e: c for e, c in terms.items() if c != 0})


def _gen_from_gram(spec: GenSpec, idx: int, structure: str, indefinite: bool) -> DatasetRecord:
    rng = _record_rng(spec, idx)
    cfg = CheckerConfig(rng_seed=int(rng.integers(0, 2**31)))
    for _ in range(100):
        n, d, monos = _gram_basis(rng, spec)
        Q, prov = _structured_psd(rng, len(monos), structure, spec)
        prov = dict(prov, n_vars=n, half_degree=d, basis_size=len(monos))
        if indefinite:
            # carve a valley: make the value at a concrete point negative
            p_psd = _poly_from_gram(n, monos, Q)
            x_star = np.round(rng.uniform(-1.5, 1.5, size=n), 1)
            phi = np.array([np.prod(x_star ** np.array(m)) for m in monos])
            nrm2 = float(phi @ phi)
            if nrm2 < 1e-9:
                continue
            v_psd = float(p_psd.evaluate(x_star))
            dip = max(1.0, 1e-3 * abs(v_psd), 1e-3 * p_psd.max_abs_coeff())
            # rank-one downdate so that p(x*) = v_psd - (v_psd + dip) = -dip
            Q = Q - (v_psd + dip) / nrm2**2 * np.outer(phi, phi)
            prov["forced_negative_at"] = x_star.tolist()
        p = _round_coeffs(_poly_from_gram(n, monos, Q))
        if p.is_zero() or p.degree == 0:
            continue
        text = canonical_text(p)
        if len(text) > 4 * spec.length_cap:
            continue
        if indefinite:
            verdict = classify(p, cfg)
            if verdict.label not in (Label.NOT_SOS, Label.LIKELY_NOT_SOS):
                continue
            label = "not_sos"
            justification = (
                f"indefinite Gram construction; checker confirms at step {verdict.deciding_step}"
            )
            prov["checker_step"] = verdict.deciding_step
            prov["checker_label"] = verdict.label.value
        else:
            label = "sos"
            evals = np.linalg.eigvalsh(Q)
            justification = (
                f"built as phi^T Q phi with PSD Q (min eigenvalue {float(evals[0]):.3g})"
            )
            prov["q_min_eigenvalue"] = float(evals[0])
            prov["q_max_eigenvalue"] = float(evals[-1])
        return DatasetRecord(
            id=f"{spec.test_set_id}-{idx:04d}",
            test_set=spec.test_set_id,
            polynomial=text,
            n_vars=p.n_vars,
            degree=p.degree,
            label=label,
            difficulty=spec.difficulty,
            length_chars=len(text),
            justification=justification,
            provenance=prov,
        )
    raise RuntimeError(f"resampling exhausted for {spec.test_set_id} record {idx}")


# ---- dispatch and suite assembly ----------------------------------------------


def _dispatch(spec: GenSpec) -> Callable[[int], DatasetRecord]:
    fam = spec.family
    if fam == "odd_degree":
        return lambda i: _gen_odd_degree(spec, i)
    if fam in ("square_expanded", "square_expanded_neg", "square_squared", "square_squared_neg"):
        expanded = "expanded" in fam
        return lambda i: _gen_square_form(spec, i, expanded, fam.endswith("_neg"))
    if fam in ("special_mixed", "special_mixed_neg", "quartic_2var", "quartic_2var_neg",
               "quad_quartic", "quad_quartic_neg"):
        return lambda i: _gen_special_case(spec, i, fam.endswith("_neg"))
    if fam.startswith("gram_"):
        structure = fam.removeprefix("gram_").removesuffix("_neg")
        return lambda i: _gen_from_gram(spec, i, structure, fam.endswith("_neg"))
    raise ValueError(f"unknown generation family: {fam}")


def generate_set(spec: GenSpec, workers: int = 1) -> list[DatasetRecord]:
    gen = _dispatch(spec)
    if workers <= 1:
        return [gen(i) for i in range(spec.count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(gen, range(spec.count)))


def table3_manifest(seed: int = 42) -> list[GenSpec]:
    """The default 19-set manifest: 1707 records across the families above."""

    def s(sid, family, count, label, diff, **kw):
        return GenSpec(
            test_set_id=sid, family=family, count=count, label=label,
            difficulty=diff, rng_seed=seed, **kw,
        )

    return [
        s("1", "odd_degree", 200, "not_sos", "easy",
          n_vars_range=(2, 6), degree_range=(3, 9)),
        s("2a", "square_expanded", 120, "sos", "hard",
          n_vars_range=(2, 5), degree_range=(2, 6)),
        s("2b", "square_expanded_neg", 63, "not_sos", "hard",
          n_vars_range=(2, 5), degree_range=(2, 6)),
        s("2.1a", "square_squared", 120, "sos", "easy",
          n_vars_range=(2, 5), degree_range=(2, 6)),
        s("2.1b", "square_squared_neg", 63, "not_sos", "easy",
          n_vars_range=(2, 5), degree_range=(2, 6)),
        s("3.1a", "special_mixed", 100, "sos", "medium", n_vars_range=(2, 4)),
        s("3.1b", "special_mixed_neg", 100, "not_sos", "medium", n_vars_range=(2, 4)),
        s("3.2a", "quartic_2var", 100, "sos", "medium", n_vars_range=(2, 2)),
        s("3.2b", "quartic_2var_neg", 100, "not_sos", "medium", n_vars_range=(2, 2)),
        s("4a", "quad_quartic", 100, "sos", "medium", n_vars_range=(2, 4)),
        s("4b", "quad_quartic_neg", 100, "not_sos", "medium", n_vars_range=(2, 4)),
        s("5.1a", "gram_dense_psd", 96, "sos", "hard",
          n_vars_range=(2, 4), degree_range=(2, 4)),
        s("5.1b", "gram_dense_psd_neg", 96, "not_sos", "hard",
          n_vars_range=(2, 4), degree_range=(2, 4)),
        s("5.2a", "gram_sparse_psd", 72, "sos", "hard",
          n_vars_range=(2, 4), degree_range=(2, 4), sparsity=0.1),
        s("5.2b", "gram_sparse_psd_neg", 72, "not_sos", "hard",
          n_vars_range=(2, 4), degree_range=(2, 4), sparsity=0.1),
        s("5.3a", "gram_lowrank_psd", 60, "sos", "hard",
          n_vars_range=(2, 4), degree_range=(2, 4), rank=3),
        s("5.3b", "gram_lowrank_psd_neg", 40, "not_sos", "hard",
          n_vars_range=(2, 4), degree_range=(2, 4), rank=3),
        s("5.4a", "gram_illcond_psd", 35, "sos", "hard",
          n_vars_range=(2, 3), degree_range=(2, 4), eigenvalue_spread=1e12),
        s("5.4b", "gram_illcond_psd_neg", 70, "not_sos", "hard",
          n_vars_range=(2, 3), degree_range=(2, 4), eigenvalue_spread=1e12),
    ]


def summary_markdown(records: Sequence[DatasetRecord], specs: Sequence[GenSpec]) -> str:
    lines = [
        "| test set | count | sos | not_sos | median length | <=4000 chars |",
        "|---|---|---|---|---|---|",
    ]
    by_set: dict[str, list[DatasetRecord]] = {s.test_set_id: [] for s in specs}
    for r in records:
        by_set.setdefault(r.test_set, []).append(r)
    for spec in specs:
        rs = by_set.get(spec.test_set_id, [])
        if not rs:
            lines.append(f"| {spec.test_set_id} | 0 | 0 | 0 | - | - |")
            continue
        sos = sum(1 for r in rs if r.label == "sos")
        lengths = sorted(r.length_chars for r in rs)
        med = lengths[len(lengths) // 2]
        short = sum(1 for r in rs if r.length_chars <= 4000) / len(rs)
        lines.append(
            f"| {spec.test_set_id} | {len(rs)} | {sos} | {len(rs) - sos} |"
            f" {med} | {short:.0%} |"
        )
    total = len(records)
    sos_total = sum(1 for r in records if r.label == "sos")
    frac = sos_total / total if total else 0.0
    lines.append("")
    lines.append(f"Total records: {total}; sos fraction: {frac:.1%}.")
    return "\n".join(lines)


def generate_suite(
    specs: Sequence[GenSpec],
    out_path: str | Path,
    summary_path: str | Path | None = None,
    workers: int = 1,
) -> list[DatasetRecord]:
    records: list[DatasetRecord] = []
    failures: list[str] = []
    for spec in specs:
        try:
            records.extend(generate_set(spec, workers=workers))
        except RuntimeError as exc:  # keep going; report at the end
            failures.append(str(exc))
    out_path = Path(out_path)
    with out_path.open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json_line() + "\n")
    if summary_path is not None:
        text = summary_markdown(records, specs)
        if failures:
            text += "\n\nGeneration failures:\n" + "\n".join(f"- {f}" for f in failures)
        Path(summary_path).write_text(text + "\n", encoding="utf-8")
    return records


def load_records(path: str | Path) -> list[DatasetRecord]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(DatasetRecord.from_json_line(line))
    return out
