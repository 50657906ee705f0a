"""Five-step SoS decision pipeline.

Steps run in order and the pipeline stops at the first one that proves
something:

1. degree parity and the sign of each leading univariate coefficient;
2. negativity search (constant term, grid, random sampling, multi-start
   descent, exact completion for quadratics) -- a negative value disproves
   SoS;
3. exact special cases (quadratics via the augmented PSD test) and
   equivalence classes where nonnegativity and SoS coincide;
4. syntactic sum-of-squared-subexpressions detection on the parse tree;
5. Gram-matrix PSD feasibility with certificate extraction.

A NOT_SOS verdict always carries checkable evidence (a witness point or a
parity/leading-coefficient argument); SOS always carries a certificate or
an exact quadratic proof. A failed Gram search is reported as
LIKELY_NOT_SOS, never as a proof.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from soskit import parsing
from soskit.gram import (
    GramStatus,
    SolverConfig,
    SosCertificate,
    UnreachableSupportError,
    build_gram_system,
    extract_decomposition,
    monomial_basis,
    solve_psd_feasibility,
    verify_certificate,
)
from soskit.poly import Polynomial, canonical_text


class Label(enum.Enum):
    SOS = "SOS"
    NOT_SOS = "NOT_SOS"
    LIKELY_NOT_SOS = "LIKELY_NOT_SOS"
    UNKNOWN = "UNKNOWN"


class Decision(enum.Enum):
    PROVES_SOS = "PROVES_SOS"
    PROVES_NOT_SOS = "PROVES_NOT_SOS"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class CheckerConfig:
    grid_radius: float = 2.0
    grid_values_per_axis: int = 7
    grid_point_cap: int = 100_000
    random_samples: int = 2000
    descent_starts: int = 20
    descent_steps: int = 200
    negativity_tol: float = 1e-7
    certificate_tol: float = 1e-6
    rng_seed: int = 42
    gram: SolverConfig = field(default_factory=SolverConfig)


@dataclass
class StepOutcome:
    step_id: int
    decision: Decision
    note: str = ""
    witness: Optional[tuple[float, ...]] = None
    witness_value: Optional[float] = None
    min_value: Optional[float] = None
    min_point: Optional[tuple[float, ...]] = None
    certificate: Optional[SosCertificate] = None
    equivalence_class: Optional[str] = None

    def to_json(self) -> dict:
        out = {"step": self.step_id, "decision": self.decision.value, "note": self.note}
        if self.witness is not None:
            out["witness"] = list(self.witness)
            out["witness_value"] = self.witness_value
        if self.min_value is not None:
            out["min_value"] = self.min_value
        if self.equivalence_class is not None:
            out["equivalence_class"] = self.equivalence_class
        return out


@dataclass
class Verdict:
    label: Label
    deciding_step: int
    trace: list[StepOutcome]
    certificate: Optional[SosCertificate] = None
    witness: Optional[tuple[float, ...]] = None

    def to_json(self) -> dict:
        out = {
            "label": self.label.value,
            "deciding_step": self.deciding_step,
            "trace": [s.to_json() for s in self.trace],
        }
        if self.witness is not None:
            out["witness"] = list(self.witness)
        if self.certificate is not None:
            out["certificate"] = {
                "squares": [canonical_text(q) for q in self.certificate.squares],
                "residual": self.certificate.reconstruction_residual,
            }
        return out

    def trace_text(self) -> str:
        return json.dumps(self.to_json(), indent=2)


# ---- step 1: degree and leading univariate coefficients --------------------


def step1_degree(p: Polynomial, cfg: CheckerConfig | None = None) -> StepOutcome:
    cfg = cfg or CheckerConfig()
    if p.is_zero():
        return StepOutcome(
            1,
            Decision.PROVES_SOS,
            note="zero polynomial is trivially a sum of squares",
            certificate=SosCertificate([Polynomial.zero(p.n_vars)], 0.0),
        )
    if p.degree % 2 == 1:
        return StepOutcome(1, Decision.PROVES_NOT_SOS, note=f"odd degree {p.degree}")
    deg = p.degree
    for i in range(p.n_vars):
        axis_mono = tuple(deg if j == i else 0 for j in range(p.n_vars))
        coeff = float(p.coefficient(axis_mono))
        if coeff < 0:
            witness = _march_axis(p, i, cfg)
            return StepOutcome(
                1,
                Decision.PROVES_NOT_SOS,
                note=f"leading univariate term {coeff}*x{i + 1}^{deg} is negative",
                witness=witness[0],
                witness_value=witness[1],
            )
    return StepOutcome(1, Decision.INCONCLUSIVE, note="even degree, leading terms ok")


def _march_axis(
    p: Polynomial, axis: int, cfg: CheckerConfig
) -> tuple[Optional[tuple[float, ...]], Optional[float]]:
    """Walk outward along +/- x_axis until the value turns negative."""
    thr = cfg.negativity_tol * max(1.0, p.max_abs_coeff())
    for t in [2.0**k for k in range(0, 60)]:
        for sign in (1.0, -1.0):
            point = [0.0] * p.n_vars
            point[axis] = sign * t
            value = p.evaluate(point)
            if value < -thr:
                return tuple(point), value
    return None, None


# ---- step 2: negativity search ---------------------------------------------


def _descent(
    p: Polynomial,
    starts: np.ndarray,
    steps: int,
    stop_below: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched gradient descent with per-point backtracking step control.

    Gradients are central finite differences; all starts advance in lock
    step so each iteration is a single vectorized evaluation.
    """
    X = np.array(starts, dtype=float)
    k, n = X.shape
    fX = p.evaluate_many(X)
    step = np.full(k, 0.25)
    for _ in range(steps):
        h = 1e-6 * (1.0 + np.abs(X))
        probes = np.empty((2 * n, k, n))
        for i in range(n):
            probes[2 * i] = X
            probes[2 * i][:, i] += h[:, i]
            probes[2 * i + 1] = X
            probes[2 * i + 1][:, i] -= h[:, i]
        vals = p.evaluate_many(probes.reshape(-1, n)).reshape(2 * n, k)
        grad = np.empty((k, n))
        for i in range(n):
            grad[:, i] = (vals[2 * i] - vals[2 * i + 1]) / (2 * h[:, i])
        norm = np.linalg.norm(grad, axis=1)
        norm[norm == 0] = 1.0
        cand = X - (step / norm)[:, None] * grad
        fc = p.evaluate_many(cand)
        improved = fc < fX
        X[improved] = cand[improved]
        fX[improved] = fc[improved]
        step[improved] *= 1.3
        step[~improved] *= 0.5
        if fX.min() < stop_below or step.max() < 1e-14:
            break
    return X, fX


def _grid_points(n: int, cfg: CheckerConfig, rng: np.random.Generator) -> np.ndarray:
    axis = np.linspace(-cfg.grid_radius, cfg.grid_radius, cfg.grid_values_per_axis)
    total = cfg.grid_values_per_axis**n
    if total <= cfg.grid_point_cap:
        grids = np.meshgrid(*([axis] * n), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)
    # lattice too large: sample grid nodes uniformly at random
    idx = rng.integers(0, cfg.grid_values_per_axis, size=(cfg.grid_point_cap, n))
    return axis[idx]

def _quadratic_parts(p: Polynomial) -> tuple[np.ndarray, np.ndarray, float]:
    """Split a degree-<=2 polynomial into x^T A x + b.x + c."""
    n = p.n_vars
    A = np.zeros((n, n))
    b = np.zeros(n)
    c = 0.0
    for exps, coeff in p.terms.items():
        coeff = float(coeff)
        deg = sum(exps)
        nz = [i for i, e in enumerate(exps) if e]
        if deg == 0:
            c = coeff
        elif deg == 1:
            b[nz[0]] += coeff
        elif len(nz) == 1:
            A[nz[0], nz[0]] += coeff
        else:
            A[nz[0], nz[1]] += coeff / 2.0
            A[nz[1], nz[0]] += coeff / 2.0
    return A, b, c


def _quadratic_argmin(p: Polynomial) -> Optional[np.ndarray]:
    A, b, _ = _quadratic_parts(p)
    try:
        x, *_ = np.linalg.lstsq(2.0 * A, -b, rcond=None)
    except np.linalg.LinAlgError:
        return None
    return x


def step2_negativity_search(p: Polynomial, cfg: CheckerConfig | None = None) -> StepOutcome:
    cfg = cfg or CheckerConfig()
    rng = np.random.default_rng(cfg.rng_seed)
    thr = cfg.negativity_tol * max(1.0, p.max_abs_coeff())
    n = p.n_vars

    def found(point: np.ndarray, value: float, how: str) -> StepOutcome:
        # polish every hit so witnesses survive tolerance changes
        X, fX = _descent(p, point[None, :], cfg.descent_steps, -np.inf)
        best = int(np.argmin(fX))
        pt, val = X[best], float(fX[best])
        if val > value:  # descent can only help; keep the raw hit otherwise
            pt, val = point, value
        return StepOutcome(
            2,
            Decision.PROVES_NOT_SOS,
            note=f"negative value found by {how}",
            witness=tuple(float(x) for x in pt),
            witness_value=val,
        )

    const = float(p.constant_term)
    if const < -thr:
        return found(np.zeros(n), const, "constant coefficient check")

    candidates = _grid_points(n, cfg, rng)
    values = p.evaluate_many(candidates)
    best_idx = int(np.argmin(values))
    if values[best_idx] < -thr:
        return found(candidates[best_idx], float(values[best_idx]), "grid evaluation")

    samples = rng.uniform(-cfg.grid_radius, cfg.grid_radius, size=(cfg.random_samples, n))
    sample_vals = p.evaluate_many(samples)
    s_idx = int(np.argmin(sample_vals))
    if sample_vals[s_idx] < -thr:
        return found(samples[s_idx], float(sample_vals[s_idx]), "random sampling")

    pool = np.vstack([candidates, samples])
    pool_vals = np.concatenate([values, sample_vals])
    order = np.argsort(pool_vals)[: cfg.descent_starts]
    X, fX = _descent(p, pool[order], cfg.descent_steps, -10 * thr)
    d_idx = int(np.argmin(fX))
    min_point, min_value = X[d_idx], float(fX[d_idx])
    if min_value < -thr:
        return found(min_point, min_value, "gradient descent")

    if p.degree <= 2:
        x_star = _quadratic_argmin(p)
        if x_star is not None:
            v_star = p.evaluate(x_star)
            if v_star < min_value:
                min_point, min_value = x_star, v_star
            if v_star < -thr:
                return found(np.asarray(x_star), v_star, "square completion")

    return StepOutcome(
        2,
        Decision.INCONCLUSIVE,
        note="no negative value found",
        min_value=min_value,
        min_point=tuple(float(x) for x in min_point),
    )


# ---- step 3: special cases --------------------------------------------------


def _augmented_matrix(p: Polynomial) -> np.ndarray:
    A, b, c = _quadratic_parts(p)
    n = p.n_vars
    M = np.zeros((n + 1, n + 1))
    M[0, 0] = c
    M[0, 1:] = b / 2.0
    M[1:, 0] = b / 2.0
    M[1:, 1:] = A
    return M


def _quadratic_witness(p: Polynomial, cfg: CheckerConfig) -> tuple[tuple[float, ...], float]:
    """A concrete negative point for a quadratic that failed the PSD test."""
    A, b, c = _quadratic_parts(p)
    thr = cfg.negativity_tol * max(1.0, p.max_abs_coeff())
    evals, evecs = np.linalg.eigh(A)
    if evals[0] < -1e-12 * max(1.0, abs(evals[-1])):
        u = evecs[:, 0]  # direction of negative curvature; march outward
        for t in [2.0**k for k in range(0, 60)]:
            for sign in (1.0, -1.0):
                x = sign * t * u
                v = p.evaluate(x)
                if v < -thr:
                    return tuple(float(z) for z in x), float(v)
    x_star = _quadratic_argmin(p)
    if x_star is not None:
        v = p.evaluate(x_star)
        if v < -thr:
            return tuple(float(z) for z in x_star), float(v)
    # A is PSD with b leaving its range: descend along the unconstrained ray
    X, fX = _descent(
        p, np.zeros((1, p.n_vars)), 10 * cfg.descent_steps, -10 * thr
    )
    i = int(np.argmin(fX))
    return tuple(float(z) for z in X[i]), float(fX[i])


def _quadratic_certificate(p: Polynomial, M: np.ndarray) -> SosCertificate:
    evals, evecs = np.linalg.eigh(M)
    cutoff = 1e-12 * max(1.0, float(evals[-1]))
    squares = []
    for lam, vec in zip(evals, evecs.T):
        if lam <= cutoff:
            continue
        root = float(np.sqrt(lam))
        terms = {(0,) * p.n_vars: root * float(vec[0])}
        for i in range(p.n_vars):
            exps = tuple(1 if j == i else 0 for j in range(p.n_vars))
            terms[exps] = root * float(vec[i + 1])
        q = Polynomial(p.n_vars, terms)
        if not q.is_zero():
            squares.append(q)
    if not squares:
        squares = [Polynomial.zero(p.n_vars)]
    cert = SosCertificate(squares, 0.0)
    cert.reconstruction_residual = verify_certificate(p, cert)
    return cert


def _is_homogeneous(p: Polynomial, degree: int) -> bool:
    return bool(p.terms) and all(sum(e) == degree for e in p.terms)


def step3_special_case(p: Polynomial, cfg: CheckerConfig | None = None) -> StepOutcome:
    cfg = cfg or CheckerConfig()
    if not p.is_zero() and p.degree <= 2:
        M = _augmented_matrix(p)
        evals = np.linalg.eigvalsh(M)
        tol = cfg.gram.eig_tol * max(1.0, float(np.abs(evals).max()))
        if evals[0] >= -tol:
            cert = _quadratic_certificate(p, M)
            return StepOutcome(
                3,
                Decision.PROVES_SOS,
                note="quadratic with PSD augmented matrix",
                certificate=cert,
                equivalence_class="quadratic",
            )
        witness, value = _quadratic_witness(p, cfg)
        return StepOutcome(
            3,
            Decision.PROVES_NOT_SOS,
            note=f"quadratic augmented matrix has negative eigenvalue {evals[0]:.3g}",
            witness=witness,
            witness_value=value,
            equivalence_class="quadratic",
        )
    equivalence = None
    if p.n_vars == 1 and p.degree % 2 == 0:
        equivalence = "univariate_even"
    elif p.degree == 4 and p.n_vars <= 2:
        equivalence = "quartic_2var"
    elif p.degree == 4 and p.n_vars <= 3 and _is_homogeneous(p, 4):
        equivalence = "quartic_homogeneous_3var"
    note = "no special case applies"
    if equivalence:
        note = f"nonnegativity equivalent to SoS for class {equivalence}"
    degrees = {sum(e) for e in p.terms}
    if p.degree == 4 and degrees <= {4, 2, 0} and 2 in degrees:
        # advisory only: quadratic terms with quartic regularization
        note += "; quartic regularization of a quadratic detected (advisory)"
    return StepOutcome(3, Decision.INCONCLUSIVE, note=note, equivalence_class=equivalence)


# ---- step 4: syntactic square form ------------------------------------------


def _square_root_of_addend(
    node: parsing.Node, n_vars: int
) -> Optional[Polynomial]:
    """If node is coeff * (subexpr)^even with coeff >= 0, return its square root."""
    coeff = 1.0
    power: Optional[parsing.Pow] = None
    if isinstance(node, parsing.Prod):
        rest = []
        for f in node.factors:
            if isinstance(f, parsing.Const):
                coeff *= float(f.value)
            elif isinstance(f, parsing.Pow) and power is None and f.exponent % 2 == 0:
                power = f
            else:
                rest.append(f)
        if rest or power is None:
            return None
    elif isinstance(node, parsing.Pow):
        power = node
    elif isinstance(node, parsing.Const):
        value = float(node.value)
        return Polynomial.constant(n_vars, np.sqrt(value)) if value >= 0 else None
    else:
        return None
    if power is None or power.exponent % 2 != 0 or coeff < 0:
        return None
    base = parsing.tree_to_polynomial(power.base, n_vars)
    return base.power(power.exponent // 2).scale(float(np.sqrt(coeff)))


def step4_square_form(
    tree: parsing.Node, n_vars: int | None = None
) -> StepOutcome:
    n_vars = n_vars or max(parsing.tree_max_var(tree), 1)
    addends = tree.terms if isinstance(tree, parsing.Sum) else (tree,)
    squares: list[Polynomial] = []
    for addend in addends:
        if isinstance(addend, parsing.Neg):
            return StepOutcome(
                4, Decision.INCONCLUSIVE, note="negated addend; not a plain square sum"
            )
        root = _square_root_of_addend(addend, n_vars)
        if root is None:
            return StepOutcome(
                4, Decision.INCONCLUSIVE, note="addend is not a nonnegative square"
            )
        if not root.is_zero():
            squares.append(root)
    if not squares:
        squares = [Polynomial.zero(n_vars)]
    cert = SosCertificate(squares, 0.0)
    return StepOutcome(
        4,
        Decision.PROVES_SOS,
        note=f"input is syntactically a sum of {len(squares)} squares",
        certificate=cert,
    )


# ---- step 5 + orchestration --------------------------------------------------


def _step5_gram(p: Polynomial, cfg: CheckerConfig) -> tuple[StepOutcome, Label]:
    pf = p.as_float()
    try:
        basis = monomial_basis(pf, prune=True)
        system = build_gram_system(pf, basis)
    except UnreachableSupportError as exc:
        outcome = StepOutcome(
            5,
            Decision.PROVES_NOT_SOS,
            note=f"support monomial {exc.monomial} unreachable over the Gram basis",
        )
        return outcome, Label.LIKELY_NOT_SOS
    result = solve_psd_feasibility(system, cfg.gram)
    if result.status is GramStatus.FEASIBLE:
        cert = extract_decomposition(result, basis, pf, eig_tol=cfg.gram.eig_tol)
        tol = cfg.certificate_tol * max(1.0, pf.max_abs_coeff())
        if cert.reconstruction_residual <= tol:
            outcome = StepOutcome(
                5,
                Decision.PROVES_SOS,
                note=(
                    f"PSD Gram matrix found (residual {cert.reconstruction_residual:.2e},"
                    f" min eigenvalue {result.min_eigenvalue:.2e})"
                ),
                certificate=cert,
            )
            return outcome, Label.SOS
        outcome = StepOutcome(
            5,
            Decision.INCONCLUSIVE,
            note=f"certificate residual {cert.reconstruction_residual:.2e} above tolerance",
        )
        return outcome, Label.UNKNOWN
    if result.status is GramStatus.INFEASIBLE_NUMERIC:
        outcome = StepOutcome(
            5,
            Decision.PROVES_NOT_SOS,
            note=(
                f"no PSD Gram matrix found (stalled at residual {result.residual:.2e}"
                f" after {result.iterations} iterations)"
            ),
        )
        return outcome, Label.LIKELY_NOT_SOS
    outcome = StepOutcome(
        5,
        Decision.INCONCLUSIVE,
        note=f"iteration limit at residual {result.residual:.2e}",
    )
    return outcome, Label.UNKNOWN


def classify(
    target: Union[str, Polynomial],
    cfg: CheckerConfig | None = None,
    source: Union[str, parsing.Node, None] = None,
) -> Verdict:
    """Run the full pipeline and return a Verdict with a complete trace."""
    cfg = cfg or CheckerConfig()
    tree: Optional[parsing.Node] = None
    if isinstance(target, str):
        tree = parsing.parse_tree(target)
        p = parsing.tree_to_polynomial(tree, max(parsing.tree_max_var(tree), 1))
    else:
        p = target
        if isinstance(source, str):
            tree = parsing.parse_tree(source)
        elif source is not None:
            tree = source

    trace: list[StepOutcome] = []

    out1 = step1_degree(p, cfg)
    trace.append(out1)
    if out1.decision is Decision.PROVES_SOS:
        return Verdict(Label.SOS, 1, trace, certificate=out1.certificate)
    if out1.decision is Decision.PROVES_NOT_SOS:
        return Verdict(Label.NOT_SOS, 1, trace, witness=out1.witness)

    out2 = step2_negativity_search(p, cfg)
    trace.append(out2)
    if out2.decision is Decision.PROVES_NOT_SOS:
        return Verdict(Label.NOT_SOS, 2, trace, witness=out2.witness)

    out3 = step3_special_case(p, cfg)
    trace.append(out3)
    if out3.decision is Decision.PROVES_SOS:
        return Verdict(Label.SOS, 3, trace, certificate=out3.certificate)
    if out3.decision is Decision.PROVES_NOT_SOS:
        return Verdict(Label.NOT_SOS, 3, trace, witness=out3.witness)

    if tree is not None:
        out4 = step4_square_form(tree, p.n_vars)
        trace.append(out4)
        if out4.decision is Decision.PROVES_SOS:
            cert = out4.certificate
            cert.reconstruction_residual = verify_certificate(p, cert)
            tol = cfg.certificate_tol * max(1.0, p.max_abs_coeff())
            if cert.reconstruction_residual <= tol:
                return Verdict(Label.SOS, 4, trace, certificate=cert)
            trace[-1] = replace(
                out4,
                decision=Decision.INCONCLUSIVE,
                note="square-form expansion mismatch; deferring to step 5",
            )
    else:
        trace.append(
            StepOutcome(4, Decision.INCONCLUSIVE, note="no parse tree available")
        )

    out5, label = _step5_gram(p, cfg)
    trace.append(out5)
    return Verdict(label, 5, trace, certificate=out5.certificate)


def binary_label(verdict: Verdict) -> str:
    """Collapse a Verdict onto the dataset's binary labels for scoring."""
    if verdict.label is Label.SOS:
        return "sos"
    if verdict.label in (Label.NOT_SOS, Label.LIKELY_NOT_SOS):
        return "not_sos"
    return "invalid"
