"""Gram-matrix PSD feasibility backend.

A polynomial p of even degree 2d is a sum of squares exactly when some
symmetric PSD matrix Q satisfies p(x) = phi(x)^T Q phi(x), where phi is the
vector of monomials of degree <= d. Matching coefficients of p against the
entries of Q gives a family of disjoint affine constraints (each upper-
triangle entry of Q feeds exactly one constraint), so projecting onto the
affine set is closed-form.

The solver looks for a PSD point of the affine set two ways:

* a Gauss-Newton pass on the factorization Q = R R^T (PSD by construction,
  constraint residuals driven to zero), which handles boundary and
  ill-conditioned instances that plain projection methods crawl on;
* alternating projections between the affine set and the PSD cone, whose
  monotone inter-set distance gives a principled stall signal for
  infeasible instances.

Feasibility is declared either from a verified residual in original
coefficient space, or for a candidate whose exact affine projection is PSD
up to a tiny eigenvalue clamp (rank-deficient boundary instances, where
residual descent is sublinear).  Certificates are re-verified downstream,
so neither fast path can compromise soundness.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from soskit.poly import Exponents, Polynomial, canonical_text, expand_squares


class UnreachableSupportError(ValueError):
    """A support monomial of p is not a sum of two basis monomials.

    Every Gram matrix over this basis reconstructs a polynomial without
    that monomial, so p has no SoS representation over the basis.
    """

    def __init__(self, monomial: Exponents):
        super().__init__(f"support monomial {monomial} unreachable from basis")
        self.monomial = monomial


@dataclass(frozen=True)
class MonomialBasis:
    """Ordered monomials of degree <= half_degree, graded-lex sorted."""

    entries: tuple[Exponents, ...]
    n_vars: int
    half_degree: int

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def full_size(self) -> int:
        """C(n + d, d), the size before any pruning."""
        return math.comb(self.n_vars + self.half_degree, self.half_degree)


def _all_monomials(n_vars: int, max_degree: int) -> list[Exponents]:
    out: list[Exponents] = []

    def rec(prefix: list[int], remaining: int, var: int) -> None:
        if var == n_vars:
            out.append(tuple(prefix))
            return
        for e in range(remaining + 1):
            rec(prefix + [e], remaining - e, var + 1)

    rec([], max_degree, 0)
    out.sort(key=lambda m: (sum(m), tuple(-e for e in m)))
    return out


def monomial_basis(p: Polynomial, prune: bool = True) -> MonomialBasis:
    """Candidate monomials for a Gram representation of p.

    With pruning, a monomial m is kept only if 2m lies inside the
    coordinate-wise bounding box of p's support and deg(m) is at least half
    the minimum term degree. The box contains the Newton polytope, and any
    SoS decomposition of p only uses monomials whose double lies in the
    polytope, so pruning never discards a needed monomial.
    """
    if p.degree % 2 != 0:
        raise ValueError(f"polynomial degree {p.degree} is odd")
    d = p.degree // 2
    entries = _all_monomials(p.n_vars, d)
    if prune and p.terms:
        support = list(p.terms)
        lo = [min(s[i] for s in support) for i in range(p.n_vars)]
        hi = [max(s[i] for s in support) for i in range(p.n_vars)]
        min_deg = min(sum(s) for s in support)
        max_deg = max(sum(s) for s in support)
        entries = [
            m
            for m in entries
            if all(lo[i] <= 2 * m[i] <= hi[i] for i in range(p.n_vars))
            and min_deg <= 2 * sum(m) <= max_deg
        ]
    return MonomialBasis(tuple(entries), p.n_vars, d)


@dataclass
class GramSystem:
    """Coefficient-matching constraints {<A_gamma, Q> = p_gamma} over a basis.

    Entry arrays index the upper triangle of Q: position k couples
    basis[row[k]] with basis[col[k]], carries weight 2 off the diagonal
    (Q is symmetric) and 1 on it, and belongs to constraint
    ``constraint_id[k]``.
    """

    basis: MonomialBasis
    gammas: tuple[Exponents, ...]
    targets: np.ndarray
    row: np.ndarray
    col: np.ndarray
    constraint_id: np.ndarray
    weights: np.ndarray

    @property
    def n_constraints(self) -> int:
        return len(self.gammas)

    @property
    def coeff_scale(self) -> float:
        return max(1.0, float(np.abs(self.targets).max(initial=0.0)))

    def residuals(self, q_upper: np.ndarray) -> np.ndarray:
        vals = np.bincount(
            self.constraint_id, weights=self.weights * q_upper,
            minlength=self.n_constraints,
        )
        return vals - self.targets

    def max_violation(self, q_upper: np.ndarray) -> float:
        res = self.residuals(q_upper)
        return float(np.abs(res).max(initial=0.0))


def build_gram_system(p: Polynomial, basis: MonomialBasis) -> GramSystem:
    if basis.n_vars != p.n_vars:
        raise ValueError("basis n_vars does not match polynomial")
    n = len(basis)
    row, col = np.triu_indices(n)
    gamma_index: dict[Exponents, int] = {}
    gammas: list[Exponents] = []
    cid = np.empty(len(row), dtype=np.intp)
    for k in range(len(row)):
        g = tuple(
            a + b for a, b in zip(basis.entries[row[k]], basis.entries[col[k]])
        )
        idx = gamma_index.get(g)
        if idx is None:
            idx = len(gammas)
            gamma_index[g] = idx
            gammas.append(g)
        cid[k] = idx
    for mono in p.terms:
        if mono not in gamma_index:
            raise UnreachableSupportError(mono)
    targets = np.zeros(len(gammas))
    for mono, coeff in p.terms.items():
        targets[gamma_index[mono]] = float(coeff)
    weights = np.where(row == col, 1.0, 2.0)
    return GramSystem(
        basis=basis,
        gammas=tuple(gammas),
        targets=targets,
        row=row,
        col=col,
        constraint_id=cid,
        weights=weights,
    )


class GramStatus(enum.Enum):
    FEASIBLE = "FEASIBLE"
    INFEASIBLE_NUMERIC = "INFEASIBLE_NUMERIC"
    ITERATION_LIMIT = "ITERATION_LIMIT"


@dataclass
class SolverConfig:
    max_iterations: int = 5000
    res_tol: float = 1e-8  # relative to the largest target coefficient
    eig_tol: float = 1e-8
    stall_window: int = 50
    stall_improvement: float = 1e-3  # relative residual progress per window
    separation_tol: float = 1e-6  # residual above this at stall => infeasible
    gn_max_nfev: int = 400
    gn_rescue_nfev: int = 5000
    gn_restarts: int = 4
    rank_sweep_cap: int = 16  # largest thin-factor rank tried in the sweep
    rank_sweep_gate: float = 1e-3  # run the sweep only below this residual
    rng_seed: int = 0


@dataclass
class GramResult:
    status: GramStatus
    Q: np.ndarray | None
    min_eigenvalue: float
    residual: float
    iterations: int


@dataclass
class SosCertificate:
    squares: list[Polynomial]
    reconstruction_residual: float


def _to_matrix(sys: GramSystem, upper: np.ndarray) -> np.ndarray:
    n = len(sys.basis)
    Q = np.zeros((n, n))
    Q[sys.row, sys.col] = upper
    Q[sys.col, sys.row] = upper
    return Q


def project_psd(Q: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (eigenvalue clamp)."""
    evals, evecs = np.linalg.eigh(Q)
    return (evecs * np.maximum(evals, 0.0)) @ evecs.T


def _project_affine(sys: GramSystem, upper: np.ndarray, denom: np.ndarray) -> np.ndarray:
    res = sys.residuals(upper)
    return upper - (res / denom)[sys.constraint_id]


def _gauss_newton(
    sys: GramSystem, factor0: np.ndarray, cfg: SolverConfig, max_nfev: int | None = None
) -> tuple[np.ndarray, float]:
    """Drive <A_gamma, R R^T> toward targets; returns (Q, max violation).

    Residuals are scaled uniformly by the coefficient scale so the least-
    squares objective matches the absolute violation metric used for the
    feasibility decision. Termination tolerances sit at machine epsilon:
    boundary (rank-deficient) solutions converge sublinearly, so trf must
    be allowed to grind until the evaluation budget runs out.
    """
    n, k = factor0.shape
    m = sys.n_constraints
    sigma = sys.coeff_scale
    row, col, cid, w = sys.row, sys.col, sys.constraint_id, sys.weights

    def resid(rflat: np.ndarray) -> np.ndarray:
        R = rflat.reshape(n, k)
        Q = R @ R.T
        return sys.residuals(Q[row, col]) / sigma

    def jac(rflat: np.ndarray) -> np.ndarray:
        R = rflat.reshape(n, k)
        J = np.zeros((m, n, k))
        np.add.at(J, (cid, row), w[:, None] * R[col])
        np.add.at(J, (cid, col), w[:, None] * R[row])
        return (J / sigma).reshape(m, n * k)

    sol = least_squares(
        resid,
        factor0.ravel(),
        jac=jac,
        method="trf",
        max_nfev=max_nfev or cfg.gn_max_nfev,
        xtol=3e-16,
        ftol=3e-16,
        gtol=3e-16,
    )
    R = sol.x.reshape(n, k)
    Q = R @ R.T
    return Q, sys.max_violation(Q[row, col])


def solve_psd_feasibility(sys: GramSystem, cfg: SolverConfig | None = None) -> GramResult:
    """Search for a PSD Gram matrix satisfying the constraint system."""
    cfg = cfg or SolverConfig()
    scale = sys.coeff_scale
    res_tol = cfg.res_tol * scale
    rng = np.random.default_rng(cfg.rng_seed)
    denom = np.bincount(
        sys.constraint_id,
        weights=sys.weights**2 / np.where(sys.row == sys.col, 1.0, 2.0),
        minlength=sys.n_constraints,
    )
    frob = np.where(sys.row == sys.col, 1.0, 2.0)

    def clamped_factor(upper: np.ndarray) -> np.ndarray:
        evals, evecs = np.linalg.eigh(_to_matrix(sys, upper))
        return evecs * np.sqrt(np.maximum(evals, 0.0))

    def rank_sweep(Q_cand: np.ndarray, res_cand: float) -> tuple[np.ndarray, float]:
        """Retry Gauss-Newton on thin factors Q = R R^T with R of n x k.

        The full square factorization is overparametrized around low-rank
        solutions and converges sublinearly there; at the true rank the same
        descent reaches machine precision almost immediately.  The rank is
        unknown, so sweep k upward, seeding each try with the top-k spectral
        factor of the best candidate so far (floored so no column starts at
        an exact zero, which would be a stationary point for that column).
        """
        evals, evecs = np.linalg.eigh(Q_cand)
        evals = np.maximum(evals, 0.0)
        n = len(evals)
        floor = 1e-3 * math.sqrt(max(evals[-1], 1e-30))
        best_q, best_res = Q_cand, res_cand
        for k in range(1, min(n, cfg.rank_sweep_cap) + 1):
            cols = np.maximum(np.sqrt(evals[n - k:]), floor)
            Q, res = _gauss_newton(sys, evecs[:, n - k:] * cols, cfg)
            if res < best_res:
                best_q, best_res = Q, res
            if best_res <= res_tol:
                break
        return best_q, best_res

    def gn_rescue(upper: np.ndarray) -> tuple[np.ndarray, float]:
        """Multi-start Gauss-Newton escalation from the current iterate.

        A cheap probe runs first: when it lands far from feasibility the
        residual is a genuine plateau (infeasible side), and larger budgets
        or restarts only land on the same plateau, so we stop early.
        """
        base = clamped_factor(upper)
        best_q, best_res = _gauss_newton(sys, base, cfg)
        if best_res <= res_tol or best_res > 1e4 * res_tol:
            return best_q, best_res
        if best_res <= cfg.separation_tol * scale and boundary_accept(best_q) is not None:
            # caller's boundary check will accept; skip the escalation
            return best_q, best_res
        best_q, best_res = rank_sweep(best_q, best_res)
        if best_res <= res_tol or (
            best_res <= cfg.separation_tol * scale
            and boundary_accept(best_q) is not None
        ):
            return best_q, best_res
        for attempt in range(1 + cfg.gn_restarts):
            if attempt == 0:
                start = base
            else:
                start = rng.standard_normal(base.shape) * max(
                    np.abs(base).max(), 1e-3
                )
            Q, res = _gauss_newton(sys, start, cfg, max_nfev=cfg.gn_rescue_nfev)
            if res < best_res:
                best_q, best_res = Q, res
            if best_res <= res_tol:
                break
            if (
                best_res <= cfg.separation_tol * scale
                and boundary_accept(best_q) is not None
            ):
                break
        return best_q, best_res

    def boundary_accept(Q_cand: np.ndarray) -> np.ndarray | None:
        """Accept a near-solution whose exact affine projection is PSD-ish.

        Rank-deficient (boundary) solutions slow factorization descent to a
        crawl just above ``res_tol``.  The affine projection is closed-form,
        so project the candidate exactly onto the constraint set and look at
        its spectrum: a genuinely feasible instance leaves a minimum
        eigenvalue within -separation_tol * scale (clamping it perturbs the
        reconstructed coefficients by no more than that), while infeasible
        instances sit orders of magnitude below.
        """
        affine = _to_matrix(
            sys, _project_affine(sys, Q_cand[sys.row, sys.col], denom)
        )
        evals, evecs = np.linalg.eigh(affine)
        if evals[0] < -cfg.separation_tol * scale:
            return None
        return (evecs * np.maximum(evals, 0.0)) @ evecs.T

    def feasible(Q: np.ndarray, iterations: int) -> GramResult:
        evals = np.linalg.eigvalsh(Q)
        return GramResult(
            status=GramStatus.FEASIBLE,
            Q=Q,
            min_eigenvalue=float(evals[0]),
            residual=sys.max_violation(Q[sys.row, sys.col]),
            iterations=iterations,
        )

    # min-norm affine solution; also the initial iterate for both methods
    u = _project_affine(sys, np.zeros(len(sys.row)), denom)

    # trivial system (zero polynomial): Q = 0 is feasible at iteration 0
    if sys.max_violation(u * 0.0) <= res_tol:
        return feasible(np.zeros((len(sys.basis), len(sys.basis))), 0)

    # fast path: one factorization descent from the min-norm affine point
    Q_gn, res_gn = _gauss_newton(sys, clamped_factor(u), cfg)
    if res_gn > res_tol and res_gn <= cfg.rank_sweep_gate * scale:
        Q_gn, res_gn = rank_sweep(Q_gn, res_gn)
    if res_gn <= res_tol:
        return feasible(Q_gn, 0)
    if res_gn <= cfg.separation_tol * scale:
        Q_b = boundary_accept(Q_gn)
        if Q_b is not None:
            return feasible(Q_b, 0)

    best_res = np.inf
    last_eigs = None
    residual = np.inf
    res_hist: list[float] = []
    for it in range(1, cfg.max_iterations + 1):
        Q = _to_matrix(sys, u)
        evals, evecs = np.linalg.eigh(Q)
        last_eigs = evals
        psd_upper = ((evecs * np.maximum(evals, 0.0)) @ evecs.T)[sys.row, sys.col]
        residual = sys.max_violation(psd_upper)
        if residual <= res_tol:
            return feasible(_to_matrix(sys, psd_upper), it)
        best_res = min(best_res, residual)
        res_hist.append(best_res)
        stalled = (
            len(res_hist) > cfg.stall_window + 10
            and res_hist[-cfg.stall_window - 1] - best_res
            < cfg.stall_improvement * best_res
        )
        if stalled:
            # last chance for hard feasible instances before calling it
            Q_gn, res_gn = gn_rescue(psd_upper)
            if res_gn <= res_tol:
                return feasible(Q_gn, it)
            if res_gn <= cfg.separation_tol * scale:
                Q_b = boundary_accept(Q_gn)
                if Q_b is not None:
                    return feasible(Q_b, it)
            if best_res > cfg.separation_tol * scale:
                return GramResult(
                    status=GramStatus.INFEASIBLE_NUMERIC,
                    Q=None,
                    min_eigenvalue=float(evals[0]),
                    residual=residual,
                    iterations=it,
                )
            break
        u = _project_affine(sys, psd_upper, denom)
    # iteration cap hit without a stall verdict: one last polish attempt
    if last_eigs is not None:
        Q_gn, res_gn = gn_rescue(u)
        if res_gn <= res_tol:
            return feasible(Q_gn, cfg.max_iterations)
        if res_gn <= cfg.separation_tol * scale:
            Q_b = boundary_accept(Q_gn)
            if Q_b is not None:
                return feasible(Q_b, cfg.max_iterations)
    return GramResult(
        status=GramStatus.ITERATION_LIMIT,
        Q=None,
        min_eigenvalue=float(last_eigs[0]) if last_eigs is not None else 0.0,
        residual=residual,
        iterations=cfg.max_iterations,
    )


def extract_decomposition(
    result: GramResult,
    basis: MonomialBasis,
    target: Polynomial,
    eig_tol: float = 1e-8,
) -> SosCertificate:
    """Turn a feasible Gram matrix into explicit squares q_k = sqrt(l_k) v_k . phi."""
    if result.status is not GramStatus.FEASIBLE or result.Q is None:
        raise ValueError(f"cannot extract a certificate from {result.status.value}")
    evals, evecs = np.linalg.eigh(result.Q)
    cutoff = eig_tol * max(1.0, float(evals[-1]))
    squares: list[Polynomial] = []
    for lam, vec in zip(evals, evecs.T):
        if lam <= cutoff:
            continue
        root = math.sqrt(lam)
        terms = {
            mono: root * float(v)
            for mono, v in zip(basis.entries, vec)
            if v != 0.0
        }
        q = Polynomial(basis.n_vars, terms)
        if not q.is_zero():
            squares.append(q)
    if not squares:
        squares = [Polynomial.zero(basis.n_vars)]
    residual = verify_certificate(target, SosCertificate(squares, 0.0))
    return SosCertificate(squares=squares, reconstruction_residual=residual)


def verify_certificate(p: Polynomial, cert: SosCertificate) -> float:
    """Max abs coefficient difference between sum(q_i^2) and p."""
    reconstructed = expand_squares(cert.squares)
    if reconstructed.n_vars != p.n_vars:
        raise ValueError("certificate n_vars does not match polynomial")
    diff = reconstructed - p.as_float()
    return diff.max_abs_coeff()


def certificate_json(
    cert: SosCertificate, basis: MonomialBasis, result: GramResult
) -> dict:
    """Wire format: basis exponent vectors, dense Q, squares as text."""
    return {
        "basis": [list(m) for m in basis.entries],
        "Q": [] if result.Q is None else result.Q.tolist(),
        "squares": [canonical_text(q) for q in cert.squares],
        "residual": cert.reconstruction_residual,
        "min_eigenvalue": result.min_eigenvalue,
    }
