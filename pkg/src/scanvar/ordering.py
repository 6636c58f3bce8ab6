"""Variance-ordering checkers: scan comparison, Peskun dominance, palindromes.

The two-kernel comparison rests on a variational identity for resolvent
quadratic forms of a non-reversible operator in terms of its self-adjoint
and skew parts; the skew term supplies an explicit lower bound on the gap
between the random-scan and deterministic-scan variances. Peskun-style
comparisons move along a linear blend between two embeddings and check the
sign of the blend derivative, which has a closed form matched against
central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from scanvar.embedding import (
    BlockVector,
    CycleEmbedding,
    block_inner,
    embedding_realization,
)
from scanvar.kernels import (
    Dist,
    Kernel,
    KernelFamily,
    NUMERIC_TOL,
    PSD_TOL,
    Observable,
    ValidationError,
    lazy,
    make_family,
)
from scanvar.variance import (
    summability_check,
    var_lambda_rand,
    var_lambda_strat,
    var_limit,
)

__all__ = [
    "OrderingReport",
    "PeskunComparison",
    "PeskunRow",
    "PeskunOrderingReport",
    "VariationalIdentityReport",
    "BetaPath",
    "PalindromeCase",
    "PalindromeReport",
    "gap_lower_bound",
    "check_scan_ordering",
    "bellman_value",
    "variational_identity_check",
    "peskun_dominates",
    "check_peskun_ordering",
    "beta_derivative",
    "palindrome_check",
]


@dataclass(frozen=True)
class OrderingReport:
    """Scan comparison at one discount value."""

    lam: float
    var_rand: float
    var_strat: float
    gap: float
    gap_lower_bound: float
    ordering_holds: bool
    bound_holds: bool
    method: str = "resolvent"


@dataclass(frozen=True, eq=False)
class PeskunComparison:
    """Per-kernel Dirichlet-form dominance between two families.

    Kernel i of the second family is dominated when the symmetrised
    difference (second minus first) is positive semidefinite within PSD_TOL.
    """

    family_a: KernelFamily
    family_b: KernelFamily
    dominance_per_kernel: tuple[bool, ...]
    per_kernel_min_eigenvalue: tuple[float, ...]
    min_dirichlet_gap_eigenvalue: float
    dominates: bool


@dataclass(frozen=True)
class PeskunRow:
    lam: float
    var_strat_a: float
    var_strat_b: float
    difference: float
    holds: bool
    method: str = "resolvent"


@dataclass(frozen=True)
class PeskunOrderingReport:
    """Cycle-variance comparison under kernelwise Dirichlet dominance.

    When the dominance hypothesis fails the rows are still reported, with
    theorem_applicable unset, so counterexample hunting stays possible.
    """

    rows: tuple[PeskunRow, ...]
    comparison: PeskunComparison
    theorem_applicable: bool
    all_hold: bool


@dataclass(frozen=True)
class VariationalIdentityReport:
    lhs: float
    rhs: float
    residual: float
    max_probe_excess: float
    passes: bool


def _centered_block(fam: KernelFamily, f: Observable) -> BlockVector:
    fc = f.values - float(np.dot(fam.pi.weights, f.values))
    return BlockVector(np.tile(fc, (fam.k, 1)))


def gap_lower_bound(fam: KernelFamily, f: Observable, lam: float) -> float:
    """Certified lower bound on var_rand - var_strat for a two-kernel family.

    Evaluates the skew term of the variational identity at its optimiser:
    three block resolvent solves and one quadratic form, scaled by 2/k.
    Nonnegative by construction and zero at lam = 0 or for identical kernels.
    """
    if fam.k != 2:
        raise ValueError(f"the gap bound needs exactly two kernels, got {fam.k}")
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {lam}")
    if lam == 0.0:
        return 0.0
    emb = CycleEmbedding(fam)
    fbar = _centered_block(fam, f)
    forward = emb.resolvent_solve("embed", lam, fbar)
    sym = emb.realization("symmetric")
    h = BlockVector(
        (forward.flat() - lam * (sym @ forward.flat())).reshape(fam.k, fam.n)
    )
    g_hat = emb.resolvent_solve("embed_adjoint", lam, h)
    skew = (emb.realization("embed") - emb.realization("embed_adjoint")) / 2.0
    a_g = BlockVector((skew @ g_hat.flat()).reshape(fam.k, fam.n))
    y = emb.resolvent_solve("symmetric", lam, a_g)
    return (2.0 / fam.k) * lam * lam * block_inner(a_g, y, fam.pi)


def check_scan_ordering(
    fam: KernelFamily,
    f: Observable,
    lambda_grid: Sequence[float],
    method: str = "resolvent",
    series_terms: int = 400,
    include_limit: bool = True,
    tol: float = NUMERIC_TOL,
) -> list[OrderingReport]:
    """Compare the two scan schemes on a discount grid for a two-kernel family.

    Appends a limit report (discount one) whenever the summability check
    passes; its bound is zero, the weakest certified value there.
    """
    if fam.k != 2:
        raise ValueError(f"the scan comparison needs exactly two kernels, got {fam.k}")
    reports = []
    for lam in lambda_grid:
        lam = float(lam)
        if lam >= 1.0 - 1e-12:
            continue  # the limit row is appended below
        v_strat = var_lambda_strat(fam, f, lam, method=method, series_terms=series_terms)
        v_rand = var_lambda_rand(fam, f, lam)
        gap = v_rand - v_strat
        bound = gap_lower_bound(fam, f, lam)
        reports.append(
            OrderingReport(
                lam=lam,
                var_rand=v_rand,
                var_strat=v_strat,
                gap=gap,
                gap_lower_bound=bound,
                ordering_holds=bool(gap >= -tol),
                bound_holds=bool(gap >= bound - tol),
                method=method,
            )
        )
    wants_limit = include_limit or any(float(x) >= 1.0 - 1e-12 for x in lambda_grid)
    if wants_limit and summability_check(fam).absolutely_summable:
        v_strat = var_limit(fam, f, "strat")
        v_rand = var_limit(fam, f, "rand")
        gap = v_rand - v_strat
        reports.append(
            OrderingReport(
                lam=1.0,
                var_rand=v_rand,
                var_strat=v_strat,
                gap=gap,
                gap_lower_bound=0.0,
                ordering_holds=bool(gap >= -tol),
                bound_holds=bool(gap >= -tol),
                method="limit",
            )
        )
    return reports


def bellman_value(
    op_matrix: np.ndarray, f, weights, tol: float = NUMERIC_TOL
) -> tuple[float, np.ndarray]:
    """Quadratic form of the inverse of a positive self-adjoint operator.

    Returns (value, argmax) where value = <f, Op^{-1} f> in the weighted
    inner product and argmax attains the variational characterisation
    sup_g 2<f, g> - <g, Op g>. Raises when the operator is not self-adjoint
    for the weights or not positive definite.
    """
    mat = np.asarray(op_matrix, dtype=float)
    fv = f.values if isinstance(f, Observable) else np.asarray(f, dtype=float)
    w = weights.weights if isinstance(weights, Dist) else np.asarray(weights, dtype=float)
    if mat.shape != (w.size, w.size) or fv.size != w.size:
        raise ValidationError(
            f"operator {mat.shape}, vector {fv.size} and weights {w.size} disagree"
        )
    gram = w[:, None] * mat
    scale = max(float(np.abs(gram).max()), 1.0)
    if float(np.abs(gram - gram.T).max()) > tol * scale:
        raise ValidationError("operator is not self-adjoint in the weighted inner product")
    root = np.sqrt(w)
    sym = root[:, None] * mat / root[None, :]
    sym = (sym + sym.T) / 2.0
    min_eig = float(np.linalg.eigvalsh(sym)[0])
    if min_eig <= 0.0:
        raise ValidationError(
            f"operator is not positive definite (smallest eigenvalue {min_eig:.3g})"
        )
    argmax = np.linalg.solve(mat, fv)
    value = float(np.dot(w, fv * argmax))
    return value, argmax


def _pi_adjoint(mat: np.ndarray, pi: np.ndarray) -> np.ndarray:
    return (pi[None, :] * mat.T) / pi[:, None]


def variational_identity_check(
    kernel: Kernel,
    pi: Dist,
    f: Observable,
    lam: float,
    probes: int = 200,
    seed: int = 0,
    tol: float = 1e-9,
) -> VariationalIdentityReport:
    """Verify the resolvent quadratic form against its variational expression.

    For a target-invariant (not necessarily reversible) kernel, the form
    <f, (I - lam K)^{-1} f> equals the objective
    2<f, g> - <g, (I - lam S) g> - lam^2 <A g, (I - lam S)^{-1} A g>
    at the optimiser g, where S and A are the self-adjoint and skew parts;
    random probes can only fall below it.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {lam}")
    w = pi.weights
    mat = kernel.matrix
    if mat.shape[0] != w.size or f.n != w.size:
        raise ValidationError("kernel, target and observable must share dimensions")
    invariance = float(np.abs(w @ mat - w).max())
    if invariance > NUMERIC_TOL:
        raise ValidationError(
            f"kernel does not leave the target invariant (residual {invariance:.3g})"
        )
    n = w.size
    adj = _pi_adjoint(mat, w)
    sym = (mat + adj) / 2.0
    skew = (mat - adj) / 2.0
    eye = np.eye(n)
    fv = f.values

    def wdot(a, b):
        return float(np.dot(w, a * b))

    resolvent = np.linalg.solve(eye - lam * mat, fv)
    lhs = wdot(fv, resolvent)
    sym_sys = eye - lam * sym

    def objective(g):
        ag = skew @ g
        return (
            2.0 * wdot(fv, g)
            - wdot(g, sym_sys @ g)
            - lam * lam * wdot(ag, np.linalg.solve(sym_sys, ag))
        )

    g_hat = np.linalg.solve(eye - lam * adj, sym_sys @ resolvent)
    rhs = objective(g_hat)
    residual = abs(lhs - rhs)
    rng = np.random.default_rng(seed)
    max_excess = -np.inf
    for _ in range(probes):
        g = rng.standard_normal(n)
        max_excess = max(max_excess, objective(g) - lhs)
    return VariationalIdentityReport(
        lhs=lhs,
        rhs=rhs,
        residual=residual,
        max_probe_excess=float(max_excess),
        passes=bool(residual <= tol and max_excess <= tol),
    )


def _check_comparable(fam_a: KernelFamily, fam_b: KernelFamily) -> None:
    if fam_a.n != fam_b.n or fam_a.k != fam_b.k:
        raise ValidationError(
            f"families differ in shape: {fam_a.k}x{fam_a.n} vs {fam_b.k}x{fam_b.n}"
        )
    if not np.allclose(fam_a.pi.weights, fam_b.pi.weights, atol=1e-12, rtol=0.0):
        raise ValidationError("families must share the same target")


def peskun_dominates(fam_a: KernelFamily, fam_b: KernelFamily) -> PeskunComparison:
    """Kernelwise Dirichlet-form comparison: does the first family dominate?

    Kernel by kernel, the first family dominates when the second one's
    kernel is larger as a quadratic form, equivalently when the symmetrised
    difference (second minus first) has no eigenvalue below -PSD_TOL. The
    symmetrisation D^{1/2} (B - A) D^{-1/2} with D = diag(pi) has real
    spectrum for reversible kernels.
    """
    _check_comparable(fam_a, fam_b)
    root = np.sqrt(fam_a.pi.weights)
    verdicts = []
    min_eigs = []
    for ka, kb in zip(fam_a.kernels, fam_b.kernels):
        diff = kb.matrix - ka.matrix
        sym = root[:, None] * diff / root[None, :]
        sym = (sym + sym.T) / 2.0
        low = float(np.linalg.eigvalsh(sym)[0])
        min_eigs.append(low)
        verdicts.append(bool(low >= -PSD_TOL))
    return PeskunComparison(
        family_a=fam_a,
        family_b=fam_b,
        dominance_per_kernel=tuple(verdicts),
        per_kernel_min_eigenvalue=tuple(min_eigs),
        min_dirichlet_gap_eigenvalue=float(min(min_eigs)),
        dominates=bool(all(verdicts)),
    )


def check_peskun_ordering(
    fam_a: KernelFamily,
    fam_b: KernelFamily,
    f: Observable,
    lambda_grid: Sequence[float],
    include_limit: bool = True,
    tol: float = NUMERIC_TOL,
) -> PeskunOrderingReport:
    """Check that the dominating two-kernel family has the smaller cycle
    variance on every grid point, with a limit row when both families pass
    the summability check."""
    _check_comparable(fam_a, fam_b)
    if fam_a.k != 2:
        raise ValueError(f"the cycle comparison needs exactly two kernels, got {fam_a.k}")
    comparison = peskun_dominates(fam_a, fam_b)
    rows = []
    for lam in lambda_grid:
        lam = float(lam)
        if lam >= 1.0 - 1e-12:
            continue
        va = var_lambda_strat(fam_a, f, lam)
        vb = var_lambda_strat(fam_b, f, lam)
        rows.append(
            PeskunRow(
                lam=lam,
                var_strat_a=va,
                var_strat_b=vb,
                difference=vb - va,
                holds=bool(vb - va >= -tol),
            )
        )
    if (
        include_limit
        and summability_check(fam_a).absolutely_summable
        and summability_check(fam_b).absolutely_summable
    ):
        va = var_limit(fam_a, f, "strat")
        vb = var_limit(fam_b, f, "strat")
        rows.append(
            PeskunRow(
                lam=1.0,
                var_strat_a=va,
                var_strat_b=vb,
                difference=vb - va,
                holds=bool(vb - va >= -tol),
                method="limit",
            )
        )
    return PeskunOrderingReport(
        rows=tuple(rows),
        comparison=comparison,
        theorem_applicable=comparison.dominates,
        all_hold=bool(all(r.holds for r in rows)),
    )


class BetaPath:
    """Linear blend between the embeddings of two kernel families.

    beta = 0 reproduces the first family, beta = 1 the second. For a
    dominated pair (first family stronger kernelwise) the resolvent
    quadratic form delta is nondecreasing along the path, so its
    derivative is nonnegative.
    """

    def __init__(self, family_a: KernelFamily, family_b: KernelFamily):
        _check_comparable(family_a, family_b)
        self.family_a = family_a
        self.family_b = family_b
        self.pi = family_a.pi
        self.k = family_a.k
        self.n = family_a.n

    # margin lets central difference stencils straddle the endpoints
    _BETA_MARGIN = 1e-3

    def blocks(self, beta: float) -> list[np.ndarray]:
        if not -self._BETA_MARGIN <= beta <= 1.0 + self._BETA_MARGIN:
            raise ValueError(f"blend parameter must lie in [0, 1], got {beta}")
        return [
            (1.0 - beta) * a + beta * b
            for a, b in zip(self.family_a.matrices, self.family_b.matrices)
        ]

    def _fbar(self, f: Observable) -> np.ndarray:
        return np.tile(f.values, (self.k, 1)).reshape(-1)

    def delta(self, f: Observable, lam: float, beta: float) -> float:
        """Resolvent quadratic form of the blended embedding at the constant
        block built from f."""
        if not 0.0 <= lam < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {lam}")
        mat = embedding_realization("embed", self.blocks(beta))
        fbar = self._fbar(f)
        x = np.linalg.solve(np.eye(mat.shape[0]) - lam * mat, fbar)
        w = np.tile(self.pi.weights, self.k)
        return float(np.dot(w, fbar * x))

    def derivative(self, f: Observable, lam: float, beta: float) -> float:
        """Closed-form derivative of delta along the path.

        Uses the two shifted-diagonal resolvents with the discount inside
        both, paired through the blockwise difference of the families;
        matches a central finite difference of delta.
        """
        if not 0.0 <= lam < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {lam}")
        blend = self.blocks(beta)
        eye = np.eye(self.k * self.n)
        fbar = self._fbar(f)
        fwd_mat = embedding_realization("shift_diag", blend)
        bwd_mat = embedding_realization("shift_inv_diag", blend)
        forward = np.linalg.solve(eye - lam * fwd_mat, fbar)
        backward = np.linalg.solve(eye - lam * bwd_mat, fbar)
        diffs = [
            b - a for a, b in zip(self.family_a.matrices, self.family_b.matrices)
        ]
        fwd_blocks = forward.reshape(self.k, self.n)
        applied = np.stack([d @ fwd_blocks[i] for i, d in enumerate(diffs)])
        w = self.pi.weights
        return lam * float(
            np.sum((backward.reshape(self.k, self.n) * applied) @ w)
        )


def beta_derivative(
    fam_a: KernelFamily, fam_b: KernelFamily, f: Observable, lam: float, beta: float
) -> float:
    """Derivative of the blended resolvent form at `beta`; see BetaPath."""
    return BetaPath(fam_a, fam_b).derivative(f, lam, beta)


@dataclass(frozen=True)
class PalindromeCase:
    cycle: tuple[int, ...]
    distinguished_index: int
    max_component_gap: float
    derivatives: tuple[float, ...]
    min_derivative: float
    passes: bool


@dataclass(frozen=True)
class PalindromeReport:
    cases: tuple[PalindromeCase, ...]
    passes: bool


def _palindrome_cycles(p: int) -> list[tuple[list[int], list[int]]]:
    odd = list(range(p, 0, -1)) + list(range(2, p + 1))
    even = list(range(p - 1, 0, -1)) + list(range(2, p + 1))
    return [(odd, [p]), (even, [p - 1, 2 * p - 2])]


def palindrome_check(
    generators: Sequence[Kernel],
    pi: Dist,
    lam: float,
    f: Observable,
    beta_grid: Sequence[float] | None = None,
    perturbation: float = 0.5,
    component_tol: float = 1e-11,
    derivative_tol: float = 1e-9,
) -> PalindromeReport:
    """Check mirror-symmetric cycles built from p generators.

    Builds the odd cycle of length 2p-1 (mirror around the lone first
    generator) and the even variant of length 2p-2. At each distinguished
    index the forward and backward shifted-diagonal resolvent components
    must coincide, which makes the blend derivative against a family
    perturbed at that index a plain quadratic form, hence nonnegative.
    The derivative is evaluated against a lazified perturbation on a beta
    grid.
    """
    p = len(generators)
    if p < 2:
        raise ValueError(f"need at least two generators, got {p}")
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {lam}")
    if beta_grid is None:
        beta_grid = np.linspace(0.0, 1.0, 11)
    cases = []
    for cycle, indices in _palindrome_cycles(p):
        kernels = [generators[j - 1] for j in cycle]
        fam = make_family(pi.weights, kernels)
        k, n = fam.k, fam.n
        eye = np.eye(k * n)
        fbar = np.tile(f.values, (k, 1)).reshape(-1)
        for index in indices:
            perturbed = list(kernels)
            perturbed[index - 1] = lazy(perturbed[index - 1], perturbation)
            fam_b = make_family(pi.weights, perturbed)
            path = BetaPath(fam, fam_b)
            gaps = []
            derivs = []
            for beta in beta_grid:
                blend = path.blocks(float(beta))
                fwd = np.linalg.solve(
                    eye - lam * embedding_realization("shift_diag", blend), fbar
                )
                bwd = np.linalg.solve(
                    eye - lam * embedding_realization("shift_inv_diag", blend), fbar
                )
                comp = slice((index - 1) * n, index * n)
                gaps.append(float(np.abs(fwd[comp] - bwd[comp]).max()))
                derivs.append(path.derivative(f, lam, float(beta)))
            case = PalindromeCase(
                cycle=tuple(cycle),
                distinguished_index=index,
                max_component_gap=max(gaps),
                derivatives=tuple(derivs),
                min_derivative=min(derivs),
                passes=bool(
                    max(gaps) <= component_tol and min(derivs) >= -derivative_tol
                ),
            )
            cases.append(case)
    return PalindromeReport(
        cases=tuple(cases), passes=bool(all(c.passes for c in cases))
    )
