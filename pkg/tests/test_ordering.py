"""Unit tests for ordering checkers, the gap bound, blends and palindromes."""

import numpy as np
import pytest

import helpers
from scanvar.kernels import (
    Dist,
    Kernel,
    Observable,
    ValidationError,
    gibbs_kernel,
    inner,
    make_family,
    random_reversible,
)
from scanvar.ordering import (
    BetaPath,
    bellman_value,
    beta_derivative,
    check_peskun_ordering,
    check_scan_ordering,
    gap_lower_bound,
    palindrome_check,
    peskun_dominates,
    variational_identity_check,
)
from scanvar.variance import var_lambda_rand, var_lambda_strat, var_limit


class TestGapLowerBound:
    def test_identical_kernels_zero(self, e1_f):
        fam = make_family([0.5, 0.5], [helpers.E1_P1, helpers.E1_P1])
        assert abs(gap_lower_bound(fam, e1_f, 0.6)) <= 1e-13

    def test_lambda_zero(self, e1, e1_f):
        assert gap_lower_bound(e1, e1_f, 0.0) == 0.0

    def test_e1_between_zero_and_gap(self, e1, e1_f):
        bound = gap_lower_bound(e1, e1_f, 0.5)
        assert 0.0 <= bound <= helpers.E1_GAP_HALF + 1e-12

    def test_needs_two_kernels(self, e1_f):
        fam = make_family([0.5, 0.5], [helpers.E1_P1, helpers.E1_P2, helpers.E1_P1])
        with pytest.raises(ValueError):
            gap_lower_bound(fam, e1_f, 0.5)

    def test_random_sweep_bound_certified(self):
        rng = np.random.default_rng(40)
        for _ in range(10):
            fam = helpers.random_family(rng, int(rng.integers(3, 12)), 2)
            f = helpers.random_centered(rng, fam)
            for lam in (0.3, 0.9):
                gap = var_lambda_rand(fam, f, lam) - var_lambda_strat(fam, f, lam)
                bound = gap_lower_bound(fam, f, lam)
                assert bound >= -1e-12
                assert gap >= bound - 1e-9


class TestCheckScanOrdering:
    def test_e1_half(self, e1, e1_f):
        reports = check_scan_ordering(e1, e1_f, [0.5], include_limit=False)
        assert len(reports) == 1
        rep = reports[0]
        assert rep.gap == pytest.approx(helpers.E1_GAP_HALF, abs=1e-12)
        assert rep.ordering_holds and rep.bound_holds
        assert rep.method == "resolvent"

    def test_e1_limit_row(self, e1, e1_f):
        reports = check_scan_ordering(e1, e1_f, [0.5])
        assert reports[-1].method == "limit"
        assert reports[-1].lam == 1.0
        assert reports[-1].gap == pytest.approx(3.0 - 18.0 / 7.0, abs=1e-12)

    def test_identical_kernels_zero_gap(self, e1_f):
        fam = make_family([0.5, 0.5], [helpers.E1_P2, helpers.E1_P2])
        for rep in check_scan_ordering(fam, e1_f, [0.3, 0.6, 0.9]):
            assert abs(rep.gap) <= 1e-10
            assert rep.ordering_holds

    def test_no_limit_row_when_not_summable(self, e1_f):
        fam = make_family([0.5, 0.5], [np.eye(2), np.eye(2)])
        reports = check_scan_ordering(fam, e1_f, [0.5])
        assert all(rep.method != "limit" for rep in reports)

    def test_series_method_threads_through(self, e1, e1_f):
        rep = check_scan_ordering(e1, e1_f, [0.5], method="series", include_limit=False)[0]
        assert rep.method == "series"
        assert rep.var_strat == pytest.approx(helpers.E1_VAR_STRAT_HALF, abs=1e-10)


class TestBellman:
    def test_identity_operator(self):
        f = np.array([1.0, -1.0])
        value, argmax = bellman_value(np.eye(2), f, [0.5, 0.5])
        assert value == pytest.approx(1.0, abs=1e-14)
        np.testing.assert_allclose(argmax, f, atol=1e-14)

    def test_scaling(self):
        f = np.array([1.0, -1.0])
        value, argmax = bellman_value(2.0 * np.eye(2), f, [0.5, 0.5])
        assert value == pytest.approx(0.5, abs=1e-14)
        np.testing.assert_allclose(argmax, f / 2.0, atol=1e-14)

    def test_e1_mixed_kernel_operator(self, e1, e1_f):
        op = np.eye(2) - 0.5 * np.asarray([[0.75, 0.25], [0.25, 0.75]])
        value, argmax = bellman_value(op, e1_f, e1.pi)
        assert value == pytest.approx(4.0 / 3.0, abs=1e-12)
        # any perturbation of the optimiser strictly decreases the objective
        rng = np.random.default_rng(41)
        w = e1.pi.weights

        def objective(g):
            return 2.0 * float(np.dot(w, e1_f.values * g)) - float(
                np.dot(w, g * (op @ g))
            )

        assert objective(argmax) == pytest.approx(value, abs=1e-13)
        for _ in range(20):
            g = argmax + 0.1 * rng.standard_normal(2)
            assert objective(g) < value

    def test_probes_never_exceed(self):
        rng = np.random.default_rng(42)
        fam = helpers.random_family(rng, 5, 2)
        w = fam.pi.weights
        op = np.eye(5) - 0.7 * helpers.cycle_product(fam.matrices, 1, 1)
        f = rng.standard_normal(5)
        value, _ = bellman_value(op, f, w)
        for _ in range(200):
            g = rng.standard_normal(5)
            assert 2 * np.dot(w, f * g) - np.dot(w, g * (op @ g)) <= value + 1e-10

    def test_block_space_operator(self, e1, e1_f):
        # the symmetric-part resolvent system is positive self-adjoint on the
        # stacked space with phase-tiled weights
        from scanvar.embedding import BlockVector, CycleEmbedding, block_inner

        emb = CycleEmbedding(e1)
        lam = 0.5
        op = np.eye(4) - lam * emb.realization("symmetric")
        fbar = BlockVector.repeat(e1_f, 2)
        value, argmax = bellman_value(op, fbar.flat(), emb.weights)
        solved = emb.resolvent_solve("symmetric", lam, fbar)
        assert value == pytest.approx(block_inner(fbar, solved, e1.pi), abs=1e-12)
        np.testing.assert_allclose(argmax, solved.flat(), atol=1e-12)

    def test_rejects_non_self_adjoint(self):
        with pytest.raises(ValidationError):
            bellman_value(np.array([[1.0, 0.5], [0.0, 1.0]]), [1.0, 1.0], [0.5, 0.5])

    def test_rejects_non_positive(self):
        with pytest.raises(ValidationError):
            bellman_value(-np.eye(2), [1.0, 1.0], [0.5, 0.5])


class TestVariationalIdentity:
    def test_reversible_kernel_reduces_to_resolvent(self, e1, e1_f):
        rep = variational_identity_check(e1.kernels[0], e1.pi, e1_f, 0.5)
        assert rep.passes
        assert rep.residual <= 1e-12
        # for a reversible kernel the skew part vanishes and the form is the
        # plain resolvent quadratic form
        expected = inner(
            e1_f,
            Observable(np.linalg.solve(np.eye(2) - 0.5 * e1.matrices[0], e1_f.values)),
            e1.pi,
        )
        assert rep.lhs == pytest.approx(expected, abs=1e-13)

    def test_lambda_zero_both_sides_norm(self, e1, e1_f):
        rep = variational_identity_check(e1.kernels[0], e1.pi, e1_f, 0.0)
        assert rep.lhs == pytest.approx(1.0, abs=1e-14)
        assert rep.rhs == pytest.approx(1.0, abs=1e-14)

    def test_nonreversible_cyclic_blend(self):
        cyc = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        kern = Kernel(0.5 * np.eye(3) + 0.5 * cyc)
        pi = Dist([1 / 3, 1 / 3, 1 / 3])
        f = Observable([1.0, 0.5, -1.5])
        rep = variational_identity_check(kern, pi, f, 0.5, probes=200, seed=3)
        assert rep.residual <= 1e-10
        assert rep.max_probe_excess <= 1e-10
        assert rep.passes

    def test_rejects_non_invariant(self):
        kern = Kernel([[0.9, 0.1], [0.5, 0.5]])
        with pytest.raises(ValidationError):
            variational_identity_check(kern, Dist([0.5, 0.5]), Observable([1.0, -1.0]), 0.5)


class TestPeskunDominance:
    def test_lazified_family_is_dominated(self):
        rng = np.random.default_rng(43)
        fam = helpers.random_family(rng, 5, 2)
        comparison = peskun_dominates(fam, helpers.lazified(fam, 0.3))
        assert comparison.dominates
        assert all(comparison.dominance_per_kernel)
        assert comparison.min_dirichlet_gap_eigenvalue >= -1e-12

    def test_self_comparison(self, e1):
        comparison = peskun_dominates(e1, e1)
        assert comparison.dominates
        assert comparison.min_dirichlet_gap_eigenvalue == pytest.approx(0.0, abs=1e-12)

    def test_reversed_roles_fail(self):
        rng = np.random.default_rng(44)
        fam = helpers.random_family(rng, 5, 2)
        comparison = peskun_dominates(helpers.lazified(fam, 0.3), fam)
        assert not comparison.dominates
        assert comparison.min_dirichlet_gap_eigenvalue < -1e-6

    def test_eigenvalues_match_direct_eigensolve(self):
        rng = np.random.default_rng(45)
        fam = helpers.random_family(rng, 4, 2)
        dominated = helpers.lazified(fam, 0.3)
        comparison = peskun_dominates(fam, dominated)
        root = np.sqrt(fam.pi.weights)
        for i in range(2):
            diff = dominated.matrices[i] - fam.matrices[i]
            sym = root[:, None] * diff / root[None, :]
            expected = float(np.linalg.eigvalsh((sym + sym.T) / 2)[0])
            assert comparison.per_kernel_min_eigenvalue[i] == pytest.approx(
                expected, abs=1e-12
            )

    def test_mismatched_families_rejected(self, e1):
        rng = np.random.default_rng(46)
        other = helpers.random_family(rng, 3, 2)
        with pytest.raises(ValidationError):
            peskun_dominates(e1, other)


class TestCheckPeskunOrdering:
    def test_e1_versus_lazified(self, e1, e1_f):
        dominated = helpers.lazified(e1, 0.5)
        report = check_peskun_ordering(e1, dominated, e1_f, [0.5])
        assert report.theorem_applicable
        assert report.all_hold
        assert report.rows[-1].method == "limit"
        for row in report.rows:
            assert row.difference >= -1e-10

    def test_self_comparison_equality(self, e1, e1_f):
        report = check_peskun_ordering(e1, e1, e1_f, [0.3, 0.9])
        assert report.theorem_applicable
        for row in report.rows:
            assert abs(row.difference) <= 1e-10

    def test_strong_lazification_large_gap(self, e1, e1_f):
        dominated = helpers.lazified(e1, 0.99)
        report = check_peskun_ordering(e1, dominated, e1_f, [0.9], include_limit=False)
        assert report.all_hold
        assert report.rows[0].difference > 1.0

    def test_failed_dominance_still_reports(self, e1, e1_f):
        report = check_peskun_ordering(helpers.lazified(e1, 0.5), e1, e1_f, [0.5])
        assert not report.theorem_applicable
        assert len(report.rows) >= 1


class TestBetaDerivative:
    def test_equal_families_zero(self, e1, e1_f):
        assert beta_derivative(e1, e1, e1_f, 0.5, 0.5) == pytest.approx(0.0, abs=1e-14)

    def test_lambda_zero(self, e1, e1_f):
        dominated = helpers.lazified(e1, 0.5)
        assert beta_derivative(e1, dominated, e1_f, 0.0, 0.5) == pytest.approx(
            0.0, abs=1e-14
        )

    def test_matches_central_differences(self, e1, e1_f):
        dominated = helpers.lazified(e1, 0.5)
        path = BetaPath(e1, dominated)
        h = 1e-5
        for lam in (0.3, 0.6, 0.9):
            for beta in (0.0, 0.5, 1.0):
                closed = path.derivative(e1_f, lam, beta)
                fd = (path.delta(e1_f, lam, beta + h) - path.delta(e1_f, lam, beta - h)) / (
                    2 * h
                )
                assert closed >= 0.0
                assert abs(closed - fd) <= 1e-6 * max(abs(closed), abs(fd))

    def test_delta_nondecreasing_for_dominated_pair(self):
        rng = np.random.default_rng(47)
        fam = helpers.random_family(rng, 4, 2)
        dominated = helpers.lazified(fam, 0.4)
        f = helpers.random_centered(rng, fam)
        path = BetaPath(fam, dominated)
        grid = np.linspace(0.0, 1.0, 11)
        values = [path.delta(f, 0.7, float(b)) for b in grid]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))

    def test_endpoints_reproduce_families(self, e1, e1_f):
        dominated = helpers.lazified(e1, 0.5)
        path = BetaPath(e1, dominated)
        for block, expected in zip(path.blocks(0.0), e1.matrices):
            np.testing.assert_array_equal(block, expected)
        for block, expected in zip(path.blocks(1.0), dominated.matrices):
            np.testing.assert_array_equal(block, expected)
        lam = 0.5
        # delta at the endpoints equals the resolvent form of each family,
        # which carries the cycle variance
        for beta, fam in ((0.0, e1), (1.0, dominated)):
            expected = (var_lambda_strat(fam, e1_f, lam) + 1.0) * fam.k / 2.0
            assert path.delta(e1_f, lam, beta) == pytest.approx(expected, abs=1e-11)


class TestPalindrome:
    def test_two_generators(self):
        rng = np.random.default_rng(48)
        pi = helpers.random_dist(rng, 4)
        gens = [random_reversible(pi, s) for s in (100, 200)]
        f = Observable(rng.standard_normal(4))
        report = palindrome_check(gens, pi, 0.5, f)
        assert report.passes
        cycles = {case.cycle for case in report.cases}
        assert (2, 1, 2) in cycles and (1, 2) in cycles
        for case in report.cases:
            assert case.max_component_gap <= 1e-11
            assert case.min_derivative >= -1e-9

    def test_three_generators(self):
        rng = np.random.default_rng(49)
        pi = helpers.random_dist(rng, 4)
        gens = [random_reversible(pi, s) for s in (7, 8, 9)]
        f = Observable(rng.standard_normal(4))
        report = palindrome_check(gens, pi, 0.5, f)
        assert report.passes
        cycles = {case.cycle for case in report.cases}
        assert (3, 2, 1, 2, 3) in cycles and (2, 1, 2, 3) in cycles

    def test_identity_generators_zero_derivative(self):
        pi = Dist([0.25, 0.75])
        gens = [Kernel(np.eye(2)), Kernel(np.eye(2))]
        report = palindrome_check(gens, pi, 0.5, Observable([1.0, -1.0]))
        for case in report.cases:
            assert case.min_derivative == pytest.approx(0.0, abs=1e-13)
            assert max(abs(d) for d in case.derivatives) <= 1e-13

    def test_needs_two_generators(self):
        pi = Dist([0.5, 0.5])
        with pytest.raises(ValueError):
            palindrome_check([Kernel(np.eye(2))], pi, 0.5, Observable([1.0, -1.0]))


class TestProjectionVarianceIdentity:
    def test_two_component_gibbs(self):
        rng = np.random.default_rng(50)
        w = rng.random(6) + 0.1
        joint = Dist(w / w.sum())
        fam = make_family(
            joint.weights,
            [gibbs_kernel(joint, (2, 3), 1), gibbs_kernel(joint, (2, 3), 2)],
        )
        f = helpers.random_centered(rng, fam)
        norm_sq = inner(f, f, fam.pi)
        lhs = var_limit(fam, f, "rand")
        rhs = 2.0 * var_limit(fam, f, "strat") - norm_sq
        assert lhs == pytest.approx(rhs, abs=1e-10)
