import numpy as np
import pytest
import scipy.sparse as sp

from labelforest.solver import (
    BinaryProblem,
    SolveInfo,
    Weights,
    augment_bias_column,
    finalize_weights,
    gradient,
    objective,
    split_bias,
    train_binary,
)
from labelforest.sparse import SparseVec


def csr(rows):
    return sp.csr_matrix(np.asarray(rows, dtype=np.float64))


def one_point_problem(c):
    return BinaryProblem(csr([[1.0]]), np.array([1.0]), C=c)


class TestClosedForms:
    @pytest.mark.parametrize("c", [0.1, 1.0, 100.0])
    def test_one_point_optimum(self, c):
        w = train_binary(one_point_problem(c), eps=1e-10)
        assert w.w.to_dense()[0] == pytest.approx(c / (1.0 + c), abs=1e-6)

    def test_one_point_objective_value(self):
        p = one_point_problem(1.0)
        w = train_binary(p, eps=1e-10)
        assert objective(p, w.w.to_dense()) == pytest.approx(0.5, abs=1e-6)

    @pytest.mark.parametrize("c", [0.1, 1.0, 100.0])
    def test_one_point_with_bias_augmentation(self, c):
        X = augment_bias_column(csr([[1.0]]))
        p = BinaryProblem(X, np.array([1.0]), C=c)
        sol = split_bias(train_binary(p, eps=1e-10).w, 1)
        expected = c / (1.0 + 2.0 * c)
        assert sol.w.to_dense()[0] == pytest.approx(expected, abs=1e-6)
        assert sol.bias == pytest.approx(expected, abs=1e-6)

    def test_separable_symmetric_pair(self):
        p = BinaryProblem(
            csr([[1.0, 0.0], [-1.0, 0.0]]), np.array([1.0, -1.0]), C=1.0
        )
        w = train_binary(p, eps=1e-10).w.to_dense()
        assert w[0] > 0
        margins = np.array([w @ [1.0, 0.0], -(w @ [-1.0, 0.0])])
        assert margins[0] == pytest.approx(margins[1], abs=1e-9)


class TestSolverBehavior:
    def test_objective_never_worse_than_zero_vector(self):
        rng = np.random.default_rng(0)
        X = sp.csr_matrix(rng.normal(size=(30, 8)))
        s = np.sign(rng.normal(size=30))
        s[s == 0] = 1.0
        p = BinaryProblem(X, s, C=2.0)
        w = train_binary(p, eps=0.1)
        assert objective(p, w.w.to_dense()) <= objective(p, np.zeros(8)) + 1e-12

    def test_objective_trace_non_increasing(self):
        rng = np.random.default_rng(1)
        X = sp.csr_matrix(rng.normal(size=(50, 10)))
        s = np.where(rng.random(50) < 0.5, 1.0, -1.0)
        info = SolveInfo()
        train_binary(BinaryProblem(X, s, C=5.0), eps=1e-8, info=info)
        trace = np.array(info.objective_trace)
        assert len(trace) >= 2
        assert np.all(np.diff(trace) <= 1e-9)

    def test_all_one_sign_problem_converges(self):
        X = csr([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        info = SolveInfo()
        w = train_binary(
            BinaryProblem(X, np.array([1.0, 1.0, 1.0]), C=1.0),
            eps=1e-8,
            info=info,
        )
        assert info.converged
        m = X @ w.w.to_dense()
        assert np.all(m > 0)

    def test_gradient_norm_stopping_rule(self):
        rng = np.random.default_rng(2)
        X = sp.csr_matrix(rng.normal(size=(40, 6)))
        s = np.where(rng.random(40) < 0.4, 1.0, -1.0)
        p = BinaryProblem(X, s, C=1.0)
        eps = 1e-6
        info = SolveInfo()
        w = train_binary(p, eps=eps, max_newton_iters=200, info=info)
        g0 = np.linalg.norm(gradient(p, np.zeros(6)))
        g_final = np.linalg.norm(gradient(p, w.w.to_dense()))
        assert info.converged
        assert g_final <= eps * g0

    def test_max_iters_respected(self):
        rng = np.random.default_rng(3)
        X = sp.csr_matrix(rng.normal(size=(60, 12)))
        s = np.where(rng.random(60) < 0.5, 1.0, -1.0)
        info = SolveInfo()
        train_binary(BinaryProblem(X, s, C=100.0), eps=1e-14, max_newton_iters=2, info=info)
        assert info.n_newton_iters <= 2


class TestGradient:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(4)
        h = 1e-5
        for trial in range(20):
            n, d = int(rng.integers(5, 25)), int(rng.integers(2, 11))
            X = sp.csr_matrix(rng.normal(size=(n, d)))
            s = np.where(rng.random(n) < 0.5, 1.0, -1.0)
            p = BinaryProblem(X, s, C=float(rng.uniform(0.1, 10)))
            while True:
                w = rng.normal(size=d)
                xi = 1.0 - s * (X @ w)
                if np.min(np.abs(xi)) > 1e-3:
                    break
            g = gradient(p, w)
            g_fd = np.empty(d)
            for j in range(d):
                e = np.zeros(d)
                e[j] = h
                g_fd[j] = (objective(p, w + e) - objective(p, w - e)) / (2 * h)
            np.testing.assert_allclose(g, g_fd, rtol=1e-4, atol=1e-7)

    def test_gradient_at_zero(self):
        X = csr([[1.0, 2.0], [0.0, 1.0]])
        s = np.array([1.0, -1.0])
        p = BinaryProblem(X, s, C=3.0)
        expected = -2.0 * p.C * (X.T @ s)
        np.testing.assert_allclose(gradient(p, np.zeros(2)), np.asarray(expected).ravel())


class TestFinalize:
    def test_prunes_and_casts(self):
        w = Weights(SparseVec(np.array([0, 1, 2]), np.array([0.005, -0.5, 0.02]), 4), 0.003)
        out = finalize_weights(w, 0.01)
        assert out.w.indices.tolist() == [1, 2]
        assert out.w.values.dtype == np.float32
        assert out.bias == pytest.approx(0.003, rel=1e-6)

    def test_zero_delta_identity_support(self):
        w = Weights(SparseVec(np.array([1]), np.array([1e-9]), 2), 1.0)
        out = finalize_weights(w, 0.0)
        assert out.w.indices.tolist() == [1]

    def test_negative_delta_rejected(self):
        with pytest.raises(ValueError):
            finalize_weights(Weights(SparseVec(np.array([0]), np.array([1.0]), 1), 0.0), -1.0)


class TestValidation:
    def test_sign_values_checked(self):
        with pytest.raises(ValueError):
            BinaryProblem(csr([[1.0]]), np.array([0.5]))

    def test_c_positive(self):
        with pytest.raises(ValueError):
            BinaryProblem(csr([[1.0]]), np.array([1.0]), C=0.0)

    def test_row_sign_count_match(self):
        with pytest.raises(ValueError):
            BinaryProblem(csr([[1.0], [2.0]]), np.array([1.0]))

    def test_eps_positive(self):
        with pytest.raises(ValueError):
            train_binary(one_point_problem(1.0), eps=0.0)

    def test_split_bias_dim_check(self):
        with pytest.raises(ValueError):
            split_bias(SparseVec(np.array([0]), np.array([1.0]), 3), 1)
