import numpy as np
import pytest

from satfuse.errors import SolverError, ValidationError
from satfuse.nnls import kkt_residuals, nnls


def pgd_nnls(A, b, max_steps=10**6):
    """Projected-gradient oracle: fixed 1/L step, at most `max_steps` iterations."""
    AtA = A.T @ A
    Atb = A.T @ b
    L = float(np.linalg.eigvalsh(AtA).max())
    step = 1.0 / L
    x = np.zeros(A.shape[1])
    for _ in range(max_steps):
        x_new = np.maximum(0.0, x - step * (AtA @ x - Atb))
        # stop on numerical stationarity (one ulp of the iterate scale)
        if np.max(np.abs(x_new - x)) < 1e-15 * max(1.0, float(np.max(np.abs(x_new)))):
            return x_new
        x = x_new
    return x


def assert_kkt(A, b, x, tol=1e-10):
    scale = float(np.max(np.abs(A.T @ A).sum(axis=1)))
    stat, feas = kkt_residuals(A, b, x)
    assert stat <= tol * scale + 1e-12
    assert feas >= -(tol * scale + 1e-12)


class TestNnlsBasics:
    def test_exactly_representable_column(self):
        rng = np.random.default_rng(0)
        A = rng.uniform(0.1, 1.0, size=(20, 6))
        b = A[:, 3].copy()
        x = nnls(A, b)
        assert np.linalg.norm(A @ x - b) < 1e-10
        expected = np.zeros(6)
        expected[3] = 1.0
        assert np.allclose(x, expected, atol=1e-8)
        assert_kkt(A, b, x)

    def test_negative_direction_gives_zero(self):
        rng = np.random.default_rng(1)
        A = rng.uniform(0.1, 1.0, size=(15, 4))
        b = -A @ np.ones(4)
        x = nnls(A, b)
        assert np.array_equal(x, np.zeros(4))

    def test_objective_never_worse_than_origin(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            A = rng.standard_normal((12, 5))
            b = rng.standard_normal(12)
            x = nnls(A, b)
            assert np.linalg.norm(A @ x - b) <= np.linalg.norm(b) + 1e-12
            assert (x >= 0).all()
            assert_kkt(A, b, x)

    def test_matches_projected_gradient_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            A = rng.standard_normal((40, 8))
            x_true = np.where(rng.uniform(size=8) < 0.5, rng.uniform(0.2, 2.0, 8), 0.0)
            b = A @ x_true
            x = nnls(A, b)
            x_ref = pgd_nnls(A, b)
            assert np.max(np.abs(x - x_ref)) < 1e-6
            assert_kkt(A, b, x)

    def test_validation(self):
        with pytest.raises(ValidationError):
            nnls(np.zeros((3,)), np.zeros(3))
        with pytest.raises(ValidationError):
            nnls(np.zeros((3, 2)), np.zeros(4))

    def test_iteration_budget_carries_best_iterate(self):
        rng = np.random.default_rng(4)
        A = rng.standard_normal((30, 10))
        b = rng.standard_normal(30)
        with pytest.raises(SolverError) as e:
            nnls(A, b, max_iter=1)
        assert e.value.best_x is not None
        assert e.value.best_x.shape == (10,)
        assert (e.value.best_x >= 0).all()
