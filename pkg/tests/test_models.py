"""Linear least squares, MLP forward/backward, Adam training."""

import numpy as np
import pytest

from dosedistill.errors import DataError, TrainingDivergedError
from dosedistill.models import (
    LSQ_DAMPING,
    MlpModel,
    TrainConfig,
    fit_least_squares,
    mlp_forward,
    mlp_gradient,
    mlp_new,
    models_equal,
    predict_linear,
    train_mlp,
)
from dosedistill.serialize import model_from_obj, model_to_obj


def pinv_solution(X, y):
    """Minimum-norm least squares via explicit SVD, as an independent oracle."""
    a = np.hstack([X, np.ones((X.shape[0], 1))])
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    inv = np.where(s > 1e-12 * s.max(), 1.0 / np.where(s > 0, s, 1.0), 0.0)
    w = vt.T @ (inv * (u.T @ y))
    return w[:-1], w[-1]


class TestLeastSquares:
    def test_exact_linear_data(self):
        X = np.array([[1.0], [2.0], [3.0]])
        y = np.array([2.0, 4.0, 6.0])
        model = fit_least_squares(X, y)
        assert model.alpha[0] == pytest.approx(2.0, abs=1e-6)
        assert model.beta == pytest.approx(0.0, abs=1e-6)

    def test_duplicated_column_matches_pinv_oracle(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        X = np.column_stack([x, x])  # perfectly collinear
        y = np.array([2.1, 3.9, 6.2, 7.8])
        model = fit_least_squares(X, y)
        alpha_star, beta_star = pinv_solution(X, y)
        np.testing.assert_allclose(model.alpha, alpha_star, atol=1e-6)
        assert model.beta == pytest.approx(beta_star, abs=1e-6)
        assert np.all(np.isfinite(model.alpha))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            fit_least_squares(np.ones((3, 2)), np.ones(4))

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            X = rng.standard_normal((30, 4))
            y = rng.standard_normal(30)
            model = fit_least_squares(X, y)
            resid = y - model.predict(X)
            np.testing.assert_allclose(
                X.T @ resid, LSQ_DAMPING * model.alpha, atol=1e-6
            )

    def test_predict_linear_cases(self):
        from dosedistill.models import LinearModel

        assert predict_linear(LinearModel(np.array([2.0]), 0.0), [3.0]) == 6.0
        assert predict_linear(LinearModel(np.zeros(3), 5.5), [9, 9, 9]) == 5.5
        assert predict_linear(LinearModel(np.array([1.0, -1.0]), 1.0), [2, 2]) == 1.0
        with pytest.raises(ValueError):
            predict_linear(LinearModel(np.array([1.0]), 0.0), [1.0, 2.0])


class TestMlpBasics:
    def test_new_deterministic(self):
        a, b = mlp_new(7, 5, seed=3), mlp_new(7, 5, seed=3)
        assert models_equal(a, b)

    def test_new_shapes_and_bounds(self):
        m = mlp_new(33, 32, seed=0)
        assert m.W1.shape == (32, 33)
        assert m.w2.shape == (32,)
        assert np.all(np.abs(m.W1) <= np.sqrt(6.0 / (33 + 32)))
        assert np.all(m.b1 == 0) and m.b2 == 0.0

    def test_forward_zero_params(self):
        m = MlpModel(np.zeros((4, 3)), np.zeros(4), np.zeros(4), 0.0)
        assert mlp_forward(m, [1.0, 2.0, 3.0]) == 0.0

    def test_forward_dead_unit(self):
        m = MlpModel(np.array([[1.0]]), np.array([-5.0]), np.array([1.0]), 0.0)
        assert mlp_forward(m, [3.0]) == 0.0

    def test_forward_active_unit(self):
        m = MlpModel(np.array([[1.0]]), np.array([0.0]), np.array([2.0]), 1.0)
        assert mlp_forward(m, [3.0]) == 7.0

    def test_forward_dim_check(self):
        with pytest.raises(ValueError):
            mlp_forward(mlp_new(3, 2, 0), [1.0, 2.0])


class TestGradient:
    def test_zero_model_output_bias_gradient(self):
        m = MlpModel(np.zeros((2, 1)), np.zeros(2), np.zeros(2), 0.0)
        g = mlp_gradient(m, [[1.0]], [4.0])
        assert g.db2 == -8.0  # 2 * (0 - 4)
        assert np.all(g.dW1 == 0) and np.all(g.dw2 == 0) and np.all(g.db1 == 0)

    def test_identical_rows_equal_single_row(self):
        m = mlp_new(3, 4, seed=1)
        X = np.array([[0.3, -1.2, 0.7]])
        g1 = mlp_gradient(m, X, [2.0])
        g3 = mlp_gradient(m, np.repeat(X, 3, axis=0), [2.0, 2.0, 2.0])
        np.testing.assert_allclose(g1.dW1, g3.dW1, atol=1e-14)
        assert g1.db2 == pytest.approx(g3.db2, abs=1e-14)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            mlp_gradient(mlp_new(2, 2, 0), np.empty((0, 2)), [])

    def test_against_central_finite_differences(self):
        max_rel = gradient_check(n_cases=100, seed=2024)
        assert max_rel < 1e-5


def gradient_check(n_cases: int, seed: int) -> float:
    """Max relative error of analytic gradients vs central differences.

    Coordinates where a hidden pre-activation sits within 1e-7 of zero are
    skipped (the ReLU kink makes finite differences meaningless there).
    """
    rng = np.random.default_rng(seed)
    h = 1e-5
    worst = 0.0
    for _ in range(n_cases):
        d = int(rng.integers(1, 6))
        hidden = int(rng.integers(1, 5))
        b = int(rng.integers(1, 4))
        model = MlpModel(
            rng.uniform(-1, 1, (hidden, d)),
            rng.uniform(-1, 1, hidden),
            rng.uniform(-1, 1, hidden),
            float(rng.uniform(-1, 1)),
        )
        X = rng.uniform(-2, 2, (b, d))
        t = rng.uniform(-3, 3, b)
        ana = mlp_gradient(model, X, t)
        pre = X @ model.W1.T + model.b1  # b x hidden

        def loss(W1, b1, w2, b2):
            pred = np.maximum(X @ W1.T + b1, 0.0) @ w2 + b2
            return float(np.mean((pred - t) ** 2))

        params = [model.W1.copy(), model.b1.copy(), model.w2.copy(),
                  np.array([model.b2])]
        grads = [ana.dW1, ana.db1, ana.dw2, np.array([ana.db2])]
        for k, (p, g) in enumerate(zip(params, grads)):
            flat_p, flat_g = p.ravel(), g.ravel()
            for i in range(flat_p.size):
                if k in (0, 1):  # W1 or b1: unit u's kink matters
                    u = i // d if k == 0 else i
                    if np.min(np.abs(pre[:, u])) < 1e-7:
                        continue
                orig = flat_p[i]
                flat_p[i] = orig + h
                up = loss(params[0], params[1], params[2], float(params[3][0]))
                flat_p[i] = orig - h
                dn = loss(params[0], params[1], params[2], float(params[3][0]))
                flat_p[i] = orig
                fd = (up - dn) / (2 * h)
                rel = abs(flat_g[i] - fd) / max(abs(flat_g[i]) + abs(fd), 1e-4)
                worst = max(worst, rel)
    return worst


class TestTraining:
    def test_deterministic(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((60, 4))
        y = X @ np.array([1.0, -2.0, 0.5, 3.0]) + 30
        cfg = TrainConfig(seed=5, max_epochs=40, patience=10)
        assert models_equal(train_mlp(X, y, cfg), train_mlp(X, y, cfg))

    def test_fits_noiseless_linear_data(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((400, 5))
        y = X @ np.array([3.0, -2.0, 1.0, 0.5, 2.0]) + 40
        model = train_mlp(X, y, TrainConfig(seed=1))
        train_mae = float(np.mean(np.abs(model.predict(X) - y)))
        baseline = fit_least_squares(X, y)
        lsq_mae = float(np.mean(np.abs(baseline.predict(X) - y)))
        assert train_mae < lsq_mae + 0.1  # noise floor here is ~0

    def test_divergence_error_names_epoch(self):
        X = np.ones((10, 2)) + np.arange(20).reshape(10, 2)
        y = np.full(10, np.nan)
        with pytest.raises(TrainingDivergedError, match="epoch 1") as err:
            train_mlp(X, y, TrainConfig(seed=0))
        assert err.value.epoch == 1

    def test_needs_two_rows(self):
        with pytest.raises(DataError):
            train_mlp(np.ones((1, 2)), [1.0], TrainConfig(seed=0))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0)
        with pytest.raises(ValueError):
            TrainConfig(adam_beta1=1.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(patience=600, max_epochs=500)


class TestSerialization:
    def test_mlp_round_trip_bit_faithful(self):
        m = mlp_new(6, 4, seed=9)
        back = model_from_obj(model_to_obj(m))
        assert np.array_equal(m.W1, back.W1)
        assert np.array_equal(m.b1, back.b1)
        assert np.array_equal(m.w2, back.w2)
        assert m.b2 == back.b2

    def test_linear_round_trip_bit_faithful(self):
        from dosedistill.models import LinearModel

        m = LinearModel(np.array([0.1, -0.2, 1e-17]), 3.0000000001)
        back = model_from_obj(model_to_obj(m))
        assert np.array_equal(m.alpha, back.alpha)
        assert m.beta == back.beta
