import math

import numpy as np
import pytest

from sagnn.autodiff import Parameter
from sagnn.errors import ValidationError
from sagnn.optim import OptimConfig, adamw_step, lr_scale


class TestSchedule:
    def test_endpoints(self):
        # 0 at step 0, 1 at warm-up end, 0 at total_steps
        total, warmup_fraction = 1000, 0.06
        assert lr_scale(0, total, warmup_fraction) == 0.0
        assert lr_scale(60, total, warmup_fraction) == 1.0
        with pytest.warns(UserWarning, match="past total_steps"):
            assert lr_scale(1000, total, warmup_fraction) == 0.0

    def test_linear_rise_and_fall(self):
        assert lr_scale(30, 1000, 0.06) == pytest.approx(0.5)
        assert lr_scale(530, 1000, 0.06) == pytest.approx(0.5)

    def test_beyond_total_clamps_to_zero(self):
        with pytest.warns(UserWarning):
            assert lr_scale(5000, 100, 0.1) == 0.0


class TestOptimConfig:
    def test_defaults_valid(self):
        cfg = OptimConfig()
        assert cfg.learning_rate == 1e-3
        assert cfg.weight_decay == 0.01
        assert cfg.warmup_fraction == 0.06

    def test_bad_warmup_rejected(self):
        with pytest.raises(ValidationError):
            OptimConfig(warmup_fraction=0.0)
        with pytest.raises(ValidationError):
            OptimConfig(warmup_fraction=1.0)

    def test_negative_lr_rejected(self):
        with pytest.raises(ValidationError):
            OptimConfig(learning_rate=-1.0)

    def test_zero_lr_allowed_as_degenerate_config(self):
        OptimConfig(learning_rate=0.0)


class TestAdamW:
    def test_single_scalar_step_matches_hand_computation(self):
        # one update of the published recurrence, worked by hand
        theta0, grad = 1.5, 0.25
        cfg = OptimConfig(learning_rate=1e-3, weight_decay=0.01,
                          total_steps=100, warmup_fraction=0.5)
        p = Parameter([[theta0]], "w")
        p.grad = np.array([[grad]])
        global_step = 25  # schedule = 25/50 = 0.5
        adamw_step([p], cfg, global_step)

        scale = 25 / 50
        lr = cfg.learning_rate * scale
        m = (1 - cfg.beta1) * grad
        v = (1 - cfg.beta2) * grad * grad
        m_hat = m / (1 - cfg.beta1)
        v_hat = v / (1 - cfg.beta2)
        expected = theta0 - lr * (m_hat / (math.sqrt(v_hat) + cfg.epsilon)
                                  + cfg.weight_decay * theta0)
        assert p.value[0, 0] == pytest.approx(expected, abs=1e-12)

    def test_two_steps_accumulate_moments(self):
        cfg = OptimConfig(learning_rate=0.01, weight_decay=0.0,
                          total_steps=10, warmup_fraction=0.1)
        p = Parameter([[2.0]], "w")
        m = v = 0.0
        theta = 2.0
        for step, grad in ((1, 0.5), (2, -0.25)):
            p.grad = np.array([[grad]])
            adamw_step([p], cfg, step)
            scale = lr_scale(step, 10, 0.1)
            lr = 0.01 * scale
            m = cfg.beta1 * m + (1 - cfg.beta1) * grad
            v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad
            t = step  # step_count equals number of updates so far
            m_hat = m / (1 - cfg.beta1 ** t)
            v_hat = v / (1 - cfg.beta2 ** t)
            theta -= lr * m_hat / (math.sqrt(v_hat) + cfg.epsilon)
            assert p.value[0, 0] == pytest.approx(theta, abs=1e-12)

    def test_tiny_gradients_leave_parameter_nearly_unchanged(self):
        cfg = OptimConfig(learning_rate=1e-3, weight_decay=0.0,
                          total_steps=10, warmup_fraction=0.5)
        p = Parameter([[1.0]], "w")
        p.grad = np.array([[1e-16]])
        adamw_step([p], cfg, 5)  # schedule = 1.0
        bound = cfg.learning_rate * cfg.epsilon * (1 + 1e-6)  # rounding slack
        assert abs(p.value[0, 0] - 1.0) <= bound

    def test_weight_decay_is_decoupled(self):
        # zero gradient still shrinks the parameter through decay alone
        cfg = OptimConfig(learning_rate=0.1, weight_decay=0.5,
                          total_steps=10, warmup_fraction=0.5)
        p = Parameter([[2.0]], "w")
        p.grad = np.array([[0.0]])
        adamw_step([p], cfg, 5)
        assert p.value[0, 0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)

    def test_gradients_zeroed_after_step(self):
        cfg = OptimConfig(total_steps=10)
        p = Parameter([[1.0]], "w")
        p.grad = np.array([[0.3]])
        adamw_step([p], cfg, 5)
        assert p.grad is None

    def test_shared_parameter_updates_once(self):
        cfg = OptimConfig(learning_rate=0.1, weight_decay=0.0,
                          total_steps=10, warmup_fraction=0.5)
        p = Parameter([[1.0]], "shared")
        p.grad = np.array([[1.0]])
        adamw_step([p, p], cfg, 5)
        assert p.step_count == 1

    def test_total_steps_required(self):
        p = Parameter([[1.0]], "w")
        p.grad = np.array([[1.0]])
        with pytest.raises(ValidationError, match="total_steps"):
            adamw_step([p], OptimConfig(), 0)
