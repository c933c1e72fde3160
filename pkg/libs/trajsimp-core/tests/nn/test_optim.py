"""Tests for SGD and Adam."""

import numpy as np
import pytest
from trajsimp_core.exceptions import ShapeMismatchError
from trajsimp_core.nn.optim import SGD, Adam, AdamHyper, AdamState, adam_step, sgd_step
from trajsimp_core.nn.tensor import ComputationTape, Parameter


def adam_reference(
    w: float, grads: list[float], lr: float, beta1: float = 0.9, beta2: float = 0.999
) -> float:
    """Scalar Adam written out step by step."""
    m = v = 0.0
    for step, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**step)
        v_hat = v / (1 - beta2**step)
        w -= lr * m_hat / (np.sqrt(v_hat) + 1e-8)
    return w


@pytest.mark.unit
class TestFunctionalSteps:
    """Tests for sgd_step and adam_step."""

    def test_sgd_step(self) -> None:
        """Test that SGD moves against the gradient."""
        out = sgd_step({"w": np.array([1.0])}, {"w": np.array([1.0])}, lr=0.1)
        np.testing.assert_allclose(out["w"], [0.9])

    def test_adam_first_step_moves_by_lr(self) -> None:
        """Test that the first bias-corrected step has magnitude lr."""
        params, state = adam_step(
            {"w": np.array([1.0])}, {"w": np.array([0.5])}, AdamState(), AdamHyper(lr=0.1)
        )
        np.testing.assert_allclose(params["w"], [0.9], atol=1e-7)
        assert state.step == 1
        np.testing.assert_allclose(state.m["w"], [0.05])
        np.testing.assert_allclose(state.v["w"], [0.00025])

    def test_adam_matches_reference(self) -> None:
        """Test three Adam steps against a scalar reference."""
        grads = [0.5, -1.0, 2.0]
        params = {"w": np.array([1.0])}
        state = AdamState()
        for g in grads:
            params, state = adam_step(params, {"w": np.array([g])}, state, AdamHyper(lr=0.05))
        assert params["w"][0] == pytest.approx(adam_reference(1.0, grads, 0.05), abs=1e-12)

    def test_missing_gradient_counts_as_zero(self) -> None:
        """Test that parameters without a gradient stay put."""
        params = {"w": np.array([1.0]), "frozen": np.array([2.0])}
        out = sgd_step(params, {"w": np.array([1.0])}, lr=0.5)
        np.testing.assert_array_equal(out["frozen"], [2.0])
        adam_params, _ = adam_step(params, {"w": np.array([1.0])}, AdamState())
        np.testing.assert_array_equal(adam_params["frozen"], [2.0])

    def test_gradient_shape_mismatch_raises(self) -> None:
        """Test that gradients must match parameter shapes."""
        with pytest.raises(ShapeMismatchError):
            sgd_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, lr=0.1)
        with pytest.raises(ShapeMismatchError):
            adam_step({"w": np.zeros(2)}, {"w": np.zeros((2, 1))}, AdamState())


@pytest.mark.unit
class TestOptimizers:
    """Tests for the in-place optimizer wrappers."""

    def test_sgd_updates_in_place(self) -> None:
        """Test one SGD step on a parameter through the tape."""
        w = Parameter([2.0])
        optimizer = SGD({"w": w}, lr=0.25)
        with ComputationTape() as tape:
            loss = (w * w).sum()
        optimizer.step(tape.backward(loss))
        np.testing.assert_allclose(w.data, [1.0])

    def test_adam_minimizes_quadratic(self) -> None:
        """Test that Adam drives (w - 3)^2 to its minimum."""
        w = Parameter([0.0, -1.0])
        optimizer = Adam({"w": w}, AdamHyper(lr=0.1))
        for _ in range(500):
            with ComputationTape() as tape:
                diff = w - 3.0
                loss = (diff * diff).sum()
            optimizer.step(tape.backward(loss))
        np.testing.assert_allclose(w.data, [3.0, 3.0], atol=1e-2)
        assert optimizer.state.step == 500
