"""Tests for importance normalization and the ImportanceVector container."""

import numpy as np
import pytest
from trajsimp_core.exceptions import ContractError, InvalidArgumentError
from trajsimp_core.schemas.importance import ImportanceVector, normalize_min_max
from trajsimp_core.schemas.trajectory import TrajectoryDatabase

from tests.factories import planar_trajectory


@pytest.fixture
def two_trajectories() -> TrajectoryDatabase:
    """Trajectories of 3 and 2 points."""
    return TrajectoryDatabase(
        trajectories=(
            planar_trajectory("a", [(0, 0), (1, 0), (2, 0)]),
            planar_trajectory("b", [(0, 1), (1, 1)]),
        )
    )


@pytest.mark.unit
class TestNormalizeMinMax:
    """Tests for min-max normalization into [eps, 1 - eps]."""

    def test_extremes_map_to_margins(self) -> None:
        """Test that min and max land on epsilon and 1 - epsilon."""
        out = normalize_min_max(np.array([1.0, 2.0, 3.0]), epsilon=0.01)
        np.testing.assert_allclose(out, [0.01, 0.5, 0.99])

    def test_constant_input(self) -> None:
        """Test that a constant input maps to 0.5."""
        np.testing.assert_array_equal(normalize_min_max(np.full(4, 7.0)), np.full(4, 0.5))

    def test_empty_input(self) -> None:
        """Test that an empty input stays empty."""
        assert normalize_min_max(np.zeros(0)).size == 0

    @pytest.mark.parametrize("epsilon", [0.0, 0.5, -1.0])
    def test_invalid_epsilon_raises(self, epsilon: float) -> None:
        """Test that epsilon must lie in (0, 0.5)."""
        with pytest.raises(InvalidArgumentError):
            normalize_min_max(np.array([1.0, 2.0]), epsilon)


@pytest.mark.unit
class TestImportanceVector:
    """Tests for ImportanceVector."""

    def test_normalizes_across_the_database(self, two_trajectories: TrajectoryDatabase) -> None:
        """Test that normalization uses the global min and max."""
        vector = ImportanceVector.from_raw(
            two_trajectories, [np.array([0.0, 1.0, 2.0]), np.array([3.0, 4.0])], epsilon=0.1
        )
        np.testing.assert_allclose(vector.flat_normalized(), [0.1, 0.3, 0.5, 0.7, 0.9])
        np.testing.assert_array_equal(vector.flat_adjusted(), vector.flat_normalized())
        assert len(vector) == 5

    def test_point_lookup(self, two_trajectories: TrajectoryDatabase) -> None:
        """Test access by (trajectory id, point index)."""
        vector = ImportanceVector.from_raw(
            two_trajectories, [np.array([0.0, 1.0, 2.0]), np.array([3.0, 4.0])]
        )
        point = vector["b", 1]
        assert point.raw == 4.0
        assert point.normalized == pytest.approx(1.0 - vector.epsilon)

    def test_with_adjusted(self, two_trajectories: TrajectoryDatabase) -> None:
        """Test replacing the adjusted scores keeps raw and normalized."""
        vector = ImportanceVector.from_raw(
            two_trajectories, [np.array([0.0, 1.0, 2.0]), np.array([3.0, 4.0])]
        )
        adjusted = vector.with_adjusted(np.array([1.0, 0.0, 1.0, 0.0, 1.0]))
        assert adjusted.adjusted[1].tolist() == [0.0, 1.0]
        assert adjusted.raw is vector.raw

    def test_with_adjusted_wrong_length_raises(
        self, two_trajectories: TrajectoryDatabase
    ) -> None:
        """Test that adjusted scores must cover every point."""
        vector = ImportanceVector.from_raw(two_trajectories, [np.zeros(3), np.zeros(2)])
        with pytest.raises(ContractError):
            vector.with_adjusted(np.zeros(4))

    def test_misaligned_raw_raises(self, two_trajectories: TrajectoryDatabase) -> None:
        """Test that raw arrays must match trajectory lengths."""
        with pytest.raises(ContractError):
            ImportanceVector.from_raw(two_trajectories, [np.zeros(3), np.zeros(3)])
        with pytest.raises(ContractError):
            ImportanceVector.from_raw(two_trajectories, [np.zeros(3)])
