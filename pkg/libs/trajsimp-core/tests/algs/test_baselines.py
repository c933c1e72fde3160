"""Tests for the Top-Down, Bottom-Up and uniform baselines."""

import numpy as np
import pytest
from trajsimp_core.algs.baselines import (
    BaselineMethod,
    BaselineSpec,
    allocate_budgets,
    bottom_up,
    run_baseline,
    top_down,
    top_down_whole,
    uniform_sample,
)
from trajsimp_core.algs.distance import PLANAR, ErrorKind, chord_errors
from trajsimp_core.exceptions import InvalidArgumentError
from trajsimp_core.schemas.trajectory import Trajectory, TrajectoryDatabase, compute_budget

from tests.factories import BaselineSpecFactory, planar_trajectory


def bottom_up_brute_force(traj: Trajectory, budget: int, kind: ErrorKind) -> list[int]:
    """Recompute every removal cost each round and drop the cheapest (lowest index on ties)."""
    projected = PLANAR.project(traj)
    alive = list(range(len(traj)))
    while len(alive) > budget:
        costs = []
        for pos in range(1, len(alive) - 1):
            errors = chord_errors(projected, alive[pos - 1], alive[pos + 1], kind, strict=False)
            costs.append((float(errors.max()), alive[pos]))
        _, drop = min(costs)
        alive.remove(drop)
    return alive


def retained_times(simplified: Trajectory) -> list[int]:
    return simplified.t.tolist()


@pytest.fixture
def six_points() -> Trajectory:
    """Six planar points with uneven deviations."""
    return planar_trajectory(
        "six", [(0, 0), (1, 0.4), (2, -0.1), (3, 1.2), (4, 0.3), (5, 0)], [0, 1, 2, 3, 4, 5]
    )


@pytest.mark.unit
class TestAllocateBudgets:
    """Tests for proportional budget allocation."""

    def test_largest_remainder(self) -> None:
        """Test that leftover points go to the largest remainders, earlier first on ties."""
        assert allocate_budgets(np.array([3, 3, 4]), 5).tolist() == [2, 1, 2]

    def test_sums_to_budget(self) -> None:
        """Test that allocations always sum to the budget."""
        lengths = np.array([7, 1, 13, 2, 30])
        for budget in range(0, int(lengths.sum()) + 1):
            allocation = allocate_budgets(lengths, budget)
            assert allocation.sum() == budget
            assert np.all(allocation <= lengths)

    def test_budget_above_total_raises(self) -> None:
        """Test that a budget above the point count is rejected."""
        with pytest.raises(InvalidArgumentError):
            allocate_budgets(np.array([2, 2]), 5)


@pytest.mark.unit
class TestTopDown:
    """Tests for budgeted Top-Down."""

    def test_picks_the_corner_first(self, zigzag: Trajectory) -> None:
        """Test that the first insertion is the sharpest corner."""
        assert retained_times(top_down(zigzag, 3, ErrorKind.PED)) == [0, 40, 70]

    @pytest.mark.parametrize("kind", [ErrorKind.PED, ErrorKind.SED, ErrorKind.DAD])
    def test_retained_sets_are_nested(self, zigzag: Trajectory, kind: ErrorKind) -> None:
        """Test that a larger budget keeps every point of a smaller one."""
        previous: set[int] = set()
        for budget in range(2, len(zigzag) + 1):
            kept = set(retained_times(top_down(zigzag, budget, kind)))
            assert len(kept) == budget
            assert previous <= kept
            previous = kept

    def test_budget_covering_trajectory_returns_it(self, zigzag: Trajectory) -> None:
        """Test that a budget at the trajectory length keeps every point."""
        assert top_down(zigzag, 20, ErrorKind.PED) == zigzag

    def test_budget_below_two_raises(self, zigzag: Trajectory) -> None:
        """Test that Top-Down needs at least the two endpoints."""
        with pytest.raises(InvalidArgumentError):
            top_down(zigzag, 1, ErrorKind.PED)


@pytest.mark.unit
class TestBottomUp:
    """Tests for budgeted Bottom-Up."""

    @pytest.mark.parametrize("kind", [ErrorKind.PED, ErrorKind.SED, ErrorKind.DAD])
    @pytest.mark.parametrize("budget", [2, 3, 4, 5])
    def test_matches_brute_force(
        self, six_points: Trajectory, kind: ErrorKind, budget: int
    ) -> None:
        """Test the heap implementation against full recomputation."""
        kept = bottom_up(six_points, budget, kind)
        assert retained_times(kept) == bottom_up_brute_force(six_points, budget, kind)

    def test_keeps_endpoints(self, zigzag: Trajectory) -> None:
        """Test that the endpoints are never removed."""
        kept = retained_times(bottom_up(zigzag, 2, ErrorKind.SED))
        assert kept == [0, 70]

    def test_keeps_the_corner(self, zigzag: Trajectory) -> None:
        """Test that the corner survives to a budget of three."""
        assert retained_times(bottom_up(zigzag, 3, ErrorKind.PED)) == [0, 40, 70]


@pytest.mark.unit
class TestTopDownWhole:
    """Tests for database-wide Top-Down."""

    def test_meets_budget_with_endpoints(self, small_db: TrajectoryDatabase) -> None:
        """Test that the global queue fills the budget and keeps every endpoint."""
        simplified = top_down_whole(small_db, 60, ErrorKind.PED)
        assert simplified.retained_count == 60
        for traj, kept in zip(small_db, simplified.retained, strict=True):
            assert kept[0] == 0 and kept[-1] == len(traj) - 1

    def test_budget_below_endpoints_raises(self, small_db: TrajectoryDatabase) -> None:
        """Test that the budget must cover every trajectory's endpoints."""
        with pytest.raises(InvalidArgumentError):
            top_down_whole(small_db, 2 * len(small_db) - 1, ErrorKind.PED)

    def test_full_budget_is_identity(self, small_db: TrajectoryDatabase) -> None:
        """Test that a budget of every point keeps everything."""
        simplified = top_down_whole(small_db, small_db.total_points, ErrorKind.SED)
        assert simplified.retained_count == small_db.total_points


@pytest.mark.unit
class TestUniformSample:
    """Tests for the uniform baseline."""

    def test_exact_budget(self, small_db: TrajectoryDatabase) -> None:
        """Test that exactly the budget is kept."""
        assert uniform_sample(small_db, 50, seed=3).retained_count == 50

    def test_deterministic_in_seed(self, small_db: TrajectoryDatabase) -> None:
        """Test that the same seed keeps the same points."""
        a = uniform_sample(small_db, 50, seed=3)
        b = uniform_sample(small_db, 50, seed=3)
        for left, right in zip(a.retained, b.retained, strict=True):
            np.testing.assert_array_equal(left, right)

    def test_budget_out_of_range_raises(self, small_db: TrajectoryDatabase) -> None:
        """Test budget validation."""
        with pytest.raises(InvalidArgumentError):
            uniform_sample(small_db, 0, seed=1)
        with pytest.raises(InvalidArgumentError):
            uniform_sample(small_db, small_db.total_points + 1, seed=1)


@pytest.mark.unit
class TestRunBaseline:
    """Tests for run_baseline dispatch."""

    @pytest.mark.parametrize("method", list(BaselineMethod))
    def test_meets_budget(self, small_db: TrajectoryDatabase, method: BaselineMethod) -> None:
        """Test that every method keeps exactly the budget."""
        spec = BaselineSpec(method=method, compression_rate=0.2)
        simplified = run_baseline(small_db, spec)
        assert simplified.retained_count == compute_budget(small_db.total_points, 0.2)
        assert simplified.compression_rate == 0.2

    @pytest.mark.parametrize("method", list(BaselineMethod))
    def test_full_rate_is_identity(
        self, small_db: TrajectoryDatabase, method: BaselineMethod
    ) -> None:
        """Test that cr = 1 keeps every point."""
        simplified = run_baseline(small_db, BaselineSpec(method=method, compression_rate=1.0))
        for traj, kept in zip(small_db, simplified.retained, strict=True):
            np.testing.assert_array_equal(kept, np.arange(len(traj)))

    def test_uniform_from_factory(
        self,
        small_db: TrajectoryDatabase,
        baseline_spec_factory: type[BaselineSpecFactory],
    ) -> None:
        """Test the uniform baseline at an arbitrary valid rate."""
        spec = baseline_spec_factory.build(method=BaselineMethod.UNIFORM)
        simplified = run_baseline(small_db, spec)
        assert simplified.retained_count == compute_budget(
            small_db.total_points, spec.compression_rate
        )
