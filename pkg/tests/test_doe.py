"""Tests for space-filling designs and nested DoE maintenance."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfsego.doe import (
    Bounds,
    Design,
    NestedDesign,
    augment_nested,
    build_nested,
    lhs_sample,
)
from mfsego.errors import ConfigError, DomainError, StructureError


class TestBounds:
    def test_rejects_inverted(self):
        with pytest.raises(ConfigError):
            Bounds([0.0, 1.0], [1.0, 0.5])

    def test_rejects_equal(self):
        with pytest.raises(ConfigError):
            Bounds([0.0], [0.0])

    def test_unit_roundtrip(self):
        b = Bounds([-2.0, 1.0], [2.0, 5.0])
        x = np.array([0.5, 3.0])
        np.testing.assert_allclose(b.from_unit(b.to_unit(x)), x)


class TestLhsSample:
    def test_single_point_in_box(self):
        d = lhs_sample(1, Bounds([0, 0], [1, 1]), seed=3)
        assert d.points.shape == (1, 2)
        assert 0 <= d.points[0, 0] <= 1 and 0 <= d.points[0, 1] <= 1

    def test_stratification_1d(self):
        d = lhs_sample(4, Bounds([0.0], [1.0]), seed=11)
        strata = np.floor(d.points[:, 0] * 4).astype(int)
        assert sorted(strata) == [0, 1, 2, 3]

    def test_stratification_every_coordinate(self):
        n = 17
        d = lhs_sample(n, Bounds([-1, 2, 0], [1, 6, 10]), seed=5)
        unit = d.bounds.to_unit(d.points)
        for j in range(3):
            occupancy = np.bincount(
                np.minimum((unit[:, j] * n).astype(int), n - 1), minlength=n
            )
            assert np.all(occupancy == 1)

    def test_deterministic(self):
        b = Bounds([0, 0], [1, 1])
        a = lhs_sample(6, b, seed=42)
        c = lhs_sample(6, b, seed=42)
        assert np.array_equal(a.points, c.points)

    def test_seed_changes_sample(self):
        b = Bounds([0, 0], [1, 1])
        assert not np.allclose(
            lhs_sample(6, b, seed=1).points, lhs_sample(6, b, seed=2).points
        )

    def test_invalid_count(self):
        with pytest.raises(ConfigError):
            lhs_sample(0, Bounds([0], [1]), seed=0)


class TestBuildNested:
    def test_table_sizes(self):
        nd = build_nested([6, 3], Bounds([-2, -2], [2, 2]), seed=0)
        assert nd.counts() == [6, 3]

    def test_subset_property(self):
        nd = build_nested([8, 4, 2], Bounds([0, 0], [1, 1]), seed=9)
        for upper_lvl, lower_lvl in zip(nd.levels[1:], nd.levels[:-1]):
            for row in upper_lvl.points:
                assert any(np.array_equal(row, p) for p in lower_lvl.points)

    def test_equal_counts_identical_sets(self):
        nd = build_nested([5, 5], Bounds([0], [1]), seed=2)
        assert np.array_equal(nd.levels[0].points, nd.levels[1].points)

    def test_increasing_counts_rejected(self):
        with pytest.raises(ConfigError):
            build_nested([3, 6], Bounds([0], [1]), seed=0)

    def test_deterministic(self):
        b = Bounds([0, 0], [1, 1])
        a = build_nested([7, 3], b, seed=4)
        c = build_nested([7, 3], b, seed=4)
        for la, lc in zip(a.levels, c.levels):
            assert np.array_equal(la.points, lc.points)

    def test_maximin_subset_spreads(self):
        # the greedy rule should never pick the two closest points when
        # asked for two of many
        nd = build_nested([30, 2], Bounds([0, 0], [1, 1]), seed=8)
        chosen = nd.levels[1].points
        d_chosen = np.linalg.norm(chosen[0] - chosen[1])
        pts = nd.levels[0].points
        d2 = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
        np.fill_diagonal(d2, np.inf)
        assert d_chosen > d2.min()


class TestAugmentNested:
    def setup_method(self):
        self.nd = build_nested([6, 3], Bounds([0, 0], [1, 1]), seed=1)

    def test_low_level_only(self):
        out = augment_nested(self.nd, np.array([0.5, 0.5]), up_to_level=1)
        assert out.counts() == [7, 3]

    def test_all_levels(self):
        out = augment_nested(self.nd, np.array([0.5, 0.5]), up_to_level=2)
        assert out.counts() == [7, 4]

    def test_duplicate_suppressed_at_lower_level(self):
        x = self.nd.levels[0].points[0]
        assert not any(np.array_equal(x, p) for p in self.nd.levels[1].points)
        out = augment_nested(self.nd, x, up_to_level=2)
        # x was already at level 1: only level 2 grows
        assert out.counts() == [6, 4]
        assert any(np.array_equal(x, p) for p in out.levels[1].points)

    def test_out_of_bounds(self):
        with pytest.raises(DomainError):
            augment_nested(self.nd, np.array([2.0, 0.5]), up_to_level=1)

    def test_bad_level(self):
        with pytest.raises(DomainError):
            augment_nested(self.nd, np.array([0.5, 0.5]), up_to_level=3)


class TestInvariants:
    @settings(max_examples=30, deadline=None)
    @given(
        moves=st.lists(
            st.tuples(
                st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.integers(1, 3)
            ),
            min_size=1,
            max_size=12,
        )
    )
    def test_nesting_preserved_under_augmentation(self, moves):
        nd = build_nested([6, 4, 2], Bounds([0, 0], [1, 1]), seed=3)
        for x0, x1, lvl in moves:
            nd = augment_nested(nd, np.array([x0, x1]), up_to_level=lvl)
        # NestedDesign re-validates nesting on construction
        NestedDesign(nd.levels)
        for upper_lvl, lower_lvl in zip(nd.levels[1:], nd.levels[:-1]):
            assert upper_lvl.n <= lower_lvl.n

    def test_duplicate_rows_rejected(self):
        with pytest.raises(StructureError):
            Design(np.array([[0.5, 0.5], [0.5, 0.5]]), Bounds([0, 0], [1, 1]))

    def test_near_duplicate_tolerance(self):
        # farther apart than the 1e-12 unit-cube tolerance: accepted
        Design(np.array([[0.5, 0.5], [0.5 + 1e-9, 0.5]]), Bounds([0, 0], [1, 1]))
