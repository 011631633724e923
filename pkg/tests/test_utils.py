"""Tests for utility helpers."""

import json

import numpy as np
import pytest

from specrec.utils import FileUtils, SeedUtils, StatsUtils


class TestSeedUtils:
    """Test cases for SeedUtils."""

    def test_generator_reproducible(self):
        """Test equal seeds and keys give equal streams."""
        a = SeedUtils.generator(7, 1, 2).random(5)
        b = SeedUtils.generator(7, 1, 2).random(5)
        np.testing.assert_array_equal(a, b)

    def test_generator_keys_independent(self):
        """Test different sub-keys give different streams."""
        a = SeedUtils.generator(7, 1).random(5)
        b = SeedUtils.generator(7, 2).random(5)
        assert not np.array_equal(a, b)


class TestStatsUtils:
    """Test cases for StatsUtils."""

    def test_mean_se(self):
        """Test the mean and its standard error."""
        mean, se = StatsUtils.mean_se([1.0, 2.0, 3.0])
        assert mean == pytest.approx(2.0)
        assert se == pytest.approx(1.0 / np.sqrt(3))

    def test_mean_se_single(self):
        """Test one sample has an infinite standard error."""
        assert StatsUtils.mean_se([4.0]) == (4.0, float("inf"))

    def test_proportion_se_floor(self):
        """Test zero frequencies keep a one-count floor."""
        se = StatsUtils.proportion_se(np.array([0.0, 0.5]), 100)
        np.testing.assert_allclose(se, [np.sqrt(0.01 / 100), 0.05])

    def test_within_se(self):
        """Test the k standard error tolerance."""
        assert StatsUtils.within_se(1.02, 1.0, 0.01, k=3.0)
        assert not StatsUtils.within_se(np.array([1.0, 1.05]), 1.0, 0.01, k=3.0)


class TestFileUtils:
    """Test cases for FileUtils."""

    def test_write_json_creates_parents(self, tmp_path):
        """Test JSON is written below new directories."""
        path = FileUtils.write_json(tmp_path / "a" / "b.json", {"x": [1, 2]})
        assert path.read_text().endswith("\n")
        assert json.loads(path.read_text()) == {"x": [1, 2]}
