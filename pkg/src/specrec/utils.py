"""Utility functions for specrec."""

import json
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np


class SeedUtils:
    """Random stream derivation."""

    @staticmethod
    def generator(seed: int, *keys: int) -> np.random.Generator:
        """Independent stream for ``seed`` and a tuple of sub-keys (e.g. epsilon index)."""
        return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(keys)))


class StatsUtils:
    """Small statistics helpers for Monte-Carlo checks."""

    @staticmethod
    def mean_se(samples: Sequence[float] | np.ndarray) -> tuple[float, float]:
        """Sample mean and its standard error."""
        arr = np.asarray(samples, dtype=float)
        if arr.size < 2:
            return float(arr.mean()), float("inf")
        return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))

    @staticmethod
    def proportion_se(p: np.ndarray | float, n: int) -> np.ndarray | float:
        """Standard error of an empirical frequency, floored at one count."""
        return np.sqrt(np.maximum(np.asarray(p) * (1.0 - np.asarray(p)), 1.0 / n) / n)

    @staticmethod
    def within_se(observed: np.ndarray | float, expected: np.ndarray | float,
                  se: np.ndarray | float, k: float = 3.0) -> bool:
        """True when every |observed - expected| is within k standard errors."""
        return bool(np.all(np.abs(np.asarray(observed) - np.asarray(expected)) <= k * np.asarray(se)))


class FileUtils:
    """File system utility functions."""

    @staticmethod
    def write_text(path: Path, content: str) -> Path:
        """Write UTF-8 text, creating parent directories; I/O errors propagate."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8")
        return path

    @staticmethod
    def write_json(path: Path, data: Any) -> Path:
        """Write indented JSON terminated by a newline."""
        return FileUtils.write_text(path, json.dumps(data, indent=2) + "\n")
