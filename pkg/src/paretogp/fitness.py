"""Linear-scaled MSE fitness and objective normalization.

Training error is the MSE of the best affine rescaling a + b * f(x) of the
model output, divided by the variance of the training target. That bounds
it to [0, 1]: the worst admissible model is the one predicting mean(y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .expr import evaluate, to_string

MAX_TREE_SIZE = 100

# Test-side errors are clamped to the hypervolume reference coordinate.
ERROR_CEILING = 1.1


class ObjectiveVector(NamedTuple):
    error: float
    size_norm: float


@dataclass(frozen=True)
class ScaledModel:
    a: float  # intercept
    b: float  # slope
    mse: float


def _fit_scaled(pred, n, y_mean, y_centered, y_var) -> ScaledModel:
    # Hot path: centered dot products plus the least-squares identity
    # mse = var(y) - b * cov. Non-finite predictions surface as a non-finite
    # or non-positive prediction variance and hit the fallback.
    with np.errstate(all="ignore"):
        p_mean = float(pred.sum()) / n
        centered = pred - p_mean
        p_var = float(centered @ centered) / n
        if not (p_var > 1e-12) or not math.isfinite(p_var):
            return ScaledModel(a=y_mean, b=0.0, mse=y_var)
        cov = float(centered @ y_centered) / n
        b = cov / p_var
        a = y_mean - b * p_mean
        mse = y_var - b * cov
    if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(mse)):
        return ScaledModel(a=y_mean, b=0.0, mse=y_var)
    return ScaledModel(a=a, b=b, mse=min(max(mse, 0.0), y_var))


def linear_scaled_mse(predictions, targets) -> ScaledModel:
    """Least-squares fit of targets ~ a + b * predictions.

    Degenerate predictions (any non-finite value, or variance <= 1e-12)
    fall back to the constant model b=0, a=mean(y), mse=var(y), the worst
    bounded error.
    """
    pred = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    n = y.shape[0]
    y_mean = float(y.sum()) / n
    y_centered = y - y_mean
    y_var = float(y_centered @ y_centered) / n
    return _fit_scaled(pred, n, y_mean, y_centered, y_var)


# Trees at or below this size are memoized by their serialized form; GP
# populations revisit small trees constantly once they start duplicating.
_MEMO_SIZE_LIMIT = 15


class Evaluator:
    """Caches training-set statistics and scores trees against one split."""

    def __init__(self, ds):
        self.ds = ds
        self._n_train = ds.y_train.shape[0]
        self._y_mean = float(ds.y_train.sum()) / self._n_train
        self._y_centered = ds.y_train - self._y_mean
        self.var_y_train = float(self._y_centered @ self._y_centered) / self._n_train
        self._memo = {}

    def _score(self, tree) -> tuple[float, ScaledModel]:
        scaled = _fit_scaled(
            evaluate(tree, self.ds.X_train),
            self._n_train,
            self._y_mean,
            self._y_centered,
            self.var_y_train,
        )
        if self.var_y_train <= 0:
            return 0.0, scaled
        return scaled.mse / self.var_y_train, scaled

    def evaluate(self, tree) -> tuple[float, ScaledModel]:
        """Normalized linear-scaled training error in [0, 1] plus the fit.

        Structurally identical trees evaluate identically, so small trees
        are memoized by their serialized text.
        """
        if tree.size > _MEMO_SIZE_LIMIT:
            return self._score(tree)
        key = to_string(tree)
        hit = self._memo.get(key)
        if hit is None:
            hit = self._memo[key] = self._score(tree)
        return hit

    def test_error(self, tree, a: float, b: float) -> float:
        """Test-set MSE of the train-fitted affine model, normalized by the
        training variance and clamped to [0, 1.1]."""
        pred = evaluate(tree, self.ds.X_test)
        with np.errstate(all="ignore"):
            mse = float(np.mean((self.ds.y_test - (a + b * pred)) ** 2))
        if not np.isfinite(mse):
            return ERROR_CEILING
        if self.var_y_train <= 0:
            return 0.0 if mse == 0 else ERROR_CEILING
        return float(np.clip(mse / self.var_y_train, 0.0, ERROR_CEILING))


def objectives(tree, evaluator: Evaluator) -> tuple[ObjectiveVector, ScaledModel]:
    """Objective vector (normalized error, size / 100) for one tree."""
    error, scaled = evaluator.evaluate(tree)
    return ObjectiveVector(error=error, size_norm=tree.size / MAX_TREE_SIZE), scaled
