from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyInput, LengthMismatch

DEFAULT_TOL = 0.10


def _pair(y, y_hat):
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise LengthMismatch(f"{y.size} targets vs {y_hat.size} predictions")
    if y.size == 0:
        raise EmptyInput("no values to score")
    return y, y_hat


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


@dataclass(frozen=True)
class Rmspe:
    value: float
    excluded_zeros: int

    def __float__(self):
        return self.value


def rmspe_detail(y, y_hat) -> Rmspe:
    """RMSPE in percent; zero targets are left out and counted."""
    y, y_hat = _pair(y, y_hat)
    keep = y != 0
    excluded = int(y.size - keep.sum())
    if not keep.any():
        raise EmptyInput("every target is zero")
    rel = (y[keep] - y_hat[keep]) / y[keep]
    return Rmspe(float(np.sqrt(np.mean(rel * rel)) * 100.0), excluded)


def rmspe(y, y_hat) -> float:
    return rmspe_detail(y, y_hat).value


def accuracy(y, y_hat, tol: float = DEFAULT_TOL) -> float:
    """Percent of predictions within relative error ``tol`` (denominator max(|y|, 1))."""
    y, y_hat = _pair(y, y_hat)
    rel = np.abs(y - y_hat) / np.maximum(np.abs(y), 1.0)
    return float(np.mean(rel <= tol) * 100.0)
