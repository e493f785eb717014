import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from iovcm.errors import EmptyInput, LengthMismatch
from iovcm.forecaster.metrics import accuracy, rmse, rmspe, rmspe_detail


def test_identity():
    y = [3.0, -1.0, 7.5]
    assert rmse(y, y) == 0 and rmspe(y, y) == 0 and accuracy(y, y) == 100.0


def test_rmspe_example():
    assert rmspe([100, 200], [110, 180]) == pytest.approx(10.0, abs=1e-12)


def test_rmse_example():
    assert rmse([3, 4], [0, 0]) == pytest.approx(math.sqrt(12.5), abs=1e-12)


def test_zero_targets_excluded_and_counted():
    d = rmspe_detail([0, 100, 0, 200], [5, 110, -3, 180])
    assert d.excluded_zeros == 2 and d.value == pytest.approx(10.0)
    with pytest.raises(EmptyInput):
        rmspe([0, 0], [1, 1])


def test_accuracy_tolerance_and_guard():
    # relative errors 0.1, 0.2, and |0.5 - 0| / max(0, 1) = 0.5
    assert accuracy([10, 10, 0], [11, 12, 0.5]) == pytest.approx(100 / 3)
    assert accuracy([0.2], [0.25]) == 100.0  # guarded denominator


def test_errors():
    with pytest.raises(LengthMismatch):
        rmse([1, 2], [1])
    with pytest.raises(EmptyInput):
        accuracy([], [])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.floats(-10, 10))
def test_rmse_of_constant_shift(y, d):
    assert rmse(y, np.asarray(y) + d) == pytest.approx(abs(d), abs=1e-9)
