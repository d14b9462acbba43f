import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from core.errors import ShapeError
from core.windowing import TrajectoryWindower


@given(st.integers(0, 400), st.integers(2, 60))
def test_non_overlapping_window_count(length, window):
    assert TrajectoryWindower(window).count_windows(length) == length // window


def test_split_drops_tail():
    series = np.arange(10 * 2).reshape(10, 2)
    chunks = TrajectoryWindower(4).split(series)
    assert chunks.shape == (2, 4, 2)
    np.testing.assert_array_equal(chunks[1], series[4:8])


def test_strided_windows_overlap():
    windower = TrajectoryWindower(4, stride=2)
    assert windower.window_starts(9) == [0, 2, 4]


def test_short_series_gives_empty_stack():
    chunks = TrajectoryWindower(43).split(np.zeros((42, 12, 6)))
    assert chunks.shape == (0, 43, 12, 6)


def test_invalid_parameters():
    with pytest.raises(ShapeError):
        TrajectoryWindower(1)
    with pytest.raises(ShapeError):
        TrajectoryWindower(5, stride=0)
