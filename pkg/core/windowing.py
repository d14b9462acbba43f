"""
时间序列分窗模块
负责把长序列切成固定长度的轨迹窗口
"""

from typing import List, Optional

import numpy as np

from .errors import ShapeError


class TrajectoryWindower:
    """轨迹分窗器"""

    def __init__(self, window: int, stride: Optional[int] = None):
        """
        Args:
            window: 窗口长度 (时间步)
            stride: 相邻窗口起点间隔, 默认等于窗口长度 (不重叠)
        """
        if window < 2:
            raise ShapeError(f"窗口长度必须 >= 2, 实际 {window}")
        stride = window if stride is None else stride
        if stride < 1:
            raise ShapeError(f"窗口步长必须 >= 1, 实际 {stride}")
        self.window = window
        self.stride = stride

    def count_windows(self, length: int) -> int:
        """
        长度为 length 的序列能切出的完整窗口数

        不重叠时等于 floor(length / window)
        """
        if length < self.window:
            return 0
        return (length - self.window) // self.stride + 1

    def window_starts(self, length: int) -> List[int]:
        return [k * self.stride for k in range(self.count_windows(length))]

    def split(self, series: np.ndarray) -> np.ndarray:
        """
        沿第 0 维切窗

        Args:
            series: [L, ...] 序列

        Returns:
            [n_windows, window, ...], 末尾不足一个窗口的部分被丢弃
        """
        starts = self.window_starts(series.shape[0])
        if not starts:
            return np.empty((0, self.window) + series.shape[1:], dtype=series.dtype)
        return np.stack([series[s:s + self.window] for s in starts])
