"""
领域类型
轨迹、切分、归一化统计量、关系标签与数据集, 以及归一化和位置积分工具
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional

import numpy as np

from .errors import ShapeError

SPLIT_NAMES = ("train", "val", "test")


@dataclass
class Trajectory:
    """
    粒子系统轨迹

    states 形状为 [T, N, D], 位置维度在前 (0..D/2), 速度维度在后
    raw=True 表示物理单位, False 表示归一化后的模型单位
    """

    states: np.ndarray
    raw: bool = False

    def __post_init__(self):
        states = np.asarray(self.states)
        if states.ndim != 3:
            raise ShapeError(f"轨迹必须是 [T, N, D] 数组, 实际形状 {states.shape}")
        T, N, D = states.shape
        if T < 1:
            raise ShapeError("轨迹至少需要一个时间步")
        if N < 2:
            raise ShapeError(f"轨迹至少需要两个节点, 实际 {N}")
        if D not in (4, 6):
            raise ShapeError(f"状态维度必须为 4 或 6, 实际 {D}")
        if not np.all(np.isfinite(states)):
            raise ShapeError("轨迹中存在非有限值")
        self.states = states

    @property
    def T(self) -> int:
        return self.states.shape[0]

    @property
    def N(self) -> int:
        return self.states.shape[1]

    @property
    def D(self) -> int:
        return self.states.shape[2]

    @property
    def positions(self) -> np.ndarray:
        return self.states[..., : self.D // 2]

    @property
    def velocities(self) -> np.ndarray:
        return self.states[..., self.D // 2:]


@dataclass(frozen=True)
class SplitSpec:
    """
    轨迹切分

    obs_len: 编码器观察的前缀长度 T'
    init_len: 生成窗口开头被钳制为真值的状态数 T0
    total_len: 轨迹总长 T
    gen_start: 生成窗口起点, 窗口为 [gen_start, total_len)
    """

    obs_len: int = 49
    init_len: int = 1
    total_len: int = 70
    gen_start: int = 49

    def __post_init__(self):
        if self.init_len < 1:
            raise ShapeError(f"init_len 必须 >= 1, 实际 {self.init_len}")
        if self.obs_len > self.total_len:
            raise ShapeError(f"obs_len ({self.obs_len}) 超过 total_len ({self.total_len})")
        if not 0 <= self.gen_start < self.total_len:
            raise ShapeError(f"gen_start ({self.gen_start}) 越界")
        if self.gen_start + self.init_len > self.total_len:
            raise ShapeError("钳制段超出轨迹长度")

    @property
    def window_len(self) -> int:
        return self.total_len - self.gen_start

    @property
    def pred_len(self) -> int:
        return self.window_len - self.init_len

    @property
    def pred_start(self) -> int:
        """预测段在整条轨迹中的起点"""
        return self.gen_start + self.init_len


@dataclass(frozen=True)
class NormStats:
    """按状态维度的均值和标准差"""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float32)
        std = np.asarray(self.std, dtype=np.float32)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ShapeError(f"统计量形状不一致: mean {mean.shape}, std {std.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
            raise ShapeError("统计量包含非有限值")
        if np.any(std <= 0):
            raise ShapeError("标准差必须为正")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "NormStats":
        return cls(np.zeros(dim, dtype=np.float32), np.ones(dim, dtype=np.float32))

    @classmethod
    def from_states(cls, states: np.ndarray, eps: float = 1e-8) -> "NormStats":
        """由 [..., D] 数组计算统计量 (常数维度的标准差取 1)"""
        flat = np.asarray(states, dtype=np.float64).reshape(-1, states.shape[-1])
        mean = flat.mean(axis=0)
        std = flat.std(axis=0)
        std = np.where(std < eps, 1.0, std)
        return cls(mean.astype(np.float32), std.astype(np.float32))

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NormStats":
        return cls(np.asarray(data["mean"], dtype=np.float32), np.asarray(data["std"], dtype=np.float32))


class RelationKind(str, Enum):
    SPRINGS_ADJACENCY = "springs_adjacency"
    CHARGES = "charges"
    MIXED_FORCE_TYPE = "mixed_force_type"
    NONE = "none"


# 混合数据集中节点受力类型的编码
NODE_SPRING = 0
NODE_CHARGED = 1


@dataclass
class RelationLabels:
    """
    真值关系标签

    springs_adjacency: [N, N] 对称 0/1 邻接矩阵
    charges: [N] 取值 ±q
    mixed_force_type: [N] 取值 NODE_SPRING / NODE_CHARGED
    """

    kind: RelationKind
    values: np.ndarray

    def __post_init__(self):
        self.kind = RelationKind(self.kind)
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.kind is RelationKind.SPRINGS_ADJACENCY:
            adj = self.values
            if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
                raise ShapeError(f"邻接矩阵必须为方阵, 实际 {adj.shape}")
            if not np.array_equal(adj, adj.T) or np.any(np.diag(adj) != 0):
                raise ShapeError("邻接矩阵必须对称且对角为零")
        elif self.kind is RelationKind.MIXED_FORCE_TYPE:
            if not np.all(np.isin(self.values, (NODE_SPRING, NODE_CHARGED))):
                raise ShapeError("节点受力类型只能是 spring 或 charged")


@dataclass
class TrajectoryDataset:
    """
    轨迹数据集

    states: [n, T, N, D] (normalized=True 时为模型单位)
    labels: [n, ...] 每条轨迹的关系标签值, 类型由 label_kind 给出
    splits: {"train", "val", "test"} -> 轨迹下标
    meta: 生成配置、种子、dt_unit 等
    """

    states: np.ndarray
    labels: np.ndarray
    label_kind: RelationKind
    stats: NormStats
    splits: Dict[str, np.ndarray]
    meta: Dict[str, Any] = field(default_factory=dict)
    normalized: bool = True

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float32)
        self.label_kind = RelationKind(self.label_kind)
        if self.states.ndim != 4:
            raise ShapeError(f"数据集数组必须为 [n, T, N, D], 实际 {self.states.shape}")
        if self.labels.shape[0] != self.states.shape[0]:
            raise ShapeError("标签数量与轨迹数量不一致")
        if self.stats.dim != self.D:
            raise ShapeError(f"统计量维度 {self.stats.dim} 与状态维度 {self.D} 不一致")
        self.splits = {k: np.asarray(v, dtype=np.int64) for k, v in self.splits.items()}
        _check_splits(self.splits, len(self))

    def __len__(self) -> int:
        return self.states.shape[0]

    def __iter__(self) -> Iterator[Trajectory]:
        for i in range(len(self)):
            yield self.trajectory(i)

    @property
    def T(self) -> int:
        return self.states.shape[1]

    @property
    def N(self) -> int:
        return self.states.shape[2]

    @property
    def D(self) -> int:
        return self.states.shape[3]

    @property
    def dt_unit(self) -> float:
        return float(self.meta.get("dt_unit", 1.0))

    def trajectory(self, index: int) -> Trajectory:
        return Trajectory(self.states[index], raw=not self.normalized)

    def relation(self, index: int) -> RelationLabels:
        return RelationLabels(self.label_kind, self.labels[index])

    def split_states(self, name: str) -> np.ndarray:
        return self.states[self.splits[name]]

    def split_labels(self, name: str) -> np.ndarray:
        return self.labels[self.splits[name]]


def _check_splits(splits: Dict[str, np.ndarray], total: int):
    missing = [name for name in SPLIT_NAMES if name not in splits]
    if missing:
        raise ShapeError(f"缺少切分: {missing}")
    merged = np.concatenate([splits[name] for name in SPLIT_NAMES])
    if merged.size != total or not np.array_equal(np.sort(merged), np.arange(total)):
        raise ShapeError("切分必须互不相交且覆盖全部轨迹")


def normalize(traj: Trajectory, stats: NormStats) -> Trajectory:
    """
    归一化原始轨迹

    Args:
        traj: raw=True 的轨迹
        stats: 与状态维度一致的统计量

    Returns:
        (x - mean) / std, raw=False
    """
    if not traj.raw:
        raise ShapeError("轨迹已经是归一化单位")
    if stats.dim != traj.D:
        raise ShapeError(f"统计量维度 {stats.dim} 与状态维度 {traj.D} 不一致")
    return Trajectory(normalize_array(traj.states, stats), raw=False)


def denormalize(traj: Trajectory, stats: NormStats) -> Trajectory:
    """归一化的逆操作"""
    if traj.raw:
        raise ShapeError("轨迹已经是原始单位")
    if stats.dim != traj.D:
        raise ShapeError(f"统计量维度 {stats.dim} 与状态维度 {traj.D} 不一致")
    return Trajectory(denormalize_array(traj.states, stats), raw=True)


def normalize_array(states: np.ndarray, stats: NormStats) -> np.ndarray:
    states64 = np.asarray(states, dtype=np.float64)
    return ((states64 - stats.mean.astype(np.float64)) / stats.std.astype(np.float64)).astype(np.float32)


def denormalize_array(states: np.ndarray, stats: NormStats) -> np.ndarray:
    states64 = np.asarray(states, dtype=np.float64)
    return (states64 * stats.std.astype(np.float64) + stats.mean.astype(np.float64)).astype(np.float32)


def positions_from_velocities(traj: Trajectory, p0: np.ndarray, stats: Optional[NormStats],
                              dt_unit: float = 1.0) -> np.ndarray:
    """
    由反归一化后的速度累加出位置

    p[0] = p0, p[t] = p0 + sum_{s<t} v[s] * dt_unit

    Args:
        traj: 归一化轨迹
        p0: [N, D/2] 原始单位的初始位置
        stats: 归一化统计量
        dt_unit: 相邻采样状态之间的时间间隔

    Returns:
        [T, N, D/2] 位置
    """
    if stats is None:
        raise ShapeError("缺少归一化统计量, 无法反归一化速度")
    half = traj.D // 2
    p0 = np.asarray(p0, dtype=np.float64)
    if p0.shape != (traj.N, half):
        raise ShapeError(f"p0 形状应为 {(traj.N, half)}, 实际 {p0.shape}")
    vel = traj.states[..., half:].astype(np.float64) * stats.std[half:].astype(np.float64) \
        + stats.mean[half:].astype(np.float64)
    steps = np.cumsum(vel * dt_unit, axis=0)
    offsets = np.concatenate([np.zeros((1,) + steps.shape[1:]), steps[:-1]], axis=0)
    return p0 + offsets
