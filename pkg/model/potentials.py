"""
外加势能
在采样时与学到的势能相加, 用于引导生成轨迹 (限速、目标点、禁入区域)
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import torch

from core.errors import ShapeError
from core.types import NormStats

POTENTIAL_KINDS = ("velocity", "goal", "avoid_area")
# 默认权重, 实际使用时再除以节点数
DEFAULT_WEIGHTS = {"velocity": 1e-2, "goal": 5e-4, "avoid_area": 1e-3}
# 让 sqrt 在零速度处可导
SPEED_EPS = 1e-12


@dataclass(frozen=True)
class ExtraPotential:
    """
    外加势能描述

    kind: velocity / goal / avoid_area
    strength: 强度 epsilon, 0 表示不起作用; velocity 为负时加速
    weight: 权重 lambda_w, None 表示使用默认值 / N
    goal: 目标位置 (goal)
    area_min / area_max: 禁入的轴对齐矩形 (avoid_area)
    margin: 禁入区域罚项的常数偏移 C
    """
    kind: str
    strength: float
    weight: Optional[float] = None
    goal: Optional[Tuple[float, ...]] = None
    area_min: Optional[Tuple[float, ...]] = None
    area_max: Optional[Tuple[float, ...]] = None
    margin: float = 0.05

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ShapeError(f"未知的外加势能类型 {self.kind}, 可选 {POTENTIAL_KINDS}")
        if not math.isfinite(self.strength):
            raise ShapeError(f"势能强度必须是有限数, 实际 {self.strength}")
        # 速度势的强度可为负 (加速), 其余类型必须非负
        if self.kind != "velocity" and self.strength < 0:
            raise ShapeError(f"{self.kind} 势能强度必须非负, 实际 {self.strength}")
        if self.kind == "goal" and self.goal is None:
            raise ShapeError("goal 势能需要目标位置")
        if self.kind == "avoid_area":
            if self.area_min is None or self.area_max is None:
                raise ShapeError("avoid_area 势能需要区域边界")
            if len(self.area_min) != len(self.area_max) or any(
                    lo >= hi for lo, hi in zip(self.area_min, self.area_max)):
                raise ShapeError(f"非法的区域 {self.area_min} - {self.area_max}")

    def resolved_weight(self, n_nodes: int) -> float:
        if self.weight is not None:
            return float(self.weight)
        return DEFAULT_WEIGHTS[self.kind] / n_nodes


@dataclass
class PotentialContext:
    """
    由速度累加位置所需的上下文

    p0: [B, N, d] 生成窗口起点的原始单位位置
    start: 势能只作用于 start 之后的时间步 (钳制段除外)
    """
    p0: torch.Tensor
    stats: Optional[NormStats]
    dt_unit: float = 1.0
    start: int = 0


def velocities_raw(x: torch.Tensor, stats: Optional[NormStats]) -> torch.Tensor:
    """反归一化速度 [B, T, N, d]"""
    if stats is None:
        raise ShapeError("缺少归一化统计量, 无法反归一化速度")
    half = x.shape[-1] // 2
    std = torch.as_tensor(stats.std[half:], dtype=x.dtype, device=x.device)
    mean = torch.as_tensor(stats.mean[half:], dtype=x.dtype, device=x.device)
    return x[..., half:] * std + mean


def accumulate_positions(x: torch.Tensor, p0: torch.Tensor, stats: Optional[NormStats],
                         dt_unit: float = 1.0) -> torch.Tensor:
    """
    可微的位置累加: p[0] = p0, p[t] = p0 + sum_{s<t} v[s] * dt_unit

    Returns:
        [B, T, N, d]
    """
    vel = velocities_raw(x, stats)
    p0 = torch.as_tensor(p0, dtype=x.dtype, device=x.device)
    if p0.shape != (x.shape[0], x.shape[2], vel.shape[-1]):
        raise ShapeError(f"p0 形状 {tuple(p0.shape)} 与轨迹 {tuple(x.shape)} 不匹配")
    steps = torch.cumsum(vel * dt_unit, dim=1)
    offsets = torch.cat([torch.zeros_like(steps[:, :1]), steps[:, :-1]], dim=1)
    return p0.unsqueeze(1) + offsets


def velocity_potential(x: torch.Tensor, pot: ExtraPotential, start: int = 0) -> torch.Tensor:
    """epsilon * lambda * sum ||v||, 作用于归一化速度; 返回 [B]"""
    half = x.shape[-1] // 2
    v = x[:, start:, :, half:]
    speed = torch.sqrt((v * v).sum(dim=-1) + SPEED_EPS)
    return pot.strength * pot.resolved_weight(x.shape[2]) * speed.sum(dim=(1, 2))


def goal_potential(x: torch.Tensor, pot: ExtraPotential, p0: torch.Tensor, stats: Optional[NormStats],
                   dt_unit: float = 1.0, start: int = 0) -> torch.Tensor:
    """epsilon * lambda * sum ||p - g||^2, p 由反归一化速度累加得到; 返回 [B]"""
    pos = accumulate_positions(x, p0, stats, dt_unit)[:, start:]
    goal = _point(pot.goal, pos)
    dist2 = ((pos - goal) ** 2).sum(dim=-1)
    return pot.strength * pot.resolved_weight(x.shape[2]) * dist2.sum(dim=(1, 2))


def avoid_area_potential(x: torch.Tensor, pot: ExtraPotential, p0: torch.Tensor,
                         stats: Optional[NormStats], dt_unit: float = 1.0, start: int = 0) -> torch.Tensor:
    """
    区域内的位置按 (深度 + C)^2 受罚, 深度为到最近边界的距离; 区域外为 0

    返回 [B]
    """
    pos = accumulate_positions(x, p0, stats, dt_unit)[:, start:]
    lo = _point(pot.area_min, pos)
    hi = _point(pot.area_max, pos)
    depth = torch.minimum(pos - lo, hi - pos).min(dim=-1).values
    inside = (depth > 0).to(x.dtype)
    penalty = inside * (depth + pot.margin) ** 2
    return pot.strength * pot.resolved_weight(x.shape[2]) * penalty.sum(dim=(1, 2))


def evaluate_potential(x: torch.Tensor, pot: ExtraPotential, context: Optional[PotentialContext]) -> torch.Tensor:
    """按类型分派"""
    if pot.kind == "velocity":
        return velocity_potential(x, pot, start=context.start if context else 0)
    if context is None:
        raise ShapeError(f"{pot.kind} 势能需要初始位置与统计量")
    if pot.kind == "goal":
        return goal_potential(x, pot, context.p0, context.stats, context.dt_unit, context.start)
    return avoid_area_potential(x, pot, context.p0, context.stats, context.dt_unit, context.start)


def _point(coords: Sequence[float], pos: torch.Tensor) -> torch.Tensor:
    point = torch.as_tensor(np.asarray(coords, dtype=np.float64), dtype=pos.dtype, device=pos.device)
    if point.shape[-1] != pos.shape[-1]:
        raise ShapeError(f"坐标维度 {point.shape[-1]} 与位置维度 {pos.shape[-1]} 不一致")
    return point
