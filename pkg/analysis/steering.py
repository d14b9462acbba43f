"""
测试时引导
在学到的势能上叠加用户指定的外加势能, 并统计目标距离、禁区占比与平均速度
"""

import logging
from dataclasses import asdict, dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from analysis.forecasting import sample_windows
from core.errors import ShapeError
from core.types import NormStats, SplitSpec, denormalize_array
from model.potential_model import PotentialModel
from model.potentials import ExtraPotential, PotentialContext
from model.sampler import EnergyTerm, ModelTerm, PotentialTerm, SamplerConfig

logger = logging.getLogger(__name__)


@dataclass
class SteeringMetrics:
    """
    goal_sq_distance: 预测段上到目标点的平均平方距离 (无目标时为 None)
    in_area_fraction: 预测段位置落在禁区内的比例 (无禁区时为 None)
    mean_speed: 预测段原始单位下的平均速率
    """
    goal_sq_distance: Optional[float]
    in_area_fraction: Optional[float]
    mean_speed: float

    def to_dict(self) -> Dict:
        return asdict(self)


def window_positions(window: np.ndarray, p0: np.ndarray, stats: NormStats, dt_unit: float) -> np.ndarray:
    """
    由归一化窗口的速度累加位置

    Args:
        window: [n, T, N, D]
        p0: [n, N, d] 窗口起点的原始单位位置

    Returns:
        [n, T, N, d]
    """
    half = window.shape[-1] // 2
    vel = denormalize_array(window, stats)[..., half:].astype(np.float64)
    steps = np.cumsum(vel * dt_unit, axis=1)
    offsets = np.concatenate([np.zeros_like(steps[:, :1]), steps[:, :-1]], axis=1)
    return p0[:, None].astype(np.float64) + offsets


def steering_metrics(window: np.ndarray, p0: np.ndarray, stats: NormStats, dt_unit: float,
                     init_len: int, goal: Optional[Sequence[float]] = None,
                     area: Optional[Tuple[Sequence[float], Sequence[float]]] = None) -> SteeringMetrics:
    """只在预测段 (钳制段之后) 上统计"""
    half = window.shape[-1] // 2
    pos = window_positions(window, p0, stats, dt_unit)[:, init_len:]
    vel = denormalize_array(window, stats)[:, init_len:, :, half:].astype(np.float64)
    goal_dist = None
    if goal is not None:
        goal_dist = float(np.mean(np.sum((pos - np.asarray(goal, dtype=np.float64)) ** 2, axis=-1)))
    in_area = None
    if area is not None:
        lo, hi = np.asarray(area[0], dtype=np.float64), np.asarray(area[1], dtype=np.float64)
        inside = np.all((pos > lo) & (pos < hi), axis=-1)
        in_area = float(np.mean(inside))
    return SteeringMetrics(
        goal_sq_distance=goal_dist,
        in_area_fraction=in_area,
        mean_speed=float(np.mean(np.linalg.norm(vel, axis=-1))),
    )


def _metric_targets(extras: Sequence[ExtraPotential]):
    goal = next((p.goal for p in extras if p.kind == "goal"), None)
    area = next(((p.area_min, p.area_max) for p in extras if p.kind == "avoid_area"), None)
    return goal, area


def steer(model: PotentialModel, states: np.ndarray, extras: Sequence[ExtraPotential], split: SplitSpec,
          sampler: SamplerConfig, stats: NormStats, p0: np.ndarray, dt_unit: float = 1.0, seed: int = 0,
          device: str = "cpu", batch_size: int = 50) -> Tuple[np.ndarray, SteeringMetrics]:
    """
    模型势能 + 外加势能联合采样

    分批与种子和 predict_window 相同, extras 为空时结果与 forecast 的生成窗口逐位一致

    Args:
        states: [n, T, N, D] 归一化轨迹
        stats: 归一化统计量, 用于反归一化速度
        p0: [n, N, d] 生成窗口起点的原始单位位置

    Returns:
        (生成窗口 [n, window_len, N, D], 指标)
    """
    half = states.shape[-1] // 2
    p0 = np.asarray(p0, dtype=np.float64)
    if p0.shape != (states.shape[0], states.shape[2], half):
        raise ShapeError(f"p0 形状应为 {(states.shape[0], states.shape[2], half)}, 实际 {p0.shape}")
    model.eval()

    def build_terms(x: torch.Tensor, rows: slice) -> List[EnergyTerm]:
        with torch.no_grad():
            latents = model.encode(x[:, :split.obs_len])
        context = PotentialContext(
            p0=torch.as_tensor(p0[rows], dtype=torch.float32, device=device),
            stats=stats,
            dt_unit=dt_unit,
            start=split.init_len,
        )
        terms: List[EnergyTerm] = [ModelTerm(model.energy, latents.z)]
        return terms + [PotentialTerm(p, context) for p in extras]

    window = sample_windows(states, split, sampler, build_terms, batch_size, seed, device)
    goal, area = _metric_targets(extras)
    metrics = steering_metrics(window, p0, stats, dt_unit, split.init_len, goal, area)
    logger.info(f"引导采样: {[(p.kind, p.strength) for p in extras]}, 指标 {metrics.to_dict()}")
    return window, metrics


def steering_sweep(model: PotentialModel, states: np.ndarray, template: ExtraPotential,
                   strengths: Sequence[float], split: SplitSpec, sampler: SamplerConfig, stats: NormStats,
                   p0: np.ndarray, dt_unit: float = 1.0, seed: int = 0, device: str = "cpu",
                   batch_size: int = 50) -> Dict[float, SteeringMetrics]:
    """同一外加势能在多个强度下的指标"""
    results = {}
    for strength in strengths:
        pot = replace(template, strength=float(strength))
        _, metrics = steer(model, states, [pot], split, sampler, stats, p0, dt_unit, seed, device, batch_size)
        results[float(strength)] = metrics
    return results


def window_start_positions(states: np.ndarray, split: SplitSpec, stats: NormStats) -> np.ndarray:
    """生成窗口第一个状态的原始单位位置 [n, N, d]"""
    half = states.shape[-1] // 2
    return denormalize_array(states[:, split.gen_start], stats)[..., :half].astype(np.float64)
