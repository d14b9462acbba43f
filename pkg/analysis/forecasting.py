"""
预测评估
编码观测段, 钳制初始状态, 用 Langevin 采样生成窗口并与真值比较
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import torch

from core.errors import ShapeError
from core.types import SplitSpec
from model.potential_model import PotentialModel
from model.sampler import EnergyTerm, ModelTerm, SamplerConfig, compose_models, init_trajectory

logger = logging.getLogger(__name__)

DEFAULT_HORIZONS = (1, 10, 20)


@dataclass
class ForecastReport:
    """
    mse_at: {步数: MSE}
    baseline_mse_at: 静态基线的同一指标
    per_trajectory: 每条轨迹在整个预测段上的平均平方误差
    steps_sweep: {Langevin 步数: {步数: MSE}}, 未做步数扫描时为空
    """
    mse_at: Dict[int, float]
    baseline_mse_at: Dict[int, float]
    per_trajectory: List[float]
    steps_sweep: Dict[int, Dict[int, float]] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["mse_at"] = {str(k): v for k, v in self.mse_at.items()}
        data["baseline_mse_at"] = {str(k): v for k, v in self.baseline_mse_at.items()}
        data["steps_sweep"] = {str(m): {str(k): v for k, v in row.items()} for m, row in self.steps_sweep.items()}
        return data


TermBuilder = Callable[[torch.Tensor, slice], List[EnergyTerm]]


def sample_windows(states: np.ndarray, split: SplitSpec, sampler: SamplerConfig, build_terms: TermBuilder,
                   batch_size: int = 50, seed: int = 0, device: str = "cpu",
                   progress_callback: Optional[Callable[[int, int], None]] = None) -> np.ndarray:
    """
    分批生成窗口 [gen_start, total_len), 第 b 批使用种子 seed + b

    预测、重组与引导共用这一流程, 能量项相同时三者逐位一致

    Args:
        states: [n, T, N, D] 归一化轨迹
        build_terms: (该批张量, 该批在 states 中的行切片) -> 能量项列表
    """
    if batch_size < 1:
        raise ShapeError(f"batch_size 必须为正, 实际 {batch_size}")
    if states.shape[1] < max(split.obs_len, split.pred_start):
        raise ShapeError(f"轨迹长度 {states.shape[1]} 不足以覆盖观测段与钳制段")
    sampler = replace(sampler, init_len=split.init_len)
    outputs = []
    n_batches = (len(states) + batch_size - 1) // batch_size
    for b in range(n_batches):
        rows = slice(b * batch_size, (b + 1) * batch_size)
        x = torch.as_tensor(states[rows], dtype=torch.float32, device=device)
        shape = (x.shape[0], split.window_len) + tuple(x.shape[2:])
        generator = torch.Generator().manual_seed(seed + b)
        terms = build_terms(x, rows)
        x0 = init_trajectory(shape, x[:, split.gen_start:split.pred_start], generator)
        samples = compose_models(terms, x0, sampler, generator=generator)
        outputs.append(samples[-1].detach().cpu().numpy())
        if progress_callback:
            progress_callback(b + 1, n_batches)
    if not outputs:
        return np.empty((0, split.window_len) + states.shape[2:], dtype=np.float32)
    return np.concatenate(outputs, axis=0)


def predict_window(model: PotentialModel, states: np.ndarray, split: SplitSpec, sampler: SamplerConfig,
                   batch_size: int = 50, seed: int = 0, device: str = "cpu",
                   progress_callback: Optional[Callable[[int, int], None]] = None) -> np.ndarray:
    """
    重建生成窗口 [gen_start, total_len)

    Args:
        states: [n, T, N, D] 归一化轨迹
        sampler: 采样配置, init_len 个开头状态取自真值

    Returns:
        [n, window_len, N, D] 最后一次 Langevin 迭代的结果
    """
    model.eval()

    def build_terms(x: torch.Tensor, rows: slice) -> List[EnergyTerm]:
        with torch.no_grad():
            latents = model.encode(x[:, :split.obs_len])
        return [ModelTerm(model.energy, latents.z)]

    return sample_windows(states, split, sampler, build_terms, batch_size, seed, device, progress_callback)


def forecast(model: PotentialModel, states: np.ndarray, split: SplitSpec, horizon: int,
             sampler: Optional[SamplerConfig] = None, batch_size: int = 50, seed: int = 0,
             device: str = "cpu") -> np.ndarray:
    """
    预测钳制段之后的 horizon 步

    Args:
        states: [n, T, N, D] 或单条 [T, N, D] 归一化轨迹

    Returns:
        [n, horizon, N, D] (单条输入时去掉第 0 维)
    """
    single = states.ndim == 3
    batch = states[None] if single else states
    if horizon < 0 or horizon > split.pred_len:
        raise ShapeError(f"预测步数 {horizon} 超出预测段长度 {split.pred_len}")
    if batch.shape[1] < split.pred_start + horizon or batch.shape[1] < split.obs_len:
        raise ShapeError(f"轨迹长度 {batch.shape[1]} 不足以观测 {split.obs_len} 步并预测 {horizon} 步")
    if horizon == 0:
        empty = np.empty((batch.shape[0], 0) + batch.shape[2:], dtype=np.float32)
        return empty[0] if single else empty
    sampler = sampler or SamplerConfig(init_len=split.init_len)
    pred = predict_window(model, batch, split, sampler, batch_size, seed, device)
    pred = pred[:, split.init_len:split.init_len + horizon]
    return pred[0] if single else pred


def static_baseline(states: np.ndarray, split: SplitSpec, horizon: int) -> np.ndarray:
    """每个预测状态都复制最后一个已知 (钳制) 状态"""
    single = states.ndim == 3
    batch = states[None] if single else states
    last = batch[:, split.pred_start - 1:split.pred_start]
    pred = np.repeat(last, horizon, axis=1)
    return pred[0] if single else pred


def mse_at(pred: np.ndarray, truth: np.ndarray, horizons: Sequence[int] = DEFAULT_HORIZONS) -> Dict[int, float]:
    """
    第 h 个预测步上的均方误差, 对轨迹、节点与维度取平均

    Args:
        pred, truth: [n, H, N, D], 第 1 维第 0 个元素是第 1 步预测
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"预测形状 {pred.shape} 与真值 {truth.shape} 不一致")
    out = {}
    for h in horizons:
        if not 1 <= h <= pred.shape[1]:
            raise ShapeError(f"步数 {h} 超出预测长度 {pred.shape[1]}")
        out[int(h)] = float(np.mean((pred[:, h - 1] - truth[:, h - 1]) ** 2))
    return out


def evaluate_forecast(model: PotentialModel, states: np.ndarray, split: SplitSpec, sampler: SamplerConfig,
                      horizons: Sequence[int] = DEFAULT_HORIZONS, batch_size: int = 50, seed: int = 0,
                      steps_sweep: Sequence[int] = (), device: str = "cpu") -> ForecastReport:
    """
    在一组轨迹上比较模型与静态基线

    steps_sweep 非空时, 额外用每个 Langevin 步数重新预测一次
    """
    horizon = max(horizons)
    truth = states[:, split.pred_start:split.pred_start + horizon]

    def progress(done: int, total: int):
        logger.info(f"预测批次 {done}/{total}")

    pred = predict_window(model, states, split, sampler, batch_size, seed, device, progress)
    pred = pred[:, split.init_len:split.init_len + horizon]
    baseline = static_baseline(states, split, horizon)
    per_traj = np.mean((pred.astype(np.float64) - truth) ** 2, axis=(1, 2, 3))

    sweep = {}
    for steps in steps_sweep:
        alt = replace(sampler, steps=int(steps))
        alt_pred = predict_window(model, states, split, alt, batch_size, seed, device)
        sweep[int(steps)] = mse_at(alt_pred[:, split.init_len:split.init_len + horizon], truth, horizons)
        logger.info(f"M={steps}: " + ", ".join(f"MSE@{h}={v:.3e}" for h, v in sweep[int(steps)].items()))

    report = ForecastReport(
        mse_at=mse_at(pred, truth, horizons),
        baseline_mse_at=mse_at(baseline, truth, horizons),
        per_trajectory=[float(v) for v in per_traj],
        steps_sweep=sweep,
    )
    logger.info("模型: " + ", ".join(f"MSE@{h}={v:.3e}" for h, v in report.mse_at.items()))
    logger.info("静态基线: " + ", ".join(f"MSE@{h}={v:.3e}" for h, v in report.baseline_mse_at.items()))
    return report
