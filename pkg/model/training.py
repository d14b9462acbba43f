"""
训练
对 Langevin 展开的预测做 MSE 监督, 外加对比散度与能量平方正则
"""

import copy
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import torch
from torch.utils.data import DataLoader, TensorDataset

from core.errors import NumericalError, ShapeError
from core.types import SplitSpec

from .encoder import LatentSet
from .energy import empty_mask, full_mask
from .potential_model import PotentialModel
from .sampler import EnergyTerm, ModelTerm, SamplerConfig, init_trajectory, langevin, total_energy

logger = logging.getLogger(__name__)

SPLIT_STRATEGIES = ("random", "by_node", "none")
SUPERVISION_MODES = ("predicted", "window")


@dataclass
class TrainConfig:
    """训练超参数"""
    lr: float = 3e-4
    lr_decay: float = 0.5
    lr_decay_every: int = 100000
    batch_size: int = 40
    epochs: int = 500
    max_iterations: Optional[int] = None
    reg_weight: float = 1e-4
    steps_start: int = 3
    steps_end: int = 5
    steps_ramp: int = 0
    step_size: float = 0.4
    noise_scale: float = 0.0
    multi_step: bool = True
    multi_step_base: float = 0.5
    split_strategy: str = "random"
    supervise: str = "predicted"
    random_start_max: int = 0
    grad_clip: Optional[float] = None
    val_every: int = 500
    val_size: Optional[int] = None
    val_horizons: List[int] = field(default_factory=lambda: [1, 10, 20])
    log_every: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.split_strategy not in SPLIT_STRATEGIES:
            raise ShapeError(f"未知的势能切分策略 {self.split_strategy}, 可选 {SPLIT_STRATEGIES}")
        if self.supervise not in SUPERVISION_MODES:
            raise ShapeError(f"未知的监督范围 {self.supervise}, 可选 {SUPERVISION_MODES}")
        if self.steps_end < self.steps_start or self.steps_start < 1:
            raise ShapeError(f"Langevin 步数计划非法: {self.steps_start} -> {self.steps_end}")
        if self.batch_size < 1 or self.lr <= 0:
            raise ShapeError("batch_size 与 lr 必须为正")

    def steps_at(self, iteration: int) -> int:
        """第 iteration 次迭代使用的 Langevin 步数, 随迭代单调不减"""
        if self.steps_ramp <= 0:
            return self.steps_end
        frac = min(1.0, iteration / self.steps_ramp)
        return int(round(self.steps_start + (self.steps_end - self.steps_start) * frac))

    def sampler(self, steps: int, init_len: int) -> SamplerConfig:
        return SamplerConfig(steps=steps, step_size=self.step_size, noise_scale=self.noise_scale,
                             init_len=init_len)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        return cls(**data)


def potential_split(latents: LatentSet, strategy: str,
                    generator: Optional[torch.Generator] = None) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    把 (边, 槽位) 集合随机分成两个互补的掩码

    random: 每个 (边, 槽位) 独立以 1/2 概率归入第一组
    by_node: 随机选一组节点, 接收者在其中的边归入第一组
    none: 第一组为全部, 第二组为空

    Returns:
        (m1, m2), 形状 [E, L], m1 + m2 == 1
    """
    n_edges, n_slots = latents.n_edges, latents.n_slots
    device = latents.z.device
    if strategy == "none":
        return full_mask(n_edges, n_slots, device), empty_mask(n_edges, n_slots, device)
    if strategy == "random":
        m1 = (torch.rand(n_edges, n_slots, generator=generator) < 0.5).float().to(device)
    elif strategy == "by_node":
        chosen = torch.rand(latents.edge_index.n_nodes, generator=generator) < 0.5
        nodes = [i for i, c in enumerate(chosen.tolist()) if c]
        incoming = torch.as_tensor(latents.edge_index.incoming_mask(nodes), dtype=torch.float32)
        m1 = incoming[:, None].expand(n_edges, n_slots).contiguous().to(device)
    else:
        raise ShapeError(f"未知的势能切分策略 {strategy}")
    return m1, 1.0 - m1


def multi_step_weights(steps: int, base: float = 0.5) -> torch.Tensor:
    """第 m 步权重正比于 base^(M-m), 归一化到和为 1"""
    exponents = torch.arange(steps - 1, -1, -1, dtype=torch.float64)
    weights = base ** exponents
    return (weights / weights.sum()).float()


def energy_regularizer(terms: List[EnergyTerm], positives: torch.Tensor,
                       negatives: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    (CD, E^2) 两项正则

    CD = mean E(真值) - mean E(负样本), 负样本截断梯度, 只有能量函数本身被更新
    """
    e_real = total_energy(terms, positives)
    e_fake = total_energy(terms, negatives.detach())
    contrastive = e_real.mean() - e_fake.mean()
    squared = (e_real ** 2).mean() + (e_fake ** 2).mean()
    return contrastive, squared


def training_loss(batch: torch.Tensor, model: PotentialModel, config: TrainConfig, split: SplitSpec,
                  steps: int, generator: Optional[torch.Generator] = None,
                  window_start: Optional[int] = None) -> Tuple[torch.Tensor, Dict[str, float]]:
    """
    单个 batch 的训练损失

    L = MSE(Langevin 结果, 真值) + reg_weight * (CD + E^2)
    multi_step 时 MSE 为各步 MSE 的指数加权和; CD 中的负样本不回传梯度

    Args:
        batch: [B, T, N, D] 归一化轨迹
        steps: 本次迭代的 Langevin 步数
        generator: 势能切分、初始化与噪声共用的随机数发生器
        window_start: 生成窗口起点, 默认为 split.gen_start

    Returns:
        (loss, 指标字典)
    """
    if batch.shape[1] < split.total_len:
        raise ShapeError(f"轨迹长度 {batch.shape[1]} 小于切分总长 {split.total_len}")
    start = split.gen_start if window_start is None else window_start
    window = batch[:, start:start + split.window_len]
    latents = model.encode(batch[:, :split.obs_len])
    m1, m2 = potential_split(latents, config.split_strategy, generator)
    terms: List[EnergyTerm] = [ModelTerm(model.energy, latents.z, m) for m in (m1, m2)]
    terms = [t for t in terms if not t.is_inert()]

    x0 = init_trajectory(window.shape, window[:, :split.init_len], generator)
    samples = langevin(terms, x0, config.sampler(steps, split.init_len), generator=generator,
                       create_graph=True)

    seg = slice(split.init_len, None) if config.supervise == "predicted" else slice(None)
    target = window[:, seg]
    step_mse = torch.stack([((s[:, seg] - target) ** 2).mean() for s in samples[1:]])
    if config.multi_step and steps > 1:
        mse = (multi_step_weights(steps, config.multi_step_base).to(step_mse) * step_mse).sum()
    else:
        mse = step_mse[-1]

    loss = mse
    metrics = {"mse": float(mse.detach()), "final_mse": float(step_mse[-1].detach()), "steps": steps}
    if config.reg_weight > 0:
        contrastive, squared = energy_regularizer(terms, window, samples[-1])
        loss = loss + config.reg_weight * (contrastive + squared)
        metrics["cd"] = float(contrastive.detach())
        metrics["e2"] = float(squared.detach())
    if not torch.isfinite(loss):
        raise NumericalError("训练损失出现非有限值")
    metrics["loss"] = float(loss.detach())
    return loss, metrics


@dataclass
class TrainResult:
    """训练结束时的状态"""
    iteration: int
    best_iteration: int
    best_val_mse: Optional[float]
    history: List[Dict[str, float]]
    optimizer_state: Dict[str, Any]


class Trainer:
    """训练管理器"""

    def __init__(self, model: PotentialModel, config: TrainConfig, split: SplitSpec,
                 device: str = "cpu"):
        self.model = model.to(device)
        self.config = config
        self.split = split
        self.device = torch.device(device)
        self.model.check_split(split)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=config.lr)
        self.scheduler = torch.optim.lr_scheduler.StepLR(
            self.optimizer, step_size=config.lr_decay_every, gamma=config.lr_decay)
        self.iteration = 0
        self.history: List[Dict[str, float]] = []
        self.best_state: Optional[Dict[str, torch.Tensor]] = None
        self.best_val_mse: Optional[float] = None
        self.best_iteration = 0

    def _window_start(self, rng: np.random.Generator) -> int:
        """随机起点增强: 把生成窗口向前平移至多 random_start_max 步"""
        if self.config.random_start_max <= 0:
            return self.split.gen_start
        shift = int(rng.integers(0, min(self.split.gen_start, self.config.random_start_max) + 1))
        return self.split.gen_start - shift

    def train_step(self, batch: torch.Tensor, rng: np.random.Generator) -> Dict[str, float]:
        self.model.train()
        cfg = self.config
        generator = torch.Generator().manual_seed(cfg.seed * 1_000_003 + self.iteration)
        loss, metrics = training_loss(batch, self.model, cfg, self.split, cfg.steps_at(self.iteration),
                                      generator, window_start=self._window_start(rng))
        self.optimizer.zero_grad()
        loss.backward()
        if cfg.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(self.model.parameters(), cfg.grad_clip)
        self.optimizer.step()
        self.scheduler.step()
        self.iteration += 1
        return metrics

    def validate(self, val_states: np.ndarray) -> Dict[str, float]:
        """验证集上的多步预测 MSE"""
        from analysis.forecasting import predict_window, mse_at

        cfg = self.config
        states = val_states[:cfg.val_size] if cfg.val_size else val_states
        sampler = cfg.sampler(cfg.steps_end, self.split.init_len)
        preds = predict_window(self.model, states, self.split, sampler, batch_size=cfg.batch_size,
                               seed=cfg.seed, device=str(self.device))
        truth = states[:, self.split.gen_start:self.split.total_len]
        horizons = [h for h in cfg.val_horizons if h <= self.split.pred_len]
        return mse_at(preds[:, self.split.init_len:], truth[:, self.split.init_len:], horizons)

    def train(self, train_states: np.ndarray, val_states: Optional[np.ndarray] = None,
              progress_callback: Optional[Callable[[int, int, Dict[str, float]], None]] = None) -> TrainResult:
        """
        训练主循环

        Args:
            train_states: [n, T, N, D] 归一化训练轨迹
            val_states: 验证轨迹, 为空则跳过验证
            progress_callback: 每次迭代后回调 (iteration, total, metrics)
        """
        cfg = self.config
        if len(train_states) == 0:
            raise ShapeError("训练集为空")
        loader = DataLoader(
            TensorDataset(torch.as_tensor(train_states, dtype=torch.float32)),
            batch_size=cfg.batch_size,
            shuffle=True,
            generator=torch.Generator().manual_seed(cfg.seed),
        )
        rng = np.random.default_rng(cfg.seed)
        total = cfg.epochs * len(loader)
        if cfg.max_iterations is not None:
            total = min(total, cfg.max_iterations)
        logger.info(f"开始训练: {len(train_states)} 条轨迹, {self.model.n_parameters()} 个参数, "
                    f"切分策略 {cfg.split_strategy}")
        started = time.time()
        done = False
        for epoch in range(cfg.epochs):
            for (batch,) in loader:
                metrics = self.train_step(batch.to(self.device), rng)
                metrics["epoch"] = epoch
                if self.iteration % cfg.log_every == 0 or self.iteration == 1:
                    logger.info(f"迭代 {self.iteration}/{total}: loss={metrics['loss']:.6f} "
                                f"mse={metrics['final_mse']:.6f} M={metrics['steps']}")
                if val_states is not None and len(val_states) and self.iteration % cfg.val_every == 0:
                    self._record_validation(val_states, metrics)
                self.history.append(metrics)
                if progress_callback:
                    progress_callback(self.iteration, total, metrics)
                if cfg.max_iterations is not None and self.iteration >= cfg.max_iterations:
                    done = True
                    break
            if done:
                break

        if val_states is not None and len(val_states) and self.best_state is None:
            self._record_validation(val_states, self.history[-1] if self.history else {})
        logger.info(f"训练结束: {self.iteration} 次迭代, 用时 {time.time() - started:.1f} 秒")
        return TrainResult(
            iteration=self.iteration,
            best_iteration=self.best_iteration,
            best_val_mse=self.best_val_mse,
            history=self.history,
            optimizer_state=self.optimizer.state_dict(),
        )

    def _record_validation(self, val_states: np.ndarray, metrics: Dict[str, float]):
        val = self.validate(val_states)
        for h, value in val.items():
            metrics[f"val_mse@{h}"] = value
        score = val[max(val)] if val else float("nan")
        logger.info(f"验证 (迭代 {self.iteration}): " + ", ".join(f"MSE@{h}={v:.6f}" for h, v in val.items()))
        if self.best_val_mse is None or score < self.best_val_mse:
            self.best_val_mse = score
            self.best_iteration = self.iteration
            self.best_state = copy.deepcopy(self.model.state_dict())

    def restore_best(self):
        """恢复验证集上最好的参数"""
        if self.best_state is not None:
            self.model.load_state_dict(self.best_state)
