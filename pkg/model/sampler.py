"""
Langevin 采样
对若干能量项之和做梯度下降 (可选加噪), 开头的 init_len 个状态保持为真值
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import torch

from core.errors import NumericalError, ShapeError

from .energy import EdgeEnergyModel, is_empty_mask
from .potentials import ExtraPotential, PotentialContext, evaluate_potential

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplerConfig:
    """
    steps: Langevin 步数 M
    step_size: 步长 lambda, 更新为 x - lambda/2 * grad + noise
    noise_scale: 噪声标准差 sigma, 0 为确定性采样
    init_len: 被钳制的开头状态数
    grad_clip: 每个样本梯度范数的上限
    value_clamp: 更新后的取值范围
    max_abs: 超过该绝对值视为发散
    """
    steps: int = 5
    step_size: float = 0.4
    noise_scale: float = 0.0
    init_len: int = 1
    grad_clip: Optional[float] = None
    value_clamp: Optional[Tuple[float, float]] = None
    max_abs: float = 1e4

    def __post_init__(self):
        if self.steps < 0:
            raise ShapeError(f"steps 必须非负, 实际 {self.steps}")
        if self.step_size <= 0:
            raise ShapeError(f"step_size 必须为正, 实际 {self.step_size}")
        if self.noise_scale < 0:
            raise ShapeError(f"noise_scale 必须非负, 实际 {self.noise_scale}")
        if self.init_len < 0:
            raise ShapeError(f"init_len 必须非负, 实际 {self.init_len}")


class EnergyTerm:
    """采样目标中的一项, energy(x) 返回 [B]"""

    weight: float = 1.0

    def energy(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def is_inert(self) -> bool:
        """对 x 恒为常数的项可以从组合中去掉"""
        return False


class ModelTerm(EnergyTerm):
    """学到的势能, 由隐变量与掩码选出参与的 (边, 槽位)"""

    def __init__(self, model: EdgeEnergyModel, z: torch.Tensor, mask: Optional[torch.Tensor] = None,
                 weight: float = 1.0):
        self.model = model
        self.z = z
        self.mask = mask
        self.weight = weight

    def energy(self, x: torch.Tensor) -> torch.Tensor:
        return self.model.energy(x, self.z, self.mask)

    def is_inert(self) -> bool:
        return is_empty_mask(self.mask) and not self.model.unconditional_branch


class PotentialTerm(EnergyTerm):
    """外加势能"""

    def __init__(self, potential: ExtraPotential, context: Optional[PotentialContext] = None):
        self.potential = potential
        self.context = context
        self.weight = 1.0

    def energy(self, x: torch.Tensor) -> torch.Tensor:
        return evaluate_potential(x, self.potential, self.context)

    def is_inert(self) -> bool:
        return self.potential.strength == 0


class FunctionTerm(EnergyTerm):
    """任意可微函数 fn(x) -> [B]"""

    def __init__(self, fn: Callable[[torch.Tensor], torch.Tensor], weight: float = 1.0):
        self.fn = fn
        self.weight = weight

    def energy(self, x: torch.Tensor) -> torch.Tensor:
        return self.fn(x)


def init_trajectory(shape: Sequence[int], init_conds: torch.Tensor,
                    generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """
    生成初始样本: [0, 1) 均匀噪声, 开头替换为真值

    Args:
        shape: [B, T, N, D]
        init_conds: [B, T0, N, D] 被钳制的开头状态
        generator: 随机数发生器, 相同种子得到相同初始化
    """
    shape = tuple(int(s) for s in shape)
    n_init = init_conds.shape[1]
    if init_conds.shape[0] != shape[0] or tuple(init_conds.shape[2:]) != shape[2:] or n_init > shape[1]:
        raise ShapeError(f"初始条件 {tuple(init_conds.shape)} 与窗口形状 {shape} 不匹配")
    noise = torch.rand(shape, generator=generator).to(device=init_conds.device, dtype=init_conds.dtype)
    return torch.cat([init_conds, noise[:, n_init:]], dim=1)


def total_energy(terms: Sequence[EnergyTerm], x: torch.Tensor) -> torch.Tensor:
    """所有项的加权和 [B]"""
    total = x.new_zeros(x.shape[0])
    for term in terms:
        total = total + term.weight * term.energy(x)
    return total


def langevin(terms: Sequence[EnergyTerm], x0: torch.Tensor, config: SamplerConfig,
             generator: Optional[torch.Generator] = None, create_graph: bool = False) -> List[torch.Tensor]:
    """
    Langevin 动力学

    x^m = x^{m-1} - lambda/2 * grad_x E(x^{m-1}) + sigma * noise, 开头 init_len 个状态每步都恢复为 x0 中的值

    Args:
        terms: 能量项, 为空时轨迹保持不变
        x0: [B, T, N, D] 初始样本
        config: 采样配置
        generator: 噪声发生器
        create_graph: 训练时保留计算图以便对参数反向传播

    Returns:
        [x^0, x^1, ..., x^M]
    """
    if x0.dim() != 4:
        raise ShapeError(f"采样输入应为 [B, T, N, D], 实际 {tuple(x0.shape)}")
    if config.init_len > x0.shape[1]:
        raise ShapeError(f"init_len={config.init_len} 超过窗口长度 {x0.shape[1]}")
    active = [t for t in terms if not t.is_inert()]
    clamped = x0[:, :config.init_len].detach()
    iterates = [x0]
    x = x0
    with torch.enable_grad():
        for step in range(1, config.steps + 1):
            if not active:
                iterates.append(x)
                continue
            if not x.requires_grad:
                x = x.detach().requires_grad_(True)
            energy = total_energy(active, x).sum()
            grad, = torch.autograd.grad(energy, x, create_graph=create_graph)
            if not torch.isfinite(grad).all():
                raise NumericalError(f"第 {step} 步梯度出现非有限值", step=step)
            if config.grad_clip is not None:
                norms = grad.flatten(1).norm(dim=1).clamp_min(1e-12)
                scale = torch.clamp(config.grad_clip / norms, max=1.0)
                grad = grad * scale.view(-1, 1, 1, 1)

            update = x - 0.5 * config.step_size * grad
            if config.noise_scale > 0:
                noise = torch.randn(x.shape, generator=generator).to(device=x.device, dtype=x.dtype)
                update = update + config.noise_scale * noise
            if config.value_clamp is not None:
                update = update.clamp(*config.value_clamp)
            x = torch.cat([clamped, update[:, config.init_len:]], dim=1)

            if not torch.isfinite(x).all() or x.detach().abs().max() > config.max_abs:
                raise NumericalError(f"Langevin 在第 {step} 步发散", step=step)
            if not create_graph:
                x = x.detach()
            iterates.append(x)
    return iterates


def compose_models(terms: Sequence[EnergyTerm], x0: torch.Tensor, config: SamplerConfig,
                   generator: Optional[torch.Generator] = None) -> List[torch.Tensor]:
    """
    对多个模型 / 外加势能的能量之和采样

    所有模型项的节点数与状态维度必须一致; 掩码为空的项直接去掉
    """
    for term in terms:
        if isinstance(term, ModelTerm):
            n_edges = x0.shape[2] * (x0.shape[2] - 1)
            if term.model.state_dim != x0.shape[-1] or term.z.shape[1] != n_edges:
                raise ShapeError(
                    f"模型项与轨迹不兼容: state_dim={term.model.state_dim}, 边数={term.z.shape[1]}, "
                    f"轨迹 {tuple(x0.shape)}")
    kept = [t for t in terms if not t.is_inert()]
    logger.debug(f"组合采样: {len(kept)}/{len(terms)} 个能量项参与")
    return langevin(kept, x0, config, generator=generator)
