"""
编码器 + 势能模型的组合
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import torch
import torch.nn as nn

from core.errors import ShapeError
from core.types import SplitSpec

from .encoder import LatentSet, TrajectoryEncoder
from .energy import EdgeEnergyModel


@dataclass(frozen=True)
class ModelConfig:
    """模型结构超参数"""
    state_dim: int = 4
    n_slots: int = 2
    latent_dim: int = 64
    encoder_hidden: int = 256
    energy_hidden: int = 64
    encoder_down_blocks: int = 3
    long_down_blocks: int = 2
    short_down_blocks: int = 2
    window: int = 5
    input_views: List[str] = field(default_factory=lambda: ["raw"])
    unconditional_branch: bool = False

    def __post_init__(self):
        if self.state_dim not in (4, 6):
            raise ShapeError(f"state_dim 必须为 4 或 6, 实际 {self.state_dim}")
        if self.n_slots < 1 or self.latent_dim < 1:
            raise ShapeError("n_slots 与 latent_dim 必须为正")
        object.__setattr__(self, "input_views", list(self.input_views))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        return cls(**data)


class PotentialModel(nn.Module):
    """推断边隐变量并给出条件能量的完整模型"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = TrajectoryEncoder(
            state_dim=config.state_dim,
            n_slots=config.n_slots,
            latent_dim=config.latent_dim,
            hidden=config.encoder_hidden,
            down_blocks=config.encoder_down_blocks,
            input_views=config.input_views,
        )
        self.energy = EdgeEnergyModel(
            state_dim=config.state_dim,
            n_slots=config.n_slots,
            latent_dim=config.latent_dim,
            hidden=config.energy_hidden,
            long_down_blocks=config.long_down_blocks,
            short_down_blocks=config.short_down_blocks,
            window=config.window,
            unconditional_branch=config.unconditional_branch,
        )

    def encode(self, x_obs: torch.Tensor) -> LatentSet:
        return self.encoder.encode(x_obs)

    def check_split(self, split: SplitSpec):
        """编码器和生成窗口都必须满足各自的最短长度"""
        if split.obs_len < self.encoder.min_length():
            raise ShapeError(f"obs_len={split.obs_len} 小于编码器所需的 {self.encoder.min_length()}")
        if split.window_len < self.energy.min_length():
            raise ShapeError(f"生成窗口长度 {split.window_len} 小于势能模型所需的 {self.energy.min_length()}")

    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(config: ModelConfig, seed: Optional[int] = None) -> PotentialModel:
    """按种子确定性地初始化模型"""
    if seed is not None:
        torch.manual_seed(seed)
    return PotentialModel(config)
