"""
轨迹编码器
从观测段推断每条有向边、每个槽位的隐变量
"""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import torch
import torch.nn as nn

from core.errors import NumericalError, ShapeError
from core.graph import EdgeIndex

from .layers import GraphOps, MLP, conv_down_block, downsampled_length

INPUT_VIEWS = ("raw", "instance_norm", "rotated")


@dataclass
class LatentSet:
    """z: [B, E, L, Dz], 边按 edge_index 的规范顺序排列"""
    z: torch.Tensor
    edge_index: EdgeIndex

    @property
    def n_slots(self) -> int:
        return self.z.shape[2]

    @property
    def n_edges(self) -> int:
        return self.z.shape[1]

    def detach(self) -> "LatentSet":
        return LatentSet(self.z.detach(), self.edge_index)


def rotate_states(x: torch.Tensor, angle: float) -> torch.Tensor:
    """在 xy 平面内旋转位置与速度"""
    d = x.shape[-1] // 2
    c, s = math.cos(angle), math.sin(angle)
    out = x.clone()
    for offset in (0, d):
        px, py = x[..., offset], x[..., offset + 1]
        out[..., offset] = c * px - s * py
        out[..., offset + 1] = s * px + c * py
    return out


def instance_normalize(x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """逐样本、逐特征在 (T, N) 上标准化"""
    mean = x.mean(dim=(1, 2), keepdim=True)
    std = x.std(dim=(1, 2), keepdim=True, unbiased=False)
    return (x - mean) / (std + eps)


class TrajectoryEncoder(nn.Module):
    """
    编码器: 时间卷积 -> 边 MLP -> 节点 MLP -> 带跳连的边 MLP -> L*Dz 线性输出 + LayerNorm
    """

    def __init__(self, state_dim: int, n_slots: int, latent_dim: int, hidden: int = 256,
                 down_blocks: int = 3, input_views: Sequence[str] = ("raw",),
                 rotation: float = math.pi / 2):
        super().__init__()
        unknown = [v for v in input_views if v not in INPUT_VIEWS]
        if unknown or not input_views:
            raise ShapeError(f"未知的输入视图 {list(input_views)}, 可选 {INPUT_VIEWS}")
        self.state_dim = state_dim
        self.n_slots = n_slots
        self.latent_dim = latent_dim
        self.down_blocks = down_blocks
        self.input_views: Tuple[str, ...] = tuple(input_views)
        self.rotation = rotation
        self.graph = GraphOps()

        channels = 2 * state_dim * len(self.input_views)
        self.cnn = nn.Sequential(*[
            conv_down_block(channels if k == 0 else hidden, hidden, "elu") for k in range(down_blocks)
        ])
        self.edge_mlp = MLP(hidden, hidden, 2, "elu")
        self.node_mlp = MLP(hidden, hidden, 2, "elu")
        self.edge_skip_mlp = MLP(3 * hidden, hidden, 2, "elu")
        self.out = nn.Linear(hidden, n_slots * latent_dim)
        self.norm = nn.LayerNorm(latent_dim)

    def min_length(self) -> int:
        return 2 ** self.down_blocks

    def _views(self, x: torch.Tensor) -> torch.Tensor:
        views = []
        for name in self.input_views:
            if name == "raw":
                views.append(x)
            elif name == "instance_norm":
                views.append(instance_normalize(x))
            else:
                views.append(rotate_states(x, self.rotation))
        return torch.cat(views, dim=-1)

    def forward(self, x_obs: torch.Tensor) -> torch.Tensor:
        """
        Args:
            x_obs: [B, T_obs, N, D]

        Returns:
            z: [B, E, L, Dz]
        """
        if x_obs.dim() != 4 or x_obs.shape[-1] != self.state_dim:
            raise ShapeError(f"观测形状应为 [B, T, N, {self.state_dim}], 实际 {tuple(x_obs.shape)}")
        B, T, N, _ = x_obs.shape
        if T < self.min_length() or downsampled_length(T, self.down_blocks) < 1:
            raise ShapeError(f"观测长度 T={T} 过短, 编码器至少需要 {self.min_length()} 步")
        if not torch.isfinite(x_obs).all():
            raise NumericalError("观测中含有非有限值")

        # [B, T, E, 2C] -> [B*E, 2C, T]
        edges = self.graph.node2edge(self._views(x_obs), node_dim=2)
        E = edges.shape[2]
        h = edges.permute(0, 2, 3, 1).reshape(B * E, edges.shape[-1], T)
        h = self.cnn(h).mean(dim=-1).reshape(B, E, -1)

        h_edge = self.edge_mlp(h)
        h_node = self.node_mlp(self.graph.edge2node(h_edge, N, edge_dim=1))
        h = self.edge_skip_mlp(self.graph.node2edge(h_node, node_dim=1, skip=h_edge))

        z = self.out(h).reshape(B, E, self.n_slots, self.latent_dim)
        return self.norm(z)

    def encode(self, x_obs: torch.Tensor) -> LatentSet:
        return LatentSet(self.forward(x_obs), EdgeIndex(x_obs.shape[2]))
