"""
关系势能模型
每条有向边、每个槽位一个由隐变量调制的局部势能, 按掩码求和得到轨迹总能量
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import torch
import torch.nn as nn

from core.errors import ShapeError
from core.graph import EdgeIndex

from .layers import FiLM, GraphOps, MLP, conv_down_block, downsampled_length


@dataclass
class EnergyValue:
    """
    能量分解

    所有张量的第 0 维为 batch; total == long_term + short_term
    """
    total: torch.Tensor
    long_term: torch.Tensor
    short_term: torch.Tensor
    per_node: torch.Tensor
    per_node_long: torch.Tensor
    per_node_short: torch.Tensor


def full_mask(n_edges: int, n_slots: int, device=None) -> torch.Tensor:
    return torch.ones(n_edges, n_slots, device=device)


def empty_mask(n_edges: int, n_slots: int, device=None) -> torch.Tensor:
    return torch.zeros(n_edges, n_slots, device=device)


def one_hot_mask(n_edges: int, n_slots: int, edge: int, slot: int, device=None) -> torch.Tensor:
    mask = empty_mask(n_edges, n_slots, device)
    mask[edge, slot] = 1.0
    return mask


def as_mask(mask: Optional[torch.Tensor], batch: int, n_edges: int, n_slots: int,
            device=None) -> torch.Tensor:
    """
    把各种形式的掩码规范为 [B, E, L] 浮点张量

    接受 None (全部启用)、[E]、[E, L] 与 [B, E, L]
    """
    if mask is None:
        return torch.ones(batch, n_edges, n_slots, device=device)
    mask = torch.as_tensor(mask, device=device).float()
    if mask.dim() == 1:
        mask = mask[:, None].expand(n_edges, n_slots) if mask.shape[0] == n_edges else mask
    if mask.dim() == 2:
        mask = mask.unsqueeze(0).expand(batch, -1, -1)
    if tuple(mask.shape) != (batch, n_edges, n_slots):
        raise ShapeError(f"掩码形状 {tuple(mask.shape)} 与 [B={batch}, E={n_edges}, L={n_slots}] 不符")
    return mask


def is_empty_mask(mask: Optional[torch.Tensor]) -> bool:
    return mask is not None and not bool(torch.as_tensor(mask).bool().any())


class LongTermEdgeNet(nn.Module):
    """整条轨迹的边特征: 下采样卷积 + FiLM 调制卷积 + 时间平均"""

    def __init__(self, in_channels: int, hidden: int, latent_dim: Optional[int],
                 down_blocks: int, cond_blocks: int = 2):
        super().__init__()
        self.down = nn.Sequential(*[
            conv_down_block(in_channels if k == 0 else hidden, hidden, "swish") for k in range(down_blocks)
        ])
        self.conv_a = nn.ModuleList([nn.Conv1d(hidden, hidden, 5, padding=2) for _ in range(cond_blocks)])
        self.conv_b = nn.ModuleList([nn.Conv1d(hidden, hidden, 5, padding=2) for _ in range(cond_blocks)])
        self.films = nn.ModuleList([FiLM(latent_dim, hidden) for _ in range(cond_blocks)]) if latent_dim else None
        self.act = nn.SiLU()

    def forward(self, edge_seq: torch.Tensor, z: Optional[torch.Tensor]) -> torch.Tensor:
        """
        Args:
            edge_seq: [B, E, T, C]
            z: [B, E, Dz] 或 None (无条件分支)

        Returns:
            [B, E, H]
        """
        B, E, T, C = edge_seq.shape
        h = self.down(edge_seq.reshape(B * E, T, C).transpose(1, 2))
        zf = z.reshape(B * E, -1) if z is not None else None
        for k in range(len(self.conv_a)):
            h = self.conv_a[k](h)
            if self.films is not None:
                h = self.films[k](h, zf, channel_dim=1)
            h = self.act(h)
            h = self.act(self.conv_b[k](h))
        return h.mean(dim=-1).reshape(B, E, -1)


class ShortTermEdgeNet(nn.Module):
    """滑动窗口的边特征: 下采样卷积后按 5 步窗口展开, 再经 FiLM 调制 MLP"""

    def __init__(self, in_channels: int, hidden: int, latent_dim: Optional[int],
                 down_blocks: int, window: int, cond_blocks: int = 2):
        super().__init__()
        self.window = window
        self.down = nn.Sequential(*[
            conv_down_block(in_channels if k == 0 else hidden, hidden, "swish") for k in range(down_blocks)
        ])
        self.embed = nn.Linear(hidden * window, hidden)
        self.lin_a = nn.ModuleList([nn.Linear(hidden, hidden) for _ in range(cond_blocks)])
        self.lin_b = nn.ModuleList([nn.Linear(hidden, hidden) for _ in range(cond_blocks)])
        self.films = nn.ModuleList([FiLM(latent_dim, hidden) for _ in range(cond_blocks)]) if latent_dim else None
        self.act = nn.SiLU()

    def forward(self, edge_seq: torch.Tensor, z: Optional[torch.Tensor]) -> torch.Tensor:
        """
        Returns:
            [B, E, W, H], W 为窗口数
        """
        B, E, T, C = edge_seq.shape
        h = self.down(edge_seq.reshape(B * E, T, C).transpose(1, 2))
        if h.shape[-1] < self.window:
            raise ShapeError(f"短时能量需要下采样后至少 {self.window} 步, 实际 {h.shape[-1]} (T={T})")
        # [BE, H, W, K] -> [BE, W, H*K]
        windows = h.unfold(-1, self.window, 1).permute(0, 2, 1, 3)
        n_windows = windows.shape[1]
        h = self.act(self.embed(windows.reshape(B * E, n_windows, -1)))
        zf = z.reshape(B * E, 1, -1) if z is not None else None
        for k in range(len(self.lin_a)):
            h = self.lin_a[k](h)
            if self.films is not None:
                h = self.films[k](h, zf)
            h = self.act(h)
            h = self.act(self.lin_b[k](h))
        return h.reshape(B, E, n_windows, -1)


class NodeHead(nn.Sequential):
    """节点特征 -> 标量能量"""

    def __init__(self, hidden: int, n_layers: int):
        super().__init__(MLP(hidden, hidden, n_layers, "swish"), nn.Linear(hidden, 1))


class SlotEnergy(nn.Module):
    """单个槽位的长时 + 短时势能, 可选无条件分支"""

    def __init__(self, in_channels: int, hidden: int, latent_dim: int, long_down_blocks: int,
                 short_down_blocks: int, window: int, unconditional_branch: bool = False):
        super().__init__()
        self.long_net = LongTermEdgeNet(in_channels, hidden, latent_dim, long_down_blocks)
        self.short_net = ShortTermEdgeNet(in_channels, hidden, latent_dim, short_down_blocks, window)
        self.long_head = NodeHead(hidden, 1)
        self.short_head = NodeHead(hidden, 2)
        self.long_uncond = self.short_uncond = None
        if unconditional_branch:
            self.long_uncond = LongTermEdgeNet(in_channels, hidden, None, long_down_blocks)
            self.short_uncond = ShortTermEdgeNet(in_channels, hidden, None, short_down_blocks, window)


class EdgeEnergyModel(nn.Module):
    """
    关系势能模型

    E(x; z, m) = sum_l sum_ij m_ij^l * E_l(x_i, x_j; z_ij^l), 长时项与短时项之和
    """

    def __init__(self, state_dim: int, n_slots: int, latent_dim: int, hidden: int = 64,
                 long_down_blocks: int = 2, short_down_blocks: int = 2, window: int = 5,
                 unconditional_branch: bool = False):
        super().__init__()
        self.state_dim = state_dim
        self.n_slots = n_slots
        self.latent_dim = latent_dim
        self.long_down_blocks = long_down_blocks
        self.short_down_blocks = short_down_blocks
        self.window = window
        self.unconditional_branch = unconditional_branch
        self.graph = GraphOps()
        self.slots = nn.ModuleList([
            SlotEnergy(2 * state_dim, hidden, latent_dim, long_down_blocks, short_down_blocks,
                       window, unconditional_branch)
            for _ in range(n_slots)
        ])

    def min_length(self) -> int:
        """能被评估的最短轨迹长度"""
        length = self.window
        for _ in range(self.short_down_blocks):
            length = 2 * length - 1
        return max(length, 1)

    def _check(self, x: torch.Tensor, z: torch.Tensor) -> Tuple[int, int, int]:
        if x.dim() != 4 or x.shape[-1] != self.state_dim:
            raise ShapeError(f"轨迹形状应为 [B, T, N, {self.state_dim}], 实际 {tuple(x.shape)}")
        B, T, N, _ = x.shape
        n_edges = N * (N - 1)
        expected = (B, n_edges, self.n_slots, self.latent_dim)
        if tuple(z.shape) != expected:
            raise ShapeError(f"隐变量形状 {tuple(z.shape)} 与期望 {expected} 不符")
        if downsampled_length(T, self.short_down_blocks) < self.window:
            raise ShapeError(f"轨迹长度 T={T} 过短, 至少需要 {self.min_length()} 步")
        return B, T, N

    def forward(self, x: torch.Tensor, z: torch.Tensor, mask: Optional[torch.Tensor] = None) -> EnergyValue:
        """
        Args:
            x: [B, T, N, D] 归一化轨迹
            z: [B, E, L, Dz] 边隐变量
            mask: None / [E] / [E, L] / [B, E, L]

        Returns:
            EnergyValue, 每个 batch 元素一个标量
        """
        B, T, N = self._check(x, z)
        m = as_mask(mask, B, N * (N - 1), self.n_slots, x.device).to(x.dtype)
        # [B, T, E, 2D] -> [B, E, T, 2D]
        edge_seq = self.graph.node2edge(x, node_dim=2).transpose(1, 2)
        node_long = x.new_zeros(B, N)
        node_short = x.new_zeros(B, N)
        for slot_id, slot in enumerate(self.slots):
            z_l = z[:, :, slot_id]
            m_l = m[:, :, slot_id]

            feat = slot.long_net(edge_seq, z_l)
            if slot.long_uncond is not None:
                feat = m_l[..., None] * feat + (1 - m_l[..., None]) * slot.long_uncond(edge_seq, None)
            else:
                feat = feat * m_l[..., None]
            nodes = self.graph.edge2node(feat, N, edge_dim=1)
            node_long = node_long + slot.long_head(nodes).squeeze(-1)

            feat = slot.short_net(edge_seq, z_l)
            mw = m_l[..., None, None]
            if slot.short_uncond is not None:
                feat = mw * feat + (1 - mw) * slot.short_uncond(edge_seq, None)
            else:
                feat = feat * mw
            nodes = self.graph.edge2node(feat, N, edge_dim=1)
            node_short = node_short + slot.short_head(nodes).squeeze(-1).sum(dim=-1)

        long_term = node_long.sum(dim=-1)
        short_term = node_short.sum(dim=-1)
        return EnergyValue(
            total=long_term + short_term,
            long_term=long_term,
            short_term=short_term,
            per_node=node_long + node_short,
            per_node_long=node_long,
            per_node_short=node_short,
        )

    def energy(self, x: torch.Tensor, z: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        return self.forward(x, z, mask).total

    def per_edge_energy(self, x: torch.Tensor, z: torch.Tensor, i: int, j: int, slot: int) -> torch.Tensor:
        """只启用边 (i, j) 的第 slot 个势能时的总能量"""
        index = EdgeIndex(x.shape[2])
        mask = one_hot_mask(index.n_edges, self.n_slots, index.index_of(i, j), slot, x.device)
        return self.energy(x, z, mask)

    def node_energy(self, x: torch.Tensor, z: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """每个节点的能量 [B, N]"""
        return self.forward(x, z, mask).per_node
