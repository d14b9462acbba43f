"""
网络基础层
时间卷积下采样块、MLP、FiLM 调制, 以及图上的 node->edge / edge->node 聚合
"""

from typing import Optional

import torch
import torch.nn as nn

from core.errors import ShapeError
from core.graph import EdgeIndex

ACTIVATIONS = {
    "swish": nn.SiLU,
    "elu": nn.ELU,
}


def conv_down_block(in_channels: int, out_channels: int, activation: str, kernel_size: int = 5) -> nn.Sequential:
    """5x1 下采样卷积块: stride 2, 长度 L -> ceil(L / 2)"""
    return nn.Sequential(
        nn.Conv1d(in_channels, out_channels, kernel_size, stride=2, padding=kernel_size // 2),
        ACTIVATIONS[activation](),
    )


def downsampled_length(length: int, n_blocks: int) -> int:
    for _ in range(n_blocks):
        length = (length + 1) // 2
    return length


class MLP(nn.Sequential):
    """n 层 Linear + 激活"""

    def __init__(self, in_features: int, hidden: int, n_layers: int, activation: str):
        layers = []
        for k in range(n_layers):
            layers.append(nn.Linear(in_features if k == 0 else hidden, hidden))
            layers.append(ACTIVATIONS[activation]())
        super().__init__(*layers)


def film(features: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor, channel_dim: int = -1) -> torch.Tensor:
    """
    FiLM 调制: gamma * features + beta

    Args:
        features: 任意形状, 第 channel_dim 维为通道
        gamma, beta: [..., C], 前导维与 features 的前导维对齐
        channel_dim: features 的通道维 (-1 表示通道在最后, 1 表示 [B, C, T] 卷积布局)
    """
    channels = features.shape[channel_dim]
    if gamma.shape[-1] != channels or beta.shape[-1] != channels:
        raise ShapeError(f"FiLM 维度不匹配: features 通道 {channels}, gamma {gamma.shape[-1]}, beta {beta.shape[-1]}")
    if channel_dim in (-1, features.dim() - 1):
        while gamma.dim() < features.dim():
            gamma = gamma.unsqueeze(-2)
            beta = beta.unsqueeze(-2)
    else:
        # 卷积布局: [B, C, T], 时间维广播
        gamma = gamma.unsqueeze(-1)
        beta = beta.unsqueeze(-1)
    return gamma * features + beta


class FiLM(nn.Module):
    """由边隐变量生成 (gamma, beta) 并调制特征"""

    def __init__(self, latent_dim: int, channels: int):
        super().__init__()
        self.channels = channels
        self.generator = nn.Linear(latent_dim, 2 * channels)
        with torch.no_grad():
            self.generator.bias[:channels].fill_(1.0)
            self.generator.bias[channels:].zero_()

    def forward(self, features: torch.Tensor, z: torch.Tensor, channel_dim: int = -1) -> torch.Tensor:
        gamma, beta = self.generator(z).chunk(2, dim=-1)
        return film(features, gamma, beta, channel_dim)

    def reset_identity(self):
        """把生成器固定为 gamma=1, beta=0 (与 z 无关)"""
        with torch.no_grad():
            self.generator.weight.zero_()
            self.generator.bias[:self.channels].fill_(1.0)
            self.generator.bias[self.channels:].zero_()


class GraphOps(nn.Module):
    """
    全连接有向图上的消息传递原语

    node->edge 拼接发送者与接收者特征; edge->node 把边特征求和到接收者
    """

    def __init__(self):
        super().__init__()
        self._cache = {}

    def _index(self, n_nodes: int, device: torch.device):
        key = (n_nodes, str(device))
        if key not in self._cache:
            index = EdgeIndex(n_nodes)
            _, rel_rec = index.one_hot()
            self._cache[key] = (
                torch.as_tensor(index.senders, device=device),
                torch.as_tensor(index.receivers, device=device),
                torch.as_tensor(rel_rec, device=device),
            )
        return self._cache[key]

    def node2edge(self, nodes: torch.Tensor, node_dim: int, skip: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        Args:
            nodes: 第 node_dim 维为节点的张量, 最后一维为特征
            skip: 可选, 与输出同布局的边特征, 拼接在最后

        Returns:
            边张量, 节点维被替换为 N(N-1) 条边, 特征维变为 [sender, receiver(, skip)]
        """
        senders, receivers, _ = self._index(nodes.shape[node_dim], nodes.device)
        parts = [nodes.index_select(node_dim, senders), nodes.index_select(node_dim, receivers)]
        if skip is not None:
            parts.append(skip)
        return torch.cat(parts, dim=-1)

    def edge2node(self, edges: torch.Tensor, n_nodes: int, edge_dim: int = 1) -> torch.Tensor:
        """把第 edge_dim 维上的边特征求和到各自的接收节点"""
        _, _, rel_rec = self._index(n_nodes, edges.device)
        moved = edges.movedim(edge_dim, -1)
        summed = torch.matmul(moved, rel_rec.to(edges.dtype))
        return summed.movedim(-1, edge_dim)
