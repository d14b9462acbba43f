"""
跨模型重组
两个模型各自编码自己的轨迹, 一组节点之间的互边由模型 B 的势能支配, 其余边仍由模型 A 支配
"""

import logging
from typing import List, Optional, Sequence

import numpy as np
import torch

from analysis.forecasting import sample_windows
from core.errors import ShapeError
from core.graph import EdgeIndex
from core.types import SplitSpec
from model.potential_model import PotentialModel
from model.sampler import EnergyTerm, ModelTerm, SamplerConfig

logger = logging.getLogger(__name__)


def swap_masks(n_nodes: int, n_slots_base: int, n_slots_swap: int, swap_nodes: Sequence[int]):
    """
    互补的边掩码

    Returns:
        (base_mask [E, L_A], swap_mask [E, L_B]); 两端都在 swap_nodes 中的边归模型 B
    """
    mutual = torch.as_tensor(EdgeIndex(n_nodes).mutual_mask(swap_nodes), dtype=torch.float32)
    base = (1.0 - mutual)[:, None].expand(-1, n_slots_base).contiguous()
    swap = mutual[:, None].expand(-1, n_slots_swap).contiguous()
    return base, swap


def recombination_terms(model_a: PotentialModel, model_b: PotentialModel, states_a: np.ndarray,
                        states_b: np.ndarray, swap_nodes: Sequence[int], split: SplitSpec,
                        device: str = "cpu") -> List[EnergyTerm]:
    """编码两条轨迹并按 swap_nodes 构造两项能量"""
    if states_a.shape[2:] != states_b.shape[2:]:
        raise ShapeError(f"两组轨迹的节点数或状态维度不同: {states_a.shape} vs {states_b.shape}")
    if model_a.config.state_dim != model_b.config.state_dim:
        raise ShapeError("两个模型的状态维度不同")
    n_nodes = states_a.shape[2]
    base_mask, swap_mask = swap_masks(n_nodes, model_a.config.n_slots, model_b.config.n_slots, swap_nodes)
    model_a.eval()
    model_b.eval()
    with torch.no_grad():
        xa = torch.as_tensor(states_a[:, :split.obs_len], dtype=torch.float32, device=device)
        xb = torch.as_tensor(states_b[:, :split.obs_len], dtype=torch.float32, device=device)
        za = model_a.encode(xa).z
        zb = model_b.encode(xb).z
    return [
        ModelTerm(model_a.energy, za, base_mask.to(device)),
        ModelTerm(model_b.energy, zb, swap_mask.to(device)),
    ]


def recombine(model_a: PotentialModel, model_b: PotentialModel, states_a: np.ndarray, states_b: np.ndarray,
              swap_nodes: Sequence[int], split: SplitSpec, sampler: SamplerConfig, seed: int = 0,
              device: str = "cpu", batch_size: int = 50) -> np.ndarray:
    """
    以 A 的轨迹为基准, 把 swap_nodes 之间的互边换成 B 的势能后重新生成

    swap_nodes 为空时与模型 A 的 predict_window 逐位一致; 为全部节点时所有边都由 B 支配

    Args:
        states_a, states_b: [n, T, N, D] 归一化轨迹, 两者一一配对

    Returns:
        [n, window_len, N, D]
    """
    if len(states_a) != len(states_b):
        raise ShapeError(f"轨迹数量不一致: {len(states_a)} vs {len(states_b)}")
    swap_masks(states_a.shape[2], model_a.config.n_slots, model_b.config.n_slots, swap_nodes)

    def build_terms(x: torch.Tensor, rows: slice) -> List[EnergyTerm]:
        return recombination_terms(model_a, model_b, states_a[rows], states_b[rows], swap_nodes, split, device)

    windows = sample_windows(states_a, split, sampler, build_terms, batch_size, seed, device)
    logger.info(f"重组完成: {len(states_a)} 条轨迹, 交换节点 {sorted(int(n) for n in swap_nodes)}")
    return windows


def potential_gradients(model: PotentialModel, window: torch.Tensor, z: torch.Tensor,
                        mask: Optional[torch.Tensor] = None) -> np.ndarray:
    """
    每个势能槽位单独的梯度场 grad_x E^l

    Args:
        window: [B, T, N, D]
        z: [B, E, L, Dz]
        mask: 可选 [E] 边掩码, 只保留其中的边

    Returns:
        [L, B, T, N, D]
    """
    n_nodes = window.shape[2]
    n_edges = n_nodes * (n_nodes - 1)
    n_slots = model.config.n_slots
    edge_sel = torch.ones(n_edges) if mask is None else torch.as_tensor(mask, dtype=torch.float32)
    fields = []
    for slot in range(n_slots):
        slot_mask = torch.zeros(n_edges, n_slots)
        slot_mask[:, slot] = edge_sel
        x = window.detach().clone().requires_grad_(True)
        with torch.enable_grad():
            energy = model.energy.energy(x, z.detach(), slot_mask.to(x.device)).sum()
            grad, = torch.autograd.grad(energy, x)
        fields.append(grad.cpu().numpy())
    return np.stack(fields)
