"""
边类型读出
用逻辑回归从边隐变量预测真值弹簧连接, 衡量隐变量中的关系信息
"""

import logging

import numpy as np
import torch
from sklearn.linear_model import LogisticRegression

from core.errors import ShapeError
from core.graph import EdgeIndex
from core.types import SplitSpec
from model.potential_model import PotentialModel

logger = logging.getLogger(__name__)


def edge_labels(adjacency: np.ndarray) -> np.ndarray:
    """[n, N, N] 邻接矩阵 -> [n, E] 规范边顺序的 0/1 标签"""
    adjacency = np.asarray(adjacency)
    index = EdgeIndex(adjacency.shape[1])
    return adjacency[:, index.senders, index.receivers].astype(np.int64)


def edge_latents(model: PotentialModel, states: np.ndarray, split: SplitSpec, batch_size: int = 50,
                 device: str = "cpu") -> np.ndarray:
    """观测段编码得到的边隐变量 [n, E, L, Dz]"""
    if states.ndim != 4 or len(states) == 0 or states.shape[1] < split.obs_len:
        raise ShapeError(f"轨迹形状 {states.shape} 无法取出 {split.obs_len} 步观测")
    if batch_size < 1:
        raise ShapeError(f"batch_size 必须为正, 实际 {batch_size}")
    model.eval()
    chunks = []
    with torch.no_grad():
        for start in range(0, len(states), batch_size):
            x = torch.as_tensor(states[start:start + batch_size, :split.obs_len], dtype=torch.float32,
                                device=device)
            chunks.append(model.encode(x).z.cpu().numpy())
    return np.concatenate(chunks, axis=0)


def edge_type_accuracy(latents: np.ndarray, adjacency: np.ndarray, train_frac: float = 0.8,
                       seed: int = 0, max_iter: int = 1000) -> float:
    """
    线性分类器在留出轨迹上的准确率

    Args:
        latents: [n, E, L, Dz] 编码器输出
        adjacency: [n, N, N] 真值邻接矩阵
        train_frac: 按轨迹划分的训练比例

    Returns:
        留出轨迹上的边分类准确率
    """
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 4:
        raise ShapeError(f"隐变量形状应为 [n, E, L, Dz], 实际 {latents.shape}")
    labels = edge_labels(adjacency)
    if labels.shape != latents.shape[:2]:
        raise ShapeError(f"标签 {labels.shape} 与隐变量 {latents.shape[:2]} 不一致")
    n = latents.shape[0]
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_frac * n))
    if not 0 < n_train < n:
        raise ShapeError(f"训练比例 {train_frac} 在 {n} 条轨迹上无法划分")
    features = latents.reshape(n, latents.shape[1], -1)
    train, test = order[:n_train], order[n_train:]
    x_train = features[train].reshape(-1, features.shape[-1])
    y_train = labels[train].ravel()
    if len(np.unique(y_train)) < 2:
        raise ShapeError("训练轨迹中只有一类边")
    clf = LogisticRegression(max_iter=max_iter)
    clf.fit(x_train, y_train)
    accuracy = float(clf.score(features[test].reshape(-1, features.shape[-1]), labels[test].ravel()))
    logger.info(f"边类型线性分类: {len(train)} 条训练轨迹, 准确率 {accuracy:.3f}")
    return accuracy
