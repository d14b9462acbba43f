"""
节点级分布外检测
用训练好的模型在真实轨迹上的节点能量作为异常分数, 单阈值分类
"""

import logging
from dataclasses import dataclass
from typing import Dict, List

import numpy as np
import torch
from sklearn.metrics import roc_auc_score

from core.errors import ShapeError
from core.types import SplitSpec
from model.potential_model import PotentialModel

logger = logging.getLogger(__name__)


@dataclass
class OODReport:
    """分布外检测结果"""
    group_means: Dict[str, float]
    threshold: float
    accuracy: float
    auc: float
    n_calibration: int
    n_evaluation: int
    node_energies: List[List[float]]

    def to_dict(self) -> Dict:
        return {
            "group_means": self.group_means,
            "threshold": self.threshold,
            "accuracy": self.accuracy,
            "auc": self.auc,
            "n_calibration": self.n_calibration,
            "n_evaluation": self.n_evaluation,
            "node_energies": self.node_energies,
        }


def node_energy_scores(model: PotentialModel, states: np.ndarray, split: SplitSpec,
                       batch_size: int = 50, device: str = "cpu") -> np.ndarray:
    """
    每个节点的能量

    隐变量由同一条轨迹的观测段编码, 能量在真实生成窗口上以全掩码计算

    Args:
        states: [n, T, N, D] 或 [T, N, D]

    Returns:
        [n, N] (单条输入时为 [N])
    """
    single = states.ndim == 3
    batch = states[None] if single else states
    if batch.shape[1] < split.total_len:
        raise ShapeError(f"轨迹长度 {batch.shape[1]} 小于切分总长 {split.total_len}")
    model.eval()
    scores = []
    with torch.no_grad():
        for start in range(0, len(batch), batch_size):
            x = torch.as_tensor(batch[start:start + batch_size], dtype=torch.float32, device=device)
            latents = model.encode(x[:, :split.obs_len])
            window = x[:, split.gen_start:split.total_len]
            scores.append(model.energy(window, latents.z).per_node.cpu().numpy())
    out = np.concatenate(scores, axis=0) if scores else np.empty((0, batch.shape[2]), dtype=np.float32)
    return out[0] if single else out


def fit_threshold(scores: np.ndarray, labels: np.ndarray) -> float:
    """
    在校准集上选取使准确率最大的阈值, 分类规则为 score > threshold

    候选阈值为相邻排序分数的中点以及两端
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ShapeError(f"分数 {scores.shape} 与标签 {labels.shape} 数量不一致")
    if labels.all() or not labels.any():
        raise ShapeError("校准集必须同时包含两类节点")
    unique = np.unique(scores)
    candidates = np.concatenate([[unique[0] - 1.0], (unique[:-1] + unique[1:]) / 2.0, [unique[-1]]])
    accuracies = [np.mean((scores > t) == labels) for t in candidates]
    return float(candidates[int(np.argmax(accuracies))])


def classify(scores: np.ndarray, threshold: float) -> np.ndarray:
    return np.asarray(scores) > threshold


def evaluate_ood(model: PotentialModel, states: np.ndarray, node_labels: np.ndarray, split: SplitSpec,
                 calibration_frac: float = 0.1, seed: int = 0, batch_size: int = 50,
                 device: str = "cpu") -> OODReport:
    """
    混合数据集上的检测实验

    按轨迹随机抽出 calibration_frac 作为校准集拟合阈值, 其余轨迹上报告准确率与 AUC

    Args:
        node_labels: [n, N], 1 表示分布外 (受 Coulomb 力驱动) 的节点
    """
    if not 0 < calibration_frac < 1:
        raise ShapeError(f"校准比例必须在 (0, 1) 内, 实际 {calibration_frac}")
    scores = node_energy_scores(model, states, split, batch_size, device)
    labels = np.asarray(node_labels).astype(bool)
    n = len(scores)
    order = np.random.default_rng(seed).permutation(n)
    n_cal = max(1, int(round(calibration_frac * n)))
    cal, rest = order[:n_cal], order[n_cal:]
    if len(rest) == 0:
        raise ShapeError("校准后没有剩余的评估轨迹")

    threshold = fit_threshold(scores[cal], labels[cal])
    predicted = classify(scores[rest], threshold)
    accuracy = float(np.mean(predicted == labels[rest]))
    rest_labels = labels[rest].ravel()
    auc = float(roc_auc_score(rest_labels, scores[rest].ravel())) if 0 < rest_labels.sum() < rest_labels.size \
        else float("nan")
    group_means = {
        "all": float(scores.mean()),
        "in_distribution": float(scores[~labels].mean()) if (~labels).any() else float("nan"),
        "out_of_distribution": float(scores[labels].mean()) if labels.any() else float("nan"),
    }
    logger.info(f"OOD 检测: 阈值 {threshold:.4e}, 准确率 {accuracy:.3f}, AUC {auc:.3f}")
    return OODReport(
        group_means=group_means,
        threshold=threshold,
        accuracy=accuracy,
        auc=auc,
        n_calibration=int(len(cal)),
        n_evaluation=int(len(rest)),
        node_energies=scores.tolist(),
    )
