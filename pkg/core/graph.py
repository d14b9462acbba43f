"""
全连接有向图的边索引
边 (i, j) 表示发送者 i, 接收者 j, 按行优先顺序排列并跳过对角线
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class EdgeIndex:
    """N(N-1) 条有向边的规范顺序"""

    n_nodes: int

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ShapeError(f"图至少需要两个节点, 实际 {self.n_nodes}")

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        return list(_pairs(self.n_nodes))

    @property
    def n_edges(self) -> int:
        return self.n_nodes * (self.n_nodes - 1)

    def __len__(self) -> int:
        return self.n_edges

    @property
    def senders(self) -> np.ndarray:
        return np.array([i for i, _ in self.pairs], dtype=np.int64)

    @property
    def receivers(self) -> np.ndarray:
        return np.array([j for _, j in self.pairs], dtype=np.int64)

    def index_of(self, i: int, j: int) -> int:
        if i == j or not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
            raise ShapeError(f"边 ({i}, {j}) 不在 {self.n_nodes} 节点的图中")
        return i * (self.n_nodes - 1) + (j if j < i else j - 1)

    def one_hot(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        发送/接收的 one-hot 矩阵

        Returns:
            (rel_send, rel_rec), 形状均为 [E, N]
        """
        eye = np.eye(self.n_nodes, dtype=np.float32)
        return eye[self.senders], eye[self.receivers]

    def permutation(self, node_perm: Sequence[int]) -> np.ndarray:
        """
        节点重标号诱导的边置换

        节点 i 被重新标为 node_perm[i]; 返回 idx, 使得新图的第 k 条边
        对应旧图的第 idx[k] 条边 (即 z_new = z_old[idx])
        """
        perm = np.asarray(node_perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.n_nodes)):
            raise ShapeError(f"非法的节点置换 {perm.tolist()}")
        inverse = np.argsort(perm)
        return np.array([self.index_of(int(inverse[a]), int(inverse[b])) for a, b in self.pairs],
                        dtype=np.int64)

    def mutual_mask(self, nodes: Iterable[int]) -> np.ndarray:
        """两个端点都在节点集合中的边"""
        chosen = self._node_set(nodes)
        return np.array([i in chosen and j in chosen for i, j in self.pairs], dtype=bool)

    def incoming_mask(self, nodes: Iterable[int]) -> np.ndarray:
        """接收者在节点集合中的边"""
        chosen = self._node_set(nodes)
        return np.array([j in chosen for _, j in self.pairs], dtype=bool)

    def _node_set(self, nodes: Iterable[int]) -> set:
        chosen = set(int(n) for n in nodes)
        bad = [n for n in chosen if not 0 <= n < self.n_nodes]
        if bad:
            raise ShapeError(f"节点 {bad} 超出范围 [0, {self.n_nodes})")
        return chosen


@lru_cache(maxsize=64)
def _pairs(n_nodes: int) -> Tuple[Tuple[int, int], ...]:
    return tuple((i, j) for i in range(n_nodes) for j in range(n_nodes) if i != j)
