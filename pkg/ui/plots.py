"""
轨迹绘图
二维路径图, 颜色随时间渐变, 同时输出位图与矢量图
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from core.errors import ShapeError  # noqa: E402

LINE_STYLES = ("-", "--", ":", "-.")
NODE_COLORS = ("tab:blue", "tab:red", "tab:green", "tab:orange", "tab:purple", "tab:brown")

logger = logging.getLogger(__name__)


def plot_trajectories(positions: Sequence[np.ndarray], path: Path, names: Optional[Sequence[str]] = None,
                      node_labels: Optional[Sequence[int]] = None, energies: Optional[Sequence[float]] = None,
                      coords: Sequence[int] = (0, 1), formats: Sequence[str] = ("png", "svg"),
                      title: Optional[str] = None) -> List[Path]:
    """
    把若干组位置序列画在同一坐标系中

    Args:
        positions: 每组 [T, N, d] 位置, 通常由速度累加得到 (真值、预测等)
        path: 输出文件路径 (扩展名由 formats 决定)
        names: 每组的图例名
        node_labels: 每个节点的类别, 决定颜色; 为空时按节点编号着色
        energies: 每个节点的能量, 标注在最后一个位置旁
        coords: d > 2 时投影到的坐标对

    Returns:
        写出的文件列表
    """
    if not positions:
        raise ShapeError("没有可绘制的轨迹")
    shapes = {p.shape[1:] for p in positions}
    if len(shapes) != 1:
        raise ShapeError(f"各组轨迹的节点数或维度不同: {shapes}")
    n_nodes, dim = next(iter(shapes))
    cx, cy = coords
    if max(cx, cy) >= dim:
        raise ShapeError(f"坐标对 {tuple(coords)} 超出位置维度 {dim}")
    names = list(names) if names else [f"series {k}" for k in range(len(positions))]

    fig, ax = plt.subplots(figsize=(6, 6))
    for k, pos in enumerate(positions):
        style = LINE_STYLES[k % len(LINE_STYLES)]
        n_steps = pos.shape[0]
        for i in range(n_nodes):
            label = node_labels[i] if node_labels is not None else i
            color = NODE_COLORS[int(label) % len(NODE_COLORS)]
            ax.plot(pos[:, i, cx], pos[:, i, cy], style, color=color, linewidth=1.0, alpha=0.6,
                    label=names[k] if i == 0 else None)
            # 越晚的时间步越不透明
            alphas = np.linspace(0.1, 1.0, n_steps)
            rgba = np.array([matplotlib.colors.to_rgba(color, a) for a in alphas])
            ax.scatter(pos[:, i, cx], pos[:, i, cy], c=rgba, s=8)
    if energies is not None:
        last = positions[0][-1]
        for i in range(n_nodes):
            ax.annotate(f"{energies[i]:.2e}", (last[i, cx], last[i, cy]), fontsize=7)
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=8)
    if title:
        ax.set_title(title)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        out = path.with_suffix(f".{fmt}")
        fig.savefig(out, dpi=150, bbox_inches="tight")
        written.append(out)
    plt.close(fig)
    logger.info(f"已保存图像: {', '.join(str(p) for p in written)}")
    return written
