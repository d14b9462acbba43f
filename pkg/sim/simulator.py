"""
粒子系统模拟器
弹簧 (Hooke) / 电荷 (Coulomb) / 混合受力三种数据集, 带真值关系标签
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from core.errors import ConfigError
from core.types import (NODE_CHARGED, NODE_SPRING, NormStats, RelationKind, RelationLabels,
                        Trajectory, TrajectoryDataset, normalize_array)

logger = logging.getLogger(__name__)

SIM_KINDS = ("springs", "charged", "mixed")


@dataclass(frozen=True)
class SimConfig:
    """
    模拟配置

    spring_strength: 弹簧劲度 k (预测实验 5.0, 重组实验 0.1)
    charge_strength: 库仑常数 c (预测实验 1.0, 重组实验 0.5)
    box_half_width: 盒子半宽, None 表示关闭墙壁
    softening: 库仑分母中的软化项 δ
    """

    n_particles: int = 5
    n_steps: int = 70
    kind: str = "springs"
    spring_strength: float = 5.0
    charge_strength: float = 1.0
    connection_prob: float = 0.5
    charge_prob: float = 0.5
    mixed_prob: float = 0.5
    box_half_width: Optional[float] = 5.0
    integrator_dt: float = 1e-3
    subsample: int = 100
    softening: float = 0.01
    init_pos_std: float = 0.5
    init_vel_norm: float = 0.5
    seed: int = 42

    def __post_init__(self):
        if self.kind not in SIM_KINDS:
            raise ConfigError(f"未知的模拟类型 {self.kind!r}, 可选 {SIM_KINDS}")
        if self.n_particles < 2:
            raise ConfigError(f"n_particles 必须 >= 2, 实际 {self.n_particles}")
        if self.n_steps < 2:
            raise ConfigError(f"n_steps 必须 >= 2, 实际 {self.n_steps}")
        for name in ("connection_prob", "charge_prob", "mixed_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} 必须在 [0, 1] 内, 实际 {value}")
        if self.integrator_dt <= 0:
            raise ConfigError(f"integrator_dt 必须为正, 实际 {self.integrator_dt}")
        if self.subsample < 1:
            raise ConfigError(f"subsample 必须 >= 1, 实际 {self.subsample}")
        if self.softening < 0:
            raise ConfigError(f"softening 必须 >= 0, 实际 {self.softening}")
        if self.box_half_width is not None and self.box_half_width <= 0:
            raise ConfigError(f"box_half_width 必须为正, 实际 {self.box_half_width}")

    @property
    def dt_unit(self) -> float:
        """相邻输出状态之间的时间间隔"""
        return self.integrator_dt * self.subsample


class SystemDraw(NamedTuple):
    """一条轨迹的全部随机抽样, 三种模拟器共用同一抽样顺序"""

    adjacency: np.ndarray   # [N, N]
    charges: np.ndarray     # [N], ±1
    node_types: np.ndarray  # [N], NODE_SPRING / NODE_CHARGED
    p0: np.ndarray          # [N, 2]
    v0: np.ndarray          # [N, 2]


def draw_system(rng: np.random.Generator, cfg: SimConfig) -> SystemDraw:
    n = cfg.n_particles
    upper = np.triu((rng.random((n, n)) < cfg.connection_prob).astype(np.float64), k=1)
    adjacency = upper + upper.T
    charges = np.where(rng.random(n) < cfg.charge_prob, 1.0, -1.0)
    node_types = np.where(rng.random(n) < cfg.mixed_prob, NODE_CHARGED, NODE_SPRING)
    p0 = rng.normal(0.0, cfg.init_pos_std, size=(n, 2))
    v0 = rng.normal(size=(n, 2))
    v0 = v0 * cfg.init_vel_norm / np.linalg.norm(v0, axis=-1, keepdims=True)
    return SystemDraw(adjacency, charges, node_types.astype(np.int64), p0, v0)


def pairwise_spring_forces(p: np.ndarray, adjacency: np.ndarray, k: float) -> np.ndarray:
    """
    F[..., i, j, :] = -k * A_ij * (p_i - p_j), 满足 F_ij = -F_ji

    Args:
        p: [..., N, d]
        adjacency: [..., N, N]
    """
    diff = p[..., :, None, :] - p[..., None, :, :]
    return (-k * adjacency)[..., None] * diff


def pairwise_coulomb_forces(p: np.ndarray, charges: np.ndarray, c: float, softening: float) -> np.ndarray:
    """F[..., i, j, :] = c * q_i q_j * (p_i - p_j) / (|p_i - p_j|^2 + δ)^(3/2)"""
    diff = p[..., :, None, :] - p[..., None, :, :]
    dist2 = (diff ** 2).sum(axis=-1)
    n = p.shape[-2]
    off_diag = ~np.eye(n, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(off_diag, (dist2 + softening) ** -1.5, 0.0)
    qq = charges[..., :, None] * charges[..., None, :]
    return (c * qq * inv)[..., None] * diff


def mechanical_energy(p: np.ndarray, v: np.ndarray, adjacency: np.ndarray, k: float) -> np.ndarray:
    """弹簧系统总机械能 (单位质量): 动能 + 0.5 k sum_{i<j} A_ij |p_i - p_j|^2"""
    kinetic = 0.5 * (v ** 2).sum(axis=(-1, -2))
    diff = p[..., :, None, :] - p[..., None, :, :]
    potential = 0.25 * k * (adjacency * (diff ** 2).sum(axis=-1)).sum(axis=(-1, -2))
    return kinetic + potential


def _reflect(p: np.ndarray, v: np.ndarray, half_width: float):
    """弹性墙: 位置镜像, 越界分量的速度取反 (原地修改)"""
    over = p > half_width
    p[over] = 2 * half_width - p[over]
    v[over] = -v[over]
    under = p < -half_width
    p[under] = -2 * half_width - p[under]
    v[under] = -v[under]


def integrate(p0: np.ndarray, v0: np.ndarray, accel: Callable[[np.ndarray], np.ndarray],
              cfg: SimConfig) -> np.ndarray:
    """
    蛙跳积分 (kick-drift-kick), 每 subsample 步输出一次状态

    Args:
        p0, v0: [..., N, 2] 初始位置和速度
        accel: 位置 -> 加速度 (单位质量)

    Returns:
        [..., T, N, 4] 原始单位的状态序列
    """
    p = np.array(p0, dtype=np.float64)
    v = np.array(v0, dtype=np.float64)
    dt = cfg.integrator_dt
    frames = [np.concatenate([p, v], axis=-1)]
    a = accel(p)
    total = (cfg.n_steps - 1) * cfg.subsample
    for step in range(1, total + 1):
        v += 0.5 * dt * a
        p += dt * v
        if cfg.box_half_width is not None:
            _reflect(p, v, cfg.box_half_width)
        a = accel(p)
        v += 0.5 * dt * a
        if step % cfg.subsample == 0:
            frames.append(np.concatenate([p, v], axis=-1))
    return np.stack(frames, axis=-3)


def _springs_accel(draw: SystemDraw, cfg: SimConfig):
    return lambda p: pairwise_spring_forces(p, draw.adjacency, cfg.spring_strength).sum(axis=-2)


def _charged_accel(draw: SystemDraw, cfg: SimConfig):
    return lambda p: pairwise_coulomb_forces(p, draw.charges, cfg.charge_strength, cfg.softening).sum(axis=-2)


def _mixed_accel(draw: SystemDraw, cfg: SimConfig):
    spring = _springs_accel(draw, cfg)
    charged = _charged_accel(draw, cfg)
    is_spring = (draw.node_types == NODE_SPRING)[..., None]

    def accel(p):
        return np.where(is_spring, spring(p), charged(p))

    return accel


def _draw_for(cfg: SimConfig, rng: Optional[np.random.Generator], draw: Optional[SystemDraw]) -> SystemDraw:
    if draw is None:
        return draw_system(rng if rng is not None else np.random.default_rng(cfg.seed), cfg)
    if draw.p0.shape != (cfg.n_particles, 2) or draw.v0.shape != (cfg.n_particles, 2):
        raise ConfigError(f"给定的系统抽样与 n_particles={cfg.n_particles} 不一致")
    return draw


def simulate_springs(cfg: SimConfig, rng: Optional[np.random.Generator] = None,
                     draw: Optional[SystemDraw] = None) -> Tuple[Trajectory, RelationLabels]:
    """
    弹簧系统: 以概率 connection_prob 连接, 按 Hooke 定律相互作用

    draw 给定时跳过随机抽样, 直接使用其中的连接、初始位置与速度
    """
    draw = _draw_for(cfg, rng, draw)
    states = integrate(draw.p0, draw.v0, _springs_accel(draw, cfg), cfg)
    return Trajectory(states, raw=True), RelationLabels(RelationKind.SPRINGS_ADJACENCY, draw.adjacency)


def simulate_charged(cfg: SimConfig, rng: Optional[np.random.Generator] = None,
                     draw: Optional[SystemDraw] = None) -> Tuple[Trajectory, RelationLabels]:
    """电荷系统: 电荷 ±1 (概率 charge_prob 为正), 按 Coulomb 定律相互作用"""
    draw = _draw_for(cfg, rng, draw)
    states = integrate(draw.p0, draw.v0, _charged_accel(draw, cfg), cfg)
    return Trajectory(states, raw=True), RelationLabels(RelationKind.CHARGES, draw.charges)


def simulate_mixed(cfg: SimConfig, rng: Optional[np.random.Generator] = None,
                   node_types: Optional[np.ndarray] = None,
                   draw: Optional[SystemDraw] = None) -> Tuple[Trajectory, RelationLabels]:
    """
    混合系统: 每个节点同时拥有弹簧与电荷角色, 但所受合力只按自身类型的定律计算

    Args:
        node_types: 可选, 覆盖随机抽取的节点类型
    """
    draw = _draw_for(cfg, rng, draw)
    if node_types is not None:
        draw = draw._replace(node_types=np.asarray(node_types, dtype=np.int64))
    states = integrate(draw.p0, draw.v0, _mixed_accel(draw, cfg), cfg)
    return Trajectory(states, raw=True), RelationLabels(RelationKind.MIXED_FORCE_TYPE, draw.node_types)


SIMULATORS = {
    "springs": simulate_springs,
    "charged": simulate_charged,
    "mixed": simulate_mixed,
}


def simulate(cfg: SimConfig, rng: Optional[np.random.Generator] = None) -> Tuple[Trajectory, RelationLabels]:
    return SIMULATORS[cfg.kind](cfg, rng)


def _simulate_chunk(cfg: SimConfig, seeds: List[np.random.SeedSequence]) -> List[Tuple[np.ndarray, np.ndarray]]:
    results = []
    for seed in seeds:
        traj, labels = simulate(cfg, np.random.default_rng(seed))
        results.append((traj.states, labels.values))
    return results


def make_dataset(cfg: SimConfig, counts: Dict[str, int], obs_len: int = 49, workers: int = 1,
                 chunk_size: int = 64,
                 progress_callback: Optional[Callable[[int, int], None]] = None) -> TrajectoryDataset:
    """
    生成数据集

    Args:
        cfg: 模拟配置
        counts: {"train", "val", "test"} 各切分的轨迹数
        obs_len: 计算归一化统计量时使用的训练集前缀长度
        workers: 并行线程数, 结果顺序与线程数无关
        progress_callback: 回调 (已完成数, 总数)

    Returns:
        已归一化的数据集, 轨迹种子由主种子派生
    """
    names = ("train", "val", "test")
    for name in names:
        if counts.get(name, 0) < 1:
            raise ConfigError(f"切分 {name} 的数量必须 >= 1, 实际 {counts.get(name)}")
    total = sum(counts[name] for name in names)
    seeds = np.random.SeedSequence(cfg.seed).spawn(total)
    chunks = [seeds[i:i + chunk_size] for i in range(0, total, chunk_size)]

    logger.info(f"生成 {cfg.kind} 数据集: {total} 条轨迹, N={cfg.n_particles}, T={cfg.n_steps}")
    states, labels = [], []
    done = 0
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for chunk_result in pool.map(lambda chunk: _simulate_chunk(cfg, chunk), chunks):
            for s, lab in chunk_result:
                states.append(s)
                labels.append(lab)
            done += len(chunk_result)
            logger.info(f"已生成 {done}/{total}")
            if progress_callback:
                progress_callback(done, total)

    raw = np.stack(states).astype(np.float32)
    offsets = np.cumsum([0] + [counts[name] for name in names])
    splits = {name: np.arange(offsets[k], offsets[k + 1]) for k, name in enumerate(names)}
    stats_len = min(obs_len, cfg.n_steps)
    stats = NormStats.from_states(raw[splits["train"], :stats_len])
    kind = {"springs": RelationKind.SPRINGS_ADJACENCY, "charged": RelationKind.CHARGES,
            "mixed": RelationKind.MIXED_FORCE_TYPE}[cfg.kind]
    meta = {
        "source": "sim",
        "sim": asdict(cfg),
        "seed": cfg.seed,
        "counts": {name: int(counts[name]) for name in names},
        "dt_unit": cfg.dt_unit,
        "stats_obs_len": stats_len,
    }
    return TrajectoryDataset(
        states=normalize_array(raw, stats),
        labels=np.stack(labels).astype(np.float32),
        label_kind=kind,
        stats=stats,
        splits=splits,
        meta=meta,
    )


