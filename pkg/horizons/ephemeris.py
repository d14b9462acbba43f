"""
星历数据
解析 Horizons 向量表、磁盘缓存, 以及把多原点的天体序列组装成轨迹数据集
"""

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import CacheCorruptError, HorizonsAlignmentError, HorizonsError, HorizonsParseError
from core.file_manager import FileManager
from core.types import NormStats, RelationKind, TrajectoryDataset, normalize_array
from core.windowing import TrajectoryWindower

from .client_base import EphemerisClientBase
from .query import EphemerisQuery, step_days

SOE_MARKER = "$$SOE"
EOE_MARKER = "$$EOE"
# 每行: 儒略日, 日历日期, X, Y, Z, VX, VY, VZ (VEC_TABLE=2 的 CSV 输出)
ROW_FIELDS = 8

# 太阳、八大行星, 以及月球、木卫三、土卫六
DEFAULT_TARGETS = ["10", "199", "299", "399", "499", "599", "699", "799", "899", "301", "503", "606"]
SOLAR_SYSTEM_BARYCENTER = "0"

logger = logging.getLogger(__name__)


@dataclass
class HorizonsConfig:
    """星历数据集配置"""
    targets: List[str] = field(default_factory=lambda: list(DEFAULT_TARGETS))
    origins: List[str] = field(default_factory=lambda: list(DEFAULT_TARGETS) + [SOLAR_SYSTEM_BARYCENTER])
    start: str = "1800-01-01"
    stop: str = "2022-12-31"
    step: str = "10 d"
    window_len: int = 43
    window_stride: Optional[int] = None
    split_fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    stats_obs_len: Optional[int] = None
    workers: int = 4
    seed: int = 42

    def __post_init__(self):
        if not self.targets or not self.origins:
            raise HorizonsError("targets 与 origins 不能为空")
        if self.window_len < 2:
            raise HorizonsError(f"窗口长度必须 >= 2, 实际 {self.window_len}")
        fractions = tuple(float(f) for f in self.split_fractions)
        if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-6:
            raise HorizonsError(f"切分比例必须为三个非负数且和为 1, 实际 {self.split_fractions}")
        self.split_fractions = fractions
        step_days(self.step)

    def query(self, target: str, origin: str) -> EphemerisQuery:
        return EphemerisQuery(target=target, origin=origin, start=self.start, stop=self.stop, step=self.step)


def parse_vectors(text: str) -> np.ndarray:
    """
    解析 $$SOE 与 $$EOE 之间的 CSV 向量表

    Returns:
        [rows, 7] float64: 儒略日, x, y, z, vx, vy, vz
    """
    for marker in (SOE_MARKER, EOE_MARKER):
        if marker not in text:
            raise HorizonsParseError(f"响应中缺少数据段分隔符 {marker}")
    start = text.index(SOE_MARKER) + len(SOE_MARKER)
    end = text.index(EOE_MARKER, start) if EOE_MARKER in text[start:] else -1
    if end < 0:
        raise HorizonsParseError(f"数据段分隔符 {EOE_MARKER} 出现在 {SOE_MARKER} 之前")
    rows = []
    for line_no, line in enumerate(text[start:end].splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if fields and fields[-1] == "":
            fields = fields[:-1]
        if len(fields) != ROW_FIELDS:
            raise HorizonsParseError(f"数据段第 {line_no} 行字段数为 {len(fields)}, 期望 {ROW_FIELDS}: {line[:80]}")
        try:
            rows.append([float(fields[0])] + [float(v) for v in fields[2:]])
        except ValueError as e:
            raise HorizonsParseError(f"数据段第 {line_no} 行无法解析为数值: {e}") from e
    if not rows:
        raise HorizonsParseError(f"{SOE_MARKER} 与 {EOE_MARKER} 之间没有数据")
    return np.asarray(rows, dtype=np.float64)


class EphemerisCache:
    """
    按查询哈希存放原始响应

    <key>.txt 为响应原文, <key>.sha256 为其摘要; 两者都先写临时文件再重命名
    """

    def __init__(self, cache_dir: Path):
        self.cache_dir = Path(cache_dir)
        self.file_manager = FileManager()
        self.logger = logging.getLogger(__name__)

    def _paths(self, query: EphemerisQuery) -> Tuple[Path, Path]:
        key = query.cache_key()
        return self.cache_dir / f"{key}.txt", self.cache_dir / f"{key}.sha256"

    def get(self, query: EphemerisQuery) -> Optional[str]:
        data_path, digest_path = self._paths(query)
        if not data_path.exists() or not digest_path.exists():
            return None
        data = data_path.read_bytes()
        expected = digest_path.read_text(encoding="ascii").strip()
        if hashlib.sha256(data).hexdigest() != expected:
            raise CacheCorruptError(f"缓存文件校验失败: {data_path}")
        self.logger.debug(f"缓存命中: {query.target}@{query.origin}")
        return data.decode("utf-8")

    def put(self, query: EphemerisQuery, text: str):
        data_path, digest_path = self._paths(query)
        data = text.encode("utf-8")
        self.file_manager.write_bytes_atomic(data_path, data)
        self.file_manager.write_bytes_atomic(digest_path, hashlib.sha256(data).hexdigest().encode("ascii"))


def fetch_text(query: EphemerisQuery, cache_dir: Path, client: EphemerisClientBase) -> str:
    """缓存命中时不访问客户端"""
    cache = EphemerisCache(cache_dir)
    text = cache.get(query)
    if text is None:
        text = client.fetch_text(query)
        # 先解析再写缓存, 不缓存坏响应
        parse_vectors(text)
        cache.put(query, text)
    return text


def fetch_ephemeris(query: EphemerisQuery, cache_dir: Path, client: EphemerisClientBase) -> np.ndarray:
    """
    获取并解析一个 (天体, 原点) 的向量星历

    Returns:
        [rows, 7]: 儒略日, x, y, z, vx, vy, vz
    """
    return parse_vectors(fetch_text(query, cache_dir, client))


def _check_epochs(series: Dict[str, np.ndarray], origin: str, spacing_days: float) -> np.ndarray:
    """所有天体的历元必须相同且等间隔"""
    names = list(series)
    reference = series[names[0]][:, 0]
    for name in names[1:]:
        epochs = series[name][:, 0]
        if epochs.shape != reference.shape or not np.allclose(epochs, reference, rtol=0.0, atol=1e-6):
            raise HorizonsAlignmentError(
                f"原点 {origin}: 天体 {names[0]} 与 {name} 的历元不一致 "
                f"({reference.shape[0]} vs {epochs.shape[0]} 行)")
    if reference.shape[0] > 1:
        gaps = np.diff(reference)
        if not np.allclose(gaps, spacing_days, rtol=0.0, atol=1e-6):
            raise HorizonsAlignmentError(
                f"原点 {origin}: 历元间隔不是 {spacing_days} 天 (范围 {gaps.min()} - {gaps.max()})")
    return reference


def origin_series(cfg: HorizonsConfig, origin: str, cache_dir: Path,
                  client: EphemerisClientBase) -> Tuple[np.ndarray, np.ndarray]:
    """
    一个原点下所有天体的状态序列

    天体与原点相同时状态恒为零

    Returns:
        (epochs [L], states [L, N, 6])
    """
    series = {}
    for target in cfg.targets:
        if target != origin:
            series[target] = fetch_ephemeris(cfg.query(target, origin), cache_dir, client)
    if not series:
        raise HorizonsError(f"原点 {origin} 下没有可用的天体序列")
    epochs = _check_epochs(series, origin, step_days(cfg.step))
    zeros = np.zeros((epochs.shape[0], 6), dtype=np.float64)
    states = np.stack([series[t][:, 1:] if t in series else zeros for t in cfg.targets], axis=1)
    return epochs, states


def _split_indices(n: int, fractions: Sequence[float], rng: np.random.Generator) -> Dict[str, np.ndarray]:
    order = rng.permutation(n)
    n_val = int(np.floor(fractions[1] * n))
    n_test = int(np.floor(fractions[2] * n))
    n_train = n - n_val - n_test
    return {
        "train": np.sort(order[:n_train]),
        "val": np.sort(order[n_train:n_train + n_val]),
        "test": np.sort(order[n_train + n_val:]),
    }


def build_horizons_dataset(cfg: HorizonsConfig, cache_dir: Path, client: EphemerisClientBase,
                           progress_callback: Optional[Callable[[int, int, str], None]] = None
                           ) -> TrajectoryDataset:
    """
    组装星历轨迹数据集

    每个原点把全部天体堆叠为 N 个节点, 再切成不重叠的固定长度窗口;
    统计量只取训练切分, 数据以归一化形式保存

    Args:
        cfg: 星历配置
        cache_dir: 响应缓存目录
        client: 星历客户端 (在线或离线)
        progress_callback: 每完成一个原点回调 (完成数, 总数, 原点)
    """
    windower = TrajectoryWindower(cfg.window_len, cfg.window_stride)
    windows: List[np.ndarray] = []
    origins: List[str] = []
    epochs0: List[float] = []

    def build(origin: str):
        return origin, origin_series(cfg, origin, cache_dir, client)

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        for done, (origin, (epochs, states)) in enumerate(pool.map(build, cfg.origins), start=1):
            chunks = windower.split(states)
            starts = windower.window_starts(states.shape[0])
            windows.append(chunks)
            origins.extend([origin] * len(chunks))
            epochs0.extend(float(epochs[s]) for s in starts)
            logger.info(f"原点 {origin}: {states.shape[0]} 个历元, {len(chunks)} 个窗口 ({done}/{len(cfg.origins)})")
            if progress_callback:
                progress_callback(done, len(cfg.origins), origin)

    raw = np.concatenate(windows, axis=0) if windows else np.empty((0,))
    if raw.shape[0] == 0:
        raise HorizonsError(f"序列长度不足一个 {cfg.window_len} 步的窗口")

    splits = _split_indices(raw.shape[0], cfg.split_fractions, np.random.default_rng(cfg.seed))
    stats_len = cfg.stats_obs_len or cfg.window_len
    stats = NormStats.from_states(raw[splits["train"], :stats_len])
    meta = {
        "source": "horizons",
        "targets": list(cfg.targets),
        "origins": origins,
        "epoch_start_jd": epochs0,
        "start": cfg.start,
        "stop": cfg.stop,
        "step": cfg.step,
        "dt_unit": step_days(cfg.step),
        "seed": cfg.seed,
    }
    logger.info(f"星历数据集: {raw.shape[0]} 条轨迹, 切分 "
                + ", ".join(f"{k}={len(v)}" for k, v in splits.items()))
    return TrajectoryDataset(
        states=normalize_array(raw, stats),
        labels=np.zeros((raw.shape[0], 1), dtype=np.float32),
        label_kind=RelationKind.NONE,
        stats=stats,
        splits=splits,
        meta=meta,
    )
