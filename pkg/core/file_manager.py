"""
文件管理模块
负责数据集目录、原始数组文件、报告与运行目录的读写
"""

import json
import logging
import os
import tempfile
import time
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np

from .errors import DatasetCorruptError, DatasetError
from .types import NormStats, RelationKind, TrajectoryDataset

DATASET_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
STATES_FILE = "states.f32"
LABELS_FILE = "labels.f32"
# 小端 float32
ARRAY_DTYPE = np.dtype("<f4")

logger = logging.getLogger(__name__)


class FileManager:
    """文件管理器"""

    def write_array(self, path: Path, array: np.ndarray) -> Dict[str, Any]:
        """
        以小端 float32 写出原始数组

        Returns:
            清单中记录的数组描述 (文件名、形状、dtype)
        """
        data = np.ascontiguousarray(array, dtype=ARRAY_DTYPE)
        self.write_bytes_atomic(path, data.tobytes(order="C"))
        return {"file": path.name, "shape": list(data.shape), "dtype": "float32-le"}

    def read_array(self, path: Path, shape: Sequence[int]) -> np.ndarray:
        """读取原始数组并校验元素数量"""
        shape = tuple(int(s) for s in shape)
        if not path.exists():
            raise DatasetCorruptError(f"数组文件缺失: {path}")
        expected = int(np.prod(shape)) * ARRAY_DTYPE.itemsize
        actual = path.stat().st_size
        if actual != expected:
            raise DatasetCorruptError(
                f"数组文件损坏 {path}: 期望 {expected} 字节 (形状 {shape}), 实际 {actual} 字节")
        return np.fromfile(path, dtype=ARRAY_DTYPE).reshape(shape).astype(np.float32)

    def write_json(self, path: Path, payload: Any):
        text = json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
        self.write_bytes_atomic(path, text.encode("utf-8"))

    def read_json(self, path: Path) -> Any:
        try:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        except FileNotFoundError as e:
            raise DatasetError(f"文件不存在: {path}") from e
        except json.JSONDecodeError as e:
            raise DatasetCorruptError(f"JSON 解析失败 {path}: {e}") from e

    def write_bytes_atomic(self, path: Path, data: bytes):
        """先写临时文件再原子重命名, 并发写入者互不破坏"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp_name, path)
        except Exception:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise

    def create_run_dir(self, root: Path, command: str, config_hash: str,
                       timestamp: Optional[str] = None) -> Path:
        """
        创建运行目录 <root>/<command>-<hash>-<timestamp>

        目录已存在时追加数字后缀, 不覆盖旧结果
        """
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        timestamp = timestamp or time.strftime("%Y%m%d-%H%M%S")
        name = f"{command}-{config_hash[:10]}-{timestamp}"
        run_dir = root / name
        counter = 1
        while run_dir.exists():
            run_dir = root / f"{name}_{counter}"
            counter += 1
        run_dir.mkdir(parents=True)
        logger.info(f"运行目录: {run_dir}")
        return run_dir


def save_dataset(ds: TrajectoryDataset, path: Path):
    """
    保存数据集目录: manifest.json + states.f32 + labels.f32

    相同输入两次保存得到逐字节相同的文件
    """
    fm = FileManager()
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    states_desc = fm.write_array(path / STATES_FILE, ds.states)
    labels_desc = fm.write_array(path / LABELS_FILE, ds.labels)
    manifest = {
        "version": DATASET_FORMAT_VERSION,
        "count": len(ds),
        "T": ds.T,
        "N": ds.N,
        "D": ds.D,
        "kind": ds.label_kind.value,
        "seed": ds.meta.get("seed"),
        "normalized": ds.normalized,
        "splits": {name: [int(i) for i in idx] for name, idx in ds.splits.items()},
        "stats": ds.stats.to_dict(),
        "meta": ds.meta,
        "arrays": {"states": states_desc, "labels": labels_desc},
    }
    fm.write_json(path / MANIFEST_NAME, manifest)
    logger.info(f"数据集已保存: {path} ({len(ds)} 条轨迹)")


def load_dataset(path: Path) -> TrajectoryDataset:
    """读取并校验数据集目录"""
    fm = FileManager()
    path = Path(path)
    manifest = fm.read_json(path / MANIFEST_NAME)
    try:
        version = manifest["version"]
        if version != DATASET_FORMAT_VERSION:
            raise DatasetCorruptError(f"不支持的数据集版本 {version}")
        arrays = manifest["arrays"]
        states_shape = arrays["states"]["shape"]
        expected = [manifest["count"], manifest["T"], manifest["N"], manifest["D"]]
        if list(states_shape) != expected:
            raise DatasetCorruptError(f"清单形状不一致: arrays {states_shape} vs {expected}")
        states = fm.read_array(path / arrays["states"]["file"], states_shape)
        labels = fm.read_array(path / arrays["labels"]["file"], arrays["labels"]["shape"])
        return TrajectoryDataset(
            states=states,
            labels=labels,
            label_kind=RelationKind(manifest["kind"]),
            stats=NormStats.from_dict(manifest["stats"]),
            splits={k: np.asarray(v, dtype=np.int64) for k, v in manifest["splits"].items()},
            meta=manifest.get("meta", {}),
            normalized=manifest.get("normalized", True),
        )
    except KeyError as e:
        raise DatasetCorruptError(f"清单缺少字段 {e} ({path})") from e
    except ValueError as e:
        raise DatasetCorruptError(f"数据集校验失败 {path}: {e}") from e
