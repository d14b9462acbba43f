"""
检查点读写
目录布局: manifest.json + params/<参数名>.f32 (小端 float32) + optimizer.pt
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import torch

from core.errors import DatasetCorruptError
from core.file_manager import FileManager
from core.types import NormStats, SplitSpec

from .potential_model import ModelConfig, PotentialModel
from .training import TrainConfig

CHECKPOINT_FORMAT_VERSION = 1
PARAMS_DIR = "params"
OPTIMIZER_FILE = "optimizer.pt"

logger = logging.getLogger(__name__)


@dataclass
class Checkpoint:
    """训练好的模型及复现所需的全部上下文"""
    model: PotentialModel
    split: SplitSpec
    stats: Optional[NormStats] = None
    dt_unit: float = 1.0
    iteration: int = 0
    train_config: Optional[TrainConfig] = None
    metrics: Dict[str, Any] = field(default_factory=dict)
    dataset: Optional[str] = None
    optimizer_state: Optional[Dict[str, Any]] = None

    @property
    def model_config(self) -> ModelConfig:
        return self.model.config


def save_checkpoint(ckpt: Checkpoint, path: Path):
    fm = FileManager()
    path = Path(path)
    params = {}
    for name, tensor in ckpt.model.state_dict().items():
        array = tensor.detach().cpu().numpy()
        desc = fm.write_array(path / PARAMS_DIR / f"{name}.f32", array)
        desc["file"] = f"{PARAMS_DIR}/{desc['file']}"
        params[name] = desc
    if ckpt.optimizer_state is not None:
        torch.save(ckpt.optimizer_state, path / OPTIMIZER_FILE)
    manifest = {
        "version": CHECKPOINT_FORMAT_VERSION,
        "model_config": ckpt.model_config.to_dict(),
        "train_config": ckpt.train_config.to_dict() if ckpt.train_config else None,
        "split": {
            "obs_len": ckpt.split.obs_len,
            "init_len": ckpt.split.init_len,
            "total_len": ckpt.split.total_len,
            "gen_start": ckpt.split.gen_start,
        },
        "stats": ckpt.stats.to_dict() if ckpt.stats is not None else None,
        "dt_unit": ckpt.dt_unit,
        "iteration": ckpt.iteration,
        "dataset": ckpt.dataset,
        "metrics": ckpt.metrics,
        "params": params,
    }
    fm.write_json(path / "manifest.json", manifest)
    logger.info(f"检查点已保存: {path} (迭代 {ckpt.iteration})")


def load_checkpoint(path: Path, load_optimizer: bool = False) -> Checkpoint:
    fm = FileManager()
    path = Path(path)
    manifest = fm.read_json(path / "manifest.json")
    try:
        if manifest["version"] != CHECKPOINT_FORMAT_VERSION:
            raise DatasetCorruptError(f"不支持的检查点版本 {manifest['version']}")
        model = PotentialModel(ModelConfig.from_dict(manifest["model_config"]))
        expected = model.state_dict()
        params = manifest["params"]
        missing = sorted(set(expected) - set(params))
        if missing:
            raise DatasetCorruptError(f"检查点缺少参数: {missing[:5]}")
        state = {}
        for name, desc in params.items():
            array = fm.read_array(path / desc["file"], desc["shape"])
            state[name] = torch.from_numpy(np.ascontiguousarray(array)).to(expected[name].dtype)
        model.load_state_dict(state, strict=True)
        optimizer_state = None
        if load_optimizer and (path / OPTIMIZER_FILE).exists():
            optimizer_state = torch.load(path / OPTIMIZER_FILE)
        stats = manifest.get("stats")
        train_config = manifest.get("train_config")
        return Checkpoint(
            model=model,
            split=SplitSpec(**manifest["split"]),
            stats=NormStats.from_dict(stats) if stats else None,
            dt_unit=float(manifest.get("dt_unit", 1.0)),
            iteration=int(manifest.get("iteration", 0)),
            train_config=TrainConfig.from_dict(train_config) if train_config else None,
            metrics=manifest.get("metrics", {}),
            dataset=manifest.get("dataset"),
            optimizer_state=optimizer_state,
        )
    except KeyError as e:
        raise DatasetCorruptError(f"检查点清单缺少字段 {e} ({path})") from e
    except (RuntimeError, TypeError) as e:
        raise DatasetCorruptError(f"检查点与模型结构不一致 {path}: {e}") from e
