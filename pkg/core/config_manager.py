"""
配置管理模块
负责加载默认配置、合并用户配置与命令行覆盖, 并构造各模块的配置对象
"""

import copy
import hashlib
import json
import logging
import os
from datetime import date
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import yaml

from .errors import ConfigError, RelPotError
from .types import SplitSpec

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config" / "default_config.yaml"
CACHE_DIR_ENV = "RELPOT_CACHE_DIR"

logger = logging.getLogger(__name__)


def _load_yaml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError as e:
        raise ConfigError(f"配置文件不存在: {path}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"配置文件解析失败 {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"配置文件顶层必须是映射: {path}")
    return data


def merge_config(base: Dict[str, Any], update: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    """
    把 update 深度合并进 base 的副本

    update 中出现 base 没有的键时抛出 ConfigError, 错误信息给出带点的完整键名
    """
    merged = copy.deepcopy(base)
    for key, value in update.items():
        dotted = f"{prefix}{key}"
        if key not in merged:
            raise ConfigError(f"未知配置键: {dotted}")
        if isinstance(merged[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"配置键 {dotted} 应为映射, 实际 {value!r}")
            merged[key] = merge_config(merged[key], value, prefix=f"{dotted}.")
        else:
            merged[key] = value
    return merged


def parse_override(text: str) -> Dict[str, Any]:
    """
    'section.key=value' -> 嵌套字典

    值按 YAML 标量解析, 所以 3 / 0.5 / true / null / [1, 2] 都得到对应类型
    """
    if "=" not in text:
        raise ConfigError(f"覆盖项格式应为 section.key=value, 实际 {text!r}")
    dotted, raw = text.split("=", 1)
    keys = [k for k in dotted.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"覆盖项缺少键名: {text!r}")
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError as e:
        raise ConfigError(f"覆盖项 {dotted} 的值无法解析: {e}") from e
    if isinstance(value, date):
        # 日期保持为 ISO 字符串
        value = raw.strip()
    nested: Dict[str, Any] = value
    for key in reversed(keys):
        nested = {key: nested}
    return nested


class RunConfig:
    """解析后的完整运行配置, 按节访问并构造各模块的配置对象"""

    def __init__(self, data: Dict[str, Any]):
        self.data = data

    def __getitem__(self, section: str) -> Any:
        return self.data[section]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def device(self) -> str:
        return str(self.data["device"])

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, allow_unicode=True, sort_keys=True)

    def config_hash(self) -> str:
        canonical = json.dumps(self.data, sort_keys=True, ensure_ascii=False, default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def _build(self, factory, section: str, values: Dict[str, Any]):
        try:
            return factory(**values)
        except RelPotError as e:
            raise ConfigError(f"配置节 {section} 非法: {e}") from e
        except TypeError as e:
            raise ConfigError(f"配置节 {section} 字段不匹配: {e}") from e

    def sim_config(self):
        from sim.simulator import SimConfig

        values = {k: v for k, v in self.data["data"].items() if k not in ("counts", "workers", "chunk_size")}
        values["seed"] = self.seed
        return self._build(SimConfig, "data", values)

    def split_spec(self) -> SplitSpec:
        return self._build(SplitSpec, "split", dict(self.data["split"]))

    def horizons_config(self):
        from horizons.ephemeris import HorizonsConfig

        values = {k: v for k, v in self.data["horizons"].items()
                  if k not in ("cache_dir", "base_url", "timeout", "max_retries", "backoff")}
        values["split_fractions"] = tuple(values["split_fractions"])
        values["start"], values["stop"] = str(values["start"]), str(values["stop"])
        values["seed"] = self.seed
        return self._build(HorizonsConfig, "horizons", values)

    def cache_dir(self) -> Path:
        """环境变量 RELPOT_CACHE_DIR 优先于配置"""
        return Path(os.environ.get(CACHE_DIR_ENV) or self.data["horizons"]["cache_dir"]).expanduser()

    def model_config(self, state_dim: int):
        from model.potential_model import ModelConfig

        return self._build(ModelConfig, "model", dict(self.data["model"], state_dim=state_dim))

    def sampler_config(self, section: str = "sampler", **overrides):
        from model.sampler import SamplerConfig

        values = dict(self.data["sampler"])
        if values.get("value_clamp") is not None:
            values["value_clamp"] = tuple(values["value_clamp"])
        values["init_len"] = self.split_spec().init_len
        values.update(overrides)
        return self._build(SamplerConfig, section, values)

    def train_config(self):
        from model.training import TrainConfig

        return self._build(TrainConfig, "train", dict(self.data["train"], seed=self.seed))


class ConfigManager:
    """配置管理器"""

    def __init__(self, default_path: Optional[Path] = None):
        self.default_path = Path(default_path or DEFAULT_CONFIG_PATH)
        self.logger = logging.getLogger(__name__)

    def defaults(self) -> Dict[str, Any]:
        return _load_yaml(self.default_path)

    def load(self, path: Optional[Path] = None, overrides: Sequence[str] = ()) -> RunConfig:
        """
        加载配置, 优先级: 默认值 < 配置文件 < 命令行覆盖

        Args:
            path: 用户 YAML 配置文件
            overrides: 'section.key=value' 列表
        """
        data = self.defaults()
        if path is not None:
            self.logger.info(f"加载配置文件: {path}")
            data = merge_config(data, _load_yaml(Path(path)))
        for item in overrides:
            data = merge_config(data, parse_override(item))
        return RunConfig(data)

    def save(self, config: RunConfig, path: Path):
        from .file_manager import FileManager

        FileManager().write_bytes_atomic(Path(path), config.to_yaml().encode("utf-8"))

