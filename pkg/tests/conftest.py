"""
测试公共配置: hypothesis 配置、--runslow 开关与小规模模型/数据夹具
"""

import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from core.types import SplitSpec  # noqa: E402
from horizons.ephemeris import DEFAULT_TARGETS  # noqa: E402
from model.potential_model import ModelConfig, build_model  # noqa: E402
from sim.simulator import SimConfig, make_dataset  # noqa: E402

settings.register_profile("default", max_examples=20, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.register_profile("thorough", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# 儒略日 1800-01-01 00:00
JD_1800 = 2378496.5


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="运行标记为 slow 的用例")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 较慢的端到端用例, 需要 --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="需要 --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tiny_split() -> SplitSpec:
    """观测 8 步, 钳制 1 步, 生成窗口 10 步"""
    return SplitSpec(obs_len=8, init_len=1, total_len=18, gen_start=8)


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    return ModelConfig(state_dim=4, n_slots=2, latent_dim=8, encoder_hidden=16, energy_hidden=16,
                       encoder_down_blocks=3, long_down_blocks=1, short_down_blocks=1, window=5)


@pytest.fixture
def tiny_model(tiny_model_config):
    return build_model(tiny_model_config, seed=0)


@pytest.fixture
def tiny_sim_config() -> SimConfig:
    return SimConfig(n_particles=3, n_steps=18, kind="springs", integrator_dt=0.01, subsample=10, seed=7)


@pytest.fixture
def tiny_dataset(tiny_sim_config):
    return make_dataset(tiny_sim_config, {"train": 6, "val": 3, "test": 3}, obs_len=8)


@pytest.fixture
def tiny_mixed_dataset(tiny_sim_config):
    from dataclasses import replace

    return make_dataset(replace(tiny_sim_config, kind="mixed"), {"train": 4, "val": 2, "test": 10}, obs_len=8)


def horizons_text(rows: np.ndarray, jd0: float = JD_1800, step: float = 10.0) -> str:
    """按 Horizons CSV 向量表的格式生成响应文本"""
    lines = [
        "*******************************************************************************",
        "Ephemeris / API_USER",
        "*******************************************************************************",
        " JDTDB, Calendar Date (TDB), X, Y, Z, VX, VY, VZ,",
        "$$SOE",
    ]
    for k, row in enumerate(rows):
        values = ", ".join(f"{v: .15E}" for v in row)
        lines.append(f"{jd0 + k * step:.9f}, A.D. 1800-Jan-01 00:00:00.0000, {values},")
    lines += ["$$EOE", "*******************************************************************************"]
    return "\n".join(lines) + "\n"


def synthetic_orbit(index: int, n_rows: int) -> np.ndarray:
    """第 index 个天体的圆轨道状态 [n_rows, 6]"""
    radius = 0.4 + 0.3 * index
    omega = 0.01 / (1 + index)
    t = np.arange(n_rows, dtype=np.float64) * 10.0
    x, y = radius * np.cos(omega * t), radius * np.sin(omega * t)
    vx, vy = -radius * omega * np.sin(omega * t), radius * omega * np.cos(omega * t)
    z = np.full_like(t, 0.01 * index)
    return np.stack([x, y, z, vx, vy, np.zeros_like(t)], axis=1)


@pytest.fixture
def write_horizons_fixtures():
    """
    写出离线星历目录

    返回函数 (directory, origins, n_rows, targets=DEFAULT_TARGETS, jd_shift=None) -> directory
    jd_shift 为 {target: 天数} 时把对应天体的历元平移, 用于构造不对齐的数据
    """
    from horizons.fixture_client import FixtureClient

    def write(directory: Path, origins, n_rows: int, targets=tuple(DEFAULT_TARGETS), jd_shift=None) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        shift = jd_shift or {}
        for origin in origins:
            for k, target in enumerate(targets):
                if target == origin:
                    continue
                text = horizons_text(synthetic_orbit(k, n_rows), jd0=JD_1800 + shift.get(target, 0.0))
                (directory / FixtureClient.fixture_name(target, origin)).write_text(text, encoding="utf-8")
        return directory

    return write
