import numpy as np
import pytest

from analysis.forecasting import predict_window
from analysis.steering import (steer, steering_metrics, steering_sweep, window_positions,
                               window_start_positions)
from core.errors import ShapeError
from core.types import NormStats
from model.potentials import ExtraPotential
from model.sampler import SamplerConfig


def _setup(dataset, split):
    states = dataset.split_states("test")
    p0 = window_start_positions(states, split, dataset.stats)
    return states, p0


def test_no_extras_matches_forecast(tiny_model, tiny_dataset, tiny_split):
    states, p0 = _setup(tiny_dataset, tiny_split)
    sampler = SamplerConfig(steps=3)
    window, metrics = steer(tiny_model, states, [], tiny_split, sampler, tiny_dataset.stats, p0,
                            tiny_dataset.dt_unit, seed=2)
    reference = predict_window(tiny_model, states, tiny_split, sampler, batch_size=len(states), seed=2)
    np.testing.assert_array_equal(window, reference)
    assert metrics.goal_sq_distance is None and metrics.in_area_fraction is None


def test_no_extras_matches_forecast_across_batches(tiny_model, tiny_dataset, tiny_split):
    # 60 条轨迹, 默认每批 50 条, 第二批使用种子 seed + 1
    states = np.tile(tiny_dataset.split_states("test"), (20, 1, 1, 1))
    p0 = window_start_positions(states, tiny_split, tiny_dataset.stats)
    sampler = SamplerConfig(steps=2)
    window, _ = steer(tiny_model, states, [], tiny_split, sampler, tiny_dataset.stats, p0,
                      tiny_dataset.dt_unit, seed=2)
    reference = predict_window(tiny_model, states, tiny_split, sampler, seed=2)
    assert len(states) > 50
    np.testing.assert_array_equal(window, reference)

    small, _ = steer(tiny_model, states, [], tiny_split, sampler, tiny_dataset.stats, p0,
                     tiny_dataset.dt_unit, seed=2, batch_size=7)
    np.testing.assert_array_equal(small, predict_window(tiny_model, states, tiny_split, sampler,
                                                        batch_size=7, seed=2))


def test_velocity_strength_sign_controls_speed(tiny_model, tiny_dataset, tiny_split):
    states = tiny_dataset.split_states("test")
    # 速度势作用在归一化速度上, 用恒等统计量在同一单位下统计速率
    stats = NormStats.identity(4)
    p0 = window_start_positions(states, tiny_split, stats)
    template = ExtraPotential("velocity", strength=0.0, weight=1.0)
    results = steering_sweep(tiny_model, states, template, [-1.0, 0.0, 1.0], tiny_split,
                             SamplerConfig(steps=5), stats, p0, tiny_dataset.dt_unit)
    assert results[-1.0].mean_speed > results[0.0].mean_speed > results[1.0].mean_speed


def test_zero_strength_is_inert(tiny_model, tiny_dataset, tiny_split):
    states, p0 = _setup(tiny_dataset, tiny_split)
    sampler = SamplerConfig(steps=2)
    pot = ExtraPotential("goal", strength=0.0, goal=(1.0, 1.0))
    plain, _ = steer(tiny_model, states, [], tiny_split, sampler, tiny_dataset.stats, p0, tiny_dataset.dt_unit)
    steered, metrics = steer(tiny_model, states, [pot], tiny_split, sampler, tiny_dataset.stats, p0,
                             tiny_dataset.dt_unit)
    np.testing.assert_array_equal(plain, steered)
    assert metrics.goal_sq_distance is not None


def test_goal_pulls_trajectories_closer(tiny_model, tiny_dataset, tiny_split):
    states, p0 = _setup(tiny_dataset, tiny_split)
    template = ExtraPotential("goal", strength=0.0, weight=1.0, goal=(3.0, 0.0))
    results = steering_sweep(tiny_model, states, template, [0.0, 10.0], tiny_split, SamplerConfig(steps=5),
                             tiny_dataset.stats, p0, tiny_dataset.dt_unit)
    assert results[10.0].goal_sq_distance < results[0.0].goal_sq_distance


def test_steer_checks_start_positions(tiny_model, tiny_dataset, tiny_split):
    states, p0 = _setup(tiny_dataset, tiny_split)
    with pytest.raises(ShapeError):
        steer(tiny_model, states, [], tiny_split, SamplerConfig(steps=1), tiny_dataset.stats, p0[:, :2])


def test_metrics_only_cover_predicted_segment():
    stats = NormStats.identity(4)
    window = np.zeros((1, 3, 1, 4), dtype=np.float32)
    window[0, 0, 0, 2] = 100.0
    window[0, 1:, 0, 2] = 1.0
    p0 = np.zeros((1, 1, 2))
    positions = window_positions(window, p0, stats, dt_unit=1.0)
    np.testing.assert_allclose(positions[0, :, 0, 0], [0.0, 100.0, 101.0])
    metrics = steering_metrics(window, p0, stats, 1.0, init_len=1, goal=(100.0, 0.0),
                               area=((99.0, -1.0), (100.5, 1.0)))
    assert metrics.mean_speed == pytest.approx(1.0)
    assert metrics.goal_sq_distance == pytest.approx(0.5)
    assert metrics.in_area_fraction == pytest.approx(0.5)
