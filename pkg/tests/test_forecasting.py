import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from analysis.forecasting import evaluate_forecast, forecast, mse_at, predict_window, static_baseline
from core.errors import ShapeError
from model.sampler import SamplerConfig


@given(arrays(np.float32, (3, 6, 2, 4), elements=st.floats(-10, 10, width=32)),
       arrays(np.float32, (3, 6, 2, 4), elements=st.floats(-10, 10, width=32)))
def test_mse_at_matches_explicit_loop(pred, truth):
    result = mse_at(pred, truth, horizons=(1, 3, 6))
    for h in (1, 3, 6):
        total, count = 0.0, 0
        for i in range(3):
            for n in range(2):
                for d in range(4):
                    total += (float(pred[i, h - 1, n, d]) - float(truth[i, h - 1, n, d])) ** 2
                    count += 1
        assert result[h] == pytest.approx(total / count, rel=1e-9, abs=1e-12)


def test_constant_offset_gives_squared_offset():
    truth = np.random.default_rng(0).normal(size=(4, 20, 3, 4))
    result = mse_at(truth + 0.1, truth, horizons=(1, 10, 20))
    for value in result.values():
        assert value == pytest.approx(0.01, rel=1e-9)


def test_mse_at_rejects_bad_horizon():
    with pytest.raises(ShapeError):
        mse_at(np.zeros((1, 5, 2, 4)), np.zeros((1, 5, 2, 4)), horizons=(6,))
    with pytest.raises(ShapeError):
        mse_at(np.zeros((1, 5, 2, 4)), np.zeros((1, 4, 2, 4)), horizons=(1,))


def test_static_baseline_repeats_last_known_state(tiny_dataset, tiny_split):
    states = tiny_dataset.split_states("test")
    baseline = static_baseline(states, tiny_split, 4)
    assert baseline.shape == (len(states), 4, 3, 4)
    for h in range(4):
        np.testing.assert_array_equal(baseline[:, h], states[:, tiny_split.pred_start - 1])
    assert static_baseline(states[0], tiny_split, 2).shape == (2, 3, 4)


def test_forecast_shapes_and_horizon_zero(tiny_model, tiny_dataset, tiny_split):
    states = tiny_dataset.split_states("test")
    pred = forecast(tiny_model, states, tiny_split, horizon=5, sampler=SamplerConfig(steps=2))
    assert pred.shape == (len(states), 5, 3, 4)
    assert forecast(tiny_model, states, tiny_split, horizon=0).shape == (len(states), 0, 3, 4)
    assert forecast(tiny_model, states[0], tiny_split, horizon=0).shape == (0, 3, 4)
    with pytest.raises(ShapeError):
        forecast(tiny_model, states, tiny_split, horizon=tiny_split.pred_len + 1)


def test_single_trajectory_matches_batch(tiny_model, tiny_dataset, tiny_split):
    states = tiny_dataset.split_states("test")
    sampler = SamplerConfig(steps=2)
    single = forecast(tiny_model, states[0], tiny_split, horizon=3, sampler=sampler, seed=4)
    batch = forecast(tiny_model, states[:1], tiny_split, horizon=3, sampler=sampler, seed=4)
    np.testing.assert_array_equal(single, batch[0])


def test_predict_window_is_deterministic_and_clamped(tiny_model, tiny_dataset, tiny_split):
    states = tiny_dataset.split_states("test")
    sampler = SamplerConfig(steps=3, noise_scale=0.01)
    a = predict_window(tiny_model, states, tiny_split, sampler, batch_size=2, seed=9)
    b = predict_window(tiny_model, states, tiny_split, sampler, batch_size=2, seed=9)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (len(states), tiny_split.window_len, 3, 4)
    np.testing.assert_array_equal(a[:, 0], states[:, tiny_split.gen_start])


def test_predict_window_requires_observation(tiny_model, tiny_split):
    with pytest.raises(ShapeError):
        predict_window(tiny_model, np.zeros((1, 5, 3, 4), dtype=np.float32), tiny_split, SamplerConfig())


def test_evaluate_forecast_report(tiny_model, tiny_dataset, tiny_split):
    states = tiny_dataset.split_states("test")
    report = evaluate_forecast(tiny_model, states, tiny_split, SamplerConfig(steps=2), horizons=(1, 5),
                               steps_sweep=(0, 1))
    assert set(report.mse_at) == {1, 5}
    assert len(report.per_trajectory) == len(states)
    assert set(report.steps_sweep) == {0, 1}
    data = report.to_dict()
    assert set(data["mse_at"]) == {"1", "5"}
    assert set(data["steps_sweep"]["0"]) == {"1", "5"}
