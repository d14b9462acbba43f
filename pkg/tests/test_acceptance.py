"""
小规模桌面验收: 在弹簧数据上训练一个模型, 检查预测、分布外检测、引导与重组的趋势

全部标记为 slow, 需要 --runslow; 单核 CPU 上整组约需数十分钟
"""

from dataclasses import replace

import numpy as np
import pytest
import torch

from analysis.forecasting import forecast, mse_at, static_baseline
from analysis.ood import evaluate_ood
from analysis.recombination import recombination_terms
from analysis.steering import steer, steering_sweep, window_positions, window_start_positions
from core.types import SplitSpec, denormalize_array, normalize_array
from model.potential_model import ModelConfig, build_model
from model.potentials import ExtraPotential
from model.sampler import SamplerConfig, compose_models, init_trajectory
from model.training import TrainConfig, Trainer
from sim.simulator import SimConfig, make_dataset

pytestmark = pytest.mark.slow

SPLIT = SplitSpec(obs_len=49, init_len=1, total_len=70, gen_start=49)
SAMPLER = SamplerConfig(steps=5, step_size=0.4, init_len=1)
SIM = SimConfig(n_particles=5, n_steps=70, kind="springs", seed=11)
SWAP_NODES = (0, 1)


@pytest.fixture(scope="module")
def springs():
    return make_dataset(SIM, {"train": 400, "val": 20, "test": 200}, obs_len=SPLIT.obs_len, workers=4)


@pytest.fixture(scope="module")
def trained(springs):
    model = build_model(ModelConfig(latent_dim=32, encoder_hidden=64, energy_hidden=32), seed=0)
    model.check_split(SPLIT)
    config = TrainConfig(lr=1e-3, batch_size=20, epochs=1000, max_iterations=2000, steps_start=5, steps_end=5,
                         val_every=500, val_horizons=[1, 20], log_every=200, seed=0)
    trainer = Trainer(model, config, SPLIT)
    trainer.train(springs.split_states("train"), springs.split_states("val"))
    trainer.restore_best()
    return trainer.model.eval()


def _assert_non_increasing(values):
    """允许一处相邻逆序, 且幅度小于 5%"""
    rises = [(a, b) for a, b in zip(values, values[1:]) if b > a]
    assert len(rises) <= 1, values
    for a, b in rises:
        assert b - a < 0.05 * abs(a), values


def test_forecast_beats_static_baseline(trained, springs):
    states = springs.split_states("test")
    horizon = SPLIT.pred_len
    truth = states[:, SPLIT.pred_start:SPLIT.pred_start + horizon]
    pred = forecast(trained, states, SPLIT, horizon, SAMPLER, seed=0)
    model_mse = mse_at(pred, truth, (horizon,))[horizon]
    static_mse = mse_at(static_baseline(states, SPLIT, horizon), truth, (horizon,))[horizon]
    assert model_mse <= 0.2 * static_mse


def test_charged_nodes_score_higher_energy(trained, springs):
    mixed = make_dataset(replace(SIM, kind="mixed", seed=12), {"train": 20, "val": 1, "test": 200},
                         obs_len=SPLIT.obs_len, workers=4)
    # 按训练集的统计量重新归一化
    raw = denormalize_array(mixed.split_states("test"), mixed.stats)
    states = normalize_array(raw, springs.stats)
    labels = mixed.split_labels("test")
    report = evaluate_ood(trained, states, labels, SPLIT, calibration_frac=0.1, seed=0)
    assert report.group_means["out_of_distribution"] > report.group_means["in_distribution"]
    assert report.auc >= 0.8


def test_goal_distance_shrinks_with_strength(trained, springs):
    states = springs.split_states("test")
    p0 = window_start_positions(states, SPLIT, springs.stats)
    goal = tuple(float(v) for v in p0.reshape(-1, p0.shape[-1]).mean(axis=0) + 1.0)
    template = ExtraPotential("goal", 0.0, goal=goal)
    results = steering_sweep(trained, states, template, [0.0, 1.0, 5.0, 10.0], SPLIT, SAMPLER, springs.stats, p0,
                             springs.dt_unit)
    _assert_non_increasing([results[s].goal_sq_distance for s in (0.0, 1.0, 5.0, 10.0)])


def test_avoid_area_occupancy_shrinks_with_strength(trained, springs):
    states = springs.split_states("test")
    p0 = window_start_positions(states, SPLIT, springs.stats)
    free, _ = steer(trained, states, [], SPLIT, SAMPLER, springs.stats, p0, springs.dt_unit)
    pos = window_positions(free, p0, springs.stats, springs.dt_unit)[:, SPLIT.init_len:]
    flat = pos.reshape(-1, pos.shape[-1])
    lo, hi = np.quantile(flat, 0.3, axis=0), np.quantile(flat, 0.7, axis=0)
    template = ExtraPotential("avoid_area", 0.0, area_min=tuple(map(float, lo)), area_max=tuple(map(float, hi)))
    strengths = [0.0, 1.0, 50.0, 500.0]
    results = steering_sweep(trained, states, template, strengths, SPLIT, SAMPLER, springs.stats, p0,
                             springs.dt_unit)
    occupancy = [results[s].in_area_fraction for s in strengths]
    assert occupancy[0] > 0
    _assert_non_increasing(occupancy)


def test_recombined_edges_lower_their_owner_energy(trained, springs):
    states = springs.split_states("test")[:100]
    terms = recombination_terms(trained, trained, states, states, SWAP_NODES, SPLIT)
    owner = terms[1]
    x = torch.as_tensor(states[:, SPLIT.gen_start:SPLIT.total_len], dtype=torch.float32)
    x0 = init_trajectory(x.shape, x[:, :SPLIT.init_len], torch.Generator().manual_seed(0))
    samples = compose_models(terms, x0, SAMPLER)

    def swapped_energy(window: torch.Tensor) -> np.ndarray:
        total = torch.zeros(window.shape[0])
        with torch.no_grad():
            for i in SWAP_NODES:
                for j in SWAP_NODES:
                    if i == j:
                        continue
                    for slot in range(trained.config.n_slots):
                        total += trained.energy.per_edge_energy(window, owner.z, i, j, slot)
        return total.numpy()

    lowered = swapped_energy(samples[-1]) < swapped_energy(samples[0])
    assert lowered.mean() >= 0.8
