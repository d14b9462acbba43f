import numpy as np
import pytest
import torch

from analysis.forecasting import predict_window
from analysis.recombination import potential_gradients, recombine, swap_masks
from core.errors import ShapeError
from model.sampler import SamplerConfig


def test_swap_masks_are_complementary():
    base, swap = swap_masks(4, 2, 2, [0, 2])
    assert base.shape == swap.shape == (12, 2)
    torch.testing.assert_close(base + swap, torch.ones(12, 2))
    # 节点 0 与 2 之间的两条有向边
    assert swap[:, 0].sum().item() == 2


def test_swap_masks_different_slot_counts():
    base, swap = swap_masks(3, 1, 3, [1])
    assert base.shape == (6, 1) and swap.shape == (6, 3)
    assert swap.sum().item() == 0
    with pytest.raises(ShapeError):
        swap_masks(3, 1, 1, [5])


def test_empty_swap_reproduces_base_model(tiny_model, tiny_dataset, tiny_split):
    states = tiny_dataset.split_states("test")
    sampler = SamplerConfig(steps=3)
    reference = predict_window(tiny_model, states, tiny_split, sampler, batch_size=len(states), seed=0)
    other = tiny_model
    recombined = recombine(tiny_model, other, states, states, [], tiny_split, sampler, seed=0)
    np.testing.assert_array_equal(recombined, reference)


def test_empty_swap_matches_forecast_across_batches(tiny_model, tiny_dataset, tiny_split):
    states = np.tile(tiny_dataset.split_states("test"), (20, 1, 1, 1))
    sampler = SamplerConfig(steps=2)
    reference = predict_window(tiny_model, states, tiny_split, sampler, seed=4)
    recombined = recombine(tiny_model, tiny_model, states, states, [], tiny_split, sampler, seed=4)
    np.testing.assert_array_equal(recombined, reference)


def test_full_swap_hands_every_edge_to_second_model(tiny_model, tiny_model_config, tiny_dataset, tiny_split):
    from model.potential_model import build_model

    other = build_model(tiny_model_config, seed=1)
    states = tiny_dataset.split_states("test")
    sampler = SamplerConfig(steps=3)
    reference = predict_window(other, states, tiny_split, sampler, batch_size=len(states), seed=0)
    recombined = recombine(tiny_model, other, states, states, [0, 1, 2], tiny_split, sampler, seed=0)
    np.testing.assert_array_equal(recombined, reference)


def test_recombine_requires_paired_trajectories(tiny_model, tiny_dataset, tiny_split):
    states = tiny_dataset.split_states("test")
    with pytest.raises(ShapeError):
        recombine(tiny_model, tiny_model, states, states[:1], [0], tiny_split, SamplerConfig())


def test_potential_gradients_sum_to_full_gradient(tiny_model, tiny_dataset, tiny_split):
    x = torch.as_tensor(tiny_dataset.split_states("test")[:2])
    with torch.no_grad():
        z = tiny_model.encode(x[:, :tiny_split.obs_len]).z
    window = x[:, tiny_split.gen_start:tiny_split.total_len]
    fields = potential_gradients(tiny_model, window, z)
    assert fields.shape == (2,) + tuple(window.shape)

    w = window.clone().requires_grad_(True)
    full, = torch.autograd.grad(tiny_model.energy.energy(w, z).sum(), w)
    np.testing.assert_allclose(fields.sum(axis=0), full.numpy(), rtol=1e-4, atol=1e-5)
