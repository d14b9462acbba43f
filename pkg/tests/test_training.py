import numpy as np
import pytest
import torch

from core.errors import ShapeError
from core.graph import EdgeIndex
from model.encoder import LatentSet
from model.potential_model import build_model
from model.sampler import ModelTerm
from model.training import (TrainConfig, Trainer, energy_regularizer, multi_step_weights, potential_split,
                            training_loss)


def _latents(n_nodes=4, n_slots=3):
    index = EdgeIndex(n_nodes)
    return LatentSet(torch.zeros(1, index.n_edges, n_slots, 2), index)


@pytest.mark.parametrize("strategy", ["random", "by_node", "none"])
def test_potential_split_is_complementary(strategy):
    g = torch.Generator().manual_seed(5)
    m1, m2 = potential_split(_latents(), strategy, g)
    assert m1.shape == m2.shape == (12, 3)
    torch.testing.assert_close(m1 + m2, torch.ones(12, 3))
    assert set(m1.unique().tolist()) <= {0.0, 1.0}


def test_by_node_split_groups_incoming_edges():
    latents = _latents()
    for seed in range(10):
        m1, _ = potential_split(latents, "by_node", torch.Generator().manual_seed(seed))
        # 同一接收者的所有边、所有槽位归入同一组
        for j in range(4):
            incoming = [k for k, (_, r) in enumerate(latents.edge_index.pairs) if r == j]
            assert len(m1[incoming].unique()) == 1


def test_unknown_split_strategy():
    with pytest.raises(ShapeError):
        potential_split(_latents(), "halves")
    with pytest.raises(ShapeError):
        TrainConfig(split_strategy="halves")


def test_multi_step_weights():
    w = multi_step_weights(4, 0.5)
    assert w.sum().item() == pytest.approx(1.0)
    torch.testing.assert_close(w[1:] / w[:-1], torch.full((3,), 2.0))
    torch.testing.assert_close(multi_step_weights(1), torch.ones(1))


def test_steps_schedule_is_monotone():
    cfg = TrainConfig(steps_start=2, steps_end=6, steps_ramp=100)
    steps = [cfg.steps_at(i) for i in range(0, 200, 10)]
    assert steps[0] == 2 and steps[-1] == 6
    assert all(b >= a for a, b in zip(steps, steps[1:]))
    assert TrainConfig(steps_start=2, steps_end=6).steps_at(0) == 6


def test_loss_without_regulariser_is_weighted_mse(tiny_model, tiny_dataset, tiny_split):
    batch = torch.as_tensor(tiny_dataset.split_states("train")[:2])
    cfg = TrainConfig(reg_weight=0.0, multi_step=False, steps_end=2, steps_start=2)
    loss, metrics = training_loss(batch, tiny_model, cfg, tiny_split, steps=2,
                                  generator=torch.Generator().manual_seed(0))
    assert loss.item() == pytest.approx(metrics["final_mse"], rel=1e-6)
    assert "cd" not in metrics
    loss.backward()
    grads = [p.grad for p in tiny_model.parameters() if p.grad is not None]
    assert grads and all(torch.isfinite(g).all() for g in grads)


def test_loss_with_regulariser_reports_terms(tiny_model, tiny_dataset, tiny_split):
    batch = torch.as_tensor(tiny_dataset.split_states("train")[:2])
    loss, metrics = training_loss(batch, tiny_model, TrainConfig(), tiny_split, steps=3,
                                  generator=torch.Generator().manual_seed(0))
    assert torch.isfinite(loss)
    expected = metrics["mse"] + 1e-4 * (metrics["cd"] + metrics["e2"])
    assert metrics["loss"] == pytest.approx(expected, rel=1e-4, abs=1e-6)


def test_loss_rejects_short_batch(tiny_model, tiny_split):
    with pytest.raises(ShapeError):
        training_loss(torch.zeros(1, 10, 3, 4), tiny_model, TrainConfig(), tiny_split, steps=1)


def test_random_window_start_stays_in_range(tiny_model, tiny_split):
    trainer = Trainer(tiny_model, TrainConfig(random_start_max=3), tiny_split)
    rng = np.random.default_rng(0)
    starts = {trainer._window_start(rng) for _ in range(100)}
    assert starts <= {5, 6, 7, 8}
    assert len(starts) > 1


def test_short_training_run(tiny_model, tiny_dataset, tiny_split):
    cfg = TrainConfig(batch_size=2, epochs=5, max_iterations=3, steps_start=2, steps_end=2, val_every=2,
                      val_horizons=[1, 5], log_every=1, seed=1)
    calls = []
    trainer = Trainer(tiny_model, cfg, tiny_split)
    result = trainer.train(tiny_dataset.split_states("train"), tiny_dataset.split_states("val"),
                           progress_callback=lambda i, total, m: calls.append((i, total)))
    assert result.iteration == 3
    assert len(result.history) == 3
    assert calls == [(1, 3), (2, 3), (3, 3)]
    assert result.best_iteration == 2
    assert result.best_val_mse is not None and np.isfinite(result.best_val_mse)
    assert "val_mse@5" in result.history[1]
    trainer.restore_best()


def test_trainer_checks_split_lengths(tiny_model):
    from core.types import SplitSpec

    with pytest.raises(ShapeError):
        Trainer(tiny_model, TrainConfig(), SplitSpec(obs_len=4, init_len=1, total_len=18, gen_start=8))


def _loss64(model, batch, cfg, split, steps=2):
    loss, _ = training_loss(batch, model, cfg, split, steps=steps, generator=torch.Generator().manual_seed(0))
    return loss


def test_parameter_gradient_through_unrolled_langevin(tiny_model_config, tiny_dataset, tiny_split):
    model = build_model(tiny_model_config, seed=0).double()
    batch = torch.as_tensor(tiny_dataset.split_states("train")[:2], dtype=torch.float64)
    cfg = TrainConfig(reg_weight=1e-2, steps_start=3, steps_end=3, split_strategy="random")
    loss = _loss64(model, batch, cfg, tiny_split, steps=3)
    model.zero_grad()
    loss.backward()

    # 编码器与能量网络各取梯度最大的一个参数分量, 用中心差分核对
    checked = 0
    for prefix in ("encoder", "energy"):
        named = [(n, p) for n, p in model.named_parameters() if n.startswith(prefix) and p.grad is not None]
        name, param = max(named, key=lambda item: item[1].grad.abs().max().item())
        idx = int(param.grad.abs().argmax())
        analytic = param.grad.view(-1)[idx].item()
        eps = 1e-6
        with torch.no_grad():
            flat = param.data.view(-1)
            flat[idx] += eps
        plus = _loss64(model, batch, cfg, tiny_split, steps=3).item()
        with torch.no_grad():
            flat[idx] -= 2 * eps
        minus = _loss64(model, batch, cfg, tiny_split, steps=3).item()
        with torch.no_grad():
            flat[idx] += eps
        numeric = (plus - minus) / (2 * eps)
        assert analytic != 0.0, name
        assert numeric == pytest.approx(analytic, rel=1e-4, abs=1e-8), name
        checked += 1
    assert checked == 2


def test_regularizer_stops_gradient_at_negatives(tiny_model, tiny_dataset, tiny_split):
    x = torch.as_tensor(tiny_dataset.split_states("train")[:2])
    with torch.no_grad():
        z = tiny_model.encode(x[:, :tiny_split.obs_len]).z
    positives = x[:, tiny_split.gen_start:tiny_split.total_len]
    negatives = (positives + 0.3).requires_grad_(True)
    terms = [ModelTerm(tiny_model.energy, z)]

    contrastive, squared = energy_regularizer(terms, positives, negatives)
    tiny_model.zero_grad()
    (contrastive + squared).backward()
    assert negatives.grad is None
    grads = {n: p.grad.clone() for n, p in tiny_model.energy.named_parameters() if p.grad is not None}
    assert grads and any(g.abs().sum() > 0 for g in grads.values())

    # 与显式截断后的负样本得到相同的参数梯度
    tiny_model.zero_grad()
    c2, s2 = energy_regularizer(terms, positives, negatives.detach().clone())
    (c2 + s2).backward()
    for n, p in tiny_model.energy.named_parameters():
        if n in grads:
            torch.testing.assert_close(p.grad, grads[n])


def _run(config, split, dataset, seed=0):
    model = build_model(config, seed=seed)
    cfg = TrainConfig(batch_size=2, epochs=10, max_iterations=4, steps_start=2, steps_end=2, val_every=1000,
                      log_every=100, seed=3)
    trainer = Trainer(model, cfg, split)
    result = trainer.train(dataset.split_states("train"))
    return result, model


def test_training_is_deterministic(tiny_model_config, tiny_split, tiny_dataset):
    a, model_a = _run(tiny_model_config, tiny_split, tiny_dataset)
    b, model_b = _run(tiny_model_config, tiny_split, tiny_dataset)
    assert [h["loss"] for h in a.history] == [h["loss"] for h in b.history]
    for (name, pa), (_, pb) in zip(model_a.state_dict().items(), model_b.state_dict().items()):
        assert torch.equal(pa, pb), name


def test_loss_decreases_on_tiny_dataset(tiny_model_config, tiny_split, tiny_dataset):
    model = build_model(tiny_model_config, seed=0)
    cfg = TrainConfig(lr=3e-3, batch_size=3, epochs=200, max_iterations=200, steps_start=2, steps_end=2,
                      reg_weight=0.0, val_every=10_000, log_every=1_000, seed=0)
    result = Trainer(model, cfg, tiny_split).train(tiny_dataset.split_states("train"))
    losses = [h["final_mse"] for h in result.history]
    assert len(losses) == 200
    assert np.mean(losses[-20:]) < 0.9 * np.mean(losses[:20])
