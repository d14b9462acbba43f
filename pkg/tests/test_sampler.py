import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from core.errors import NumericalError, ShapeError
from model.energy import empty_mask
from model.potentials import ExtraPotential
from model.sampler import (FunctionTerm, ModelTerm, PotentialTerm, SamplerConfig, compose_models,
                           init_trajectory, langevin)


def _quadratic(center: torch.Tensor) -> FunctionTerm:
    return FunctionTerm(lambda x: 0.5 * ((x - center) ** 2).sum(dim=(1, 2, 3)))


@given(st.floats(0.05, 1.5), st.integers(1, 8))
def test_quadratic_descent_matches_closed_form(step_size, steps):
    g = torch.Generator().manual_seed(0)
    center = torch.randn(2, 5, 3, 4, generator=g, dtype=torch.float64)
    x0 = torch.randn(2, 5, 3, 4, generator=g, dtype=torch.float64)
    config = SamplerConfig(steps=steps, step_size=step_size, init_len=0)
    samples = langevin([_quadratic(center)], x0, config)
    assert len(samples) == steps + 1
    for m, x in enumerate(samples):
        expected = center + (1 - step_size / 2) ** m * (x0 - center)
        torch.testing.assert_close(x, expected, rtol=1e-10, atol=1e-10)


def test_clamped_prefix_never_changes():
    g = torch.Generator().manual_seed(1)
    center = torch.randn(1, 6, 2, 4, generator=g)
    x0 = torch.randn(1, 6, 2, 4, generator=g)
    samples = langevin([_quadratic(center)], x0, SamplerConfig(steps=4, step_size=0.5, init_len=2))
    for x in samples:
        torch.testing.assert_close(x[:, :2], x0[:, :2], rtol=0, atol=0)
    assert not torch.allclose(samples[-1][:, 2:], x0[:, 2:])


def test_no_terms_keeps_initial_sample():
    x0 = torch.rand(2, 4, 3, 4)
    samples = langevin([], x0, SamplerConfig(steps=3))
    for x in samples:
        torch.testing.assert_close(x, x0)


def test_same_generator_seed_is_reproducible():
    center = torch.zeros(2, 5, 3, 4)
    config = SamplerConfig(steps=3, step_size=0.3, noise_scale=0.05)
    results = []
    for _ in range(2):
        g = torch.Generator().manual_seed(123)
        x0 = init_trajectory((2, 5, 3, 4), torch.ones(2, 1, 3, 4), g)
        results.append(langevin([_quadratic(center)], x0, config, generator=g)[-1])
    torch.testing.assert_close(results[0], results[1], rtol=0, atol=0)


def test_init_trajectory_layout():
    g = torch.Generator().manual_seed(0)
    init = torch.full((2, 2, 3, 4), -5.0)
    x0 = init_trajectory((2, 7, 3, 4), init, g)
    torch.testing.assert_close(x0[:, :2], init)
    assert x0[:, 2:].min() >= 0 and x0[:, 2:].max() < 1
    with pytest.raises(ShapeError):
        init_trajectory((2, 7, 4, 4), init, g)


def test_value_clamp_and_gradient_clip():
    center = torch.full((1, 4, 2, 4), 100.0)
    x0 = torch.zeros(1, 4, 2, 4)
    clamped = langevin([_quadratic(center)], x0, SamplerConfig(steps=1, step_size=1.0, init_len=0,
                                                               value_clamp=(-1.0, 1.0)))[-1]
    assert clamped.max() == 1.0
    clipped = langevin([_quadratic(center)], x0, SamplerConfig(steps=1, step_size=1.0, init_len=0,
                                                               grad_clip=2.0))[-1]
    assert clipped.flatten(1).norm(dim=1).item() == pytest.approx(1.0, rel=1e-5)


def test_divergence_raises_with_step():
    center = torch.zeros(1, 3, 2, 4)
    x0 = torch.ones(1, 3, 2, 4)
    # 步长 10 时每步放大 4 倍
    with pytest.raises(NumericalError) as info:
        langevin([_quadratic(center)], x0, SamplerConfig(steps=20, step_size=10.0, init_len=0, max_abs=100.0))
    assert info.value.step == 4


def test_non_finite_gradient_raises():
    term = FunctionTerm(lambda x: torch.sqrt(x - 10.0).sum(dim=(1, 2, 3)))
    with pytest.raises(NumericalError):
        langevin([term], torch.zeros(1, 3, 2, 4), SamplerConfig(steps=2, init_len=0))


def test_inert_terms_are_dropped(tiny_model):
    z = torch.zeros(1, 6, 2, 8)
    assert ModelTerm(tiny_model.energy, z, empty_mask(6, 2)).is_inert()
    assert not ModelTerm(tiny_model.energy, z).is_inert()
    assert PotentialTerm(ExtraPotential("velocity", 0.0)).is_inert()

    x0 = torch.rand(1, 10, 3, 4)
    config = SamplerConfig(steps=2)
    samples = compose_models([ModelTerm(tiny_model.energy, z, empty_mask(6, 2))], x0, config)
    torch.testing.assert_close(samples[-1], x0)


def test_compose_rejects_incompatible_models(tiny_model):
    z = torch.zeros(1, 2, 2, 8)
    with pytest.raises(ShapeError):
        compose_models([ModelTerm(tiny_model.energy, z)], torch.rand(1, 10, 3, 4), SamplerConfig())


def test_sum_of_terms_adds_gradients():
    a = torch.zeros(1, 3, 2, 4)
    b = torch.full((1, 3, 2, 4), 2.0)
    x0 = torch.full((1, 3, 2, 4), 5.0, dtype=torch.float32)
    out = langevin([_quadratic(a), _quadratic(b)], x0, SamplerConfig(steps=1, step_size=0.5, init_len=0))[-1]
    # grad = (x - a) + (x - b) = 8
    torch.testing.assert_close(out, torch.full_like(x0, 5.0 - 0.25 * 8.0))
