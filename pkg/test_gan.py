import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modules.gan import (
    Distribution,
    build_gan,
    discriminator_score,
    discriminator_step,
    generate_samples,
    js_divergence,
    kl_divergence,
    load_gan,
    sample_js,
    save_gan,
    train_gan,
    value_function,
)
from modules.neuralnet import TrainConfig, forward, mlp
from modules.utilis import DomainError, make_rng


def test_kl_identical_is_zero():
    p = Distribution([0.2, 0.3, 0.5])
    assert kl_divergence(p, p) == 0.0


def test_kl_two_bin_value():
    assert kl_divergence(Distribution([0.5, 0.5]), Distribution([0.25, 0.75])) == pytest.approx(0.1438, abs=1e-4)


def test_kl_disjoint_support_is_infinite():
    assert kl_divergence(Distribution([1, 0]), Distribution([0, 1])) == math.inf


def test_js_bounds():
    p = Distribution([3, 1, 0])
    assert js_divergence(p, p) == 0.0
    assert js_divergence(Distribution([1, 0]), Distribution([0, 1])) == pytest.approx(math.log(2), abs=1e-9)
    q = Distribution([1, 1, 1])
    assert js_divergence(p, q) == pytest.approx(js_divergence(q, p), abs=1e-15)


def test_distribution_rejects_negative_mass():
    with pytest.raises(DomainError):
        Distribution([0.5, -0.1])
    with pytest.raises(DomainError):
        kl_divergence(Distribution([1, 1]), Distribution([1, 1, 1]))


def test_value_function_at_equilibrium():
    half = np.full(10, 0.5)
    assert value_function(half, half) == pytest.approx(2 * math.log(0.5), abs=1e-6)
    assert -1e-5 < value_function(np.full(4, 1.0), np.zeros(4)) <= 0.0


def _mass(n):
    return st.lists(st.floats(0.0, 10.0), min_size=n, max_size=n).filter(lambda w: sum(w) > 1e-6)


@given(data=st.data(), n=st.integers(1, 12))
def test_divergence_properties_on_random_pairs(data, n):
    p = Distribution(data.draw(_mass(n)))
    q = Distribution(data.draw(_mass(n)))
    assert kl_divergence(p, q) >= 0.0
    assert kl_divergence(q, p) >= 0.0
    js = js_divergence(p, q)
    assert 0.0 <= js <= math.log(2.0)
    assert js == pytest.approx(js_divergence(q, p), abs=1e-12)
    assert js_divergence(p, p) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("optimizer", ["sgd", "adam"])
@pytest.mark.parametrize("seed", range(5))
def test_discriminator_step_does_not_decrease_value(optimizer, seed):
    rng = make_rng(seed)
    real = rng.normal(1.0, 0.5, (32, 3))
    fake = rng.normal(-1.0, 0.5, (32, 3))
    discriminator = mlp(3, (8,), 1, "leaky_relu(0.2)", "sigmoid", seed=seed)
    config = TrainConfig(learning_rate=1e-4, optimizer=optimizer)
    before = value_function(forward(discriminator, real), forward(discriminator, fake))
    updated, _, (_, _, loss) = discriminator_step(discriminator, real, fake, config)
    after = value_function(forward(updated, real), forward(updated, fake))
    assert loss == pytest.approx(-before, abs=1e-12)
    assert after >= before


def _toy(seed, n):
    return make_rng(seed).normal(3.0, 0.5, (n, 1))


def _train_toy(epochs):
    real = _toy(0, 1000)
    template = build_gan(real, latent_dim=4, hidden=(16, 16), seed=1)
    config = TrainConfig(learning_rate=1e-3, batch_size=64, epochs=epochs, beta1=0.5, seed=2)
    return template, train_gan(template.normalize(real), config, template)


def test_training_is_reproducible():
    _, (model_a, log_a) = _train_toy(3)
    _, (model_b, log_b) = _train_toy(3)
    assert log_a.to_frame().equals(log_b.to_frame())
    np.testing.assert_array_equal(generate_samples(model_a, 50, 7), generate_samples(model_b, 50, 7))
    assert list(log_a.to_frame().columns) == ["epoch", "d_loss", "g_loss", "d_real_mean", "d_fake_mean", "js_estimate"]


def test_train_needs_two_batches():
    real = _toy(0, 50)
    template = build_gan(real, latent_dim=2, hidden=(4,), seed=0)
    with pytest.raises(DomainError):
        train_gan(template.normalize(real), TrainConfig(batch_size=32, epochs=1), template)


def test_minimax_loss_runs():
    real = _toy(0, 128)
    template = build_gan(real, latent_dim=2, hidden=(8,), seed=0)
    config = TrainConfig(batch_size=32, epochs=2, seed=1)
    _, log = train_gan(template.normalize(real), config, template, generator_loss="minimax", d_steps=2)
    assert len(log.records) == 2
    assert all(math.isfinite(r["g_loss"]) for r in log.records)


def test_generate_zero_and_deterministic():
    template, _ = _train_toy(0)
    assert generate_samples(template, 0, seed=1).shape == (0, 1)
    np.testing.assert_array_equal(generate_samples(template, 10, 4), generate_samples(template, 10, 4))


def test_generated_positions_clamped_to_room():
    real = np.column_stack([make_rng(0).uniform(0, 4, 80), make_rng(1).uniform(0, 6, 80), make_rng(2).normal(-50, 5, 80)])
    template = build_gan(real, latent_dim=3, hidden=(8,), seed=0, bounds=(4.0, 6.0))
    samples = generate_samples(template, 500, seed=3)
    assert samples[:, 0].min() >= 0.0 and samples[:, 0].max() <= 4.0
    assert samples[:, 1].min() >= 0.0 and samples[:, 1].max() <= 6.0


def test_gan_json_round_trip(tmp_path):
    template, _ = _train_toy(0)
    path = str(tmp_path / "gan.json")
    save_gan(template, path)
    loaded = load_gan(path)
    np.testing.assert_array_equal(generate_samples(loaded, 20, 5), generate_samples(template, 20, 5))


@pytest.mark.slow
def test_toy_gaussian_is_learned():
    template, (model, _) = _train_toy(2000)
    held_out = _toy(99, 5000)
    generated = generate_samples(model, 5000, seed=5)
    assert sample_js(generated, held_out) < 0.1
    assert sample_js(generated, held_out) < sample_js(generate_samples(template, 5000, seed=5), held_out)
    assert 0.35 <= discriminator_score(model, generated) <= 0.65
    sample = generate_samples(model, 1000, seed=6)
    # three standard errors of a 1000-draw mean at sigma 0.5
    assert abs(sample.mean() - 3.0) < 3 * 0.5 / math.sqrt(1000)
