"""
Adversarial augmentation of measurement tuples.

The generator maps standard-normal noise to z-scored (x, y, rss_1..rss_M)
tuples; the discriminator scores realness with a sigmoid output. Divergence
helpers (KL, JS over shared histogram bins) monitor how close the generated
distribution is to held-out real data.
"""

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from modules.neuralnet import (
    PROB_CLAMP,
    backward,
    binary_log_loss,
    forward,
    init_optimizer_state,
    mlp,
    network_from_dict,
    network_to_dict,
    step,
)
from modules.utilis import DomainError, NumericError, derive_seed, ensure_parent_dir, make_rng, write_frame_csv

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "d_loss", "g_loss", "d_real_mean", "d_fake_mean", "js_estimate"]
JS_BINS = 30
HIDDEN_ACTIVATION = "leaky_relu(0.2)"


# --- DIVERGENCES ---

@dataclass
class Distribution:
    """Probability mass over shared bins; weights are normalized on construction"""
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("distribution weights must be finite, nonnegative and nonempty")
        total = w.sum()
        if total <= 0:
            raise DomainError("distribution has no mass")
        self.weights = w / total


def _check_support(a, b):
    if a.weights.shape != b.weights.shape:
        raise DomainError(f"distributions have different supports: {a.weights.size} vs {b.weights.size} bins")


def kl_divergence(q, p):
    """KL(q || p) in nats; math.inf when p has no mass where q does"""
    _check_support(q, p)
    support = q.weights > 0
    if np.any(p.weights[support] == 0):
        return math.inf
    qs, ps = q.weights[support], p.weights[support]
    return max(float(np.sum(qs * np.log(qs / ps))), 0.0)


def js_divergence(p, q):
    """Jensen-Shannon divergence in nats, symmetric and bounded by ln 2"""
    _check_support(p, q)
    m = Distribution(0.5 * (p.weights + q.weights))
    value = 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m)
    return min(max(value, 0.0), math.log(2.0))


def histogram_pair(a, b, bins=JS_BINS):
    """Histogram two 1D samples on shared equal-width bins spanning both"""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise DomainError("cannot histogram an empty sample")
    low = min(a.min(), b.min())
    high = max(a.max(), b.max())
    if high <= low:
        high = low + 1.0
    edges = np.linspace(low, high, bins + 1)
    counts_a, _ = np.histogram(a, bins=edges)
    counts_b, _ = np.histogram(b, bins=edges)
    return Distribution(counts_a), Distribution(counts_b)


def sample_js(a, b, bins=JS_BINS):
    """Mean over columns of the per-dimension histogram JS divergence"""
    a = np.asarray(a, dtype=float).reshape(len(a), -1)
    b = np.asarray(b, dtype=float).reshape(len(b), -1)
    values = [js_divergence(*histogram_pair(a[:, j], b[:, j], bins)) for j in range(a.shape[1])]
    return float(np.mean(values))


def value_function(d_real, d_fake):
    """Empirical V(D, G) = mean log D(x) + mean log(1 - D(G(z)))"""
    d_real = np.clip(np.asarray(d_real, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    d_fake = np.clip(np.asarray(d_fake, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.mean(np.log(d_real)) + np.mean(np.log(1.0 - d_fake)))


# --- MODEL ---

@dataclass
class GanModel:
    generator: object
    discriminator: object
    latent_dim: int
    mean: np.ndarray
    scale: np.ndarray
    bounds: tuple = None  # (width_m, length_m): clamp generated x, y when set

    def __post_init__(self):
        if self.latent_dim < 1:
            raise DomainError("latent_dim must be >= 1")
        if self.generator.input_dim != self.latent_dim:
            raise DomainError("generator input size must equal latent_dim")
        if self.generator.output_dim != self.discriminator.input_dim:
            raise DomainError("generator output size must equal discriminator input size")
        if self.discriminator.output_dim != 1 or not self.discriminator.activations[-1].startswith("sigmoid"):
            raise DomainError("discriminator must end in a single sigmoid unit")
        self.mean = np.asarray(self.mean, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        if self.mean.shape != (self.sample_dim,) or self.scale.shape != (self.sample_dim,):
            raise DomainError("normalization stats must have one entry per sample dimension")

    @property
    def sample_dim(self):
        return self.generator.output_dim

    def normalize(self, samples):
        return (np.asarray(samples, dtype=float) - self.mean) / self.scale

    def denormalize(self, samples):
        return np.asarray(samples, dtype=float) * self.scale + self.mean


def fit_normalization(samples):
    """Per-dimension z-score statistics; constant columns get scale 1"""
    samples = np.asarray(samples, dtype=float)
    mean = samples.mean(axis=0)
    scale = samples.std(axis=0)
    return mean, np.where(scale > 0, scale, 1.0)


def build_gan(real_samples, latent_dim=8, hidden=(32, 32), seed=0, bounds=None):
    """Untrained generator/discriminator pair with normalization fitted on real_samples"""
    real_samples = np.asarray(real_samples, dtype=float).reshape(len(real_samples), -1)
    mean, scale = fit_normalization(real_samples)
    sample_dim = real_samples.shape[1]
    generator = mlp(latent_dim, hidden, sample_dim, HIDDEN_ACTIVATION, "identity", derive_seed(seed, "generator"))
    discriminator = mlp(sample_dim, hidden, 1, HIDDEN_ACTIVATION, "sigmoid", derive_seed(seed, "discriminator"))
    return GanModel(generator=generator, discriminator=discriminator, latent_dim=int(latent_dim),
                    mean=mean, scale=scale, bounds=tuple(bounds) if bounds is not None else None)


@dataclass
class GanTrainLog:
    records: list = field(default_factory=list)

    def to_frame(self):
        return pd.DataFrame.from_records(self.records, columns=LOG_COLUMNS)

    def save_csv(self, path):
        write_frame_csv(self.to_frame(), path)


# --- TRAINING ---

def discriminator_step(discriminator, real_batch, fake_batch, config, state=None):
    """
    One ascent step on V(D, G) for a fixed real and generated batch.

    The summed log-loss of real-vs-1 and fake-vs-0 equals -V, so descending it
    ascends V. Returns (net, state, (D(real), D(fake), loss)) with the scores and
    loss taken before the update.
    """
    d_real = forward(discriminator, real_batch)
    d_fake = forward(discriminator, fake_batch)
    loss_real, grad_real = binary_log_loss(d_real, np.ones_like(d_real))
    loss_fake, grad_fake = binary_log_loss(d_fake, np.zeros_like(d_fake))
    grads = backward(discriminator, real_batch, grad_real)
    grads_fake = backward(discriminator, fake_batch, grad_fake)
    grads.weights = [a + b for a, b in zip(grads.weights, grads_fake.weights)]
    grads.biases = [a + b for a, b in zip(grads.biases, grads_fake.biases)]
    discriminator, state = step(discriminator, grads, config, state)
    return discriminator, state, (d_real, d_fake, loss_real + loss_fake)


def train_gan(real_samples, config, template, generator_loss="non_saturating",
              held_out=None, d_steps=1, js_every=1):
    """
    Alternating adversarial training on normalized samples.

    Per batch: d_steps discriminator updates ascending log D(x) + log(1 - D(G(z))),
    then one generator update. The generator descends -log D(G(z)) by default, or
    log(1 - D(G(z))) with generator_loss="minimax". When held_out (normalized) is
    given, the per-epoch log carries the histogram JS between it and fresh
    generator output.
    """
    real = np.asarray(real_samples, dtype=float).reshape(len(real_samples), -1)
    if real.shape[1] != template.sample_dim:
        raise DomainError(f"samples have {real.shape[1]} columns, model expects {template.sample_dim}")
    if len(real) < 2 * config.batch_size:
        raise DomainError(f"need at least {2 * config.batch_size} real samples, got {len(real)}")
    if generator_loss not in ("non_saturating", "minimax"):
        raise DomainError(f"unknown generator loss {generator_loss!r}")

    rng = make_rng(config.seed)
    js_rng = make_rng(derive_seed(config.seed, "js"))
    generator = template.generator.copy()
    discriminator = template.discriminator.copy()
    g_state = init_optimizer_state(generator)
    d_state = init_optimizer_state(discriminator)

    batch_size = config.batch_size
    ones = np.ones((batch_size, 1))
    zeros = np.zeros((batch_size, 1))
    n_batches = len(real) // batch_size
    log = GanTrainLog()

    for epoch in range(config.epochs):
        order = rng.permutation(len(real))
        sums = {"d_loss": 0.0, "g_loss": 0.0, "d_real_mean": 0.0, "d_fake_mean": 0.0}
        for batch_index in range(n_batches):
            batch = real[order[batch_index * batch_size:(batch_index + 1) * batch_size]]

            for _ in range(d_steps):
                z = rng.standard_normal((batch_size, template.latent_dim))
                fake = forward(generator, z)
                discriminator, d_state, (d_real, d_fake, d_loss) = discriminator_step(
                    discriminator, batch, fake, config, d_state)

            z = rng.standard_normal((batch_size, template.latent_dim))
            fake = forward(generator, z)
            d_on_fake = forward(discriminator, fake)
            if generator_loss == "non_saturating":
                g_loss, grad = binary_log_loss(d_on_fake, ones)
            else:
                # log(1 - D) is minus the log-loss against label 0
                g_loss, grad = binary_log_loss(d_on_fake, zeros)
                g_loss, grad = -g_loss, -grad
            upstream = backward(discriminator, fake, grad).inputs
            generator, g_state = step(generator, backward(generator, z, upstream), config, g_state)

            sums["d_loss"] += d_loss
            sums["g_loss"] += g_loss
            sums["d_real_mean"] += float(d_real.mean())
            sums["d_fake_mean"] += float(d_fake.mean())

        record = {"epoch": epoch}
        record.update({key: value / n_batches for key, value in sums.items()})
        if not all(math.isfinite(record[key]) for key in sums):
            raise NumericError(f"GAN training aborted at epoch {epoch}: non-finite loss {record}")
        record["js_estimate"] = float("nan")
        if held_out is not None and epoch % js_every == 0:
            z = js_rng.standard_normal((len(held_out), template.latent_dim))
            record["js_estimate"] = sample_js(forward(generator, z), held_out)
        log.records.append(record)
        if epoch % 100 == 0:
            logger.debug("GAN epoch %d: d_loss=%.4f g_loss=%.4f D(real)=%.3f D(fake)=%.3f",
                         epoch, record["d_loss"], record["g_loss"], record["d_real_mean"], record["d_fake_mean"])

    model = GanModel(generator=generator, discriminator=discriminator, latent_dim=template.latent_dim,
                     mean=template.mean, scale=template.scale, bounds=template.bounds)
    if log.records:
        last = log.records[-1]
        logger.info("GAN trained for %d epochs: D(real)=%.3f D(fake)=%.3f",
                    config.epochs, last["d_real_mean"], last["d_fake_mean"])
    return model, log


def generate_samples(model, n, seed):
    """n denormalized samples from z ~ N(0, I); x, y clamped to the room when bounds are set"""
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise DomainError(f"n must be a nonnegative integer, got {n!r}")
    if n == 0:
        return np.empty((0, model.sample_dim))
    rng = make_rng(seed)
    z = rng.standard_normal((int(n), model.latent_dim))
    samples = model.denormalize(forward(model.generator, z))
    if model.bounds is not None:
        width_m, length_m = model.bounds
        samples[:, 0] = np.clip(samples[:, 0], 0.0, width_m)
        samples[:, 1] = np.clip(samples[:, 1], 0.0, length_m)
    return samples


def discriminator_score(model, samples):
    """Mean discriminator output on raw (denormalized) samples"""
    return float(forward(model.discriminator, model.normalize(samples)).mean())


# --- PERSISTENCE ---

def save_gan(model, path):
    document = {
        "latent_dim": model.latent_dim,
        "mean": model.mean.tolist(),
        "scale": model.scale.tolist(),
        "bounds": list(model.bounds) if model.bounds is not None else None,
        "generator": network_to_dict(model.generator),
        "discriminator": network_to_dict(model.discriminator),
    }
    ensure_parent_dir(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=1)
    logger.info("Saved GAN model to %s", path)


def load_gan(path):
    with open(path, "r", encoding="utf-8") as f:
        document = json.load(f)
    try:
        return GanModel(
            generator=network_from_dict(document["generator"]),
            discriminator=network_from_dict(document["discriminator"]),
            latent_dim=int(document["latent_dim"]),
            mean=document["mean"],
            scale=document["scale"],
            bounds=tuple(document["bounds"]) if document.get("bounds") is not None else None,
        )
    except (KeyError, TypeError) as e:
        raise DomainError(f"malformed GAN document {path}: {e}")
