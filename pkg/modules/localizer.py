"""
Fingerprint localization: an MLP regresses receiver (x, y) from the RSS
vector, and the benchmark compares training sets built from raw sparse
measurements, interpolated maps and GAN-augmented maps against a test set
drawn from the ground truth.
"""

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from modules.env_sim import generate_ground_truth
from modules.gan import build_gan, generate_samples, train_gan
from modules.interpolation import impute_layers
from modules.neuralnet import TrainConfig, fit, forward, mlp
from modules.sampling import collect_measurements, sample_locations, to_sparse_grid
from modules.utilis import (
    DomainError,
    RFMapError,
    annotate_error,
    derive_seed,
    ensure_parent_dir,
    make_rng,
    write_frame_csv,
)

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["variant", "run", "mse"]


@dataclass
class SampleSet:
    """Localization samples: RSS features (n, M) and (x, y) targets (n, 2)"""
    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float).reshape(len(self.features), -1)
        self.targets = np.asarray(self.targets, dtype=float).reshape(len(self.targets), -1)
        if len(self.features) != len(self.targets):
            raise DomainError("features and targets must have the same number of rows")
        if self.targets.shape[1] != 2:
            raise DomainError("targets must be (x, y) pairs")

    def __len__(self):
        return len(self.features)

    def subset(self, index):
        return SampleSet(self.features[index], self.targets[index])

    def concat(self, other):
        return SampleSet(np.vstack([self.features, other.features]), np.vstack([self.targets, other.targets]))


@dataclass
class LocalizerModel:
    net: object
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    target_mean: np.ndarray
    target_scale: np.ndarray

    def predict(self, features):
        features = np.asarray(features, dtype=float).reshape(len(features), -1)
        normalized = (features - self.feature_mean) / self.feature_scale
        return forward(self.net, normalized) * self.target_scale + self.target_mean


def _zscore_stats(values):
    mean = values.mean(axis=0)
    scale = values.std(axis=0)
    return mean, np.where(scale > 0, scale, 1.0)


# --- SPLIT / TRAIN / EVALUATE ---

def split_indices(n, train_fraction, seed):
    """Seeded permutation of range(n) cut at floor(n * fraction)"""
    if not (0 < train_fraction < 1):
        raise DomainError(f"train_fraction must be in (0, 1), got {train_fraction!r}")
    if n < 2:
        raise DomainError(f"need at least 2 samples to split, got {n}")
    n_train = int(math.floor(n * train_fraction))
    if n_train == 0 or n_train == n:
        raise DomainError(f"fraction {train_fraction} leaves an empty side for {n} samples")
    order = make_rng(seed).permutation(n)
    return order[:n_train], order[n_train:]


def split_dataset(samples, train_fraction, seed):
    train_index, test_index = split_indices(len(samples), train_fraction, seed)
    return samples.subset(train_index), samples.subset(test_index)


def train_localizer(train, arch, config):
    """Fit arch to z-scored features/targets with mean squared error"""
    if len(train) == 0:
        raise DomainError("empty training set")
    if arch.input_dim != train.features.shape[1] or arch.output_dim != 2:
        raise DomainError(
            f"architecture {arch.layer_sizes} does not map {train.features.shape[1]} features to (x, y)"
        )
    feature_mean, feature_scale = _zscore_stats(train.features)
    target_mean, target_scale = _zscore_stats(train.targets)
    net, history = fit(
        arch,
        (train.features - feature_mean) / feature_scale,
        (train.targets - target_mean) / target_scale,
        config,
        loss="squared_error",
    )
    logger.debug("Localizer trained on %d samples, final loss %.4g", len(train), history[-1] if history else float("nan"))
    return LocalizerModel(net=net, feature_mean=feature_mean, feature_scale=feature_scale,
                          target_mean=target_mean, target_scale=target_scale)


def mean_squared_error(predictions, targets):
    """Mean over samples of the per-axis squared error averaged over x and y (m^2)"""
    diff = np.asarray(predictions, dtype=float) - np.asarray(targets, dtype=float)
    return float(np.mean(np.sum(diff * diff, axis=1) / 2.0))


def evaluate_mse(model, test):
    if len(test) == 0:
        raise DomainError("empty test set")
    return mean_squared_error(model.predict(test.features), test.targets)


def error_reduction(base_mse, new_mse):
    """Percent error reduction of new relative to base; negative when new is worse"""
    if not base_mse > 0:
        raise DomainError(f"base MSE must be positive, got {base_mse!r}")
    return (1.0 - new_mse / base_mse) * 100.0


# --- REPORT ---

@dataclass
class BenchmarkReport:
    variants: list
    mse: dict  # variant -> list of per-run MSE, run-index order
    seeds: list = field(default_factory=list)

    @property
    def runs(self):
        return len(self.seeds)

    def mean(self, variant):
        return float(np.mean(self.mse[variant]))

    def std(self, variant):
        # population std: 0 for a single run
        return float(np.std(self.mse[variant]))

    def reductions(self):
        """error_reduction of every later variant against every earlier one"""
        result = {}
        for i, base in enumerate(self.variants):
            for new in self.variants[i + 1:]:
                base_mean = self.mean(base)
                key = f"{new}_vs_{base}"
                result[key] = error_reduction(base_mean, self.mean(new)) if base_mean > 0 else None
        return result

    def to_dict(self):
        return {
            "runs": self.runs,
            "seeds": list(self.seeds),
            "variants": {
                v: {
                    "mse": [float(x) for x in self.mse[v]],
                    "mean": self.mean(v),
                    "std": self.std(v),
                    "min": float(np.min(self.mse[v])),
                    "max": float(np.max(self.mse[v])),
                }
                for v in self.variants
            },
            "error_reduction_percent": self.reductions(),
        }

    def to_frame(self):
        records = [(v, run, float(value)) for v in self.variants for run, value in enumerate(self.mse[v])]
        return pd.DataFrame.from_records(records, columns=REPORT_COLUMNS)

    def save_json(self, path):
        ensure_parent_dir(path)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    def save_csv(self, path):
        write_frame_csv(self.to_frame(), path)


# --- BENCHMARK ---

def truth_samples(truth):
    """One localization sample per cell (row-major): truth RSS vector -> cell center"""
    xs, ys = truth.geometry.cell_centers()
    features = truth.layers.reshape(len(truth.ap_ids), -1).T
    targets = np.column_stack([xs.ravel(), ys.ravel()])
    return SampleSet(features, targets)


def _layers_to_samples(layers, truth, cells):
    xs, ys = truth.geometry.cell_centers()
    features = np.stack([layer.ravel()[cells] for layer in layers], axis=1)
    targets = np.column_stack([xs.ravel()[cells], ys.ravel()[cells]])
    return SampleSet(features, targets)


def _gan_augmentation(config, mice_train, seed):
    settings = config.gan
    real = np.column_stack([mice_train.targets, mice_train.features])
    template = build_gan(real, settings.latent_dim, settings.hidden, derive_seed(seed, "gan-init"),
                         bounds=(config.room.width_m, config.room.length_m))
    gan_config = TrainConfig(learning_rate=settings.lr, batch_size=settings.batch_size, epochs=settings.epochs,
                             beta1=settings.beta1, seed=derive_seed(seed, "gan-train"))
    model, _ = train_gan(template.normalize(real), gan_config, template, generator_loss=settings.generator_loss)
    generated = generate_samples(model, settings.augment_n, derive_seed(seed, "gan-sample"))
    return SampleSet(generated[:, 2:], generated[:, :2])


def build_training_sets(config, truth, grids, train_cells, seed):
    """Training sample set per benchmark variant, all restricted to the train cells"""
    variants = config.bench.variants
    sets = {}
    if "original" in variants:
        observed = np.all([g.mask.ravel() for g in grids], axis=0)
        cells = train_cells[observed[train_cells]]
        if len(cells) == 0:
            raise DomainError("no measured cells fall in the training split")
        sets["original"] = _layers_to_samples([g.values for g in grids], truth, cells)

    needed = {"mice" if v == "gan" else v for v in variants if v != "original"}
    completed = {}
    for method in sorted(needed):
        results = impute_layers(grids, method, config.interpolation, ap_ids=truth.ap_ids, seed=seed,
                                 anchors=[ap.position for ap in config.aps])
        completed[method] = [r.completed for r in results]
    for method, layers in completed.items():
        if method in variants:
            sets[method] = _layers_to_samples(layers, truth, train_cells)

    if "gan" in variants:
        mice_train = _layers_to_samples(completed["mice"], truth, train_cells)
        sets["gan"] = mice_train.concat(_gan_augmentation(config, mice_train, seed))
    return sets


def run_single(config, run_index):
    """One benchmark run: variant -> test MSE"""
    seed = config.base_seed + run_index
    truth = generate_ground_truth(config.room, list(config.aps), config.propagation, derive_seed(seed, "truth"))
    locations = sample_locations(config.room, config.sampling, derive_seed(seed, "locations"))
    ms = collect_measurements(truth, locations, config.sampling.readings_per_point,
                              config.sampling.reading_noise_sigma_db, derive_seed(seed, "readings"))
    grids = [to_sparse_grid(ms, index) for index in range(len(ms.ap_ids))]

    # test cells come from the truth map and are shared by every variant
    train_cells, test_cells = split_indices(truth.geometry.n_cells, config.localizer.train_fraction,
                                            derive_seed(seed, "split"))
    test = truth_samples(truth).subset(test_cells)
    training_sets = build_training_sets(config, truth, grids, train_cells, seed)

    arch = mlp(len(truth.ap_ids), config.localizer.hidden, 2, "relu", "identity", derive_seed(seed, "localizer"))
    train_config = TrainConfig(learning_rate=config.localizer.lr, batch_size=config.localizer.batch_size,
                               epochs=config.localizer.epochs, weight_decay=config.localizer.weight_decay,
                               input_noise=config.localizer.input_noise, seed=derive_seed(seed, "localizer-train"))
    results = {}
    for variant in config.bench.variants:
        try:
            model = train_localizer(training_sets[variant], arch, train_config)
            results[variant] = evaluate_mse(model, test)
        except RFMapError as e:
            raise annotate_error(e, f"run={run_index} variant={variant}")
        logger.info("Run %d %-8s train=%d MSE=%.4f m^2", run_index, variant,
                    len(training_sets[variant]), results[variant])
    return results


def _run_annotated(config, run_index):
    try:
        return run_single(config, run_index)
    except RFMapError as e:
        if "run=" in str(e):
            raise
        raise annotate_error(e, f"run={run_index}")


def run_benchmark(config, runs=None):
    """Repeat run_single over seeded runs and aggregate per-variant MSE"""
    runs = config.bench.runs if runs is None else runs
    if isinstance(runs, bool) or int(runs) != runs or runs < 1:
        raise DomainError(f"runs must be a positive integer, got {runs!r}")
    indices = list(range(int(runs)))
    logger.info("Benchmark: %d runs x %d variants (base seed %d)", runs, len(config.bench.variants), config.base_seed)

    if config.bench.workers > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=config.bench.workers) as pool:
            per_run = list(pool.map(_run_annotated, [config] * len(indices), indices))
    else:
        per_run = [_run_annotated(config, index) for index in indices]

    variants = list(config.bench.variants)
    mse = {v: [results[v] for results in per_run] for v in variants}
    return BenchmarkReport(variants=variants, mse=mse, seeds=[config.base_seed + i for i in indices])
