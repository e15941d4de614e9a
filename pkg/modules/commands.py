"""
One function per CLI subcommand. Each loads and validates the scenario
before touching any output file and returns a one-line summary.
"""

import logging
import os

import numpy as np

from modules.charts import plot_benchmark, plot_interpolation_comparison, plot_rfmap
from modules.env_sim import generate_ground_truth, load_truth_csv, save_truth_csv
from modules.gan import build_gan, save_gan, train_gan
from modules.interpolation import (
    compare_imputers,
    impute_layers,
    load_layers_csv,
    save_grid_csv,
    save_layers_csv,
)
from modules.localizer import run_benchmark, split_indices
from modules.neuralnet import TrainConfig
from modules.sampling import collect_measurements, load_csv, sample_locations, save_csv, to_sparse_grid
from modules.scenario import load_scenario
from modules.utilis import DataError, DomainError, derive_seed, write_frame_csv

logger = logging.getLogger(__name__)

BENCH_FILES = ("report.json", "report.csv", "fig4.svg")


def _load(config_path, seed=None, runs=None):
    return load_scenario(config_path).with_overrides(seed=seed, runs=runs)


def _require_input(path, what):
    if not path:
        raise DataError(f"missing {what} path")
    if not os.path.exists(path):
        raise DataError(f"{what} not found: {path}")


def _anchors(config):
    return [ap.position for ap in config.aps]


def _simulate(config):
    return generate_ground_truth(config.room, list(config.aps), config.propagation, derive_seed(config.seed, "truth"))


def _measure(config, truth):
    locations = sample_locations(config.room, config.sampling, derive_seed(config.seed, "locations"))
    return collect_measurements(truth, locations, config.sampling.readings_per_point,
                                config.sampling.reading_noise_sigma_db, derive_seed(config.seed, "readings"))


def cmd_simulate(config_path, out, seed=None, plot=False):
    config = _load(config_path, seed=seed)
    truth = _simulate(config)
    save_truth_csv(truth, out)
    if plot:
        plot_rfmap(truth.layers, truth.ap_ids, os.path.splitext(out)[0] + ".svg")
    return f"Ground truth for {len(truth.ap_ids)} APs written to {out}"


def cmd_sample(config_path, truth_path, out, seed=None):
    config = _load(config_path, seed=seed)
    if truth_path:
        _require_input(truth_path, "ground-truth grid")
        truth = load_truth_csv(truth_path, config.room, config.ap_ids)
    else:
        truth = _simulate(config)
    ms = _measure(config, truth)
    save_csv(ms, out)
    return f"{len(ms)} measurement points written to {out}"


def cmd_impute(config_path, input_path, out, method, seed=None, dump_layers=False):
    config = _load(config_path, seed=seed)
    _require_input(input_path, "measurement CSV")
    ms = load_csv(input_path, config.room, config.ap_ids, seed=config.seed)
    if len(ms) == 0:
        raise DomainError(f"{input_path} holds no measurements")
    grids = [to_sparse_grid(ms, index) for index in range(len(ms.ap_ids))]
    results = impute_layers(grids, method, config.interpolation, ap_ids=ms.ap_ids,
                            seed=derive_seed(config.seed, "impute"), anchors=_anchors(config))
    save_layers_csv(results, ms.ap_ids, out)
    if dump_layers:
        stem = os.path.splitext(out)[0]
        for ap_id, result in zip(ms.ap_ids, results):
            save_grid_csv(result, f"{stem}_{ap_id}.csv")
    observed = grids[0].n_observed
    return f"{method} completed {config.room.n_cells - observed} of {config.room.n_cells} cells per AP -> {out}"


def completed_table(layers, room):
    """(x, y, rss_1..rss_M) rows, one per cell, from completed layers"""
    xs, ys = room.cell_centers()
    return np.column_stack([xs.ravel(), ys.ravel()] + [layer.ravel() for layer in layers])


def cmd_train_gan(config_path, input_path, model_out, log_out, seed=None):
    config = _load(config_path, seed=seed)
    _require_input(input_path, "completed grid CSV")
    layers, _ = load_layers_csv(input_path, config.ap_ids, config.room.shape)
    real = completed_table(layers, config.room)

    settings = config.gan
    train_index, held_index = split_indices(len(real), config.localizer.train_fraction,
                                            derive_seed(config.seed, "gan-split"))
    template = build_gan(real[train_index], settings.latent_dim, settings.hidden, derive_seed(config.seed, "gan-init"),
                         bounds=(config.room.width_m, config.room.length_m))
    train_config = TrainConfig(learning_rate=settings.lr, batch_size=settings.batch_size, epochs=settings.epochs,
                               beta1=settings.beta1, seed=derive_seed(config.seed, "gan-train"))
    normalized = template.normalize(real)
    model, log = train_gan(normalized[train_index], train_config, template, generator_loss=settings.generator_loss,
                           held_out=normalized[held_index])
    save_gan(model, model_out)
    log.save_csv(log_out)
    return f"GAN trained for {settings.epochs} epochs -> {model_out} (log {log_out})"


def cmd_bench(config_path, out_dir, seed=None, runs=None):
    config = _load(config_path, seed=seed, runs=runs)
    report = run_benchmark(config)
    logger.info("Writing benchmark outputs to %s", out_dir)
    os.makedirs(out_dir, exist_ok=True)
    json_path, csv_path, svg_path = (os.path.join(out_dir, name) for name in BENCH_FILES)
    report.save_json(json_path)
    report.save_csv(csv_path)
    plot_benchmark(report, svg_path)
    summary = ", ".join(f"{v}={report.mean(v):.3f}" for v in report.variants)
    return f"Benchmark over {report.runs} runs (mean MSE m²: {summary}) -> {out_dir}"


def cmd_compare(config_path, out_dir, seed=None):
    config = _load(config_path, seed=seed)
    truth = _simulate(config)
    ms = _measure(config, truth)
    grids = [to_sparse_grid(ms, index) for index in range(len(ms.ap_ids))]
    frame = compare_imputers(truth, grids, config.interpolation, seed=derive_seed(config.seed, "impute"),
                             anchors=_anchors(config))
    os.makedirs(out_dir, exist_ok=True)
    write_frame_csv(frame, os.path.join(out_dir, "interpolation.csv"))
    plot_interpolation_comparison(frame, os.path.join(out_dir, "interpolation.svg"))
    best = frame.groupby("method")["rmse_db"].mean().idxmin()
    return f"Compared {frame['method'].nunique()} imputers, lowest mean RMSE: {best} -> {out_dir}"


def cmd_plot(config_path, input_path, out):
    config = _load(config_path)
    _require_input(input_path, "completed grid CSV")
    layers, masks = load_layers_csv(input_path, config.ap_ids, config.room.shape)
    plot_rfmap(layers, config.ap_ids, out, mask=masks)
    return f"RF map figure written to {out}"
