"""
Scenario configuration: one JSON document drives every stage.

{ "room": {...}, "aps": [...], "propagation": {...}, "seed": 7,
  "sampling": {...}, "interpolation": {...}, "gan": {...},
  "localizer": {...}, "bench": {...} }

Only "room" and "aps" are required. Unknown keys are rejected at every level.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field, fields, replace

from modules.env_sim import AccessPoint, PropagationParams, RoomGeometry, check_ap_in_room
from modules.utilis import ConfigError

logger = logging.getLogger(__name__)

SAMPLING_METHODS = ("fixed", "ppp")
BENCH_VARIANTS = ("original", "knn", "idw", "dct", "mice", "gan")
DEFAULT_VARIANTS = ("original", "knn", "mice", "gan")
GENERATOR_LOSSES = ("non_saturating", "minimax")


def _check(condition, message):
    if not condition:
        raise ConfigError(message)


@dataclass(frozen=True)
class SamplingSettings:
    method: str = "fixed"
    n_points: int = 50
    ppp_intensity_per_m2: float = 0.0  # 0 selects n_points / room area
    readings_per_point: int = 150
    reading_noise_sigma_db: float = 2.0

    def __post_init__(self):
        _check(self.method in SAMPLING_METHODS, f"sampling.method must be one of {SAMPLING_METHODS}")
        _check(self.n_points >= 1, "sampling.n_points must be >= 1")
        _check(self.ppp_intensity_per_m2 >= 0, "sampling.ppp_intensity_per_m2 must be >= 0")
        _check(self.readings_per_point >= 1, "sampling.readings_per_point must be >= 1")
        _check(self.reading_noise_sigma_db >= 0, "sampling.reading_noise_sigma_db must be >= 0")


@dataclass(frozen=True)
class InterpolationSettings:
    knn_k: int = 3
    idw_p: float = 2.0
    idw_epsilon_m: float = 1e-6
    dct_num_coeffs: int = 12
    mice_max_iter: int = 50
    mice_tol: float = 1e-4
    mice_degree: int = 1
    mice_chains: int = 1
    mice_log_distance: bool = False  # add log10 distance-to-AP columns as MICE predictors

    def __post_init__(self):
        _check(self.knn_k >= 1, "interpolation.knn_k must be >= 1")
        _check(self.idw_p > 0, "interpolation.idw_p must be positive")
        _check(self.idw_epsilon_m > 0, "interpolation.idw_epsilon_m must be positive")
        _check(self.dct_num_coeffs >= 1, "interpolation.dct_num_coeffs must be >= 1")
        _check(self.mice_max_iter >= 1, "interpolation.mice_max_iter must be >= 1")
        _check(self.mice_tol > 0, "interpolation.mice_tol must be positive")
        _check(self.mice_degree in (1, 2, 3), "interpolation.mice_degree must be 1, 2 or 3")
        _check(self.mice_chains >= 1, "interpolation.mice_chains must be >= 1")


@dataclass(frozen=True)
class GanSettings:
    latent_dim: int = 8
    hidden: tuple = (32, 32)
    epochs: int = 300
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.5
    augment_n: int = 300
    generator_loss: str = "non_saturating"

    def __post_init__(self):
        _check(self.latent_dim >= 1, "gan.latent_dim must be >= 1")
        _check(all(h >= 1 for h in self.hidden), "gan.hidden sizes must be >= 1")
        _check(self.epochs >= 0, "gan.epochs must be >= 0")
        _check(self.batch_size >= 1, "gan.batch_size must be >= 1")
        _check(self.lr > 0, "gan.lr must be positive")
        _check(0 <= self.beta1 < 1, "gan.beta1 must be in [0, 1)")
        _check(self.augment_n >= 0, "gan.augment_n must be >= 0")
        _check(self.generator_loss in GENERATOR_LOSSES, f"gan.generator_loss must be one of {GENERATOR_LOSSES}")


@dataclass(frozen=True)
class LocalizerSettings:
    hidden: tuple = (64, 64)
    epochs: int = 2000
    lr: float = 1e-3
    batch_size: int = 32
    train_fraction: float = 0.9
    weight_decay: float = 0.0
    input_noise: float = 0.0  # in z-scored feature units

    def __post_init__(self):
        _check(all(h >= 1 for h in self.hidden), "localizer.hidden sizes must be >= 1")
        _check(self.epochs >= 1, "localizer.epochs must be >= 1")
        _check(self.lr > 0, "localizer.lr must be positive")
        _check(self.batch_size >= 1, "localizer.batch_size must be >= 1")
        _check(0 < self.train_fraction < 1, "localizer.train_fraction must be in (0, 1)")
        _check(self.weight_decay >= 0, "localizer.weight_decay must be >= 0")
        _check(self.input_noise >= 0, "localizer.input_noise must be >= 0")


@dataclass(frozen=True)
class BenchSettings:
    runs: int = 10
    base_seed: int = -1  # -1 falls back to the scenario seed
    variants: tuple = DEFAULT_VARIANTS
    workers: int = 1

    def __post_init__(self):
        _check(self.runs >= 1, "bench.runs must be >= 1")
        _check(len(self.variants) >= 1, "bench.variants must not be empty")
        _check(len(set(self.variants)) == len(self.variants), "bench.variants must be unique")
        unknown = [v for v in self.variants if v not in BENCH_VARIANTS]
        _check(not unknown, f"bench.variants has unknown entries {unknown}; allowed {BENCH_VARIANTS}")
        _check(self.workers >= 1, "bench.workers must be >= 1")


@dataclass(frozen=True)
class ScenarioConfig:
    room: RoomGeometry
    aps: tuple
    propagation: PropagationParams = field(default_factory=PropagationParams)
    seed: int = 0
    sampling: SamplingSettings = field(default_factory=SamplingSettings)
    interpolation: InterpolationSettings = field(default_factory=InterpolationSettings)
    gan: GanSettings = field(default_factory=GanSettings)
    localizer: LocalizerSettings = field(default_factory=LocalizerSettings)
    bench: BenchSettings = field(default_factory=BenchSettings)

    @property
    def ap_ids(self):
        return [ap.id for ap in self.aps]

    @property
    def base_seed(self):
        return self.seed if self.bench.base_seed < 0 else self.bench.base_seed

    def with_overrides(self, seed=None, runs=None):
        """Apply --seed / --runs command-line overrides"""
        config = self
        if seed is not None:
            config = replace(config, seed=int(seed), bench=replace(config.bench, base_seed=-1))
        if runs is not None:
            config = replace(config, bench=replace(config.bench, runs=int(runs)))
        return config


# --- PARSING ---

def _coerce(value, kind, key):
    """Check a JSON scalar against the dataclass field type"""
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{key} must be a finite number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(value)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        return value
    if kind is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list, got {value!r}")
        items = []
        for index, item in enumerate(value):
            if isinstance(item, str):
                items.append(item)
            else:
                items.append(_coerce(item, int, f"{key}[{index}]"))
        return tuple(items)
    raise ConfigError(f"{key}: unsupported field type")


def _build(cls, data, prefix):
    """Instantiate a flat settings dataclass from a JSON object, rejecting unknown keys"""
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix} must be a JSON object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key {prefix}.{unknown[0]}")
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = _coerce(value, known[name].type, f"{prefix}.{name}")
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{prefix}: {e}")


def _parse_aps(items, room):
    if not isinstance(items, list) or not items:
        raise ConfigError("aps must be a non-empty list")
    aps = []
    for index, item in enumerate(items):
        ap = _build(AccessPoint, item, f"aps[{index}]")
        check_ap_in_room(ap, room)
        aps.append(ap)
    ids = [ap.id for ap in aps]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"access point ids must be unique, got {ids}")
    return tuple(aps)


SECTIONS = {
    "propagation": PropagationParams,
    "sampling": SamplingSettings,
    "interpolation": InterpolationSettings,
    "gan": GanSettings,
    "localizer": LocalizerSettings,
    "bench": BenchSettings,
}


def parse_scenario(document):
    """Validate a scenario document and build a ScenarioConfig; no side effects"""
    if not isinstance(document, dict):
        raise ConfigError("scenario must be a JSON object")
    allowed = {"room", "aps", "seed"} | set(SECTIONS)
    unknown = sorted(set(document) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]}")
    for required in ("room", "aps"):
        if required not in document:
            raise ConfigError(f"missing required key {required}")

    room = _build(RoomGeometry, document["room"], "room")
    kwargs = {
        "room": room,
        "aps": _parse_aps(document["aps"], room),
        "seed": _coerce(document.get("seed", 0), int, "seed"),
    }
    for name, cls in SECTIONS.items():
        if name in document:
            kwargs[name] = _build(cls, document[name], name)

    config = ScenarioConfig(**kwargs)
    _check_feasible(config)
    return config


def _check_feasible(config):
    """Cross-section checks: every stage must be runnable on the sampled data"""
    room, sampling, interp = config.room, config.sampling, config.interpolation
    fixed = sampling.method == "fixed"
    if fixed and sampling.n_points > room.n_cells:
        raise ConfigError(f"sampling.n_points={sampling.n_points} exceeds the {room.n_cells} grid cells")
    if fixed or sampling.ppp_intensity_per_m2 == 0:
        expected = sampling.n_points
    else:
        expected = int(sampling.ppp_intensity_per_m2 * room.area_m2)

    _check(interp.knn_k <= expected, "interpolation.knn_k exceeds sampling.n_points")
    _check(interp.dct_num_coeffs <= expected,
           f"interpolation.dct_num_coeffs={interp.dct_num_coeffs} exceeds the {expected} sampled points")
    predictors = 1 + len(config.aps) + (len(config.aps) if interp.mice_log_distance else 0)
    terms = math.comb(predictors + interp.mice_degree, interp.mice_degree)
    _check(terms <= expected,
           f"interpolation.mice_degree={interp.mice_degree} needs {terms} regression terms, "
           f"more than the {expected} sampled points")

    n_train = math.floor(room.n_cells * config.localizer.train_fraction)
    _check(0 < n_train < room.n_cells,
           f"localizer.train_fraction={config.localizer.train_fraction} leaves an empty split of {room.n_cells} cells")
    _check(2 * config.gan.batch_size <= n_train,
           f"gan.batch_size={config.gan.batch_size} needs at least {2 * config.gan.batch_size} training cells, "
           f"the split leaves {n_train}")


def load_scenario(path):
    """Load and validate a scenario JSON file"""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
    config = parse_scenario(document)
    logger.info("Loaded scenario %s (%d APs, seed=%d)", path, len(config.aps), config.seed)
    return config
