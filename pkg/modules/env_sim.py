"""
Synthetic ground truth for indoor RSS maps.

Log-distance path loss anchored on Friis free-space loss at the reference
distance, plus optional log-normal shadowing drawn per cell and per access
point. Coordinates: x runs along the room width (grid columns), y along the
room length (grid rows).
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from modules.utilis import (
    ConfigError,
    DomainError,
    ParseError,
    make_rng,
    parse_numeric_column,
    read_frame_csv,
    write_frame_csv,
)

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
TRUTH_COLUMNS = ["ap_id", "row", "col", "x_m", "y_m", "rss_dbm"]


@dataclass(frozen=True)
class RoomGeometry:
    width_m: float = 10.75
    length_m: float = 17.4
    grid_rows: int = 30
    grid_cols: int = 10

    def __post_init__(self):
        for name in ("width_m", "length_m"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"room.{name} must be positive, got {value!r}")
        for name in ("grid_rows", "grid_cols"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 2:
                raise ConfigError(f"room.{name} must be an integer >= 2, got {value!r}")

    @property
    def cell_size(self):
        """(cell_h, cell_w) in meters: rows span the length, columns the width"""
        return self.length_m / self.grid_rows, self.width_m / self.grid_cols

    @property
    def shape(self):
        return self.grid_rows, self.grid_cols

    @property
    def n_cells(self):
        return self.grid_rows * self.grid_cols

    @property
    def area_m2(self):
        return self.width_m * self.length_m

    def contains(self, x_m, y_m):
        return 0.0 <= x_m <= self.width_m and 0.0 <= y_m <= self.length_m

    def cell_center(self, row, col):
        cell_h, cell_w = self.cell_size
        return (col + 0.5) * cell_w, (row + 0.5) * cell_h

    def cell_centers(self):
        """Meshgrids (xs, ys) of every cell center, shape (rows, cols)"""
        cell_h, cell_w = self.cell_size
        xs = (np.arange(self.grid_cols) + 0.5) * cell_w
        ys = (np.arange(self.grid_rows) + 0.5) * cell_h
        return np.meshgrid(xs, ys)


@dataclass(frozen=True)
class AccessPoint:
    id: str
    x_m: float
    y_m: float
    tx_power_dbm: float = 21.0
    frequency_hz: float = 2.4e9

    def __post_init__(self):
        if not self.id:
            raise ConfigError("access point id must be a non-empty string")
        if not (math.isfinite(self.frequency_hz) and self.frequency_hz > 0):
            raise ConfigError(f"ap {self.id}: frequency_hz must be positive, got {self.frequency_hz!r}")
        if not math.isfinite(self.tx_power_dbm):
            raise ConfigError(f"ap {self.id}: tx_power_dbm must be finite")

    @property
    def position(self):
        return self.x_m, self.y_m


@dataclass(frozen=True)
class PropagationParams:
    path_loss_exponent: float = 2.5
    reference_distance_m: float = 1.0
    shadowing_sigma_db: float = 4.0
    min_distance_m: float = 0.1

    def __post_init__(self):
        if not self.path_loss_exponent >= 1:
            raise ConfigError(f"propagation.path_loss_exponent must be >= 1, got {self.path_loss_exponent!r}")
        if not self.reference_distance_m > 0:
            raise ConfigError("propagation.reference_distance_m must be positive")
        if not self.shadowing_sigma_db >= 0:
            raise ConfigError("propagation.shadowing_sigma_db must be >= 0")
        if not self.min_distance_m > 0:
            raise ConfigError("propagation.min_distance_m must be positive")


@dataclass
class RFMap:
    """Dense RSS grid, one layer per access point; layers has shape (M, rows, cols)"""
    geometry: RoomGeometry
    ap_ids: list
    layers: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.layers = np.asarray(self.layers, dtype=float)
        expected = (len(self.ap_ids),) + self.geometry.shape
        if self.layers.shape != expected:
            raise DomainError(f"RFMap layers have shape {self.layers.shape}, expected {expected}")
        if not np.all(np.isfinite(self.layers)):
            raise DomainError("RFMap contains non-finite RSS values")

    def layer(self, ap_id):
        return self.layers[self.ap_ids.index(ap_id)]


def free_space_path_loss(distance_m, frequency_hz):
    """Friis free-space path loss in dB: 20*log10(4*pi*d*f/c)"""
    distance = np.asarray(distance_m, dtype=float)
    frequency = np.asarray(frequency_hz, dtype=float)
    if np.any(~(distance > 0)) or np.any(~(frequency > 0)):
        raise DomainError("free-space path loss needs positive distance and frequency")
    loss = 20.0 * np.log10(4.0 * np.pi * distance * frequency / SPEED_OF_LIGHT)
    return float(loss) if loss.ndim == 0 else loss


def _rss_field(ap, xs, ys, params, shadowing):
    # scalar and grid evaluation share this path
    distance = np.hypot(np.asarray(xs, dtype=float) - ap.x_m, np.asarray(ys, dtype=float) - ap.y_m)
    distance = np.maximum(distance, params.min_distance_m)
    anchor = free_space_path_loss(params.reference_distance_m, ap.frequency_hz)
    log_term = 10.0 * params.path_loss_exponent * np.log10(distance / params.reference_distance_m)
    return ap.tx_power_dbm - anchor - log_term + params.shadowing_sigma_db * shadowing


def check_ap_in_room(ap, room):
    if not room.contains(ap.x_m, ap.y_m):
        raise ConfigError(
            f"ap {ap.id} at ({ap.x_m}, {ap.y_m}) lies outside the {room.width_m} m x {room.length_m} m room"
        )


def rss_at_point(ap, point, params, shadowing_sample=0.0, *, room):
    """RSS in dBm received at point from ap; the point must lie inside room"""
    x_m, y_m = point
    if not (math.isfinite(x_m) and math.isfinite(y_m)):
        raise DomainError(f"point {point!r} is not finite")
    if not room.contains(x_m, y_m):
        raise DomainError(f"point ({x_m}, {y_m}) lies outside the room")
    return float(_rss_field(ap, x_m, y_m, params, shadowing_sample))


def generate_ground_truth(room, aps, params, seed):
    """Evaluate every AP at every cell center, with per-cell shadowing from the seeded RNG"""
    if not aps:
        raise ConfigError("at least one access point is required")
    ids = [ap.id for ap in aps]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"access point ids must be unique, got {ids}")
    for ap in aps:
        check_ap_in_room(ap, room)

    rng = make_rng(seed)
    # fixed draw shape: the field for a given seed does not depend on sigma
    shadowing = rng.standard_normal((len(aps),) + room.shape)
    xs, ys = room.cell_centers()

    layers = np.empty((len(aps),) + room.shape)
    for index, ap in enumerate(aps):
        layers[index] = _rss_field(ap, xs, ys, params, shadowing[index])

    logger.info(
        "Generated ground truth for %d APs on a %dx%d grid (seed=%d)",
        len(aps), room.grid_rows, room.grid_cols, seed,
    )
    return RFMap(geometry=room, ap_ids=ids, layers=layers)


def truth_to_frame(truth):
    """Long-format view of an RFMap: ap_id,row,col,x_m,y_m,rss_dbm"""
    xs, ys = truth.geometry.cell_centers()
    rows, cols = np.indices(truth.geometry.shape)
    frames = []
    for index, ap_id in enumerate(truth.ap_ids):
        frames.append(pd.DataFrame({
            "ap_id": ap_id,
            "row": rows.ravel(),
            "col": cols.ravel(),
            "x_m": xs.ravel(),
            "y_m": ys.ravel(),
            "rss_dbm": truth.layers[index].ravel(),
        }))
    return pd.concat(frames, ignore_index=True)


def truth_from_frame(df, room, ap_ids):
    """Inverse of truth_to_frame; every (ap, cell) must appear exactly once"""
    layers = np.full((len(ap_ids),) + room.shape, np.nan)
    for ap_id, row, col, value in zip(df["ap_id"], df["row"], df["col"], df["rss_dbm"]):
        if ap_id not in ap_ids:
            raise DomainError(f"unknown ap_id {ap_id!r} in ground-truth grid")
        if not (0 <= row < room.grid_rows and 0 <= col < room.grid_cols):
            raise DomainError(f"cell ({row}, {col}) outside the {room.grid_rows}x{room.grid_cols} grid")
        layers[ap_ids.index(ap_id), row, col] = value
    if np.isnan(layers).any():
        raise DomainError("ground-truth grid is incomplete")
    return RFMap(geometry=room, ap_ids=list(ap_ids), layers=layers)


def save_truth_csv(truth, path):
    write_frame_csv(truth_to_frame(truth), path)
    logger.info("Saved ground truth (%d APs) to %s", len(truth.ap_ids), path)


def load_truth_csv(path, room, ap_ids):
    """Read a ground-truth grid CSV written by save_truth_csv"""
    df = read_frame_csv(path, TRUTH_COLUMNS)
    frame = pd.DataFrame({
        "ap_id": df["ap_id"],
        "row": parse_numeric_column(df, "row", path, integer=True),
        "col": parse_numeric_column(df, "col", path, integer=True),
        "rss_dbm": parse_numeric_column(df, "rss_dbm", path),
    })
    duplicated = frame.duplicated(subset=["ap_id", "row", "col"])
    if duplicated.any():
        raise ParseError("duplicate (ap_id, row, col)", line=int(np.flatnonzero(duplicated.to_numpy())[0]) + 2,
                         path=path)
    try:
        return truth_from_frame(frame, room, list(ap_ids))
    except DomainError as e:
        raise ParseError(str(e), path=path)
