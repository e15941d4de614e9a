"""
Measurement campaigns: where to measure, what the receiver reports, and the
CSV files the readings are kept in.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from modules.env_sim import RoomGeometry
from modules.interpolation import SparseGrid
from modules.utilis import (
    DomainError,
    InfeasibleError,
    ParseError,
    make_rng,
    parse_numeric_column,
    read_frame_csv,
    write_frame_csv,
)

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["point_id", "x_m", "y_m", "ap_id", "rss_dbm"]

# rejection-sampling budget per requested point
MAX_TRIES_PER_POINT = 1000


@dataclass
class MeasurementPoint:
    point_id: int
    position: tuple
    cell: tuple
    readings: dict = field(default_factory=dict)  # ap_id -> 1D array of rss_dbm

    def mean_rss(self, ap_id):
        return float(np.mean(self.readings[ap_id]))


@dataclass
class MeasurementSet:
    room: RoomGeometry
    ap_ids: list
    points: list = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        if not self.ap_ids:
            raise DomainError("a measurement set needs at least one ap_id")
        if len(set(self.ap_ids)) != len(self.ap_ids):
            raise DomainError(f"ap_ids must be unique, got {self.ap_ids}")
        point_ids = [p.point_id for p in self.points]
        if len(set(point_ids)) != len(point_ids):
            raise DomainError("point_ids must be unique")
        for point in self.points:
            extra = set(point.readings) - set(self.ap_ids)
            if extra:
                raise DomainError(f"point {point.point_id} references unknown ap_ids {sorted(extra)}")
            for ap_id, readings in point.readings.items():
                if len(readings) == 0:
                    raise DomainError(f"point {point.point_id} has no readings for {ap_id}")

    def __len__(self):
        return len(self.points)

    def to_frame(self):
        """One row per (point, AP, reading), in the CSV column order"""
        records = []
        for point in self.points:
            x_m, y_m = point.position
            for ap_id in self.ap_ids:
                for value in point.readings.get(ap_id, ()):
                    records.append((point.point_id, x_m, y_m, ap_id, float(value)))
        return pd.DataFrame.from_records(records, columns=CSV_COLUMNS)


# --- LOCATIONS ---

def sample_locations_ppp(room, intensity_per_m2, seed):
    """Homogeneous Poisson point process over the room"""
    if not (math.isfinite(intensity_per_m2) and intensity_per_m2 > 0):
        raise DomainError(f"PPP intensity must be positive, got {intensity_per_m2!r}")
    rng = make_rng(seed)
    # Number of points ~ Poisson(lambda * area); positions uniform given the count
    count = int(rng.poisson(intensity_per_m2 * room.area_m2))
    xs = rng.uniform(0.0, room.width_m, count)
    ys = rng.uniform(0.0, room.length_m, count)
    logger.debug("PPP drew %d points (expected %.2f)", count, intensity_per_m2 * room.area_m2)
    return [(float(x), float(y)) for x, y in zip(xs, ys)]


def sample_locations_fixed(room, n, seed):
    """Exactly n uniform positions, at most one per grid cell"""
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    if n > room.n_cells:
        raise InfeasibleError(f"cannot place {n} points in distinct cells of a {room.n_cells}-cell grid")

    rng = make_rng(seed)
    taken = set()
    locations = []
    tries = 0
    while len(locations) < n:
        tries += 1
        if tries > MAX_TRIES_PER_POINT * n:
            raise InfeasibleError(f"gave up after {tries - 1} draws with {len(locations)} of {n} cells filled")
        x_m = float(rng.uniform(0.0, room.width_m))
        y_m = float(rng.uniform(0.0, room.length_m))
        cell = quantize_to_grid((x_m, y_m), room)
        if cell in taken:
            continue
        taken.add(cell)
        locations.append((x_m, y_m))
    return locations


def sample_locations(room, settings, seed):
    """Measurement positions per the sampling settings (fixed count or PPP)"""
    if settings.method == "ppp":
        intensity = settings.ppp_intensity_per_m2 or settings.n_points / room.area_m2
        return sample_locations_ppp(room, intensity, seed)
    return sample_locations_fixed(room, settings.n_points, seed)


def quantize_to_grid(position, room):
    """Grid cell (row, col) containing a position; the far edges belong to the last cell"""
    x_m, y_m = position
    if not (math.isfinite(x_m) and math.isfinite(y_m)) or not room.contains(x_m, y_m):
        raise DomainError(f"position ({x_m}, {y_m}) lies outside the room")
    cell_h, cell_w = room.cell_size
    row = min(max(int(math.floor(y_m / cell_h)), 0), room.grid_rows - 1)
    col = min(max(int(math.floor(x_m / cell_w)), 0), room.grid_cols - 1)
    return row, col


# --- READINGS ---

def collect_measurements(truth, locations, readings_per_point, reading_noise_sigma_db, seed):
    """Simulate repeated noisy RSS reads at each location from the truth map"""
    if not locations:
        raise DomainError("no measurement locations given")
    if isinstance(readings_per_point, bool) or int(readings_per_point) != readings_per_point or readings_per_point < 1:
        raise DomainError(f"readings_per_point must be >= 1, got {readings_per_point!r}")
    if not reading_noise_sigma_db >= 0:
        raise DomainError("reading_noise_sigma_db must be >= 0")

    room = truth.geometry
    rng = make_rng(seed)
    points = []
    for point_id, position in enumerate(locations):
        cell = quantize_to_grid(position, room)
        noise = rng.normal(0.0, 1.0, (len(truth.ap_ids), int(readings_per_point)))
        readings = {}
        for index, ap_id in enumerate(truth.ap_ids):
            readings[ap_id] = truth.layers[index][cell] + reading_noise_sigma_db * noise[index]
        points.append(MeasurementPoint(point_id=point_id, position=tuple(position), cell=cell, readings=readings))

    logger.info(
        "Collected %d readings at %d points for %d APs",
        len(points) * readings_per_point * len(truth.ap_ids), len(points), len(truth.ap_ids),
    )
    return MeasurementSet(room=room, ap_ids=list(truth.ap_ids), points=points, seed=seed)


def to_sparse_grid(ms, ap_index):
    """Grid one AP's readings: per-point means, pooled per cell, everything else missing"""
    if isinstance(ap_index, bool) or not 0 <= ap_index < len(ms.ap_ids):
        raise DomainError(f"ap_index {ap_index!r} out of range for {len(ms.ap_ids)} APs")
    ap_id = ms.ap_ids[ap_index]

    pooled = {}
    for point in ms.points:
        if ap_id in point.readings:
            pooled.setdefault(point.cell, []).append(point.mean_rss(ap_id))

    rows, cols = ms.room.shape
    values = np.zeros((rows, cols))
    mask = np.zeros((rows, cols), dtype=bool)
    for cell, means in pooled.items():
        values[cell] = np.mean(means)
        mask[cell] = True

    cell_h, cell_w = ms.room.cell_size
    return SparseGrid(values=values, mask=mask, cell_h=cell_h, cell_w=cell_w)


# --- CSV ---

def save_csv(ms, path):
    """Write raw readings: point_id,x_m,y_m,ap_id,rss_dbm (UTF-8, LF)"""
    write_frame_csv(ms.to_frame(), path)
    logger.info("Saved %d measurement points to %s", len(ms), path)


def load_csv(path, room, ap_ids, seed=0):
    """Read a measurement CSV written by save_csv, validating every row"""
    df = read_frame_csv(path, CSV_COLUMNS)
    point_ids = parse_numeric_column(df, "point_id", path, integer=True)
    xs = parse_numeric_column(df, "x_m", path)
    ys = parse_numeric_column(df, "y_m", path)
    rss = parse_numeric_column(df, "rss_dbm", path)

    points = {}
    for index, (point_id, x_m, y_m, ap_id, value) in enumerate(zip(point_ids, xs, ys, df["ap_id"], rss)):
        line = index + 2
        if ap_id not in ap_ids:
            raise ParseError(f"unknown ap_id {ap_id!r}", line=line, path=path)
        if not room.contains(x_m, y_m):
            raise ParseError(f"position ({x_m}, {y_m}) lies outside the room", line=line, path=path)
        point = points.get(int(point_id))
        if point is None:
            point = MeasurementPoint(
                point_id=int(point_id),
                position=(float(x_m), float(y_m)),
                cell=quantize_to_grid((x_m, y_m), room),
            )
            points[int(point_id)] = point
        elif point.position != (float(x_m), float(y_m)):
            raise ParseError(f"point {point_id} changes position", line=line, path=path)
        point.readings.setdefault(ap_id, []).append(float(value))

    for point in points.values():
        point.readings = {ap_id: np.asarray(values) for ap_id, values in point.readings.items()}

    ms = MeasurementSet(room=room, ap_ids=list(ap_ids), points=list(points.values()), seed=seed)
    logger.info("Loaded %d measurement points (%d rows) from %s", len(ms), len(df), path)
    return ms
