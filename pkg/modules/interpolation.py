"""
Completing sparse RSS grids.

Four imputers share one contract: observed cells come back bit-unchanged and
every missing cell gets a finite value.

  knn_impute        unweighted mean of the k nearest observed cells
  idw_interpolate   Shepard inverse distance weighting
  dct_interpolate   least-squares fit of the lowest-frequency DCT-II basis
  mice_impute       chained-equations regression on the (x, y, rss...) table
"""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import fft

from modules.utilis import (
    DomainError,
    IllPosedError,
    NumericError,
    ParseError,
    derive_seed,
    make_rng,
    parse_numeric_column,
    read_frame_csv,
    write_frame_csv,
)

logger = logging.getLogger(__name__)

GRID_DUMP_COLUMNS = ["row", "col", "rss_dbm", "observed"]
LAYERS_COLUMNS = ["ap_id", "row", "col", "rss_dbm", "observed"]
METHODS = ("knn", "idw", "dct", "mice")


@dataclass
class SparseGrid:
    """Gridded RSS with an observed mask; distances use the cell pitch in meters"""
    values: np.ndarray
    mask: np.ndarray
    cell_h: float = 1.0
    cell_w: float = 1.0

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        self.mask = np.array(self.mask, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.mask.shape:
            raise DomainError(f"values {self.values.shape} and mask {self.mask.shape} must be equal 2D shapes")
        if not np.all(np.isfinite(self.values[self.mask])):
            raise DomainError("observed cells must hold finite values")
        if not (self.cell_h > 0 and self.cell_w > 0):
            raise DomainError("cell pitch must be positive")

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    @property
    def n_observed(self):
        return int(self.mask.sum())


@dataclass
class ImputationResult:
    completed: np.ndarray
    method: str
    observed: np.ndarray = None
    iterations: int = 0
    diagnostics: dict = field(default_factory=dict)

    def to_frame(self):
        rows, cols = np.indices(self.completed.shape)
        observed = self.observed if self.observed is not None else np.zeros(self.completed.shape, dtype=bool)
        return pd.DataFrame({
            "row": rows.ravel(),
            "col": cols.ravel(),
            "rss_dbm": self.completed.ravel(),
            "observed": observed.ravel().astype(int),
        })


def save_grid_csv(result, path):
    """Row-major single-layer dump: row,col,rss_dbm,observed"""
    write_frame_csv(result.to_frame()[GRID_DUMP_COLUMNS], path)


def save_layers_csv(results, ap_ids, path):
    """All completed AP layers in one file: ap_id,row,col,rss_dbm,observed"""
    frames = []
    for ap_id, result in zip(ap_ids, results):
        frame = result.to_frame()
        frame.insert(0, "ap_id", ap_id)
        frames.append(frame)
    write_frame_csv(pd.concat(frames, ignore_index=True), path)


def load_layers_csv(path, ap_ids, shape):
    """Read save_layers_csv output back into (layers, observed masks), both (M, rows, cols)"""
    df = read_frame_csv(path, LAYERS_COLUMNS)
    rows = parse_numeric_column(df, "row", path, integer=True)
    cols = parse_numeric_column(df, "col", path, integer=True)
    values = parse_numeric_column(df, "rss_dbm", path)
    observed = parse_numeric_column(df, "observed", path, integer=True)

    layers = np.full((len(ap_ids),) + tuple(shape), np.nan)
    masks = np.zeros(layers.shape, dtype=bool)
    for index, (ap_id, row, col, value, flag) in enumerate(zip(df["ap_id"], rows, cols, values, observed)):
        line = index + 2
        if ap_id not in ap_ids:
            raise ParseError(f"unknown ap_id {ap_id!r}", line=line, path=path)
        if not (0 <= row < shape[0] and 0 <= col < shape[1]):
            raise ParseError(f"cell ({row}, {col}) outside the {shape[0]}x{shape[1]} grid", line=line, path=path)
        if flag not in (0, 1):
            raise ParseError(f"observed must be 0 or 1, got {flag}", line=line, path=path)
        layer = ap_ids.index(ap_id)
        if not np.isnan(layers[layer, row, col]):
            raise ParseError(f"duplicate cell ({row}, {col}) for {ap_id}", line=line, path=path)
        layers[layer, row, col] = value
        masks[layer, row, col] = bool(flag)
    if np.isnan(layers).any():
        raise ParseError("completed grid is missing cells", path=path)
    return layers, masks


# --- DISTANCE HELPERS ---

def _split_cells(g):
    """Row-major (lexicographic) observed and missing cell indices"""
    flat_mask = g.mask.ravel()
    observed = np.flatnonzero(flat_mask)
    missing = np.flatnonzero(~flat_mask)
    return observed, missing


def _squared_distances(g, targets, sources):
    """Squared cell-center distances in meters between two sets of flat indices"""
    t_rows, t_cols = np.divmod(targets, g.cols)
    s_rows, s_cols = np.divmod(sources, g.cols)
    dy = (t_rows[:, None] - s_rows[None, :]) * g.cell_h
    dx = (t_cols[:, None] - s_cols[None, :]) * g.cell_w
    return dy * dy + dx * dx


def _finish(g, estimates, missing, method, **kwargs):
    completed = g.values.copy()
    completed.ravel()[missing] = estimates
    if not np.all(np.isfinite(completed)):
        raise NumericError(f"{method} produced non-finite values")
    return ImputationResult(completed=completed, method=method, observed=g.mask.copy(), **kwargs)


# --- K-NN ---

def knn_impute(g, k):
    """Fill each missing cell with the mean of its k nearest observed cells"""
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise DomainError(f"k must be a positive integer, got {k!r}")
    observed, missing = _split_cells(g)
    if len(observed) < k:
        raise DomainError(f"k-NN with k={k} needs at least {k} observed cells, got {len(observed)}")

    estimates = np.empty(len(missing))
    if len(missing):
        d2 = _squared_distances(g, missing, observed)
        # stable sort: equal distances keep row-major order of the candidates
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        observed_values = g.values.ravel()[observed]
        estimates = np.mean(observed_values[nearest], axis=1)
    return _finish(g, estimates, missing, "knn", diagnostics={"k": int(k)})


# --- IDW ---

def idw_interpolate(g, power_p=2.0, epsilon_m=1e-6):
    """Shepard interpolation with weights 1 / (d + eps)^p over all observed cells"""
    if not power_p > 0:
        raise DomainError(f"power_p must be positive, got {power_p!r}")
    if not epsilon_m > 0:
        raise DomainError(f"epsilon_m must be positive, got {epsilon_m!r}")
    observed, missing = _split_cells(g)
    if len(observed) == 0:
        raise DomainError("IDW needs at least one observed cell")

    estimates = np.empty(len(missing))
    if len(missing):
        distances = np.sqrt(_squared_distances(g, missing, observed))
        weights = 1.0 / (distances + epsilon_m) ** power_p
        q = g.values.ravel()[observed]
        estimates = (weights @ q) / weights.sum(axis=1)
    return _finish(g, estimates, missing, "idw", diagnostics={"power_p": float(power_p), "epsilon_m": float(epsilon_m)})


# --- DCT ---

@dataclass
class DctSpectrum:
    coefficients: np.ndarray
    norm: str = "ortho"  # orthonormal DCT-II


def _check_matrix(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.size == 0:
        raise DomainError(f"expected a nonempty 2D matrix, got shape {x.shape}")
    return x


def dct2_forward(x):
    """Orthonormal 2D DCT-II"""
    x = _check_matrix(x)
    return DctSpectrum(coefficients=fft.dctn(x, type=2, norm="ortho"))


def dct2_inverse(spectrum):
    """Inverse of dct2_forward"""
    coefficients = _check_matrix(spectrum.coefficients)
    return fft.idctn(coefficients, type=2, norm="ortho")


def zigzag_order(n1, n2):
    """Frequency pairs (k1, k2) sorted by k1 + k2, ties by k1"""
    pairs = itertools.product(range(n1), range(n2))
    return sorted(pairs, key=lambda k: (k[0] + k[1], k[0]))


def _dct_axis_basis(n):
    # column k holds the k-th orthonormal DCT-II basis vector of length n
    samples = np.arange(n)[:, None]
    freqs = np.arange(n)[None, :]
    basis = np.cos(np.pi * (2 * samples + 1) * freqs / (2 * n)) * np.sqrt(2.0 / n)
    basis[:, 0] = np.sqrt(1.0 / n)
    return basis


def dct_design_matrix(n1, n2, num_coeffs):
    """(n1*n2, num_coeffs) matrix of the lowest-frequency 2D basis images, row-major cells"""
    rows_basis = _dct_axis_basis(n1)
    cols_basis = _dct_axis_basis(n2)
    columns = []
    for k1, k2 in zigzag_order(n1, n2)[:num_coeffs]:
        columns.append(np.outer(rows_basis[:, k1], cols_basis[:, k2]).ravel())
    return np.column_stack(columns)


def dct_interpolate(g, num_coeffs):
    """Fit a truncated low-frequency DCT expansion to the observed cells"""
    if isinstance(num_coeffs, bool) or int(num_coeffs) != num_coeffs or num_coeffs < 1:
        raise DomainError(f"num_coeffs must be a positive integer, got {num_coeffs!r}")
    observed, missing = _split_cells(g)
    if num_coeffs > len(observed):
        raise DomainError(f"num_coeffs={num_coeffs} exceeds the {len(observed)} observed cells")
    if num_coeffs > g.rows * g.cols:
        raise DomainError(f"num_coeffs={num_coeffs} exceeds the {g.rows * g.cols} basis functions")

    design = dct_design_matrix(g.rows, g.cols, int(num_coeffs))
    target = g.values.ravel()[observed]
    coefficients, _, rank, singular_values = np.linalg.lstsq(design[observed], target, rcond=None)
    if rank < num_coeffs:
        raise IllPosedError(f"DCT design on the observed cells has rank {rank} < {num_coeffs}")

    fitted = design @ coefficients
    residual = target - fitted[observed]
    diagnostics = {
        "num_coeffs": int(num_coeffs),
        "rank": int(rank),
        "condition": float(singular_values[0] / singular_values[-1]),
        "fit_rmse": float(np.sqrt(np.mean(residual ** 2))),
    }
    return _finish(g, fitted[missing], missing, "dct", diagnostics=diagnostics)


# --- MICE ---

def _design(predictors, degree):
    """Intercept plus all monomials of the predictors up to the given degree"""
    n, p = predictors.shape
    columns = [np.ones(n)]
    for d in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(p), d):
            columns.append(np.prod(predictors[:, combo], axis=1))
    return np.column_stack(columns)


def _mice_chain(table, mask, order, max_iter, tol, degree, rng):
    filled = table.copy()
    column_means = np.array([table[mask[:, j], j].mean() for j in range(table.shape[1])])
    for j in range(table.shape[1]):
        filled[~mask[:, j], j] = column_means[j]

    history = []
    fallbacks = []
    iterations = 0
    for iteration in range(1, max_iter + 1):
        iterations = iteration
        max_change = 0.0
        for j in order:
            others = [c for c in range(table.shape[1]) if c != j]
            fit_rows = mask[:, j] & mask[:, others].all(axis=1)
            missing_rows = ~mask[:, j]

            x_fit = filled[np.ix_(fit_rows, others)]
            # standardize on the fitting rows to keep the normal equations well conditioned
            center = x_fit.mean(axis=0) if len(x_fit) else np.zeros(len(others))
            scale = x_fit.std(axis=0) if len(x_fit) else np.ones(len(others))
            scale = np.where(scale > 0, scale, 1.0)
            design_fit = _design((x_fit - center) / scale, degree)

            prediction = None
            if design_fit.shape[0] >= design_fit.shape[1]:
                beta, _, rank, _ = np.linalg.lstsq(design_fit, filled[fit_rows, j], rcond=None)
                if rank == design_fit.shape[1]:
                    x_miss = (filled[np.ix_(missing_rows, others)] - center) / scale
                    prediction = _design(x_miss, degree) @ beta
                    if rng is not None:
                        residual = filled[fit_rows, j] - design_fit @ beta
                        dof = max(design_fit.shape[0] - design_fit.shape[1], 1)
                        sigma = np.sqrt(residual @ residual / dof)
                        prediction = prediction + rng.normal(0.0, sigma, prediction.shape)
            if prediction is None:
                fallbacks.append({"iteration": iteration, "column": int(j)})
                prediction = np.full(int(missing_rows.sum()), column_means[j])

            change = np.max(np.abs(prediction - filled[missing_rows, j]))
            max_change = max(max_change, float(change))
            filled[missing_rows, j] = prediction

        if not np.all(np.isfinite(filled)):
            raise NumericError(f"MICE diverged at sweep {iteration}")
        history.append(max_change)
        logger.debug("MICE sweep %d: max change %.3g", iteration, max_change)
        if max_change < tol:
            break
    return filled, iterations, history, fallbacks


def mice_impute(table, mask=None, max_iter=50, tol=1e-4, seed=0, degree=1, n_chains=1, draw_noise=False):
    """
    Multiple imputation by chained equations on a numeric table.

    table: (n_rows, n_cols) array; missing entries may hold anything (NaN is fine).
    mask: True where observed; derived from NaN when omitted.
    Columns with missing entries are swept fewest-missing first. Each is regressed by
    OLS on the other columns over the rows where it and all its predictors are observed,
    and its missing entries are replaced by the predictions. Sweeps stop once the largest
    change of any imputed entry drops below tol, or after max_iter sweeps.

    With draw_noise the predictions get Gaussian residual noise; with n_chains > 1
    independent seeded chains are averaged.
    """
    table = np.array(table, dtype=float)
    if table.ndim != 2:
        raise DomainError(f"MICE expects a 2D table, got shape {table.shape}")
    mask = ~np.isnan(table) if mask is None else np.array(mask, dtype=bool)
    if mask.shape != table.shape:
        raise DomainError("mask shape differs from table shape")
    n_rows, n_cols = table.shape
    if n_cols < 2:
        raise DomainError("MICE needs at least two columns")
    observed_counts = mask.sum(axis=0)
    thin = [int(j) for j in np.flatnonzero(observed_counts < 2)]
    if thin:
        raise DomainError(f"columns {thin} have fewer than two observed values")
    if not np.all(np.isfinite(table[mask])):
        raise DomainError("observed table entries must be finite")
    if isinstance(max_iter, bool) or int(max_iter) != max_iter or max_iter < 1:
        raise DomainError(f"max_iter must be a positive integer, got {max_iter!r}")
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol!r}")

    observed_grid = mask.copy()
    if mask.all():
        return ImputationResult(completed=table, method="mice", observed=observed_grid, iterations=0,
                                diagnostics={"history": [], "fallbacks": [], "converged": True})

    missing_counts = n_rows - observed_counts
    order = sorted((j for j in range(n_cols) if missing_counts[j] > 0), key=lambda j: (missing_counts[j], j))

    chains = []
    for chain in range(int(n_chains)):
        rng = make_rng(derive_seed(seed, "mice", chain)) if draw_noise else None
        chains.append(_mice_chain(table, mask, order, int(max_iter), tol, int(degree), rng))

    completed = np.mean([c[0] for c in chains], axis=0)
    completed[mask] = table[mask]
    iterations = max(c[1] for c in chains)
    history = chains[0][2]
    diagnostics = {
        "history": history,
        "fallbacks": [f for c in chains for f in c[3]],
        "converged": all(c[2][-1] < tol for c in chains),
        "column_order": order,
        "n_chains": int(n_chains),
    }
    if diagnostics["fallbacks"]:
        logger.warning("MICE fell back to column means %d times", len(diagnostics["fallbacks"]))
    return ImputationResult(completed=completed, method="mice", observed=observed_grid,
                            iterations=iterations, diagnostics=diagnostics)


# --- TABLE VIEW ---

def sparse_grid_to_table(grids, ap_ids=None):
    """One row per cell (row-major): x_m, y_m of the cell center, then one rss column per layer (NaN = missing)"""
    if not grids:
        raise DomainError("no grids given")
    first = grids[0]
    for g in grids[1:]:
        if g.values.shape != first.values.shape or (g.cell_h, g.cell_w) != (first.cell_h, first.cell_w):
            raise DomainError("all layers must share grid dimensions and cell pitch")
    ap_ids = list(ap_ids) if ap_ids is not None else [str(i) for i in range(len(grids))]
    if len(ap_ids) != len(grids):
        raise DomainError("one ap_id per grid layer is required")

    rows, cols = np.indices(first.values.shape)
    table = pd.DataFrame({
        "x_m": ((cols + 0.5) * first.cell_w).ravel(),
        "y_m": ((rows + 0.5) * first.cell_h).ravel(),
    })
    for ap_id, g in zip(ap_ids, grids):
        table[f"rss_{ap_id}"] = np.where(g.mask, g.values, np.nan).ravel()
    return table


def add_log_distance_columns(table, anchors, floor_m=0.1):
    """Append log10(distance to each anchor) columns, floored at floor_m"""
    table = table.copy()
    xs = table["x_m"].to_numpy(dtype=float)
    ys = table["y_m"].to_numpy(dtype=float)
    for index, (x_m, y_m) in enumerate(anchors):
        table[f"logd_{index}"] = np.log10(np.maximum(np.hypot(xs - x_m, ys - y_m), floor_m))
    return table


def table_to_sparse_grids(table, rows, cols, cell_h=1.0, cell_w=1.0):
    """Inverse of sparse_grid_to_table: one SparseGrid per rss column"""
    if len(table) != rows * cols:
        raise DomainError(f"table has {len(table)} rows, expected {rows * cols}")
    grids = []
    for column in table.columns[2:]:
        values = table[column].to_numpy(dtype=float).reshape(rows, cols)
        mask = ~np.isnan(values)
        grids.append(SparseGrid(values=np.where(mask, values, 0.0), mask=mask, cell_h=cell_h, cell_w=cell_w))
    return grids


# --- DISPATCH ---

def impute_layers(grids, method, settings, ap_ids=None, seed=0, anchors=None):
    """Complete every AP layer with one method; MICE works on the joint table.

    anchors are the (x, y) AP positions; with settings.mice_log_distance they add
    one fully observed log10-distance predictor per AP to the MICE table.
    """
    if method not in METHODS:
        raise DomainError(f"unknown imputation method {method!r}; expected one of {METHODS}")
    if method == "knn":
        return [knn_impute(g, settings.knn_k) for g in grids]
    if method == "idw":
        return [idw_interpolate(g, settings.idw_p, settings.idw_epsilon_m) for g in grids]
    if method == "dct":
        return [dct_interpolate(g, settings.dct_num_coeffs) for g in grids]

    table = sparse_grid_to_table(grids, ap_ids)
    if settings.mice_log_distance and anchors:
        table = add_log_distance_columns(table, anchors)
    result = mice_impute(
        table.to_numpy(dtype=float),
        max_iter=settings.mice_max_iter,
        tol=settings.mice_tol,
        seed=derive_seed(seed, "mice"),
        degree=settings.mice_degree,
        n_chains=settings.mice_chains,
        draw_noise=settings.mice_chains > 1,
    )
    logger.info("MICE finished after %d sweeps", result.iterations)
    layers = []
    for index, g in enumerate(grids):
        completed = result.completed[:, 2 + index].reshape(g.values.shape)
        completed[g.mask] = g.values[g.mask]
        layers.append(ImputationResult(completed=completed, method="mice", observed=g.mask.copy(),
                                       iterations=result.iterations, diagnostics=result.diagnostics))
    return layers


def compare_imputers(truth, grids, settings, seed=0, methods=METHODS, anchors=None):
    """Error of every imputer against the ground truth over the unmeasured cells"""
    records = []
    for method in methods:
        results = impute_layers(grids, method, settings, ap_ids=truth.ap_ids, seed=seed, anchors=anchors)
        for index, (ap_id, result) in enumerate(zip(truth.ap_ids, results)):
            missing = ~grids[index].mask
            error = result.completed[missing] - truth.layers[index][missing]
            records.append({
                "method": method,
                "ap_id": ap_id,
                "n_missing": int(missing.sum()),
                "rmse_db": float(np.sqrt(np.mean(error ** 2))) if error.size else 0.0,
                "max_abs_error_db": float(np.max(np.abs(error))) if error.size else 0.0,
            })
    return pd.DataFrame.from_records(records)
