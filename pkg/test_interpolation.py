import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modules.env_sim import PropagationParams, generate_ground_truth
from modules.interpolation import (
    GRID_DUMP_COLUMNS,
    DctSpectrum,
    SparseGrid,
    add_log_distance_columns,
    compare_imputers,
    dct2_forward,
    dct2_inverse,
    dct_design_matrix,
    dct_interpolate,
    idw_interpolate,
    impute_layers,
    knn_impute,
    load_layers_csv,
    mice_impute,
    save_grid_csv,
    save_layers_csv,
    sparse_grid_to_table,
    table_to_sparse_grids,
    zigzag_order,
)
from modules.sampling import collect_measurements, sample_locations_fixed, to_sparse_grid
from modules.scenario import InterpolationSettings
from modules.utilis import DomainError, IllPosedError, make_rng


def _grid(values, mask):
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    return SparseGrid(values=np.where(mask, values, 0.0), mask=mask)


@st.composite
def sparse_grids(draw):
    rows = draw(st.integers(2, 6))
    cols = draw(st.integers(2, 6))
    n_observed = draw(st.integers(1, min(8, rows * cols)))
    cells = draw(st.lists(st.integers(0, rows * cols - 1), min_size=n_observed, max_size=n_observed, unique=True))
    values = draw(st.lists(st.floats(-100.0, -20.0), min_size=rows * cols, max_size=rows * cols))
    mask = np.zeros(rows * cols, dtype=bool)
    mask[cells] = True
    return _grid(np.reshape(values, (rows, cols)), mask.reshape(rows, cols))


def naive_knn(g, k):
    out = g.values.copy()
    observed = [(r, c) for r in range(g.rows) for c in range(g.cols) if g.mask[r, c]]
    for r in range(g.rows):
        for c in range(g.cols):
            if g.mask[r, c]:
                continue
            ranked = sorted(observed, key=lambda rc: ((rc[0] - r) ** 2 + (rc[1] - c) ** 2, rc[0] * g.cols + rc[1]))
            out[r, c] = np.mean(np.array([g.values[rc] for rc in ranked[:k]]))
    return out


def naive_idw(g, p, eps):
    out = g.values.copy()
    observed = [(r, c) for r in range(g.rows) for c in range(g.cols) if g.mask[r, c]]
    for r in range(g.rows):
        for c in range(g.cols):
            if g.mask[r, c]:
                continue
            num = den = 0.0
            for rc in observed:
                w = 1.0 / (np.hypot(rc[0] - r, rc[1] - c) + eps) ** p
                num += w * g.values[rc]
                den += w
            out[r, c] = num / den
    return out


# --- k-NN / IDW ---

@given(g=sparse_grids(), k=st.integers(1, 8))
@settings(max_examples=500, deadline=None)
def test_knn_matches_brute_force(g, k):
    k = min(k, g.n_observed)
    np.testing.assert_array_equal(knn_impute(g, k).completed, naive_knn(g, k))


@given(g=sparse_grids(), p=st.floats(0.5, 4.0))
@settings(max_examples=500, deadline=None)
def test_idw_matches_direct_sum(g, p):
    np.testing.assert_allclose(idw_interpolate(g, p, 1e-6).completed, naive_idw(g, p, 1e-6), rtol=1e-12, atol=1e-12)


@given(g=sparse_grids())
@settings(max_examples=100, deadline=None)
def test_imputers_stay_within_observed_range_and_keep_observed(g):
    observed = g.values[g.mask]
    for result in (knn_impute(g, 1), idw_interpolate(g)):
        np.testing.assert_array_equal(result.completed[g.mask], observed)
        assert result.completed.min() >= observed.min() - 1e-9
        assert result.completed.max() <= observed.max() + 1e-9


def test_knn_single_source_fills_grid():
    mask = np.zeros((4, 3), dtype=bool)
    mask[2, 1] = True
    result = knn_impute(_grid(np.full((4, 3), -55.0), mask), 1)
    assert np.all(result.completed == -55.0)


def test_knn_equidistant_pair_is_averaged():
    values = np.zeros((1, 3))
    values[0, 0], values[0, 2] = 10.0, 20.0
    result = knn_impute(_grid(values, [[True, False, True]]), 2)
    assert result.completed[0, 1] == 15.0


def test_knn_needs_k_observed():
    with pytest.raises(DomainError):
        knn_impute(_grid(np.zeros((3, 3)), np.eye(3, dtype=bool)), 4)


def test_idw_equidistant_pair_ignores_power():
    values = np.zeros((1, 3))
    values[0, 0], values[0, 2] = -40.0, -60.0
    for p in (0.5, 2.0, 5.0):
        result = idw_interpolate(_grid(values, [[True, False, True]]), p)
        assert result.completed[0, 1] == pytest.approx(-50.0, abs=1e-12)


def test_distances_use_cell_pitch():
    # with tall cells the horizontal neighbour is nearer
    values = np.array([[-40.0, 0.0], [-60.0, 0.0]])
    mask = np.array([[True, False], [True, False]])
    g = SparseGrid(values=np.where(mask, values, 0.0), mask=mask, cell_h=5.0, cell_w=1.0)
    assert knn_impute(g, 1).completed[0, 1] == -40.0
    assert knn_impute(g, 1).completed[1, 1] == -60.0


def test_idw_rejects_empty_grid():
    with pytest.raises(DomainError):
        idw_interpolate(_grid(np.zeros((2, 2)), np.zeros((2, 2), dtype=bool)))


# --- DCT ---

def test_dct_round_trip_and_parseval():
    rng = make_rng(0)
    for _ in range(200):
        shape = tuple(rng.integers(1, 33, size=2))
        x = rng.normal(size=shape)
        spectrum = dct2_forward(x)
        assert np.max(np.abs(dct2_inverse(spectrum) - x)) < 1e-9
        assert abs(np.sum(spectrum.coefficients ** 2) - np.sum(x ** 2)) < 1e-9


def test_dct_constant_grid_has_only_dc():
    coefficients = dct2_forward(np.full((6, 4), -3.0)).coefficients
    assert coefficients[0, 0] == pytest.approx(-3.0 * np.sqrt(24), abs=1e-9)
    coefficients[0, 0] = 0.0
    assert np.max(np.abs(coefficients)) < 1e-9


def test_dct_design_matches_inverse_transform():
    design = dct_design_matrix(5, 3, 15)
    for column, (k1, k2) in enumerate(zigzag_order(5, 3)):
        unit = np.zeros((5, 3))
        unit[k1, k2] = 1.0
        np.testing.assert_allclose(design[:, column], dct2_inverse(DctSpectrum(unit)).ravel(), atol=1e-12)


def test_zigzag_starts_at_dc():
    assert zigzag_order(3, 3)[:4] == [(0, 0), (0, 1), (1, 0), (0, 2)]


def test_dct_dc_fit_of_constant_observations():
    mask = np.zeros((5, 5), dtype=bool)
    mask[[0, 2, 4], [1, 3, 0]] = True
    result = dct_interpolate(_grid(np.full((5, 5), -47.0), mask), 1)
    np.testing.assert_allclose(result.completed, -47.0, atol=1e-9)


def test_dct_full_basis_reconstructs_fully_observed_grid():
    values = make_rng(3).normal(-60, 5, (4, 5))
    result = dct_interpolate(_grid(values, np.ones((4, 5), dtype=bool)), 20)
    np.testing.assert_allclose(result.completed, values, atol=1e-6)
    assert result.diagnostics["fit_rmse"] < 1e-6


def test_dct_too_many_coefficients():
    mask = np.zeros((4, 4), dtype=bool)
    mask[0, :3] = True
    with pytest.raises(DomainError):
        dct_interpolate(_grid(np.zeros((4, 4)), mask), 4)


def test_dct_rank_deficient_observations():
    # a single observed row cannot separate vertical frequencies
    mask = np.zeros((4, 4), dtype=bool)
    mask[0, :] = True
    mask[1, 0] = True
    with pytest.raises(IllPosedError):
        dct_interpolate(_grid(np.zeros((4, 4)), mask), 5)


def test_dct_beats_knn_on_low_frequency_field():
    rng = make_rng(2024)
    rows, cols = 30, 10
    pairs = [k for k in zigzag_order(rows, cols) if k[0] + k[1] <= 3]
    design = dct_design_matrix(rows, cols, len(pairs))
    truth = (-60.0 + design @ rng.normal(0.0, 20.0, len(pairs))).reshape(rows, cols)
    mask = np.zeros(rows * cols, dtype=bool)
    mask[rng.choice(rows * cols, 50, replace=False)] = True
    g = _grid(truth, mask.reshape(rows, cols))
    missing = ~g.mask

    def rmse(result):
        return np.sqrt(np.mean((result.completed[missing] - truth[missing]) ** 2))

    assert rmse(dct_interpolate(g, 12)) < rmse(knn_impute(g, 3))


# --- MICE ---

def test_mice_complete_table_unchanged():
    table = make_rng(1).normal(size=(10, 3))
    result = mice_impute(table)
    np.testing.assert_array_equal(result.completed, table)
    assert result.iterations == 0


def test_mice_recovers_exact_linear_dependency():
    a = np.arange(12, dtype=float)
    table = np.column_stack([a, 2 * a + 1])
    table[5, 1] = np.nan
    result = mice_impute(table)
    assert result.completed[5, 1] == pytest.approx(11.0, abs=1e-8)


def _correlated_table(seed):
    rng = make_rng(seed)
    factor = rng.normal(size=(200, 1))
    return factor @ rng.uniform(0.8, 1.2, (1, 5)) + 0.3 * rng.normal(size=(200, 5))


def _mcar(table, seed):
    mask = make_rng(seed).uniform(size=table.shape) >= 0.2
    masked = np.where(mask, table, np.nan)
    return masked, mask


def _mice_vs_mean_fill(seed):
    truth = _correlated_table(seed)
    masked, mask = _mcar(truth, seed + 1000)
    completed = mice_impute(masked).completed
    mean_fill = np.where(mask, truth, np.nanmean(masked, axis=0))
    rmse_mice = np.sqrt(np.mean((completed - truth)[~mask] ** 2))
    rmse_mean = np.sqrt(np.mean((mean_fill - truth)[~mask] ** 2))
    return rmse_mice, rmse_mean


def test_mice_beats_mean_fill():
    rmse_mice, rmse_mean = _mice_vs_mean_fill(0)
    assert rmse_mice < rmse_mean


@pytest.mark.slow
def test_mice_beats_mean_fill_across_mask_seeds():
    wins = sum(np.less(*_mice_vs_mean_fill(seed)) for seed in range(100))
    assert wins >= 95


def test_mice_chains_are_deterministic():
    masked, _ = _mcar(_correlated_table(4), 5)
    first = mice_impute(masked, seed=9, n_chains=3, draw_noise=True).completed
    second = mice_impute(masked, seed=9, n_chains=3, draw_noise=True).completed
    np.testing.assert_array_equal(first, second)
    assert np.all(np.isfinite(first))


def test_mice_rejects_empty_column():
    table = make_rng(0).normal(size=(6, 3))
    table[:, 2] = np.nan
    with pytest.raises(DomainError):
        mice_impute(table)


# --- TABLE VIEW / DISPATCH ---

@pytest.fixture
def measured(room, aps):
    truth = generate_ground_truth(room, aps, PropagationParams(), seed=21)
    ms = collect_measurements(truth, sample_locations_fixed(room, 50, seed=22), 20, 2.0, seed=23)
    return truth, [to_sparse_grid(ms, i) for i in range(3)]


def test_table_shape_and_round_trip(measured):
    truth, grids = measured
    table = sparse_grid_to_table(grids, truth.ap_ids)
    assert table.shape == (300, 5)
    cell_h, cell_w = truth.geometry.cell_size
    back = sparse_grid_to_table(table_to_sparse_grids(table, 30, 10, cell_h, cell_w), truth.ap_ids)
    pd.testing.assert_frame_equal(back, table)


def test_fully_missing_layer_rejected(measured):
    truth, grids = measured
    empty = SparseGrid(values=np.zeros((30, 10)), mask=np.zeros((30, 10), dtype=bool))
    with pytest.raises(DomainError):
        impute_layers(grids[:2] + [empty], "mice", InterpolationSettings(), ap_ids=truth.ap_ids)


@pytest.mark.parametrize("method", ["knn", "idw", "dct", "mice"])
def test_impute_layers_contract(measured, method):
    truth, grids = measured
    results = impute_layers(grids, method, InterpolationSettings(), ap_ids=truth.ap_ids, seed=1)
    assert len(results) == 3
    for g, result in zip(grids, results):
        np.testing.assert_array_equal(result.completed[g.mask], g.values[g.mask])
        assert np.all(np.isfinite(result.completed))


def test_layers_csv_round_trip(tmp_path, measured):
    truth, grids = measured
    results = impute_layers(grids, "knn", InterpolationSettings(), ap_ids=truth.ap_ids)
    path = str(tmp_path / "grid.csv")
    save_layers_csv(results, truth.ap_ids, path)
    layers, masks = load_layers_csv(path, truth.ap_ids, (30, 10))
    np.testing.assert_allclose(layers, [r.completed for r in results], rtol=1e-8)
    np.testing.assert_array_equal(masks, [g.mask for g in grids])


def test_compare_imputers_table(measured):
    truth, grids = measured
    frame = compare_imputers(truth, grids, InterpolationSettings(), seed=3)
    assert list(frame.columns) == ["method", "ap_id", "n_missing", "rmse_db", "max_abs_error_db"]
    assert len(frame) == 4 * 3
    assert (frame["n_missing"] == 250).all()
    assert (frame["rmse_db"] > 0).all()


@pytest.mark.parametrize("seed", range(10))
def test_mice_history_ends_below_tol_when_stopped_early(seed):
    masked, _ = _mcar(_correlated_table(seed), seed + 50)
    result = mice_impute(masked, max_iter=50, tol=1e-4)
    history = result.diagnostics["history"]
    assert len(history) == result.iterations
    if result.iterations < 50:
        assert history[-1] < 1e-4
        assert all(change >= 1e-4 for change in history[:-1])
        assert result.diagnostics["converged"]


def test_log_distance_columns():
    table = pd.DataFrame({"x_m": [0.0, 3.0, 1.0], "y_m": [0.0, 4.0, 1.05], "rss_a": [-40.0, np.nan, -41.0]})
    extended = add_log_distance_columns(table, [(0.0, 0.0), (1.0, 1.0)])
    assert list(extended.columns) == ["x_m", "y_m", "rss_a", "logd_0", "logd_1"]
    np.testing.assert_allclose(extended["logd_0"], [-1.0, np.log10(5.0), np.log10(np.hypot(1.0, 1.05))])
    # clamped at the 0.1 m floor
    assert extended["logd_1"].iloc[1] == pytest.approx(np.log10(np.hypot(2.0, 3.0)))
    assert extended["logd_1"].iloc[2] == pytest.approx(-1.0)
    assert list(table.columns) == ["x_m", "y_m", "rss_a"]


@pytest.fixture
def shadowed_grids(room, aps):
    truth = generate_ground_truth(room, aps, PropagationParams(shadowing_sigma_db=1.0), seed=31)
    mask = np.zeros(room.n_cells, dtype=bool)
    mask[make_rng(32).choice(room.n_cells, 50, replace=False)] = True
    mask = mask.reshape(room.shape)
    cell_h, cell_w = room.cell_size
    grids = [SparseGrid(values=np.where(mask, layer, 0.0), mask=mask, cell_h=cell_h, cell_w=cell_w)
             for layer in truth.layers]
    return truth, grids


def test_log_distance_predictors_improve_mice(shadowed_grids, aps):
    truth, grids = shadowed_grids
    missing = ~grids[0].mask
    anchors = [ap.position for ap in aps]

    def rmse(method, **settings):
        results = impute_layers(grids, method, InterpolationSettings(**settings), ap_ids=truth.ap_ids,
                                anchors=anchors)
        errors = np.stack([r.completed[missing] - layer[missing] for r, layer in zip(results, truth.layers)])
        return float(np.sqrt(np.mean(errors ** 2)))

    informed = rmse("mice", mice_log_distance=True)
    assert informed < rmse("mice")
    assert informed < rmse("knn", knn_k=3)
    # the shadowing itself cannot be predicted from position
    assert informed < 2.0


def test_anchors_ignored_unless_enabled(shadowed_grids, aps):
    truth, grids = shadowed_grids
    anchors = [ap.position for ap in aps]
    plain = impute_layers(grids, "mice", InterpolationSettings(), ap_ids=truth.ap_ids)
    with_anchors = impute_layers(grids, "mice", InterpolationSettings(), ap_ids=truth.ap_ids, anchors=anchors)
    for a, b in zip(plain, with_anchors):
        np.testing.assert_array_equal(a.completed, b.completed)


def test_grid_dump_header_and_values(tmp_path, measured):
    truth, grids = measured
    result = impute_layers(grids, "idw", InterpolationSettings(), ap_ids=truth.ap_ids)[0]
    path = tmp_path / "ap1.csv"
    save_grid_csv(result, str(path))
    frame = pd.read_csv(path)
    assert list(frame.columns) == GRID_DUMP_COLUMNS == ["row", "col", "rss_dbm", "observed"]
    assert len(frame) == 300
    assert (frame["row"].iloc[11], frame["col"].iloc[11]) == (1, 1)
    np.testing.assert_allclose(frame["rss_dbm"].to_numpy().reshape(30, 10), result.completed, rtol=1e-8)
    np.testing.assert_array_equal(frame["observed"].to_numpy().reshape(30, 10), grids[0].mask.astype(int))
