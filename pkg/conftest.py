import json

import pytest

from modules.env_sim import AccessPoint, PropagationParams, RoomGeometry

DEFAULT_ROOM = RoomGeometry()


@pytest.fixture
def room():
    return DEFAULT_ROOM


@pytest.fixture
def aps():
    return [
        AccessPoint("ap1", 1.0, 2.0),
        AccessPoint("ap2", 9.5, 8.7),
        AccessPoint("ap3", 2.0, 15.5),
    ]


@pytest.fixture
def noiseless():
    return PropagationParams(path_loss_exponent=2.0, shadowing_sigma_db=0.0)


@pytest.fixture
def tiny_scenario():
    """Small scenario that runs every stage in well under a second per command"""
    return {
        "seed": 11,
        "room": {"width_m": 4.0, "length_m": 6.0, "grid_rows": 6, "grid_cols": 4},
        "aps": [
            {"id": "a", "x_m": 0.5, "y_m": 0.5},
            {"id": "b", "x_m": 3.5, "y_m": 5.5},
        ],
        "propagation": {"shadowing_sigma_db": 1.0},
        "sampling": {"n_points": 12, "readings_per_point": 5},
        "interpolation": {"knn_k": 2, "dct_num_coeffs": 4, "mice_max_iter": 20},
        "gan": {"latent_dim": 2, "hidden": [8], "epochs": 5, "batch_size": 8, "augment_n": 10},
        "localizer": {"hidden": [8], "epochs": 20, "batch_size": 8},
        "bench": {"runs": 2},
    }


@pytest.fixture
def scenario_file(tmp_path, tiny_scenario):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(tiny_scenario), encoding="utf-8")
    return str(path)
