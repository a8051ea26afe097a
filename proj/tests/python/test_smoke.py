import json

import numpy as np
import pytest

import ctpnp


def small_geometry(n=16, views=12, kind="full"):
    g = ctpnp.default_config()["geometry"]
    g.update(vol_dims=[n, n, n], det_cols=n + n // 2 + 8, det_rows=n + n // 4 + 5 + (1 - (n + n // 4 + 5) % 2))
    return ctpnp.with_views(g, kind, views)


def test_default_config_hyperparameters():
    cfg = ctpnp.default_config()
    assert cfg["pnp"]["K"] == 3
    assert cfg["pnp"]["cg_steps"] == 10
    assert cfg["pnp"]["beta_grid"] == [2.0 ** (1 - i) for i in range(15)]


def test_projector_adjoint():
    g = small_geometry()
    rng = np.random.default_rng(0)
    x = rng.standard_normal((16, 16, 16))
    ax = ctpnp.forward_project(x, g)
    y = rng.standard_normal(ax.shape)
    aty = ctpnp.back_project(y, g)
    assert ax.shape == (12, g["det_rows"], g["det_cols"])
    assert abs(np.vdot(ax, y) - np.vdot(x, aty)) < 1e-8 * np.linalg.norm(ax) * np.linalg.norm(y)


def test_fdk_recovers_a_cylinder():
    cfg = ctpnp.default_config()
    cfg["geometry"] = small_geometry(24)
    cfg["phantom"] = {"body": [{"type": "cylinder", "cx_mm": 0.0, "cy_mm": 0.0, "radius_mm": 8.0,
                                "z_min_mm": -8.0, "z_max_mm": 8.0, "mu": 0.02}],
                      "pores": [], "random_pores": None, "seed": 0}
    cfg["noise"]["sigma"] = 0.0
    cfg["spectrum"] = {"bins": [{"weight": 1.0, "mu_scale": 1.0}]}
    cfg["scan"]["input_kind"] = "full"
    cfg["scan"]["input_views"] = 90
    sim = ctpnp.simulate(cfg)
    rec = ctpnp.fdk(sim["input"], sim["input_geometry"])
    assert rec.shape == sim["phantom"].shape
    assert ctpnp.nrmse(rec, sim["phantom"]) < 0.25


def test_metrics_and_otsu():
    a = np.zeros((2, 16, 16))
    a[:, :, 8:] = 1.0
    assert ctpnp.nrmse(a, a) == 0.0
    assert ctpnp.ssim(a, a) == 1.0
    assert ctpnp.otsu_split([5, 0, 0, 5]) == 1
    assert 0.0 < ctpnp.otsu_threshold(a) <= 1.0


def test_volume_round_trip(tmp_path):
    v = np.arange(24, dtype=float).reshape(2, 3, 4)
    ctpnp.write_volume(tmp_path / "v", v, 0.5)
    back, vs = ctpnp.read_volume(tmp_path / "v.json")
    assert vs == 0.5
    np.testing.assert_array_equal(back, v)
    header = json.loads((tmp_path / "v.json").read_text())
    assert header["dims"] == [4, 3, 2]


def test_errors_are_typed():
    with pytest.raises(ctpnp.ShapeError):
        ctpnp.nrmse(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))
    with pytest.raises(ctpnp.Error):
        ctpnp.read_volume("/nonexistent/volume.json")
