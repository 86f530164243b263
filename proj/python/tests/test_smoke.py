import json

import numpy as np
import pytest

import prefield

TINY = {
    "field": {"phi": 40.0},
    "movement": {"alpha": 50.0},
    "protocol": {"n_raw": 120, "burn_in": 30, "thin": 3, "n_tracks": 2},
    "study": {"replicates": 1, "generation_rows": 21, "generation_cols": 21},
    "prediction": {"rows": 5, "cols": 5},
    "fit": {"cell_width": 30.0, "outer_max_evals": 300},
}


def test_matern_and_logistic():
    c = prefield.matern_cov(np.array([0.0, 25.0, 1e4]), 25.0, 1.5)
    assert c[0] == 1.5
    assert 0 < c[1] < 1.5
    assert c[2] < 1e-12
    assert round(prefield.behaviour_weight(-1.5), 2) == 0.18


def test_config_defaults_and_errors(tmp_path):
    cfg = prefield.config()
    assert cfg["field"]["mu"] == 5.0
    assert cfg["movement"]["alpha"] == 100.0
    path = tmp_path / "c.toml"
    path.write_text("[field]\nmu = 3.0\n")
    assert prefield.config(path)["field"]["mu"] == 3.0
    with pytest.raises(prefield.ConfigError):
        prefield.config({"field": {"mu_typo": 1}})
    assert prefield.config_hash({"output_dir": "a"}) == prefield.config_hash({"output_dir": "b"})


def test_simulate_is_deterministic():
    f1, t1, _ = prefield.simulate(TINY, seed=3)
    f2, t2, _ = prefield.simulate(TINY, seed=3)
    assert np.array_equal(f1["value"], f2["value"])
    assert len(t1) == 2
    assert t1[0]["xy"].shape == (30, 2)
    assert np.array_equal(t1[1]["xy"], t2[1]["xy"])


def test_score_identities():
    truth = np.zeros((2, 1))
    pred = np.array([[-1.0], [3.0]])
    s = prefield.score(truth, pred, np.ones((2, 1)))
    assert s["rmspe"][0] == 2.0
    assert np.isclose(prefield.score(truth, pred, np.ones((2, 1)), "rmse")["rmspe"][0], np.sqrt(5.0))
    z = prefield.score(np.ones((3, 4)), np.ones((3, 4)), np.ones((3, 4)))
    assert np.all(z["mign"] == 0.0)
    with pytest.raises(prefield.DataError):
        prefield.score(truth, pred, np.zeros((2, 1)))


def test_track_round_trip(tmp_path):
    _, tracks, _ = prefield.simulate(TINY, seed=5)
    prefield.write_tracks(tmp_path / "t.csv", tracks)
    back = prefield.read_tracks(tmp_path / "t.csv")
    assert np.array_equal(back[0]["t"], tracks[0]["t"])
    assert np.array_equal(back[1]["response"], tracks[1]["response"])
    bad = [{"id": 1, "t": np.array([0.0, 1.0]), "xy": np.zeros((2, 2)), "response": np.zeros(2)}]
    with pytest.raises(prefield.DataError):
        prefield.write_tracks(tmp_path / "bad.csv", bad)


def test_fit_predict_small():
    _, tracks, _ = prefield.simulate(TINY, seed=2)
    xy = np.vstack([t["xy"] for t in tracks])
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    targets = prefield.lattice_points([lo[0], hi[0], lo[1], hi[1]], 3, 3)
    out = prefield.fit_predict(tracks, targets, TINY)
    for model in ("standard", "preferential"):
        assert out[model]["mean"].shape == (9,)
        assert all(out[model]["valid"])
        assert np.all(out[model]["variance"] > 0)
    far = prefield.fit_predict(tracks, [[1e5, 1e5]], TINY)
    assert not far["preferential"]["valid"][0]
    est = out["preferential"]["report"]["estimates"]
    assert "alpha" in est and np.isfinite(est["mu"]["value"])


def test_experiment_writes_manifest(tmp_path):
    manifest = prefield.run_experiment(TINY, tmp_path / "exp")
    files = {f["path"] for f in json.loads(open(manifest).read())["files"]}
    assert "scores.json" in files
