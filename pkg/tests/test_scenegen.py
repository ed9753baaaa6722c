import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from watergcn.scenegen import (
    InvalidRange, Scaler, SceneConfig, TooFewScenes, TruncNormSpec, UniformSpec,
    UnfittedScaler, build_sceneset, load_sceneset, sample_boundaries,
    save_sceneset, scale_in, scale_out, scale_out_inverse,
)


def degenerate_config(n_scenes=5, seed=0):
    return SceneConfig(
        n_scenes=n_scenes,
        demand_multiplier=TruncNormSpec(mean=1.0, std=0.0, lower=1.0, upper=1.0),
        daynight_factor=UniformSpec(lower=1.0, upper=1.0),
        pump_speed_range=(1.0, 1.0),
        seed=seed)


def test_degenerate_config_reproduces_base_demands(anytown):
    base = np.array([j.base_demand for j in anytown.junctions])
    for bc in sample_boundaries(anytown, degenerate_config()):
        assert np.allclose(bc.demands, base, rtol=1e-12)
        assert np.all(bc.pump_speeds == 1.0)


def test_daynight_rescaling_identity(anytown):
    cfg = SceneConfig(n_scenes=50, seed=2)
    base_total = sum(j.base_demand for j in anytown.junctions)
    dn = cfg.daynight_factor
    for bc in sample_boundaries(anytown, cfg):
        factor = bc.demands.sum() / base_total
        assert dn.lower - 1e-12 <= factor <= dn.upper + 1e-12


def test_boundaries_are_pairwise_distinct(anytown):
    boundaries = sample_boundaries(anytown, SceneConfig(n_scenes=200, seed=3))
    seen = {(tuple(b.demands), tuple(b.pump_speeds)) for b in boundaries}
    assert len(seen) == 200


def test_pump_speeds_respect_bounds(anytown):
    cfg = SceneConfig(n_scenes=100, seed=4)
    for bc in sample_boundaries(anytown, cfg):
        for speed, pump in zip(bc.pump_speeds, anytown.pumps):
            lo, hi = pump.speed_bounds
            assert lo <= speed <= hi


def test_latin_hypercube_stratification(anytown):
    # every scene occupies a distinct stratum in every sampled dimension
    cfg = SceneConfig(n_scenes=64, seed=5)
    boundaries = sample_boundaries(anytown, cfg)
    speeds = np.array([b.pump_speeds[0] for b in boundaries])
    lo, hi = anytown.pumps[0].speed_bounds
    strata = np.floor((speeds - lo) / (hi - lo) * 64).astype(int)
    assert sorted(strata.clip(0, 63)) == list(range(64))


def test_invalid_range_rejected(anytown):
    with pytest.raises(InvalidRange):
        sample_boundaries(anytown, SceneConfig(
            n_scenes=3, daynight_factor=UniformSpec(lower=2.0, upper=1.0)))
    with pytest.raises(InvalidRange):
        sample_boundaries(anytown, SceneConfig(n_scenes=0))


@pytest.fixture(scope="module")
def small_sceneset(anytown):
    return build_sceneset(anytown, SceneConfig(n_scenes=10, seed=6))


def test_split_sizes_ten_scenes(small_sceneset):
    ss = small_sceneset
    assert len(ss.splits["train"]) == 6
    assert len(ss.splits["val"]) == 2
    assert len(ss.splits["test"]) == 2


def test_splits_disjoint_cover(small_sceneset):
    ss = small_sceneset
    merged = np.concatenate([ss.splits["train"], ss.splits["val"], ss.splits["test"]])
    assert sorted(merged.tolist()) == list(range(ss.n_scenes))


def test_scaler_fitted_on_train_rows_only(small_sceneset):
    ss = small_sceneset
    train_rows = ss.pressures[ss.splits["train"]]
    assert ss.scaler.mean == train_rows.mean()
    assert ss.scaler.std == train_rows.std()
    assert ss.scaler.vmin == train_rows.min()
    assert ss.scaler.vmax == train_rows.max()
    assert ss.scaler.vmin <= train_rows.min() <= train_rows.max() <= ss.scaler.vmax


def test_too_few_scenes(anytown):
    with pytest.raises(TooFewScenes):
        build_sceneset(anytown, SceneConfig(n_scenes=2, seed=0))


def test_sceneset_bytes_deterministic(anytown, tmp_path):
    cfg = SceneConfig(n_scenes=12, seed=9)
    for run in ("a", "b"):
        save_sceneset(build_sceneset(anytown, cfg), tmp_path / run)
    for name in ("pressures.npy", "demands.npy", "pump_speeds.npy",
                 "residual_mass.npy", "residual_energy.npy", "sceneset.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sceneset_roundtrip(small_sceneset, tmp_path):
    save_sceneset(small_sceneset, tmp_path / "ss")
    back = load_sceneset(tmp_path / "ss")
    assert np.array_equal(back.pressures, small_sceneset.pressures)
    assert back.scaler == small_sceneset.scaler
    assert back.junction_names == small_sceneset.junction_names
    for key in ("train", "val", "test"):
        assert np.array_equal(back.splits[key], small_sceneset.splits[key])


def test_scale_in_of_mean_is_zero():
    s = Scaler(mean=10.0, std=2.0, vmin=5.0, vmax=15.0)
    assert scale_in(np.array([10.0]), s)[0] == 0.0


def test_scale_out_inverse_endpoints():
    s = Scaler(mean=10.0, std=2.0, vmin=5.0, vmax=15.0)
    assert scale_out_inverse(np.array([0.0]), s)[0] == 5.0
    assert scale_out_inverse(np.array([1.0]), s)[0] == 15.0


@given(y=st.floats(0, 1))
def test_scale_roundtrip(y):
    s = Scaler(mean=10.0, std=2.0, vmin=5.0, vmax=15.0)
    back = scale_out(scale_out_inverse(np.array([y]), s), s)[0]
    assert back == pytest.approx(y, abs=1e-12)


def test_unfitted_scaler_raises():
    with pytest.raises(UnfittedScaler):
        scale_in(np.array([1.0]), None)


def test_scaler_rejects_constant_pressures():
    with pytest.raises(InvalidRange):
        Scaler.fit(np.full((4, 3), 7.0))


def test_sidecar_is_valid_json(small_sceneset, tmp_path):
    save_sceneset(small_sceneset, tmp_path / "ss")
    meta = json.loads((tmp_path / "ss" / "sceneset.json").read_text())
    assert meta["seed"] == small_sceneset.seed
    assert meta["failures"] == []
