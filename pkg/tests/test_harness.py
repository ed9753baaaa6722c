import json
from pathlib import Path

import numpy as np
import pytest

from watergcn.chebnet import TrainConfig
from watergcn.harness import (
    ExperimentPlan, SearchSpace, UnknownNetwork, best_loss_per_scheme,
    child_seed, default_topology, plan_from_dict, random_search,
    receptive_field_gap, run_experiment, sample_search_config,
)
from watergcn.scenegen import SceneConfig, build_sceneset
from watergcn.cli import main

from conftest import DATA

FAST_TRAIN = {"max_epochs": 4, "patience": 3, "batch_size": 16}
FAST_SCENE = {"n_scenes": 15, "seed": 1}


def test_default_topologies():
    assert default_topology("anytown") == ((39, 14), (43, 20), (45, 27))
    assert default_topology("ctown") == ((200, 60), (200, 60), (20, 30))
    assert default_topology("richmond") == ((240, 120), (120, 60), (20, 30))
    with pytest.raises(UnknownNetwork):
        default_topology("gotham")


def test_anytown_preset_covers_diameter(anytown):
    from watergcn.network import graph_diameter
    topo = default_topology("anytown")
    assert sum(k for k, _ in topo) == 127
    assert receptive_field_gap(topo, graph_diameter(anytown)) == 0


def test_receptive_field_gap_warns():
    from watergcn.harness import check_receptive_field
    assert receptive_field_gap([(2, 4), (2, 4)], 5) == 3
    with pytest.warns(UserWarning, match="diameter"):
        check_receptive_field([(2, 4), (2, 4)], 5)


def test_child_seed_pure_and_collision_free():
    seeds = {child_seed(0, r, p) for r in range(5) for p in range(20)}
    assert len(seeds) == 100
    assert child_seed(0, 1, 2) == child_seed(0, 1, 2)
    assert child_seed(0, 1, 2) != child_seed(1, 1, 2)


def test_sample_search_config_ranges():
    space = SearchSpace()
    rng = np.random.default_rng(0)
    for _ in range(50):
        cfg = sample_search_config(space, rng)
        assert 2 <= len(cfg["topology"]) <= 4
        for order, channels in cfg["topology"]:
            assert 30 <= order <= 50
            assert 30 <= channels <= 50
        assert 1e-6 <= cfg["weight_decay"] <= 1e-4
        assert cfg["scheme"] in ("binary", "weighted", "logarithmic")


def _tiny_plan(tmp_path):
    return plan_from_dict({
        "inp_path": str(DATA / "anytown.inp"),
        "scheme": "binary",
        "observation_ratios": [0.4],
        "placements_per_ratio": 1,
        "topology": [[3, 4]],
        "train": FAST_TRAIN,
        "scene": FAST_SCENE,
        "base_seed": 3,
    })


def test_run_experiment_single_cell(tmp_path):
    summary = run_experiment(_tiny_plan(tmp_path), tmp_path / "exp")
    assert len(summary["runs"]) == 1
    assert summary["failures"] == []
    run = summary["runs"][0]
    run_dir = tmp_path / "exp" / "runs" / run["run_id"]
    assert (run_dir / "model.ckpt").exists()
    assert (run_dir / "report.json").exists()
    assert (run_dir / "history.csv").exists()
    assert "0.4" in summary["per_ratio"]


def test_run_experiment_rerun_is_byte_identical(tmp_path):
    plan = _tiny_plan(tmp_path)
    run_experiment(plan, tmp_path / "exp")
    first = (tmp_path / "exp" / "summary.json").read_bytes()
    run_experiment(plan, tmp_path / "exp")  # artifacts reused, not retrained
    assert (tmp_path / "exp" / "summary.json").read_bytes() == first


def test_grid_completeness(tmp_path):
    plan = plan_from_dict({
        "inp_path": str(DATA / "anytown.inp"),
        "observation_ratios": [0.2, 0.8],
        "placements_per_ratio": 2,
        "topology": [[3, 4]],
        "train": FAST_TRAIN,
        "scene": FAST_SCENE,
        "base_seed": 0,
    })
    summary = run_experiment(plan, tmp_path / "exp")
    assert len(summary["runs"]) + len(summary["failures"]) == 4


@pytest.fixture(scope="module")
def search_sceneset(anytown):
    return build_sceneset(anytown, SceneConfig(n_scenes=15, seed=2))


def test_random_search_budget_one(anytown, search_sceneset):
    space = SearchSpace(n_layers=(1, 1), order_range=(2, 3), channel_range=(3, 4))
    results = random_search(anytown, search_sceneset, space, budget=1,
                            repeats_per_config=5, ratio=0.8, base_seed=1,
                            train_cfg=TrainConfig(**FAST_TRAIN))
    assert len(results["ranked"]) == 1
    assert len(results["ranked"][0]["val_losses"]) == 5
    assert len(results["swarm"]) == 5


def test_random_search_ranking_sorted(anytown, search_sceneset):
    space = SearchSpace(n_layers=(1, 2), order_range=(2, 3), channel_range=(3, 4))
    results = random_search(anytown, search_sceneset, space, budget=3,
                            repeats_per_config=2, base_seed=5,
                            train_cfg=TrainConfig(**FAST_TRAIN))
    means = [e["mean_val_loss"] for e in results["ranked"]]
    assert means == sorted(means)
    best = best_loss_per_scheme(results["ranked"])
    assert all(np.isfinite(v) for v in best.values())


def test_plan_roundtrip():
    plan = _tiny_plan(None)
    back = plan_from_dict(plan.to_dict())
    assert back == plan


# ---- CLI ----

def test_cli_parse_and_diameter(capsys):
    assert main(["parse", "--inp", str(DATA / "anytown.inp")]) == 0
    out = capsys.readouterr().out
    assert "22 junctions" in out and "41 pipes" in out
    assert main(["diameter", "--inp", str(DATA / "anytown.inp")]) == 0
    assert capsys.readouterr().out.strip() == "5"


def test_cli_laplacian_export(tmp_path, capsys):
    prefix = tmp_path / "lap_binary"
    code = main(["laplacian", "--inp", str(DATA / "anytown.inp"),
                 "--scheme", "binary", "--export", str(prefix)])
    assert code == 0
    header = json.loads((tmp_path / "lap_binary.json").read_text())
    assert header["scheme"] == "binary"
    dense = np.loadtxt(tmp_path / "lap_binary.csv", delimiter=",")
    assert dense.shape == (header["n_nodes"], header["n_nodes"])


def test_cli_full_pipeline(tmp_path, capsys):
    inp = str(DATA / "anytown.inp")
    scenes = tmp_path / "scenes"
    assert main(["genscenes", "--inp", inp, "--out", str(scenes),
                 "--n-scenes", "15", "--seed", "8"]) == 0
    run_dir = tmp_path / "run"
    assert main(["train", "--inp", inp, "--scenes", str(scenes),
                 "--ratio", "0.5", "--seed", "1",
                 "--topology", str(_topology_file(tmp_path)),
                 "--out", str(run_dir), "--max-epochs", "3", "--patience", "2"]) == 0
    assert main(["evaluate", "--checkpoint", str(run_dir / "model.ckpt"),
                 "--inp", inp, "--scenes", str(scenes),
                 "--out", str(tmp_path / "report.json")]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert "taylor" in report
    out = capsys.readouterr().out
    assert "mean relative error" in out


def _topology_file(tmp_path):
    path = tmp_path / "topology.json"
    path.write_text("[[3, 4]]\n")
    return path


def test_cli_export_plots(tmp_path):
    out = tmp_path / "plots"
    assert main(["export-plots", "--inp", str(DATA / "anytown.inp"),
                 "--out", str(out)]) == 0
    for name in ("network.json", "report.json", "swarm.csv", "history.csv",
                 "laplacian_binary.csv", "laplacian_weighted.csv",
                 "laplacian_logarithmic.csv", "manifest_ecdf.json",
                 "manifest_taylor.json", "manifest_swarm.json",
                 "manifest_laplacian_binary.json"):
        assert (out / name).exists(), name


def test_cli_exit_codes(tmp_path):
    # usage error: unknown subcommand
    assert main(["frobnicate"]) == 1
    # usage error: missing required argument
    assert main(["parse"]) == 1
    # data error: file does not exist
    assert main(["parse", "--inp", str(tmp_path / "nope.inp")]) == 2
    # data error: invalid INP content
    bad = tmp_path / "bad.inp"
    bad.write_text("[JUNCTIONS]\n J1 10 1\n[PIPES]\n P1 J1 J9 100 12 100\n")
    assert main(["parse", "--inp", str(bad)]) == 2


def test_cli_numerical_exit_code(tmp_path, monkeypatch):
    import watergcn.cli as cli
    from watergcn.hydraulics import NonConvergence

    def boom(args):
        raise NonConvergence("stuck")
    monkeypatch.setattr(cli, "cmd_diameter", boom)
    assert cli.main(["diameter", "--inp", str(DATA / "anytown.inp")]) == 3


def test_cli_artifact_root_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("WATERGCN_ARTIFACTS", str(tmp_path))
    assert main(["parse", "--inp", str(DATA / "anytown.inp"),
                 "--json", "summary.json"]) == 0
    assert (tmp_path / "summary.json").exists()
