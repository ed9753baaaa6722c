#!/usr/bin/env python3
"""Full-scale C-Town / Richmond reproduction recipe. NOT part of the test suite.

This drives the complete protocol on the two large bundled networks: 10000
(C-Town) and 20000 (Richmond) scenes, builtin per-network topologies, 5
observation ratios x 20 placements. With polynomial orders of 120-240 on
400-900 node graphs this is DAYS of CPU time; it exists to document the
procedure, not to run in CI.

    python scripts/full_scale_recipe.py --network ctown --out runs/ctown \
        --placements 20

Start with --placements 1 --ratios 0.8 to gauge the per-run cost on your
machine before committing to the grid.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from watergcn.chebnet import TrainConfig
from watergcn.harness import DEFAULT_RATIOS, ExperimentPlan, run_experiment
from watergcn.scenegen import SceneConfig

SCENE_COUNTS = {"ctown": 10_000, "richmond": 20_000}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--network", choices=sorted(SCENE_COUNTS), required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--ratios", type=float, nargs="+", default=list(DEFAULT_RATIOS))
    ap.add_argument("--placements", type=int, default=20)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--scenes", type=int, default=None,
                    help="override the protocol scene count")
    args = ap.parse_args()

    n_scenes = args.scenes or SCENE_COUNTS[args.network]
    total = len(args.ratios) * args.placements
    print(f"{args.network}: {n_scenes} scenes, {total} trainings. "
          "This is a long-running recipe (hours per training at full scale).")

    plan = ExperimentPlan(
        inp_path=str(REPO / "data" / f"{args.network}.inp"),
        observation_ratios=tuple(args.ratios),
        placements_per_ratio=args.placements,
        topology=None,
        train=TrainConfig(),
        scene=SceneConfig(n_scenes=n_scenes, seed=args.seed),
        base_seed=args.seed)
    summary = run_experiment(plan, args.out)
    print(f"{len(summary['runs'])} runs done, {len(summary['failures'])} failures; "
          f"summary at {Path(args.out) / 'summary.json'}")


if __name__ == "__main__":
    main()
