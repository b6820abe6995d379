#!/usr/bin/env python3
"""Compare the four planner cost fields on the bundled test room.

For each field: plan 100 seeded episodes between two fixed cells, then report
mean path cost, mean per-step heading change, and the per-fraction deviation
from the deterministic standard-field path.  The mapper field needs a trained
checkpoint (see `sceneplan train mapper`); without one it is skipped.
"""

import argparse
import time

import numpy as np

from sceneplan.metrics import mean_heading_change, path_deviation_std
from sceneplan.planner import (
    astar,
    bps_basis,
    build_walkable,
    field_mapper,
    field_random,
    field_shared,
    field_standard,
    load_mapper,
    mapper_features,
)
from sceneplan.scene import voxelize
from sceneplan.synth import build_test_room

START, GOAL = (3, 3), (22, 22)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--mapper-checkpoint", default=None)
    parser.add_argument("--episodes", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    mesh = build_test_room()
    grid = voxelize(mesh, cell_size=0.25)
    wmap = build_walkable(grid)
    reference = astar(wmap, START, GOAL, field_standard())

    makers = {
        "standard": lambda ep: field_standard(),
        "random": lambda ep: field_random(wmap, seed=args.seed + ep),
        "shared": lambda ep: field_shared(wmap, seed=args.seed + ep),
    }
    if args.mapper_checkpoint:
        model = load_mapper(args.mapper_checkpoint)
        feats = mapper_features(wmap, grid, mesh, bps_basis(model.n_basis, model.basis_seed))
        makers["mapper"] = lambda ep: field_mapper(
            model, wmap, grid, mesh, seed=args.seed + ep, features=feats
        )

    print(f"{'field':<10} {'cost':>8} {'heading':>8} {'time':>7}  deviation std per fraction")
    for name, make in makers.items():
        t0 = time.perf_counter()
        paths = [astar(wmap, START, GOAL, make(ep)) for ep in range(args.episodes)]
        dt = time.perf_counter() - t0
        cost = np.mean([p.cost for p in paths])
        heading = np.mean([mean_heading_change(p) for p in paths])
        std = path_deviation_std(paths, reference).std
        print(f"{name:<10} {cost:>8.3f} {heading:>8.4f} {dt:>6.1f}s  "
              + " ".join(f"{s:.3f}" for s in std))


if __name__ == "__main__":
    main()
