#!/usr/bin/env python3
"""Measure how the diversity penalty spreads repeated sit placements.

On the two-identical-seats room, place a first sit anchor, then a second one
conditioned on the first, with the repulsion term on and off.  Reports how
often the second anchor lands on the other seat.
"""

import argparse

import numpy as np

from sceneplan.anchors import PlacementConfig, place_anchor
from sceneplan.scene import voxelize
from sceneplan.synth import build_two_seat_room


def seat_of(t) -> str:
    return "left" if t[0] < 0 else "right"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    grid = voxelize(build_two_seat_room(), cell_size=0.25)
    theta = np.zeros(32)
    with_penalty = PlacementConfig()
    without = PlacementConfig(w_diversity=0.0)

    alt_on = alt_off = 0
    for trial in range(args.trials):
        s = args.seed + 2 * trial
        first = place_anchor(theta, "sit", grid, seed=s)
        second_on = place_anchor(theta, "sit", grid, placed=[first], seed=s + 1,
                                 config=with_penalty)
        second_off = place_anchor(theta, "sit", grid, placed=[first], seed=s + 1,
                                  config=without)
        alt_on += seat_of(second_on.t) != seat_of(first.t)
        alt_off += seat_of(second_off.t) != seat_of(first.t)

    n = args.trials
    print(f"second anchor on the other seat, penalty on : {alt_on}/{n}")
    print(f"second anchor on the other seat, penalty off: {alt_off}/{n}")


if __name__ == "__main__":
    main()
