#!/usr/bin/env python3
"""Regenerate the bundled OBJ scenes from the synthetic builders.

Run from anywhere; writes into the repository's scenes/ directory unless
--out points elsewhere.
"""

import argparse
from pathlib import Path

from sceneplan.synth import (
    build_hall,
    build_test_room,
    build_two_seat_room,
    build_walled_room,
    write_obj,
)

BUILDERS = {
    "test_room": (build_test_room, "six-by-six room with a table and two seats"),
    "two_seat_room": (build_two_seat_room, "floor with two identical seats"),
    "walled_room": (build_walled_room, "floor split in two by a wall"),
    "hall": (build_hall, "large hall with a central pillar"),
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "scenes"))
    parser.add_argument("names", nargs="*", default=[], help="subset of scenes (default: all)")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = args.names or sorted(BUILDERS)
    for name in names:
        builder, comment = BUILDERS[name]
        path = out / f"{name}.obj"
        write_obj(builder(), path, comment=comment)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
