import math

import numpy as np
import pytest

from helpers import dijkstra_all, dijkstra_cost, random_map
from sceneplan.errors import NoFloorError, NoPathError
from sceneplan.planner import (
    DIRS,
    _cylinder_kernel,
    astar,
    build_walkable,
    direction_scores,
    field_mapper,
    field_random,
    field_shared,
    field_standard,
    find_floor_layer,
    flat_map,
    load_mapper,
    mapper_decode_direction,
    nearest_walkable_cell,
    path_points,
    save_mapper,
    train_mapper,
)
from sceneplan.scene import VoxelGrid

SQRT2 = math.sqrt(2.0)


def open_map(n=10):
    return flat_map(np.ones((n, n), dtype=bool))


# ---------------------------------------------------------------- astar


def test_start_equals_goal():
    path = astar(open_map(), (4, 4), (4, 4))
    assert path.cells == [(4, 4, 0)]
    assert path.cost == 0.0


def test_corner_to_corner_pure_diagonal():
    path = astar(open_map(10), (0, 0), (9, 9))
    assert path.cost == 9 * SQRT2
    assert len(path.cells) == 10


def test_straight_line_cost_counts_cells():
    path = astar(open_map(10), (0, 0), (0, 7))
    assert path.cost == 7.0


def test_start_outside_grid_rejected():
    with pytest.raises(ValueError):
        astar(open_map(5), (-1, 0), (2, 2))
    with pytest.raises(ValueError):
        astar(open_map(5), (0, 0), (5, 0))


def test_unwalkable_endpoint_rejected():
    walk = np.ones((5, 5), dtype=bool)
    walk[2, 2] = False
    wmap = flat_map(walk)
    with pytest.raises(ValueError):
        astar(wmap, (2, 2), (0, 0))
    with pytest.raises(ValueError):
        astar(wmap, (0, 0), (2, 2))


def test_disconnected_components_raise_no_path():
    walk = np.ones((7, 7), dtype=bool)
    walk[3, :] = False  # full wall
    with pytest.raises(NoPathError):
        astar(flat_map(walk), (0, 0), (6, 6))


def test_wall_with_gap_routes_through_gap():
    walk = np.ones((7, 7), dtype=bool)
    walk[3, :] = False
    walk[3, 5] = True  # single gap
    path = astar(flat_map(walk), (0, 0), (6, 0))
    cells_2d = [(c[0], c[1]) for c in path.cells]
    assert (3, 5) in cells_2d
    assert all(walk[i, j] for i, j in cells_2d)


def test_path_steps_are_8_neighbor_moves():
    for seed in range(5):
        walk, start, goal = random_map(seed)
        path = astar(flat_map(walk), start, goal)
        for (i, j, _), (i2, j2, _) in zip(path.cells, path.cells[1:]):
            assert (i2 - i, j2 - j) in DIRS
            assert walk[i2, j2]


def test_astar_matches_dijkstra_bit_exact_standard_field():
    for seed in range(10):
        walk, start, goal = random_map(seed)
        got = astar(flat_map(walk), start, goal).cost
        want = dijkstra_cost(walk, start, goal)
        assert got == want, f"seed {seed}: {got} != {want}"


def test_astar_matches_dijkstra_under_random_field():
    for seed in range(6):
        walk, start, goal = random_map(seed)
        wmap = flat_map(walk)
        field = field_random(wmap, seed=seed + 100)
        got = astar(wmap, start, goal, field=field).cost
        want = dijkstra_cost(walk, start, goal, multiplier=field.values)
        assert got == pytest.approx(want, abs=1e-9)


def test_field_cost_never_below_standard_cost():
    for seed in range(8):
        walk, start, goal = random_map(seed)
        wmap = flat_map(walk)
        base = astar(wmap, start, goal).cost
        for field in (field_random(wmap, seed), field_shared(wmap, seed)):
            assert astar(wmap, start, goal, field=field).cost >= base - 1e-12


def test_heuristic_admissible_against_true_distances():
    walk, start, goal = random_map(3)
    dist = dijkstra_all(walk, goal)
    for i, j in np.argwhere(walk & np.isfinite(dist)):
        h = math.hypot(i - goal[0], j - goal[1])
        assert h <= dist[i, j] + 1e-9


def test_astar_deterministic_across_repeats():
    walk, start, goal = random_map(7)
    wmap = flat_map(walk)
    first = astar(wmap, start, goal)
    for _ in range(5):
        again = astar(wmap, start, goal)
        assert again.cells == first.cells
        assert again.cost == first.cost


# ---------------------------------------------------------------- fields


def test_standard_field_is_unit():
    f = field_standard()
    assert f.kind == "standard"
    assert f.m(3, 1, 4) == 1.0


def test_random_field_seeded_and_bounded():
    wmap = open_map(6)
    a = field_random(wmap, seed=5)
    b = field_random(wmap, seed=5)
    c = field_random(wmap, seed=6)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert a.values.shape == (6, 6, 8)
    assert np.all((a.values >= 0.0) & (a.values < 1.0))


def test_shared_field_same_bias_everywhere():
    wmap = open_map(6)
    f = field_shared(wmap, seed=2)
    assert f.values.shape == (6, 6, 8)
    for d in range(8):
        assert np.all(f.values[:, :, d] == f.values[0, 0, d])
    # but the 8 directions themselves differ
    assert len(np.unique(f.values[0, 0])) > 1


# ---------------------------------------------------------------- walkable map


def test_flat_map_wraps_layer_zero():
    wmap = flat_map(np.ones((3, 4), dtype=bool), cell_size=0.5)
    assert wmap.shape == (3, 4)
    assert wmap.cell3((1, 2)) == (1, 2, 0)
    assert np.allclose(wmap.cell_center((1, 2)), [0.75, 1.25, 0.25])
    assert wmap.linear_index((1, 2)) == 6


def test_cylinder_kernel_matches_rectangle_distance():
    for radius, cs in [(0.3, 0.25), (0.45, 0.2), (0.1, 0.25)]:
        kernel = _cylinder_kernel(radius, cs)
        reach = kernel.shape[0] // 2
        for u in range(-reach, reach + 1):
            for v in range(-reach, reach + 1):
                # distance from origin to closed rectangle of cell (u, v)
                cx = np.clip(0.0, u * cs - cs / 2, u * cs + cs / 2)
                cy = np.clip(0.0, v * cs - cs / 2, v * cs + cs / 2)
                d = math.hypot(cx, cy)
                assert kernel[u + reach, v + reach] == (d < radius), (radius, cs, u, v)


def test_find_floor_layer_lowest_supported_free(test_room_grid, test_room_wmap):
    k = find_floor_layer(test_room_grid)
    # lowest supported free layer: hollow slab interior qualifies, so the
    # final walkable floor (clearance-scanned) sits at or above it
    assert np.any(~test_room_grid.occupied[:, :, k] & test_room_grid.occupied[:, :, k - 1])
    assert all(not np.any(~test_room_grid.occupied[:, :, kk]
                          & test_room_grid.occupied[:, :, kk - 1])
               for kk in range(1, k))
    assert k <= test_room_wmap.floor_layer
    # the walkable floor layer sits just above the slab top at z = 0
    z = test_room_wmap.cell_center((0, 0))[2]
    assert 0.0 < z < 1.5 * test_room_grid.cell_size


def test_find_floor_layer_rejects_unsupported():
    grid = VoxelGrid(origin=np.zeros(3), cell_size=0.25, dims=(4, 4, 4),
                     occupied=np.ones((4, 4, 4), dtype=bool),
                     sdf=np.zeros((4, 4, 4)), watertight=False, mesh=None)
    with pytest.raises(NoFloorError):
        find_floor_layer(grid)


def test_build_walkable_avoids_furniture(test_room_grid, test_room_wmap):
    wmap = test_room_wmap
    assert wmap.walkable.any()
    # table center column is blocked (table spans x in [-0.5, 0.5], y in [0.8, 1.6])
    ti, tj, _ = test_room_grid.cell_of_point(np.array([0.0, 1.2, 0.1]))
    assert not wmap.walkable[ti, tj]
    # open floor away from furniture is walkable
    oi, oj, _ = test_room_grid.cell_of_point(np.array([-2.0, -2.0, 0.1]))
    assert wmap.walkable[oi, oj]


def test_build_walkable_cells_have_support_and_no_occupancy(test_room_grid, test_room_wmap):
    wmap = test_room_wmap
    k = wmap.floor_layer
    occ = test_room_grid.occupied
    idx = np.argwhere(wmap.walkable)
    assert np.all(occ[idx[:, 0], idx[:, 1], k - 1])
    assert not np.any(occ[idx[:, 0], idx[:, 1], k])


def test_build_walkable_respects_radius(test_room_grid):
    loose = build_walkable(test_room_grid, radius=0.05)
    tight = build_walkable(test_room_grid, radius=0.6)
    assert loose.walkable.sum() > tight.walkable.sum()
    # tighter body never unlocks new cells
    assert not np.any(tight.walkable & ~loose.walkable)


def test_nearest_walkable_cell_is_argmin(test_room_wmap):
    wmap = test_room_wmap
    for point in ([0.0, 1.2, 0.0], [-2.0, -2.0, 0.0], [4.0, 4.0, 0.0]):
        got = nearest_walkable_cell(wmap, np.asarray(point))
        cells = np.argwhere(wmap.walkable)
        centers = wmap.origin[:2] + (cells + 0.5) * wmap.cell_size
        d = np.linalg.norm(centers - np.asarray(point)[:2], axis=1)
        assert wmap.walkable[got]
        best = d.min()
        got_center = wmap.origin[:2] + (np.asarray(got) + 0.5) * wmap.cell_size
        assert np.linalg.norm(got_center - np.asarray(point)[:2]) == pytest.approx(best)


def test_path_points_affine(test_room_wmap):
    wmap = test_room_wmap
    cells = np.argwhere(wmap.walkable)
    start = tuple(cells[0])
    path = astar(wmap, start, start)
    pts = path_points(path, wmap)
    assert pts.shape == (1, 3)
    assert np.allclose(pts[0], wmap.cell_center(start))


# ---------------------------------------------------------------- mapper


def test_direction_scores_von_mises_shape(mapper_model):
    rng = np.random.default_rng(0)
    z = rng.standard_normal(mapper_model.cvae.d_z)
    feats = rng.random((4, mapper_model.n_basis))
    d = mapper_decode_direction(mapper_model, z, feats)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-9)
    scores = direction_scores(mapper_model, z, feats)
    ang = np.arctan2(d[:, 1], d[:, 0])
    compass = np.arange(8) * math.pi / 4.0
    want = np.exp(mapper_model.kappa * (np.cos(compass[None, :] - ang[:, None]) - 1.0))
    assert np.allclose(scores, want, atol=1e-12)
    assert np.all((scores > 0.0) & (scores <= 1.0))
    # the best compass direction is the one nearest the decoded angle
    for row, a in zip(scores, ang):
        k = int(np.argmax(row))
        delta = np.abs(np.angle(np.exp(1j * (compass - a))))
        assert k == int(np.argmin(delta))


def test_field_mapper_deterministic_per_seed(mapper_model, test_room_wmap,
                                             test_room_grid, test_room_mesh):
    f1 = field_mapper(mapper_model, test_room_wmap, test_room_grid, test_room_mesh, seed=3)
    f2 = field_mapper(mapper_model, test_room_wmap, test_room_grid, test_room_mesh, seed=3)
    f3 = field_mapper(mapper_model, test_room_wmap, test_room_grid, test_room_mesh, seed=4)
    assert np.array_equal(f1.values, f2.values)
    assert not np.array_equal(f1.values, f3.values)
    assert f1.kind == "mapper"


def test_field_mapper_identical_features_identical_rows(mapper_model, test_room_wmap,
                                                        test_room_grid, test_room_mesh):
    feats = np.tile(np.random.default_rng(1).random(mapper_model.n_basis), (2, 1))
    cells = np.array([[3, 3], [9, 12]])
    f = field_mapper(mapper_model, test_room_wmap, test_room_grid, test_room_mesh,
                     seed=0, features=(cells, feats))
    assert np.array_equal(f.values[3, 3], f.values[9, 12])
    # untouched cells keep the unit multiplier
    assert np.all(f.values[0, 0] == 1.0)


def test_field_mapper_differs_across_seeds(mapper_model, test_room_wmap,
                                           test_room_grid, test_room_mesh):
    feats = np.tile(np.random.default_rng(2).random(mapper_model.n_basis), (1, 1))
    cells = np.array([[4, 4]])
    rows = []
    for seed in range(20):
        f = field_mapper(mapper_model, test_room_wmap, test_room_grid, test_room_mesh,
                         seed=seed, features=(cells, feats))
        rows.append(tuple(f.values[4, 4]))
    assert len(set(rows)) > 10


def test_field_mapper_basis_seed_mismatch_rejected(mapper_model, test_room_wmap,
                                                   test_room_grid, test_room_mesh):
    with pytest.raises(ValueError):
        field_mapper(mapper_model, test_room_wmap, test_room_grid, test_room_mesh,
                     seed=0, basis_seed=mapper_model.basis_seed + 1)


def test_train_mapper_learns_degenerate_direction():
    # every sample moves +x; the decoder should put its mass there
    n = 64
    feats = np.ones((n, 16))
    dirs = np.tile(np.array([1.0, 0.5]), (n, 1))  # +x encoded into [0,1]^2
    model, trace = train_mapper(feats, dirs, basis_seed=0, seed=0, epochs=300,
                                batch_size=8, learning_rate=1e-3, d_z=4, hidden=32)
    assert np.isfinite(trace).all()
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(100):
        z = rng.standard_normal(model.cvae.d_z)
        scores = direction_scores(model, z, feats[:1])
        hits += int(np.argmax(scores[0]) == 0)
    assert hits >= 95


def test_mapper_checkpoint_round_trip(tmp_path, mapper_model):
    path = tmp_path / "mapper.json"
    save_mapper(mapper_model, path)
    loaded = load_mapper(path)
    assert loaded.kappa == mapper_model.kappa
    assert loaded.basis_seed == mapper_model.basis_seed
    assert loaded.n_basis == mapper_model.n_basis
    rng = np.random.default_rng(5)
    z = rng.standard_normal(mapper_model.cvae.d_z)
    feats = rng.random((3, mapper_model.n_basis))
    assert np.array_equal(direction_scores(mapper_model, z, feats),
                          direction_scores(loaded, z, feats))
