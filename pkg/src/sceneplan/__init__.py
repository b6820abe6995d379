"""Scene-aware motion plan synthesis.

Given a 3D scene and a sequence of action labels, the package places
interaction anchors, plans diverse floor paths under stochastic cost fields,
refines them into frame-level trajectories, and scores the results with
diversity and plausibility metrics.
"""

from .anchors import (
    ACTIONS,
    Anchor,
    PlacementConfig,
    ProxyBody,
    diversity_penalty,
    enumerate_candidates,
    optimize_anchor,
    place_anchor,
    proxy_body,
    refine_placement,
    sample_pose,
    score_candidate,
    settle_anchor,
    train_place_refiner,
    train_pose_model,
)
from .errors import (
    ConfigError,
    InfeasibleError,
    MeshParseError,
    NoFloorError,
    NoPathError,
    PipelineStageError,
    PlacementError,
    SceneError,
    SchemaError,
    TrainingError,
)
from .metrics import (
    anchor_diversity,
    apd,
    contact,
    frechet_gaussian,
    kmeans,
    mean_heading_change,
    non_collision,
    path_deviation_std,
)
from .nn import (
    adam_step,
    kl_standard_normal,
    mlp_backward,
    mlp_forward,
    reparameterize,
    train_cvae,
)
from .pipeline import RunConfig, RunManifest, derive_seed, evaluate_artifacts, run_pipeline
from .planner import (
    CostField,
    GridPath,
    WalkableMap,
    astar,
    build_walkable,
    field_mapper,
    field_random,
    field_shared,
    field_standard,
    find_floor_layer,
    nearest_walkable_cell,
    path_points,
    train_mapper,
)
from .scene import (
    TriangleMesh,
    VoxelGrid,
    bps_basis,
    bps_encode,
    is_watertight,
    load_mesh,
    sdf_at,
    voxelize,
)
from .trajectory import (
    Trajectory,
    optimize_trajectory,
    positional_encoding,
    refine_path,
    split_path,
    stitch,
    validate_trajectory,
)

__version__ = "0.1.0"
