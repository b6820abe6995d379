"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, scene errors -> 3,
infeasibility (no floor / no path / no placement) -> 4, TrainingError -> 5.
"""


class SceneError(Exception):
    """Scene geometry could not be used (degenerate AABB, bad voxel request)."""


class MeshParseError(SceneError):
    """Malformed OBJ input; message carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InfeasibleError(Exception):
    """Base for 'the scene admits no solution' conditions."""


class NoFloorError(InfeasibleError):
    """Scene has no free floor cells after the clearance test."""


class NoPathError(InfeasibleError):
    """Start and goal are walkable but not connected."""


class PlacementError(InfeasibleError):
    """No valid anchor candidate exists for the requested action."""


class TrainingError(Exception):
    """Training diverged (non-finite loss) or received an unusable dataset."""


class SchemaError(Exception):
    """A JSON artifact failed validation; message carries the field path."""


class ConfigError(Exception):
    """Run configuration is inconsistent or incomplete."""


class PipelineStageError(Exception):
    """Wraps a failure inside run_pipeline with stage and sample context."""

    def __init__(self, stage: str, sample: int | None, cause: Exception):
        where = stage if sample is None else f"{stage}, sample {sample}"
        super().__init__(f"stage {where}: {cause}")
        self.stage = stage
        self.sample = sample
        self.cause = cause
