"""Homography-guided fine matching of feature patches, with match densification."""

__version__ = "0.1.0"

from .correlation import CorrelationVolume, CorrSlice, build_volume, sample_slices
from .densify import DenseField, coverage_report, densify_field, densify_matches, expansion_grid
from .errors import (
    DegenerateConfiguration,
    DegenerateProjection,
    FormatError,
    HomopatchError,
    InvalidConfig,
    LevelMismatch,
    MissingGroundTruth,
    PointOutsidePatch,
)
from .evaluate import EvalReport, HomographyOracle, corner_auc, epe_pck, fine_loss, run_benchmark
from .featmap import FeatureMap, PatchPair, extract_patches, read_featmap, write_featmap
from .geometry import (
    Homography,
    corners_to_displacements,
    dlt_from_corners,
    dlt_least_squares,
    four_point_homography,
    project_points,
    unit_grid,
)
from .matcher import PatchMeta, coarse_match, map_point, run_pipeline
from .matchset import MatchSet
from .refiner import RefinerConfig, refine_batch, refine_patch
from .synth import synth_patch_pair, synth_scene

__all__ = [
    "CorrSlice",
    "CorrelationVolume",
    "DegenerateConfiguration",
    "DegenerateProjection",
    "DenseField",
    "EvalReport",
    "FeatureMap",
    "FormatError",
    "Homography",
    "HomographyOracle",
    "HomopatchError",
    "InvalidConfig",
    "LevelMismatch",
    "MatchSet",
    "MissingGroundTruth",
    "PatchMeta",
    "PatchPair",
    "PointOutsidePatch",
    "RefinerConfig",
    "build_volume",
    "coarse_match",
    "corner_auc",
    "corners_to_displacements",
    "coverage_report",
    "densify_field",
    "densify_matches",
    "dlt_from_corners",
    "dlt_least_squares",
    "epe_pck",
    "expansion_grid",
    "extract_patches",
    "fine_loss",
    "four_point_homography",
    "map_point",
    "project_points",
    "read_featmap",
    "refine_batch",
    "refine_patch",
    "run_benchmark",
    "run_pipeline",
    "sample_slices",
    "synth_patch_pair",
    "synth_scene",
    "unit_grid",
    "write_featmap",
]
