"""Homography-based LiDAR-camera calibration with a coarse RANSAC fit,
online iterative refinement, correction-matrix refinement, and a simulator
providing ground truth to verify against."""

from .blocks import BlockGrid, Parity, block_of, block_sample
from .correction import (
    CorrectionConfig,
    CorrectionResult,
    fit_correction,
    fit_correction_stream,
    implicit_pairs,
    reprojection_loss,
    reprojection_loss_gradient,
)
from .errors import (
    CalibrationError,
    ConsensusFailure,
    DegenerateConfiguration,
    DegenerateProjection,
    EmptySet,
    InsufficientPairs,
    NonConvergenceWarning,
    OutOfOrderFrame,
    SingularMatrixError,
    SingularResult,
)
from .geometry import (
    Correspondence,
    Homography,
    PixelPoint,
    PlanePoint,
    ResidualReport,
    Source,
    compose,
    estimate_homography,
    project,
    project_points,
    refine_homography,
    reprojection_metrics,
)
from .matching import MatchGate, MatchSet, greedy_match
from .pipeline import (
    PipelineConfig,
    PipelineReport,
    StageFailure,
    coarse_calibrate,
    coarse_fit,
    error_histogram,
    evaluate,
    run_full,
)
from .ransac import RansacConfig, RansacResult, ransac_homography
from .refine import (
    CalibrationState,
    CheckpointRecord,
    Frame,
    GuardMetric,
    RefineConfig,
    checkpoint_recalibrate,
    ingest_frame,
)
from .simulator import (
    GroundTruth,
    SceneConfig,
    SimFrame,
    generate,
    oracle_pairs,
    random_homography,
)

__version__ = "0.1.0"

__all__ = [
    "BlockGrid",
    "CalibrationError",
    "CalibrationState",
    "CheckpointRecord",
    "ConsensusFailure",
    "CorrectionConfig",
    "CorrectionResult",
    "Correspondence",
    "DegenerateConfiguration",
    "DegenerateProjection",
    "EmptySet",
    "Frame",
    "GroundTruth",
    "GuardMetric",
    "Homography",
    "InsufficientPairs",
    "MatchGate",
    "MatchSet",
    "NonConvergenceWarning",
    "OutOfOrderFrame",
    "Parity",
    "PipelineConfig",
    "PipelineReport",
    "PixelPoint",
    "PlanePoint",
    "RansacConfig",
    "RansacResult",
    "RefineConfig",
    "ResidualReport",
    "SceneConfig",
    "SimFrame",
    "SingularMatrixError",
    "SingularResult",
    "Source",
    "StageFailure",
    "block_of",
    "block_sample",
    "checkpoint_recalibrate",
    "coarse_calibrate",
    "coarse_fit",
    "compose",
    "error_histogram",
    "estimate_homography",
    "evaluate",
    "fit_correction",
    "fit_correction_stream",
    "generate",
    "greedy_match",
    "implicit_pairs",
    "ingest_frame",
    "oracle_pairs",
    "project",
    "project_points",
    "random_homography",
    "ransac_homography",
    "refine_homography",
    "reprojection_loss",
    "reprojection_loss_gradient",
    "reprojection_metrics",
    "run_full",
]
