"""Four-stage orchestration: oracle correspondences feed a coarse homography,
the coarse result seeds online iterative refinement, and a correction-matrix
fit runs last. Every stage is scored on one held-out set of noise-free
ground-truth pairs that no stage ever consumes.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .blocks import BlockGrid, block_sample
from .correction import CorrectionConfig, CorrectionResult, fit_correction_stream
from .errors import CalibrationError, EmptySet, InsufficientPairs
from .geometry import (
    Correspondence,
    Homography,
    ResidualReport,
    reprojection_metrics,
)
from .ransac import RansacConfig, RansacResult, ransac_homography
from .refine import CalibrationState, Frame, RefineConfig, run as run_refinement

#: Histogram layout: 1 px buckets over [0, 200) plus one overflow bucket.
HISTOGRAM_EDGE = 200
OracleFn = Callable[[Frame], Sequence[Correspondence]]


class StageFailure(CalibrationError):
    """A pipeline stage failed; carries which one."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    grid: BlockGrid = BlockGrid(1920, 1080)
    ransac: RansacConfig = RansacConfig()
    refine: RefineConfig = RefineConfig()
    correction: CorrectionConfig = CorrectionConfig()
    coarse_frames: int = 100
    eval_fraction: float = 0.1
    split_seed: int = 0
    skip_parity: bool = True

    def __post_init__(self):
        if self.coarse_frames < 1:
            raise ValueError(f"coarse_frames must be >= 1, got {self.coarse_frames}")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ValueError(f"eval_fraction must be in (0, 1), got {self.eval_fraction}")


@dataclass(frozen=True)
class PipelineReport:
    h_coarse: Homography
    h_iterative: Homography
    h_star: Homography
    stage_metrics: Mapping[str, ResidualReport]
    checkpoints: tuple
    histograms: Mapping[str, np.ndarray]
    correction: CorrectionResult
    eval_pair_count: int


def coarse_calibrate(
    oracle_pairs: Sequence[Correspondence],
    grid: BlockGrid,
    cfg: RansacConfig,
    skip_parity: bool = True,
) -> Homography:
    """Block-sample the oracle pairs, then RANSAC with an inlier refit."""
    return coarse_fit(oracle_pairs, grid, cfg, skip_parity)[0].h


def coarse_fit(
    oracle_pairs: Sequence[Correspondence],
    grid: BlockGrid,
    cfg: RansacConfig,
    skip_parity: bool = True,
) -> tuple[RansacResult, list[Correspondence]]:
    """Like :func:`coarse_calibrate` but also returns the inlier pairs."""
    sampled = block_sample(oracle_pairs, grid, skip_parity=skip_parity)
    if len(sampled) < 4:
        raise InsufficientPairs(
            f"only {len(sampled)} pairs left after block sampling ({len(oracle_pairs)} in)"
        )
    result = ransac_homography(sampled, cfg)
    inliers = [sampled[i] for i in result.inlier_indices]
    return result, inliers


def evaluate(h: Homography, eval_pairs: Sequence[Correspondence]) -> ResidualReport:
    """Reprojection metrics of ``h`` on an evaluation pair set."""
    if not eval_pairs:
        raise EmptySet("evaluation needs at least one pair")
    return reprojection_metrics(h, eval_pairs)


def error_histogram(report: ResidualReport) -> np.ndarray:
    """Counts per 1 px bucket over [0, 200), final bucket = everything above.

    The counts always sum to ``report.n``.
    """
    counts = np.zeros(HISTOGRAM_EDGE + 1, dtype=np.int64)
    clipped = np.minimum(np.floor(report.per_pair).astype(np.int64), HISTOGRAM_EDGE)
    np.add.at(counts, clipped, 1)
    return counts


def split_eval_pairs(
    gt_pairs: Sequence[Correspondence], fraction: float, seed: int
) -> list[Correspondence]:
    """Seeded held-out selection of ground-truth pairs for evaluation."""
    if not gt_pairs:
        raise EmptySet("no ground-truth pairs to split")
    rng = np.random.default_rng([seed, 9])
    k = max(1, int(round(fraction * len(gt_pairs))))
    idx = np.sort(rng.choice(len(gt_pairs), size=k, replace=False))
    return [gt_pairs[i] for i in idx]


def run_full(
    frames: Sequence[Frame],
    oracle: OracleFn,
    cfg: PipelineConfig,
    gt_pairs: Sequence[Correspondence],
) -> PipelineReport:
    """Execute coarse -> iterative -> correction and score each stage on the
    held-out split of ``gt_pairs``.

    The coarse stage consumes oracle pairs from the first
    ``cfg.coarse_frames`` frames; its inliers seed the accumulated set of the
    iterative stage, which replays the whole stream. The correction stage
    fits on per-frame implicit pairings over the full stream.
    """
    eval_pairs = split_eval_pairs(gt_pairs, cfg.eval_fraction, cfg.split_seed)

    coarse_input = [
        pair for frame in frames[: cfg.coarse_frames] for pair in oracle(frame)
    ]
    try:
        coarse_result, coarse_inliers = coarse_fit(
            coarse_input, cfg.grid, cfg.ransac, cfg.skip_parity
        )
    except CalibrationError as exc:
        raise StageFailure("coarse", exc) from exc
    h_coarse = coarse_result.h

    refine_cfg = replace(
        cfg.refine, grid=cfg.grid, ransac=cfg.ransac, skip_parity=cfg.skip_parity
    )
    try:
        state: CalibrationState = run_refinement(
            frames, h_coarse, refine_cfg, initial_pairs=coarse_inliers
        )
    except CalibrationError as exc:
        raise StageFailure("iterative", exc) from exc
    h_iterative = state.h_best

    try:
        correction = fit_correction_stream(h_iterative, frames, cfg.correction, lenient=True)
    except CalibrationError as exc:
        raise StageFailure("correction", exc) from exc
    h_star = correction.h_star

    stage_metrics = {
        "coarse": evaluate(h_coarse, eval_pairs),
        "iterative": evaluate(h_iterative, eval_pairs),
        "correction": evaluate(h_star, eval_pairs),
    }
    histograms = {name: error_histogram(report) for name, report in stage_metrics.items()}
    return PipelineReport(
        h_coarse=h_coarse,
        h_iterative=h_iterative,
        h_star=h_star,
        stage_metrics=stage_metrics,
        checkpoints=state.checkpoints,
        histograms=histograms,
        correction=correction,
        eval_pair_count=len(eval_pairs),
    )
