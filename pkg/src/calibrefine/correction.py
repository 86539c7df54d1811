"""Correction-matrix refinement: fit a multiplicative correction D so that
H* = H @ D minimizes the mean squared distance between H*-projected LiDAR
points and their nearest camera detections. The nearest-neighbor pairings
are the supervision; they are rebuilt after every solver pass (an "outer
round") because they depend on the current H*.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientPairs
from .geometry import (
    Correspondence,
    Homography,
    PixelPoint,
    PlanePoint,
    Source,
    W_EPSILON,
    compose,
    correspondence_arrays,
    transform_points,
)
from .lsq import damped_least_squares
from .matching import MatchGate, greedy_match

# Gauge: d11 is frozen at 1 (the correction starts at identity and stays
# well away from d11 = 0), leaving 8 free parameters.
_GAUGE = 0
_FREE = [i for i in range(9) if i != _GAUGE]


@dataclass(frozen=True)
class CorrectionConfig:
    gate: MatchGate = MatchGate()
    max_outer_rounds: int = 10
    min_pairs: int = 12
    max_iterations: int = 100
    init_damping: float = 1e-3

    def __post_init__(self):
        if self.max_outer_rounds < 1:
            raise ValueError(f"max_outer_rounds must be >= 1, got {self.max_outer_rounds}")
        if self.min_pairs < 4:
            raise ValueError(f"min_pairs must be >= 4, got {self.min_pairs}")


@dataclass(frozen=True)
class CorrectionResult:
    h_delta: Homography
    h_star: Homography
    loss_trace: tuple[float, ...]
    pairs_used: int


def implicit_pairs(
    h: Homography,
    lidar: Sequence[PlanePoint],
    camera: Sequence[PixelPoint],
    gate: MatchGate,
    frame_id: int = 0,
) -> list[Correspondence]:
    """Pair each projected LiDAR point with its nearest camera detection
    inside the gate (greedy, one-to-one); degenerate projections are skipped."""
    projected: list[PixelPoint] = []
    kept: list[PlanePoint] = []
    if lidar:
        xy = np.array([[p.x, p.y] for p in lidar])
        uv, w = transform_points(h.m, xy)
        for i, p in enumerate(lidar):
            if abs(w[i]) <= W_EPSILON or not np.all(np.isfinite(uv[i])):
                continue
            projected.append(PixelPoint(float(uv[i, 0]), float(uv[i, 1])))
            kept.append(p)
    matches = greedy_match(projected, camera, gate)
    return [
        Correspondence(
            lidar=kept[i], pixel=camera[j], frame_id=frame_id, source=Source.GREEDY_MATCHED
        )
        for i, j, _ in matches.matches
    ]


def _residuals_and_jacobian(
    h_mat: np.ndarray, d_flat: np.ndarray, xy: np.ndarray, uv: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of project(H @ D, x) - u and their Jacobian wrt D's 9 entries."""
    d = d_flat.reshape(3, 3)
    g = h_mat @ d
    uv_hat, w = transform_points(g, xy)
    r = (uv_hat - uv).ravel()

    n = xy.shape[0]
    ones = np.ones(n)
    m_cols = (xy[:, 0], xy[:, 1], ones)
    jac = np.zeros((2 * n, 9))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv_w = 1.0 / w
        u_hat, v_hat = uv_hat[:, 0], uv_hat[:, 1]
        for k in range(3):
            du_k = (h_mat[0, k] - u_hat * h_mat[2, k]) * inv_w
            dv_k = (h_mat[1, k] - v_hat * h_mat[2, k]) * inv_w
            for col in range(3):
                jac[0::2, 3 * k + col] = du_k * m_cols[col]
                jac[1::2, 3 * k + col] = dv_k * m_cols[col]
    return r, jac


def reprojection_loss(
    h: Homography, h_delta: np.ndarray, pairs: Sequence[Correspondence]
) -> float:
    """Mean squared pixel discrepancy of the paired points under H @ D."""
    xy, uv = correspondence_arrays(pairs)
    r, _ = _residuals_and_jacobian(h.m, np.asarray(h_delta, float).ravel(), xy, uv)
    return float(r @ r) / len(pairs)


def reprojection_loss_gradient(
    h: Homography, h_delta: np.ndarray, pairs: Sequence[Correspondence]
) -> np.ndarray:
    """Analytic gradient of the loss wrt the 9 raw entries of the correction."""
    xy, uv = correspondence_arrays(pairs)
    r, jac = _residuals_and_jacobian(h.m, np.asarray(h_delta, float).ravel(), xy, uv)
    return (2.0 / len(pairs)) * (jac.T @ r)


def _alternate(
    h: Homography,
    pair_fn,
    cfg: CorrectionConfig,
    pairs: list[Correspondence],
) -> tuple[np.ndarray, list[float], list[Correspondence]]:
    """Alternate solving for the correction and rebuilding the pairings."""
    d = np.eye(3).ravel()
    loss = reprojection_loss(h, d, pairs)
    trace = [loss]
    for _ in range(cfg.max_outer_rounds):
        xy, uv = correspondence_arrays(pairs)
        full = d.copy()

        def fun(free_params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            full[_FREE] = free_params
            r, jac = _residuals_and_jacobian(h.m, full, xy, uv)
            return r, jac[:, _FREE]

        solved = damped_least_squares(
            fun,
            d[_FREE],
            max_iterations=cfg.max_iterations,
            init_damping=cfg.init_damping,
        )
        if np.allclose(solved.params, d[_FREE], rtol=0.0, atol=1e-14):
            break  # solver has nothing to move; pairing is self-consistent
        candidate = d.copy()
        candidate[_FREE] = solved.params

        new_pairs = pair_fn(candidate.reshape(3, 3))
        if len(new_pairs) < cfg.min_pairs:
            break
        new_loss = reprojection_loss(h, candidate, new_pairs)
        if new_loss > loss:
            break  # re-pairing made things worse; keep the previous round
        d, pairs = candidate, new_pairs
        improvement = loss - new_loss
        trace.append(new_loss)
        loss = new_loss
        if improvement < 1e-8 * max(loss, 1e-300):
            break
    return d, trace, pairs


def _finish(
    h: Homography, pairs: list[Correspondence], pair_fn, cfg: CorrectionConfig, lenient: bool
) -> CorrectionResult:
    if len(pairs) < cfg.min_pairs:
        if lenient:
            # refinement not applicable: identity correction, input unchanged
            return CorrectionResult(
                h_delta=Homography.identity(),
                h_star=h,
                loss_trace=(),
                pairs_used=len(pairs),
            )
        raise InsufficientPairs(
            f"only {len(pairs)} implicit pairs; need >= {cfg.min_pairs}"
        )
    d, trace, final_pairs = _alternate(h, pair_fn, cfg, pairs)
    h_delta = Homography(d.reshape(3, 3))
    return CorrectionResult(
        h_delta=h_delta,
        h_star=compose(h, h_delta),
        loss_trace=tuple(trace),
        pairs_used=len(final_pairs),
    )


def fit_correction(
    h: Homography,
    lidar: Sequence[PlanePoint],
    camera: Sequence[PixelPoint],
    cfg: CorrectionConfig,
    lenient: bool = False,
) -> CorrectionResult:
    """Fit the correction against one pool of LiDAR and camera points.

    A round is accepted only if the loss, recomputed after re-pairing, does
    not increase; the loss trace over accepted rounds is therefore
    non-increasing. With fewer than ``cfg.min_pairs`` initial pairings the
    refinement is not applicable: raises ``InsufficientPairs``, or returns an
    identity correction when ``lenient`` is set.
    """

    def pair_fn(d: np.ndarray) -> list[Correspondence]:
        return implicit_pairs(Homography(h.m @ d), lidar, camera, cfg.gate)

    return _finish(h, pair_fn(np.eye(3)), pair_fn, cfg, lenient)


def fit_correction_stream(
    h: Homography,
    frames: Sequence,
    cfg: CorrectionConfig,
    lenient: bool = False,
) -> CorrectionResult:
    """Fit the correction against a frame stream, pairing within each frame.

    Same alternation and acceptance rule as :func:`fit_correction`, but the
    nearest-neighbor pairings never cross frame boundaries, which keeps them
    meaningful when detections from many timestamps would otherwise crowd
    the image plane.
    """

    def pair_fn(d: np.ndarray) -> list[Correspondence]:
        h_star = Homography(h.m @ d)
        pairs: list[Correspondence] = []
        for frame in frames:
            pairs.extend(
                implicit_pairs(
                    h_star,
                    frame.lidar_centers,
                    frame.camera_centers,
                    cfg.gate,
                    frame_id=frame.frame_id,
                )
            )
        return pairs

    return _finish(h, pair_fn(np.eye(3)), pair_fn, cfg, lenient)
