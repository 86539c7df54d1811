"""Homogeneous 2D projective geometry: the homography type, projection,
composition, reprojection-error metrics, and the DLT / least-squares
estimators that everything else builds on.

Conventions: the ground plane is metric (x, y in meters), the image plane is
pixels (u, v). A homography maps ground points to pixels via
``[u*w, v*w, w] = H [x, y, 1]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegenerateProjection,
    EmptySet,
    InsufficientPairs,
    NonConvergenceWarning,
    SingularMatrixError,
    SingularResult,
)
from .lsq import damped_least_squares

#: Absolute threshold on the homogeneous coordinate w below which a
#: projection is treated as mapping to infinity.
W_EPSILON = 1e-12

#: Minimum |det| of a canonically scaled matrix to count as non-singular.
SINGULARITY_TOL = 1e-12

# Frobenius norms within this distance of 1.0 are treated as already
# canonical; this keeps canonicalization idempotent at the bit level.
_NORM_SLACK = 4.0 * np.finfo(float).eps


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} components must be finite, got {values}")


@dataclass(frozen=True)
class PlanePoint:
    """A point on the 2D ground plane, in meters."""

    x: float
    y: float

    def __post_init__(self):
        _require_finite("PlanePoint", self.x, self.y)


@dataclass(frozen=True)
class PixelPoint:
    """An image-plane point in pixels; may lie outside image bounds."""

    u: float
    v: float

    def __post_init__(self):
        _require_finite("PixelPoint", self.u, self.v)


class Source(Enum):
    """How a correspondence was produced."""

    ORACLE = "oracle"
    GREEDY_MATCHED = "greedy_matched"
    MANUAL = "manual"


@dataclass(frozen=True)
class Correspondence:
    """One ground-plane point paired with one pixel-plane point."""

    lidar: PlanePoint
    pixel: PixelPoint
    frame_id: int = 0
    source: Source = Source.MANUAL

    def __post_init__(self):
        if self.frame_id < 0:
            raise ValueError(f"frame_id must be non-negative, got {self.frame_id}")


def _canonical(matrix: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(matrix))
    if norm == 0.0 or not math.isfinite(norm):
        raise SingularMatrixError("matrix norm is zero or non-finite")
    # Dividing out the nearest power of two is exact, so matrices that differ
    # only by a power-of-two scale canonicalize to identical bits; the
    # remaining norm is then 1 within slack for already-canonical input,
    # which keeps canonicalization idempotent.
    matrix = matrix / math.ldexp(1.0, round(math.log2(norm)))
    residual = float(np.linalg.norm(matrix))
    if abs(residual - 1.0) > _NORM_SLACK:
        matrix = matrix / residual
    h33 = matrix[2, 2]
    if h33 != 0.0:
        if h33 < 0.0:
            matrix = -matrix
    else:
        flat = matrix.ravel()
        lead = flat[np.flatnonzero(flat)[0]]
        if lead < 0.0:
            matrix = -matrix
    return matrix


class Homography:
    """Non-singular 3x3 projective map from the ground plane to the image.

    The stored matrix is canonically scaled: Frobenius norm 1 with
    ``h33 >= 0`` (first nonzero entry positive when ``h33 == 0``), so two
    projectively equal matrices compare equal entrywise.
    """

    __slots__ = ("m",)

    def __init__(self, matrix: Iterable) -> None:
        m = np.array(matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("homography entries must be finite")
        m = _canonical(m)
        if abs(np.linalg.det(m)) <= SINGULARITY_TOL:
            raise SingularMatrixError("matrix is singular within tolerance")
        m.flags.writeable = False
        self.m = m

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Homography):
            return NotImplemented
        return bool(np.array_equal(self.m, other.m))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        rows = ", ".join("[" + ", ".join(f"{v:.6g}" for v in row) + "]" for row in self.m)
        return f"Homography([{rows}])"


def transform_points(matrix: np.ndarray, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Apply a raw 3x3 matrix to (N, 2) points; returns ((N, 2) uv, (N,) w).

    No degeneracy check: rows with tiny ``w`` come back as inf/nan and the
    caller decides what that means.
    """
    xy = np.asarray(xy, dtype=float)
    x, y = xy[:, 0], xy[:, 1]
    w = matrix[2, 0] * x + matrix[2, 1] * y + matrix[2, 2]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        u = (matrix[0, 0] * x + matrix[0, 1] * y + matrix[0, 2]) / w
        v = (matrix[1, 0] * x + matrix[1, 1] * y + matrix[1, 2]) / w
    return np.column_stack([u, v]), w


def project_points(h: Homography, xy: np.ndarray) -> np.ndarray:
    """Project (N, 2) ground points to pixels, raising on any degenerate row."""
    uv, w = transform_points(h.m, xy)
    if np.any(np.abs(w) <= W_EPSILON):
        raise DegenerateProjection("point maps to infinity under this homography")
    return uv


def project(h: Homography, p: PlanePoint) -> PixelPoint:
    """Project a single ground-plane point to the image plane."""
    uv = project_points(h, np.array([[p.x, p.y]]))
    return PixelPoint(float(uv[0, 0]), float(uv[0, 1]))


def compose(outer: Homography, inner: Homography) -> Homography:
    """Return the canonical product ``outer @ inner``."""
    try:
        return Homography(outer.m @ inner.m)
    except SingularMatrixError as exc:
        raise SingularResult("composition produced a singular matrix") from exc


def correspondence_arrays(pairs: Sequence[Correspondence]) -> tuple[np.ndarray, np.ndarray]:
    """Split correspondences into (N, 2) ground and (N, 2) pixel arrays."""
    xy = np.array([[c.lidar.x, c.lidar.y] for c in pairs], dtype=float).reshape(-1, 2)
    uv = np.array([[c.pixel.u, c.pixel.v] for c in pairs], dtype=float).reshape(-1, 2)
    return xy, uv


@dataclass(frozen=True)
class ResidualReport:
    """Per-pair reprojection residuals plus their two summary statistics."""

    per_pair: np.ndarray
    aed: float
    rmse: float
    n: int

    @classmethod
    def from_residuals(cls, residuals: np.ndarray) -> "ResidualReport":
        residuals = np.array(residuals, dtype=float)
        residuals.flags.writeable = False
        return cls(
            per_pair=residuals,
            aed=float(residuals.mean()),
            rmse=float(np.sqrt(np.mean(residuals**2))),
            n=int(residuals.size),
        )


def reprojection_metrics(h: Homography, pairs: Sequence[Correspondence]) -> ResidualReport:
    """Euclidean residuals of ``pairs`` under ``h`` with AED and RMSE summaries."""
    if not pairs:
        raise EmptySet("reprojection metrics need at least one pair")
    xy, uv = correspondence_arrays(pairs)
    uv_hat = project_points(h, xy)
    residuals = np.hypot(uv_hat[:, 0] - uv[:, 0], uv_hat[:, 1] - uv[:, 1])
    return ResidualReport.from_residuals(residuals)


def _hartley_normalization(points: np.ndarray) -> np.ndarray:
    """Similarity transform taking points to centroid 0, mean distance sqrt(2)."""
    centroid = points.mean(axis=0)
    mean_dist = float(np.mean(np.linalg.norm(points - centroid, axis=1)))
    if mean_dist <= 0.0:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(2.0) / mean_dist
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def estimate_homography(pairs: Sequence[Correspondence]) -> Homography:
    """Direct linear transform with Hartley normalization.

    Solves the 2N x 9 system for the smallest singular direction and raises
    ``DegenerateConfiguration`` when the correspondences cannot pin down all
    eight degrees of freedom (e.g. collinear points).
    """
    if len(pairs) < 4:
        raise InsufficientPairs(f"need >= 4 pairs, got {len(pairs)}")
    xy, uv = correspondence_arrays(pairs)
    t_xy = _hartley_normalization(xy)
    t_uv = _hartley_normalization(uv)
    xn = xy @ t_xy[:2, :2].T + t_xy[:2, 2]
    un = uv @ t_uv[:2, :2].T + t_uv[:2, 2]

    n = len(pairs)
    design = np.zeros((2 * n, 9))
    x, y = xn[:, 0], xn[:, 1]
    u, v = un[:, 0], un[:, 1]
    design[0::2, 3] = -x
    design[0::2, 4] = -y
    design[0::2, 5] = -1.0
    design[0::2, 6] = v * x
    design[0::2, 7] = v * y
    design[0::2, 8] = v
    design[1::2, 0] = x
    design[1::2, 1] = y
    design[1::2, 2] = 1.0
    design[1::2, 6] = -u * x
    design[1::2, 7] = -u * y
    design[1::2, 8] = -u

    _, sing, vt = np.linalg.svd(design)
    if sing[7] <= 1e-10 * sing[0]:
        raise DegenerateConfiguration("design matrix rank < 8; points are degenerate")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_uv) @ h_norm @ t_xy
    try:
        return Homography(h)
    except SingularMatrixError as exc:
        raise DegenerateConfiguration("estimated matrix is singular") from exc


def _projection_residuals(params: np.ndarray, xy: np.ndarray, uv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interleaved (du, dv) residuals and their Jacobian wrt all 9 entries."""
    m = params.reshape(3, 3)
    uv_hat, w = transform_points(m, xy)
    r = (uv_hat - uv).ravel()

    n = xy.shape[0]
    jac = np.zeros((2 * n, 9))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv_w = 1.0 / w
        x, y = xy[:, 0], xy[:, 1]
        u_hat, v_hat = uv_hat[:, 0], uv_hat[:, 1]
        jac[0::2, 0] = x * inv_w
        jac[0::2, 1] = y * inv_w
        jac[0::2, 2] = inv_w
        jac[0::2, 6] = -u_hat * x * inv_w
        jac[0::2, 7] = -u_hat * y * inv_w
        jac[0::2, 8] = -u_hat * inv_w
        jac[1::2, 3] = x * inv_w
        jac[1::2, 4] = y * inv_w
        jac[1::2, 5] = inv_w
        jac[1::2, 6] = -v_hat * x * inv_w
        jac[1::2, 7] = -v_hat * y * inv_w
        jac[1::2, 8] = -v_hat * inv_w
    return r, jac


def refine_homography(
    pairs: Sequence[Correspondence],
    h0: Homography,
    max_iterations: int = 100,
    init_damping: float = 1e-3,
    cost_tol: float = 1e-10,
) -> Homography:
    """Locally minimize the summed squared reprojection error starting at h0.

    The projective scale gauge is fixed by freezing the largest-magnitude
    entry of h0; the remaining 8 entries are optimized with damped
    least-squares. Never returns a matrix worse than h0 on ``pairs``; warns
    with ``NonConvergenceWarning`` if the iteration cap is hit first.
    """
    if len(pairs) < 4:
        raise InsufficientPairs(f"need >= 4 pairs, got {len(pairs)}")
    xy, uv = correspondence_arrays(pairs)
    p0 = h0.m.ravel().copy()
    gauge = int(np.argmax(np.abs(p0)))
    free = [i for i in range(9) if i != gauge]

    full = p0.copy()

    def fun(free_params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        full[free] = free_params
        r, jac = _projection_residuals(full, xy, uv)
        return r, jac[:, free]

    uv0, w0 = transform_points(h0.m, xy)
    if np.any(np.abs(w0) <= W_EPSILON) or not np.all(np.isfinite(uv0)):
        raise DegenerateProjection("a pair projects degenerately under h0")

    result = damped_least_squares(
        fun,
        p0[free],
        max_iterations=max_iterations,
        init_damping=init_damping,
        cost_tol=cost_tol,
    )
    if not result.converged:
        warnings.warn(
            "refine_homography hit max_iterations; returning best iterate",
            NonConvergenceWarning,
            stacklevel=2,
        )
    full[free] = result.params
    return Homography(full.reshape(3, 3))
