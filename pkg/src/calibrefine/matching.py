"""Greedy bipartite matching between projected LiDAR points and camera
detections: repeatedly take the globally cheapest remaining pair under a
distance gate, leaving the rest unmatched.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import PixelPoint


@dataclass(frozen=True)
class MatchGate:
    """Maximum pixel distance at which a cross-sensor pair is admissible."""

    max_distance: float = 40.0

    def __post_init__(self):
        if not self.max_distance > 0:
            raise ValueError(f"max_distance must be > 0, got {self.max_distance}")


@dataclass(frozen=True)
class MatchSet:
    """Greedy matching outcome: a partial injection plus the leftovers."""

    matches: tuple[tuple[int, int, float], ...]
    unmatched_lidar: tuple[int, ...]
    unmatched_camera: tuple[int, ...]


def greedy_match(
    projected: Sequence[PixelPoint],
    detections: Sequence[PixelPoint],
    gate: MatchGate,
) -> MatchSet:
    """Match projected points to detections, cheapest admissible pair first.

    Ties break on (cost, lidar index, camera index). Each index is used at
    most once; anything without an admissible partner stays unmatched.
    """
    n_l, n_c = len(projected), len(detections)
    if n_l == 0 or n_c == 0:
        return MatchSet((), tuple(range(n_l)), tuple(range(n_c)))

    proj = np.array([[p.u, p.v] for p in projected], dtype=float)
    dets = np.array([[p.u, p.v] for p in detections], dtype=float)
    diff = proj[:, None, :] - dets[None, :, :]
    cost = np.hypot(diff[..., 0], diff[..., 1])

    li, ci = np.nonzero(cost <= gate.max_distance)
    order = sorted(zip(cost[li, ci].tolist(), li.tolist(), ci.tolist()))

    lidar_used = [False] * n_l
    camera_used = [False] * n_c
    matches: list[tuple[int, int, float]] = []
    for c, i, j in order:
        if lidar_used[i] or camera_used[j]:
            continue
        lidar_used[i] = True
        camera_used[j] = True
        matches.append((i, j, c))

    return MatchSet(
        matches=tuple(matches),
        unmatched_lidar=tuple(i for i in range(n_l) if not lidar_used[i]),
        unmatched_camera=tuple(j for j in range(n_c) if not camera_used[j]),
    )
