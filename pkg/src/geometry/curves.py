"""
Curves module - closed polylines, region predicates and small polyline utilities shared by the
charts, the linkage test and the stretching checks.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from matplotlib.path import Path
from scipy.spatial.distance import directed_hausdorff

from src.core.exceptions import PreconditionError, GeometricFailureError

# Segments compared per block in the self-intersection test
_BLOCK = 256


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def resample_polyline(points: np.ndarray, n: int) -> np.ndarray:
    """n points evenly spaced in arc length along the polyline."""
    points = np.asarray(points, dtype=float)
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(points, axis=0), axis=1))])
    if s[-1] == 0:
        raise GeometricFailureError("cannot resample a polyline of zero length")
    targets = np.linspace(0.0, s[-1], n)
    return np.stack([np.interp(targets, s, points[:, 0]), np.interp(targets, s, points[:, 1])], axis=-1)


def hausdorff_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])


def ray_distances(polyline: np.ndarray, center, angles_turns: np.ndarray) -> np.ndarray:
    """
    Distance from center to the first crossing of each ray with the polyline (NaN if none).

    Angles are in turns, counter-clockwise from the positive x-axis.
    """
    a = polyline[:-1]
    e = np.diff(polyline, axis=0)
    rel = a - np.asarray(center, dtype=float)
    out = np.full(angles_turns.shape, np.nan)
    for start in range(0, angles_turns.size, _BLOCK):
        phi = 2 * np.pi * angles_turns[start:start + _BLOCK]
        d = np.stack([np.cos(phi), np.sin(phi)], axis=-1)[:, None, :]
        denom = _cross(d, e[None, :, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            r = _cross(rel[None, :, :], e[None, :, :]) / denom
            u = _cross(rel[None, :, :], d) / denom
        valid = (np.abs(denom) > 0) & (u >= 0) & (u <= 1) & (r > 0)
        r = np.where(valid, r, np.inf)
        best = r.min(axis=1)
        out[start:start + _BLOCK] = np.where(np.isfinite(best), best, np.nan)
    return out


@dataclass(frozen=True)
class JordanCurve:
    """Closed polyline, first point repeated at the end."""
    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 4:
            raise PreconditionError("a Jordan curve needs at least three distinct vertices")
        if not np.allclose(p[0], p[-1], rtol=0, atol=1e-12):
            p = np.vstack([p, p[:1]])
        else:
            p = p.copy()
            p[-1] = p[0]
        object.__setattr__(self, "points", p)
        if not self.is_simple():
            raise GeometricFailureError("closed polyline crosses itself")

    @cached_property
    def path(self) -> Path:
        return Path(self.points, closed=True)

    @property
    def signed_area(self) -> float:
        x, y = self.points[:, 0], self.points[:, 1]
        return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))

    @property
    def orientation(self) -> int:
        """+1 counter-clockwise, -1 clockwise."""
        return 1 if self.signed_area > 0 else -1

    @property
    def centroid(self) -> np.ndarray:
        return self.points[:-1].mean(axis=0)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.ptp(self.points, axis=0)))

    def contains(self, points) -> np.ndarray:
        """Strict interior test (even-odd)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.path.contains_points(points)

    def is_simple(self) -> bool:
        """No two non-adjacent segments cross."""
        a0, a1 = self.points[:-1], self.points[1:]
        n = a0.shape[0]
        index = np.arange(n)
        for start in range(0, n, _BLOCK):
            i = index[start:start + _BLOCK, None]
            p0, p1 = a0[start:start + _BLOCK, None, :], a1[start:start + _BLOCK, None, :]
            q0, q1 = a0[None, :, :], a1[None, :, :]
            d1 = _cross(q1 - q0, p0 - q0)
            d2 = _cross(q1 - q0, p1 - q0)
            d3 = _cross(p1 - p0, q0 - p0)
            d4 = _cross(p1 - p0, q1 - p0)
            crossing = (d1 * d2 < 0) & (d3 * d4 < 0)
            j = index[None, :]
            relevant = (j > i + 1) & ~((i == 0) & (j == n - 1))
            if np.any(crossing & relevant):
                return False
        return True


@dataclass(frozen=True)
class Disk:
    center: np.ndarray
    radius: float

    def contains(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.linalg.norm(points - self.center, axis=1) <= self.radius

    def boundary(self, n: int = 2048) -> np.ndarray:
        phi = 2 * np.pi * np.arange(n) / n
        return self.center + self.radius * np.stack([np.cos(phi), np.sin(phi)], axis=-1)

