"""
Lifted module - rectangles and cell coverings in lift coordinates, and the lifted-map protocol
the twist and stretching checks evaluate.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from src.core.exceptions import PreconditionError

# A lifted map takes lift coordinates (x, y) and returns the lift (X, Y) of the image
LiftedMap = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]

CHUNK = 4096


@dataclass(frozen=True)
class LiftBox:
    """
    Closed box [x0, x1] x [y0, y1] in lift coordinates.

    `axis` is the coordinate a path has to traverse to cross the box: 0 when its R⁻ sides are
    the vertical edges x = x0 and x = x1, 1 when they are y = y0 and y = y1.
    """
    x0: float
    x1: float
    y0: float
    y1: float
    axis: int = 0

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise PreconditionError(f"degenerate box [{self.x0}, {self.x1}] x [{self.y0}, {self.y1}]")
        if self.axis not in (0, 1):
            raise PreconditionError(f"box axis must be 0 or 1, got {self.axis}")

    @property
    def span(self) -> tuple[float, float]:
        """Range of the traversal coordinate."""
        return (self.x0, self.x1) if self.axis == 0 else (self.y0, self.y1)

    @property
    def cross_span(self) -> tuple[float, float]:
        return (self.y0, self.y1) if self.axis == 0 else (self.x0, self.x1)

    def contains(self, x, y, tol: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return ((x >= self.x0 - tol) & (x <= self.x1 + tol) &
                (y >= self.y0 - tol) & (y <= self.y1 + tol))

    def side(self, x, y, tol: float = 0.0) -> np.ndarray:
        """
        -1 / +1 when a point is level with the box and past its low / high R⁻ side, 0 inside,
        2 when it is beyond the other pair of sides.
        """
        along, across = (x, y) if self.axis == 0 else (y, x)
        along = np.asarray(along, dtype=float)
        across = np.asarray(across, dtype=float)
        lo, hi = self.span
        c0, c1 = self.cross_span
        out = np.where(along < lo - tol, -1, np.where(along > hi + tol, 1, 0))
        level = (across >= c0 - tol) & (across <= c1 + tol)
        return np.where(level, out, 2).astype(int)

    def grid(self, nx: int, ny: int) -> tuple[np.ndarray, np.ndarray]:
        """Cell edges of a regular nx by ny subdivision."""
        return np.linspace(self.x0, self.x1, nx + 1), np.linspace(self.y0, self.y1, ny + 1)


@dataclass(frozen=True)
class CellRegion:
    """Union of closed axis-aligned cells, rows [x0, x1, y0, y1]."""
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=float).reshape(-1, 4)
        object.__setattr__(self, "cells", cells)

    def __len__(self) -> int:
        return self.cells.shape[0]

    @property
    def empty(self) -> bool:
        return self.cells.shape[0] == 0

    @property
    def centers(self) -> np.ndarray:
        return np.column_stack([0.5 * (self.cells[:, 0] + self.cells[:, 1]),
                                0.5 * (self.cells[:, 2] + self.cells[:, 3])])

    def dilated(self, cells: int = 1) -> "CellRegion":
        """Every cell grown by `cells` times its own width and height on each side."""
        w = (self.cells[:, 1] - self.cells[:, 0]) * cells
        h = (self.cells[:, 3] - self.cells[:, 2]) * cells
        return CellRegion(np.column_stack([self.cells[:, 0] - w, self.cells[:, 1] + w,
                                           self.cells[:, 2] - h, self.cells[:, 3] + h]))

    def contains(self, x, y) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        inside = np.zeros(x.shape, dtype=bool)
        if self.empty:
            return inside
        c = self.cells
        for start in range(0, x.size, CHUNK):
            px = x[start:start + CHUNK, None]
            py = y[start:start + CHUNK, None]
            hit = (px >= c[:, 0]) & (px <= c[:, 1]) & (py >= c[:, 2]) & (py <= c[:, 3])
            inside[start:start + CHUNK] = hit.any(axis=1)
        return inside

    def sample(self, per_side: int) -> np.ndarray:
        """per_side x per_side interior points of every cell, (N, 2)."""
        f = (np.arange(per_side) + 0.5) / per_side
        fx, fy = np.meshgrid(f, f)
        c = self.cells
        xs = c[:, 0, None] + fx.ravel()[None, :] * (c[:, 1] - c[:, 0])[:, None]
        ys = c[:, 2, None] + fy.ravel()[None, :] * (c[:, 3] - c[:, 2])[:, None]
        return np.column_stack([xs.ravel(), ys.ravel()])

    def disjoint_from(self, other: "CellRegion") -> bool:
        """No cell of self overlaps a cell of other in a set of positive area."""
        if self.empty or other.empty:
            return True
        a, b = self.cells, other.cells
        overlap_x = np.minimum(a[:, None, 1], b[None, :, 1]) - np.maximum(a[:, None, 0], b[None, :, 0])
        overlap_y = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 2], b[None, :, 2])
        return not bool(np.any((overlap_x > 0) & (overlap_y > 0)))


def apply(lifted: LiftedMap, points: np.ndarray) -> np.ndarray:
    """Evaluate a lifted map on an (N, 2) array of lift points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        return points.copy()
    x, y = lifted(points[:, 0], points[:, 1])
    return np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
