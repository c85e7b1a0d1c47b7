"""
Domains module - topological annuli, strips and oriented rectangles as curve-bounded regions
carrying their lift charts.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from src.core.exceptions import PreconditionError
from src.geometry.charts import RadialAnnulusChart, RuledStripChart
from src.geometry.curves import JordanCurve, resample_polyline


@dataclass(frozen=True)
class TopAnnulus:
    inner: JordanCurve
    outer: JordanCurve
    center_hint: np.ndarray
    chart: object = None

    def __post_init__(self):
        center = np.asarray(self.center_hint, dtype=float)
        object.__setattr__(self, "center_hint", center)
        if not np.all(self.outer.contains(self.inner.points[:-1])):
            raise PreconditionError("inner boundary is not strictly inside the outer boundary")
        if not bool(self.inner.contains(center[None, :])[0]):
            raise PreconditionError("center hint is not inside the inner boundary")
        if self.chart is None:
            object.__setattr__(self, "chart", RadialAnnulusChart(self.inner, self.outer, center))

    def contains(self, points) -> np.ndarray:
        return self.chart.contains(points)

    def lift(self, points, check: bool = True):
        return self.chart.lift(points, check)

    def unlift(self, theta, rho) -> np.ndarray:
        return self.chart.unlift(theta, rho)

    def transverse(self, points) -> np.ndarray:
        return self.chart.transverse(points)

    def boundary_points(self, samples: int) -> tuple[np.ndarray, np.ndarray]:
        """Points of the inner and outer boundary at evenly spaced chart angles."""
        theta = np.arange(samples) / samples
        return self.unlift(theta, -np.ones(samples)), self.unlift(theta, np.ones(samples))


@dataclass(frozen=True)
class TopStrip:
    """Strip between two disjoint boundary arcs; `ends` are the transverse clipping arcs."""
    lower: np.ndarray
    upper: np.ndarray
    chart: object = None
    ends: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        gap = float(np.min(cKDTree(upper).query(lower)[0]))
        if gap <= 0:
            raise PreconditionError("strip boundary arcs intersect")
        if self.chart is None:
            n = max(lower.shape[0], upper.shape[0], 201)
            object.__setattr__(self, "chart", RuledStripChart(resample_polyline(lower, n),
                                                              resample_polyline(upper, n)))
        if self.ends is None:
            object.__setattr__(self, "ends", (np.array([lower[0], upper[0]]), np.array([lower[-1], upper[-1]])))

    @property
    def polygon(self) -> JordanCurve:
        return JordanCurve(np.vstack([self.lower, self.ends[1][1:-1], self.upper[::-1], self.ends[0][::-1][1:-1]]))

    def contains(self, points, clip: bool = True) -> np.ndarray:
        return self.chart.contains(points, clip)

    def lift(self, points, check: bool = True):
        return self.chart.lift(points, check)

    def unlift(self, x, y) -> np.ndarray:
        return self.chart.unlift(x, y)

    def transverse(self, points) -> np.ndarray:
        return self.chart.transverse(points)


@dataclass(frozen=True)
class OrientedRectangle:
    """
    A component of A ∩ S.

    `annulus_sides` are the sub-arcs on the inner and outer annulus boundary (the R⁻ arcs when
    the rectangle is read in annulus orientation), `strip_sides` the sub-arcs on the two strip
    boundary arcs. `theta_lo` / `theta_hi` give the chart angle (turns) of the two strip sides
    at the levels `rho_levels`.
    """
    label: str
    boundary: JordanCurve
    annulus_sides: tuple[np.ndarray, np.ndarray]
    strip_sides: tuple[np.ndarray, np.ndarray]
    rho_levels: np.ndarray
    theta_lo: np.ndarray
    theta_hi: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def window(self) -> tuple[float, float]:
        """Chart-angle window (turns) spanned over all levels."""
        return float(np.min(self.theta_lo)), float(np.max(self.theta_hi))

    def contains(self, points) -> np.ndarray:
        return self.boundary.contains(points)
