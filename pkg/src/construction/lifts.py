"""
Lifts module - wraps the frozen-field flow maps of a linked construction as lifted maps on the
strip and annulus charts, plus the rectangles of the two crossings in lift coordinates.
"""
from dataclasses import dataclass, field

import numpy as np

from src.core.exceptions import PreconditionError
from src.dynamics.flow import (IntegratorConfig, Trajectory, captured_trajectory, field_rhs, flow_points,
                               pack, solve)
from src.dynamics.normal_forms import VectorFieldSpec
from src.geometry.charts import LevelAnnulusChart, OrbitTimeStripChart, turns
from src.sap.lifted import LiftBox

# Rectangles in strip lift coordinates: the strip map carries the upstream one across the downstream one
UPSTREAM_STRIP = LiftBox(-2.0, -1.0, -1.0, 1.0, axis=1)
DOWNSTREAM_STRIP = LiftBox(1.0, 2.0, -1.0, 1.0, axis=0)
# The downstream rectangle read in annulus window units
DOWNSTREAM_ANNULUS = LiftBox(0.0, 0.5, -1.0, 1.0, axis=1)

LIFT_BLOCK = 1024
# Dense samples per inner-orbit period when unwrapping angles, and the cap on refinements
ANGLE_SAMPLES = 32
MAX_ANGLE_DOUBLINGS = 6
# Transverse band treated as the outer separatrix, and the hold distance from its saddles
SEPARATRIX_BAND = 1e-8
CAPTURE_RADIUS = 1e-5


@dataclass(frozen=True)
class StripFlowLift:
    """Lift of the strip flow map p -> phi(tau, p) to orbit-time coordinates."""
    chart: OrbitTimeStripChart
    tau: float
    cfg: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise PreconditionError(f"strip time must be positive, got {self.tau}")

    def plane(self, points) -> np.ndarray:
        return flow_points(self.chart.spec, self.tau, np.atleast_2d(points), self.cfg)

    def __call__(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
        start = self.chart.unlift(x, y)
        image = self.plane(start)
        return self.chart.lift(image, check=False)


@dataclass(frozen=True)
class AnnulusFlowLift:
    """
    Lift of the annulus flow map in window units (one turn = 2).

    The image angle is followed continuously along the dense trajectory, so the lift keeps the
    full number of turns made during tau. Points on the outer separatrix are flowed one by one and
    held once they reach one of the `sinks` (the saddles of the boundary cycle).
    """
    chart: LevelAnnulusChart
    spec: VectorFieldSpec
    tau: float
    period: float
    cfg: IntegratorConfig = field(default_factory=IntegratorConfig)
    sinks: np.ndarray = field(default_factory=lambda: np.empty((0, 2)), repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau >= 0):
            raise PreconditionError(f"annulus time must be non-negative, got {self.tau}")
        if not (np.isfinite(self.period) and self.period > 0):
            raise PreconditionError(f"inner period must be positive, got {self.period}")

    def _on_separatrix(self, rho: np.ndarray) -> np.ndarray:
        if self.sinks.shape[0] == 0:
            return np.zeros(rho.shape, dtype=bool)
        return rho >= 1.0 - SEPARATRIX_BAND

    def _trajectory(self, p) -> Trajectory:
        return captured_trajectory(self.spec, p, self.tau, self.sinks, CAPTURE_RADIUS, self.cfg)

    def plane(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        edge = self._on_separatrix(self.chart.transverse(points))
        out = np.empty_like(points)
        out[~edge] = flow_points(self.spec, self.tau, points[~edge], self.cfg)
        for k in np.nonzero(edge)[0]:
            out[k] = self._trajectory(points[k]).points[-1]
        return out

    def __call__(self, w, rho) -> tuple[np.ndarray, np.ndarray]:
        w = np.atleast_1d(np.asarray(w, dtype=float)).ravel()
        rho = np.broadcast_to(np.asarray(rho, dtype=float), w.shape).ravel()
        out_w = np.empty(w.size)
        out_rho = np.empty(w.size)
        for k in range(0, w.size, LIFT_BLOCK):
            out_w[k:k + LIFT_BLOCK], out_rho[k:k + LIFT_BLOCK] = self._block(w[k:k + LIFT_BLOCK],
                                                                             rho[k:k + LIFT_BLOCK])
        return out_w, out_rho

    def _angles(self, evaluate, t_end: float) -> np.ndarray:
        """Unwrapped angle (in turns) along [0, t_end]; evaluate(grid) gives (n, grid.size, 2)."""
        count = max(int(np.ceil(ANGLE_SAMPLES * t_end / self.period)), 1)
        for _ in range(MAX_ANGLE_DOUBLINGS):
            grid = np.linspace(0.0, t_end, count + 1)
            points = evaluate(grid)
            n = points.shape[0]
            raw = turns(points.reshape(n * grid.size, 2), self.chart.center,
                        self.chart.orientation).reshape(n, grid.size)
            phi = np.unwrap(raw, axis=1, period=1.0)
            if phi.shape[1] < 2 or np.max(np.abs(np.diff(phi, axis=1))) <= 0.25:
                break
            count *= 2
        return phi

    def _block(self, w: np.ndarray, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        start = self.chart.unlift(0.5 * w, rho)
        if self.tau == 0:
            return w.copy(), self.chart.transverse(start)
        phi0 = np.empty(w.size)
        phi_end = np.empty(w.size)
        image = np.empty_like(start)
        edge = self._on_separatrix(rho)
        inside = np.nonzero(~edge)[0]
        if inside.size:
            sol = solve(field_rhs(self.spec), (0.0, self.tau), pack(start[inside]), self.cfg, dense=True)

            def batch(grid):
                z = sol.sol(grid)
                return np.stack([z[0::2], z[1::2]], axis=-1)

            phi = self._angles(batch, self.tau)
            phi0[inside], phi_end[inside] = phi[:, 0], phi[:, -1]
            image[inside] = sol.y[:, -1].reshape(-1, 2)
        for k in np.nonzero(edge)[0]:
            path = self._trajectory(start[k])
            t_end = float(path.t[-1])
            if t_end > 0:
                phi = self._angles(lambda grid: path(grid)[None], t_end)[0]
            else:
                phi = np.full(2, turns(start[k][None], self.chart.center, self.chart.orientation)[0])
            phi0[k], phi_end[k] = phi[0], phi[-1]
            image[k] = path.points[-1]
        rho_end = self.chart.transverse(image)
        k0 = np.round((self.chart.normalize(phi0, rho) - w) / 2.0)
        window = self.chart.normalize(phi_end, np.clip(rho_end, -1.0, 1.0)) - 2.0 * k0
        return window, rho_end
