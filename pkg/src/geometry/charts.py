"""
Charts module - lift coordinates for annuli and strips.

Annulus charts return (theta, rho): theta in turns, rho = -1 on the inner boundary and +1 on the
outer one. Twist checks read angles in window units (2 * theta) so that the two linked
rectangles sit at [0, 1/2] and [1, 3/2] modulo 2. Strip charts return (x, y): y = -1 / +1 on the
two boundary arcs and x a longitudinal coordinate.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq, minimize_scalar
from scipy.optimize.elementwise import find_root

from src.core.exceptions import OutOfDomainError, GeometricFailureError, PreconditionError
from src.dynamics.flow import IntegratorConfig, EventFunction, batch_crossing_times, flow_points
from src.dynamics.normal_forms import FirstIntegral, VectorFieldSpec, level_intersection, loop_interior
from src.geometry.curves import JordanCurve, ray_distances

# Slack allowed when deciding that a point lies in a closed domain
DOMAIN_TOL = 1e-9
# Samples per ray when bracketing the outer boundary of a level annulus
RAY_SAMPLES = 512
# Points per block when unlifting level-annulus coordinates
UNLIFT_BLOCK = 2048


def turns(points, center, orientation: int) -> np.ndarray:
    """Oriented polar angle about center, in turns within [0, 1)."""
    d = np.atleast_2d(points) - np.asarray(center, dtype=float)
    return np.mod(orientation * np.arctan2(d[:, 1], d[:, 0]) / (2 * np.pi), 1.0)


def direction(phi_turns, orientation: int) -> np.ndarray:
    angle = 2 * np.pi * orientation * np.asarray(phi_turns, dtype=float)
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1)


# ----------------------------------------------------------------------
# Annulus charts
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class RadialAnnulusChart:
    """Angle about center_hint; rho interpolated between the boundary radii along each ray."""
    inner: JordanCurve
    outer: JordanCurve
    center: np.ndarray
    orientation: int = 1
    resolution: int = 4096

    @cached_property
    def _radii(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        grid = np.arange(self.resolution) / self.resolution
        raw = np.mod(self.orientation * grid, 1.0)
        r_in = ray_distances(self.inner.points, self.center, raw)
        r_out = ray_distances(self.outer.points, self.center, raw)
        if np.any(np.isnan(r_in)) or np.any(np.isnan(r_out)) or np.any(r_out <= r_in):
            raise GeometricFailureError("annulus is not star-shaped about its center hint")
        return grid, r_in, r_out

    def _bounds(self, theta):
        grid, r_in, r_out = self._radii
        return (np.interp(theta, grid, r_in, period=1.0), np.interp(theta, grid, r_out, period=1.0))

    def transverse(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        theta = turns(points, self.center, self.orientation)
        r = np.linalg.norm(points - self.center, axis=1)
        r_in, r_out = self._bounds(theta)
        return -1.0 + 2.0 * (r - r_in) / (r_out - r_in)

    def lift(self, points, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rho = self.transverse(points)
        if check and np.any(np.abs(rho) > 1.0 + DOMAIN_TOL):
            k = int(np.argmax(np.abs(rho)))
            raise OutOfDomainError(f"point {points[k].tolist()} is outside the annulus (rho={rho[k]:.6g})")
        return turns(points, self.center, self.orientation), rho

    def unlift(self, theta, rho) -> np.ndarray:
        theta = np.mod(np.asarray(theta, dtype=float), 1.0)
        rho = np.asarray(rho, dtype=float)
        r_in, r_out = self._bounds(theta)
        r = r_in + 0.5 * (rho + 1.0) * (r_out - r_in)
        return self.center + r[..., None] * direction(theta, self.orientation)

    def contains(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.outer.contains(points) & ~self.inner.contains(points)


@dataclass(frozen=True)
class LevelAnnulusChart:
    """
    Chart of an annulus bounded by two levels of a first integral.

    rho is affine in H (inner level -> -1, outer level -> +1). The angle about the center is
    normalised level by level: the four points where the level meets the two strip-boundary
    orbits become the knots 0, 1/2 (downstream rectangle) and 1, 3/2 (upstream rectangle), in
    window units, with one turn equal to 2.
    """
    fi: FirstIntegral
    inner_level: float
    outer_level: float
    x_edge: float
    center: np.ndarray
    orientation: int
    strip_fi: FirstIntegral
    strip_levels: tuple[float, float]
    downstream_sign: int
    ray_reach: float

    def level(self, rho):
        return self.inner_level + 0.5 * (np.asarray(rho, dtype=float) + 1.0) * (self.outer_level - self.inner_level)

    def transverse(self, points) -> np.ndarray:
        h = self.fi.value(np.atleast_2d(np.asarray(points, dtype=float)))
        return -1.0 + 2.0 * (h - self.inner_level) / (self.outer_level - self.inner_level)

    def knots(self, rho) -> np.ndarray:
        """(M, 5) raw-angle knots per level: downstream start/end, upstream start/end, start + 1."""
        c = np.atleast_1d(self.level(rho))
        angles = []
        for strip_level in self.strip_levels:
            x, y = level_intersection(self.fi, c, self.strip_fi, strip_level)
            down = np.stack([x, self.downstream_sign * y], axis=-1)
            up = np.stack([x, -self.downstream_sign * y], axis=-1)
            angles.append((turns(down, self.center, self.orientation), turns(up, self.center, self.orientation)))
        (d_a, u_a), (d_b, u_b) = angles
        swap = np.mod(d_b - d_a, 1.0) >= 0.5
        d0 = np.where(swap, d_b, d_a)
        d1 = d0 + np.mod(np.where(swap, d_a, d_b) - d0, 1.0)
        first_up = np.where(np.mod(u_b - u_a, 1.0) >= 0.5, u_b, u_a)
        last_up = np.where(np.mod(u_b - u_a, 1.0) >= 0.5, u_a, u_b)
        u0 = d0 + np.mod(first_up - d0, 1.0)
        u1 = u0 + np.mod(last_up - first_up, 1.0)
        knots = np.stack([d0, d1, u0, u1, d0 + 1.0], axis=-1)
        if np.any(np.isnan(knots)) or np.any(np.diff(knots, axis=-1) <= 0):
            raise GeometricFailureError("strip boundaries do not cut every annulus level in two disjoint arcs")
        return knots

    def normalize(self, phi, rho) -> np.ndarray:
        """Raw oriented angle (turns, any branch) -> window coordinate, N(phi + k) = N(phi) + 2k."""
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        knots = self.knots(np.broadcast_to(rho, phi.shape))
        wraps = np.floor(phi - knots[:, 0])
        reduced = phi - wraps
        idx = np.clip(np.sum(reduced[:, None] >= knots[:, 1:4], axis=1), 0, 3)
        lo = np.take_along_axis(knots, idx[:, None], axis=1)[:, 0]
        hi = np.take_along_axis(knots, idx[:, None] + 1, axis=1)[:, 0]
        return 0.5 * idx + 0.5 * (reduced - lo) / (hi - lo) + 2.0 * wraps

    def denormalize(self, window, rho) -> np.ndarray:
        window = np.atleast_1d(np.asarray(window, dtype=float))
        knots = self.knots(np.broadcast_to(rho, window.shape))
        wraps = np.floor(window / 2.0)
        reduced = window - 2.0 * wraps
        idx = np.clip(np.floor(reduced / 0.5).astype(int), 0, 3)
        lo = np.take_along_axis(knots, idx[:, None], axis=1)[:, 0]
        hi = np.take_along_axis(knots, idx[:, None] + 1, axis=1)[:, 0]
        return lo + (reduced - 0.5 * idx) / 0.5 * (hi - lo) + wraps

    def contains(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        slack = 0.5 * DOMAIN_TOL * (self.outer_level - self.inner_level)
        outside_hole = self.transverse(points) >= -1.0 - DOMAIN_TOL
        return outside_hole & loop_interior(self.fi, points, self.outer_level + slack, self.x_edge + DOMAIN_TOL)

    def lift(self, points, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rho = self.transverse(points)
        if check:
            bad = ~self.contains(points)
            if np.any(bad):
                k = int(np.argmax(bad))
                raise OutOfDomainError(f"point {points[k].tolist()} is outside the annulus (rho={rho[k]:.6g})")
        phi = turns(points, self.center, self.orientation)
        window = self.normalize(phi, np.clip(rho, -1.0, 1.0))
        return np.mod(window / 2.0, 1.0), rho

    def _ray_bracket(self, dirs: np.ndarray) -> np.ndarray:
        """Per ray, the radius of the outer boundary: first H >= outer level, x edge, or local max of H."""
        r = np.linspace(0.0, self.ray_reach, RAY_SAMPLES)
        pts = self.center[None, None, :] + r[None, :, None] * dirs[:, None, :]
        h = self.fi.value(pts)
        stop = (h >= self.outer_level) | (pts[..., 0] >= self.x_edge)
        stop[:, 1:] |= np.diff(h, axis=1) < 0
        stop[:, -1] = True
        first = np.argmax(stop, axis=1)
        bracket = np.empty(dirs.shape[0])
        for i, j in enumerate(first):
            d = dirs[i]
            if h[i, j] >= self.outer_level and pts[i, j, 0] <= self.x_edge:
                bracket[i] = r[j]
            elif pts[i, j, 0] >= self.x_edge:
                bracket[i] = (self.x_edge - self.center[0]) / d[0]
            else:
                res = minimize_scalar(lambda s: -float(self.fi.value(self.center + s * d)),
                                      bounds=(r[max(j - 2, 0)], r[j]), method="bounded",
                                      options={"xatol": 1e-13})
                bracket[i] = res.x
        return bracket

    def unlift(self, theta, rho) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        rho = np.broadcast_to(np.asarray(rho, dtype=float), theta.shape).ravel()
        theta = theta.ravel()
        if theta.size > UNLIFT_BLOCK:
            return np.vstack([self.unlift(theta[k:k + UNLIFT_BLOCK], rho[k:k + UNLIFT_BLOCK])
                              for k in range(0, theta.size, UNLIFT_BLOCK)])
        phi = self.denormalize(2.0 * np.mod(theta, 1.0), rho)
        dirs = direction(phi, self.orientation)
        levels = self.level(rho)
        reach = self._ray_bracket(dirs)
        r = reach.copy()
        todo = np.nonzero(self.fi.value(self.center + reach[:, None] * dirs) > levels)[0]
        if todo.size:
            def excess(s, dx, dy, level):
                pts = np.stack([self.center[0] + s * dx, self.center[1] + s * dy], axis=-1)
                return self.fi.value(pts) - level

            res = find_root(excess, (np.zeros(todo.size), reach[todo]),
                            args=(dirs[todo, 0], dirs[todo, 1], levels[todo]),
                            tolerances={"xatol": 1e-15, "xrtol": 4 * np.finfo(float).eps})
            r[todo] = res.x
        return self.center + r[:, None] * dirs


# ----------------------------------------------------------------------
# Strip charts
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class RuledStripChart:
    """
    Chart of a strip given by two boundary polylines, resampled to matching rungs.

    Each cell between consecutive rungs is inverted bilinearly; x runs over `window` along the strip.
    """
    lower: np.ndarray
    upper: np.ndarray
    window: tuple[float, float] = (-3.0, 3.0)

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != upper.shape or lower.shape[0] < 2:
            raise PreconditionError("strip arcs must be sampled with matching rungs")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def cells(self) -> int:
        return self.lower.shape[0] - 1

    def _bilinear(self, k, w, v):
        l0, l1, u0, u1 = self.lower[k], self.lower[k + 1], self.upper[k], self.upper[k + 1]
        w = w[..., None]
        v = v[..., None]
        return (1 - v) * ((1 - w) * l0 + w * l1) + v * ((1 - w) * u0 + w * u1)

    def _invert(self, points, k):
        l0, l1, u0, u1 = self.lower[k], self.lower[k + 1], self.upper[k], self.upper[k + 1]
        w = np.full(points.shape[0], 0.5)
        v = np.full(points.shape[0], 0.5)
        for _ in range(30):
            residual = self._bilinear(k, w, v) - points
            dw = (1 - v[:, None]) * (l1 - l0) + v[:, None] * (u1 - u0)
            dv = ((1 - w[:, None]) * u0 + w[:, None] * u1) - ((1 - w[:, None]) * l0 + w[:, None] * l1)
            det = dw[:, 0] * dv[:, 1] - dw[:, 1] * dv[:, 0]
            det = np.where(np.abs(det) > 1e-300, det, 1e-300)
            step_w = (residual[:, 0] * dv[:, 1] - residual[:, 1] * dv[:, 0]) / det
            step_v = (dw[:, 0] * residual[:, 1] - dw[:, 1] * residual[:, 0]) / det
            w, v = w - step_w, v - step_v
            if np.max(np.abs(step_w) + np.abs(step_v), initial=0.0) < 1e-15:
                break
        return w, v

    def _locate(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        centres = 0.25 * (self.lower[:-1] + self.lower[1:] + self.upper[:-1] + self.upper[1:])
        nearest = np.argmin(np.linalg.norm(points[:, None, :] - centres[None, :, :], axis=2), axis=1)
        cell = np.full(points.shape[0], -1)
        w_out = np.full(points.shape[0], np.nan)
        v_out = np.full(points.shape[0], np.nan)
        for offset in (0, -1, 1, -2, 2, -3, 3):
            todo = cell < 0
            if not np.any(todo):
                break
            k = np.clip(nearest[todo] + offset, 0, self.cells - 1)
            w, v = self._invert(points[todo], k)
            ok = (w >= -DOMAIN_TOL) & (w <= 1 + DOMAIN_TOL) & (v >= -DOMAIN_TOL) & (v <= 1 + DOMAIN_TOL)
            idx = np.nonzero(todo)[0][ok]
            cell[idx], w_out[idx], v_out[idx] = k[ok], w[ok], v[ok]
        return cell, np.clip(w_out, 0.0, 1.0), np.clip(v_out, 0.0, 1.0)

    def contains(self, points, clip: bool = True) -> np.ndarray:
        cell, _, _ = self._locate(points)
        return cell >= 0

    def transverse(self, points) -> np.ndarray:
        cell, _, v = self._locate(points)
        return np.where(cell >= 0, 2.0 * v - 1.0, np.nan)

    def lift(self, points, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cell, w, v = self._locate(points)
        if check and np.any(cell < 0):
            k = int(np.argmax(cell < 0))
            raise OutOfDomainError(f"point {points[k].tolist()} is outside the strip")
        s = (cell + w) / self.cells
        x = self.window[0] + s * (self.window[1] - self.window[0])
        return np.where(cell >= 0, x, np.nan), np.where(cell >= 0, 2.0 * v - 1.0, np.nan)

    def unlift(self, x, y) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
        s = (x - self.window[0]) / (self.window[1] - self.window[0]) * self.cells
        k = np.clip(np.floor(s).astype(int), 0, self.cells - 1)
        return self._bilinear(k, s - k, 0.5 * (y + 1.0))

    def section_range(self) -> tuple[float, float]:
        return self.window


@dataclass(frozen=True)
class OrbitTimeStripChart:
    """
    Chart of a strip of orbits of one frozen field between two levels of its first integral.

    y is affine in H_s (level_lo -> -1, level_hi -> +1). The longitudinal coordinate starts
    from u, the signed orbit time from the symmetry-axis crossing (negative upstream), and is
    normalised level by level through the knots (-b, -2), (-a, -1), (c, 0), (a, 1), (b, 2),
    where a and b are the times from the axis to the inner and outer annulus levels and
    c = kappa * a, extended linearly with slope 1/(b - a).
    """
    spec: VectorFieldSpec
    level_lo: float
    level_hi: float
    axis_tips: tuple[float, float]
    upstream_sign: int
    x_edge: float
    rho_grid: np.ndarray
    inner_times: np.ndarray
    outer_times: np.ndarray
    kappa: tuple[float, float]
    half_window: float
    cfg: IntegratorConfig = field(default_factory=IntegratorConfig)

    @cached_property
    def fi(self) -> FirstIntegral:
        return FirstIntegral(self.spec.family, self.spec.lam)

    @cached_property
    def _a(self) -> PchipInterpolator:
        return PchipInterpolator(self.rho_grid, self.inner_times)

    @cached_property
    def _b(self) -> PchipInterpolator:
        return PchipInterpolator(self.rho_grid, self.outer_times)

    def level(self, rho):
        return self.level_lo + 0.5 * (np.asarray(rho, dtype=float) + 1.0) * (self.level_hi - self.level_lo)

    def transverse(self, points) -> np.ndarray:
        h = self.fi.value(np.atleast_2d(np.asarray(points, dtype=float)))
        return -1.0 + 2.0 * (h - self.level_lo) / (self.level_hi - self.level_lo)

    def _knots(self, rho):
        rho = np.clip(np.asarray(rho, dtype=float), -1.0, 1.0)
        a = self._a(rho)
        b = self._b(rho)
        kappa = self.kappa[0] + 0.5 * (rho + 1.0) * (self.kappa[1] - self.kappa[0])
        return a, b, kappa * a

    def normalize(self, u, rho) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        a, b, c = self._knots(rho)
        slope = 1.0 / (b - a)
        return np.select(
            [u < -b, u < -a, u < c, u < a, u < b],
            [-2.0 + (u + b) * slope, -2.0 + (u + b) / (b - a), -1.0 + (u + a) / (c + a),
             (u - c) / (a - c), 1.0 + (u - a) / (b - a)],
            2.0 + (u - b) * slope)

    def denormalize(self, x, rho) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a, b, c = self._knots(rho)
        return np.select(
            [x < -2.0, x < -1.0, x < 0.0, x < 1.0, x < 2.0],
            [-b + (x + 2.0) * (b - a), -b + (x + 2.0) * (b - a), -a + (x + 1.0) * (c + a),
             c + x * (a - c), a + (x - 1.0) * (b - a)],
            b + (x - 2.0) * (b - a))

    def axis_point(self, rho) -> np.ndarray:
        """Crossing of the rho-level orbit with the symmetry axis, between the two tips."""
        lo, hi = sorted(self.axis_tips)
        levels = np.atleast_1d(self.level(rho))
        out = np.empty(levels.size)
        for i, level in enumerate(levels):
            f = lambda x: float(self.fi.axis_value(x)) - level
            tol = 1e-14 * (1.0 + abs(level))
            if abs(f(lo)) <= tol:
                out[i] = lo
            elif abs(f(hi)) <= tol:
                out[i] = hi
            else:
                out[i] = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return np.stack([out, np.zeros_like(out)], axis=-1)

    def orbit_time(self, points) -> np.ndarray:
        """Signed time from the axis crossing; NaN when the axis is not reached within the window."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        u = np.zeros(points.shape[0])
        upstream = np.sign(points[:, 1]) == self.upstream_sign
        off_axis = np.abs(points[:, 1]) > 1e-14
        start = points.copy()
        start[~upstream, 1] *= -1.0
        todo = np.nonzero(off_axis)[0]
        if todo.size:
            axis = EventFunction(lambda x, y: y, "any")
            times, _ = batch_crossing_times(self.spec, start[todo], axis, 1.05 * self.half_window, self.cfg)
            u[todo] = np.where(upstream[todo], -times, times)
        return u

    def band(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rho = self.transverse(points)
        return (np.abs(rho) <= 1.0 + DOMAIN_TOL) & (points[:, 0] <= self.x_edge + DOMAIN_TOL)

    def contains(self, points, clip: bool = True) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        inside = self.band(points)
        if clip and np.any(inside):
            idx = np.nonzero(inside)[0]
            u = self.orbit_time(points[idx])
            inside[idx] = np.isfinite(u) & (np.abs(u) <= self.half_window + DOMAIN_TOL)
        return inside

    def lift(self, points, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rho = self.transverse(points)
        if check:
            bad = ~self.band(points)
            if np.any(bad):
                k = int(np.argmax(bad))
                raise OutOfDomainError(f"point {points[k].tolist()} is outside the strip (y={rho[k]:.6g})")
        u = self.orbit_time(points)
        if check and np.any(~np.isfinite(u) | (np.abs(u) > self.half_window + DOMAIN_TOL)):
            k = int(np.argmax(~np.isfinite(u) | (np.abs(u) > self.half_window + DOMAIN_TOL)))
            raise OutOfDomainError(f"point {points[k].tolist()} is outside the strip window")
        return self.normalize(u, rho), rho

    def unlift(self, x, y) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
        tips = self.axis_point(y)
        return flow_points(self.spec, self.denormalize(x, y), tips, self.cfg)

    def section_range(self) -> tuple[float, float]:
        """Longitudinal range whose cross-sections stay inside the window on every level."""
        lo, hi = self.window_ends(self.rho_grid)
        return float(np.max(lo)), float(np.min(hi))

    def window_ends(self, rho) -> tuple[np.ndarray, np.ndarray]:
        """Window coordinates of u = -U and u = +U at the given levels."""
        return (self.normalize(-self.half_window, rho), self.normalize(self.half_window, rho))
