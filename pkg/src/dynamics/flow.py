"""
Flow module - handles adaptive integration of the normal forms: flow maps (single and batched),
trajectories with dense output, event location, closed-orbit periods and level-set tracing.
"""
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from src.core.config import REL_TOL, ABS_TOL, MAX_STEP, MAX_TIME, ESCAPE_RADIUS, CHORD_FRACTION
from src.core.exceptions import (PreconditionError, IntegrationError, EventNotFoundError,
                                 OrbitNotClosedError)
from src.core.logger import logger
from src.dynamics.normal_forms import VectorFieldSpec, FirstIntegral, field_components, eval_field

# Values of an event function this close to zero at t=0 count as "on the section"
EVENT_ZERO_TOL = 1e-12
# Dense-output samples per accepted step when scanning for sign changes
SCAN_SUBSTEPS = 4
# Largest batch integrated at once when locating events
EVENT_BATCH = 512


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = REL_TOL
    abs_tol: float = ABS_TOL
    max_step: float = MAX_STEP
    max_time: float = MAX_TIME
    escape_radius: float = ESCAPE_RADIUS
    method: str = "DOP853"

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "max_time", "escape_radius"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise PreconditionError(f"integrator {name} must be positive, got {value}")
        if self.rel_tol > 1e-3 or self.abs_tol > 1e-3:
            raise PreconditionError("integrator tolerances must not exceed 1e-3")


@dataclass(frozen=True)
class EventFunction:
    """
    Scalar event g(x, y), evaluated elementwise on coordinate arrays.

    direction is "rising" (g goes from negative to >= 0), "falling", or "any".
    """
    g: Callable[[np.ndarray, np.ndarray], np.ndarray]
    direction: str = "any"

    def __post_init__(self):
        if self.direction not in ("rising", "falling", "any"):
            raise PreconditionError(f"unknown event direction '{self.direction}'")

    def __call__(self, p) -> np.ndarray | float:
        p = np.asarray(p, dtype=float)
        value = self.g(p[..., 0], p[..., 1])
        return float(value) if np.ndim(value) == 0 else value

    def crossed(self, before, after) -> np.ndarray:
        before = np.asarray(before)
        after = np.asarray(after)
        rising = (before < 0) & (after >= 0)
        falling = (before > 0) & (after <= 0)
        if self.direction == "rising":
            return rising
        if self.direction == "falling":
            return falling
        return rising | falling


@dataclass(frozen=True)
class Trajectory:
    """Accepted-step samples of one solution plus its dense interpolant."""
    t: np.ndarray
    points: np.ndarray
    dense: object | None = field(default=None, repr=False)

    def __call__(self, t) -> np.ndarray:
        if self.dense is None:
            raise PreconditionError("trajectory has no dense output")
        z = self.dense(t)
        return z.T if np.ndim(t) else z

    def rows(self) -> list[tuple[float, float, float]]:
        return [(float(t), float(p[0]), float(p[1])) for t, p in zip(self.t, self.points)]


@dataclass(frozen=True)
class LevelCurve:
    """
    Polyline(s) along {H = level}.

    `branches` holds one polyline per traced branch; `closed` is set when the primary branch
    returns to its start; `critical` marks a seed at a critical point of H.
    """
    branches: list[np.ndarray]
    closed: bool
    critical: bool = False
    level: float = 0.0

    @property
    def points(self) -> np.ndarray:
        return self.branches[0]


# ----------------------------------------------------------------------
# Batched right-hand sides
# ----------------------------------------------------------------------

def pack(points) -> np.ndarray:
    return np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float))).reshape(-1)


def unpack(z) -> np.ndarray:
    return np.asarray(z).reshape(-1, 2)


def field_rhs(spec: VectorFieldSpec, scale=None) -> Callable:
    """RHS for the stacked state [x0, y0, x1, y1, ...], optionally time-rescaled per point."""
    family, lam = spec.family, spec.lam
    weights = None if scale is None else np.repeat(np.asarray(scale, dtype=float), 2)

    def rhs(t, z):
        vx, vy = field_components(family, lam, z[0::2], z[1::2])
        out = np.empty_like(z)
        out[0::2] = vx
        out[1::2] = vy
        if weights is not None:
            out *= weights
        return out

    return rhs


def _escape_event(radius: float):
    def escape(t, z):
        return radius - np.max(np.abs(z))
    escape.terminal = True
    escape.direction = -1
    return escape


def solve(rhs, t_span, z0, cfg: IntegratorConfig, *, dense: bool = False, max_step: float | None = None,
          allow_escape: bool = False, events: tuple = ()):
    """
    solve_ivp wrapper: batch-scaled tolerances, runaway detection and named failures.

    With allow_escape the solution up to the escape time is returned (status 1) instead of raising.
    Extra terminal events stop the solve quietly; their times land in sol.t_events[1:].
    """
    z0 = np.asarray(z0, dtype=float)
    factor = 1.0 if z0.size <= 2 else 1.0 / np.sqrt(z0.size)
    sol = solve_ivp(rhs, t_span, z0, method=cfg.method,
                    rtol=max(cfg.rel_tol * factor, 1e-13), atol=cfg.abs_tol * factor,
                    max_step=cfg.max_step if max_step is None else max_step,
                    dense_output=dense, events=[_escape_event(cfg.escape_radius), *events])
    reached = float(sol.t[-1]) if sol.t.size else float(t_span[0])
    if sol.status == -1:
        raise IntegrationError(f"integration failed at t={reached:.6g}: {sol.message}")
    if sol.status == 1 and sol.t_events[0].size and not allow_escape:
        raise IntegrationError(f"trajectory escaped |p| > {cfg.escape_radius:g} at t={reached:.6g}")
    if not np.all(np.isfinite(sol.y[:, -1])):
        raise IntegrationError(f"non-finite state at t={reached:.6g}")
    return sol


# ----------------------------------------------------------------------
# Flow maps and trajectories
# ----------------------------------------------------------------------

def flow_points(spec: VectorFieldSpec, t, points, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """
    Flow every point of an (N, 2) array; t is one time for all points or one time per point.

    Per-point times are handled by the rescaled system dz/ds = t_i V(z), s in [0, 1].
    """
    cfg = cfg or IntegratorConfig()
    points = np.atleast_2d(np.asarray(points, dtype=float))
    times = np.asarray(t, dtype=float)
    if np.any(np.abs(times) > cfg.max_time):
        raise PreconditionError(f"|t| exceeds max_time={cfg.max_time:g}")
    if points.shape[0] == 0:
        return points.copy()
    if times.ndim == 0:
        if times == 0:
            return points.copy()
        sol = solve(field_rhs(spec), (0.0, float(times)), pack(points), cfg)
        return unpack(sol.y[:, -1]).copy()
    if times.shape != (points.shape[0],):
        raise PreconditionError("one time per point expected")
    longest = float(np.max(np.abs(times)))
    if longest == 0:
        return points.copy()
    sol = solve(field_rhs(spec, scale=times), (0.0, 1.0), pack(points), cfg,
                max_step=cfg.max_step / longest)
    return unpack(sol.y[:, -1]).copy()


def flow_map(spec: VectorFieldSpec, t: float, p0, cfg: IntegratorConfig | None = None) -> np.ndarray:
    return flow_points(spec, float(t), np.asarray(p0, dtype=float)[None, :], cfg)[0]


def _capture_event(sinks: np.ndarray, radius: float):
    def capture(t, z):
        return float(np.min(np.hypot(sinks[:, 0] - z[0], sinks[:, 1] - z[1]))) - radius
    capture.terminal = True
    capture.direction = -1
    return capture


def captured_trajectory(spec: VectorFieldSpec, p0, t_end: float, sinks, radius: float,
                        cfg: IntegratorConfig | None = None) -> Trajectory:
    """
    Trajectory of p0 that stops once it comes within `radius` of any sink.

    Points on a separatrix end at the capture point next to their saddle.
    """
    cfg = cfg or IntegratorConfig()
    if abs(t_end) > cfg.max_time:
        raise PreconditionError(f"|t| exceeds max_time={cfg.max_time:g}")
    p0 = np.asarray(p0, dtype=float)
    sinks = np.atleast_2d(np.asarray(sinks, dtype=float))
    if sinks.shape[0] == 0:
        return trajectory(spec, p0, t_end, cfg)
    capture = _capture_event(sinks, radius)
    if t_end == 0 or capture(0.0, p0) <= 0:
        return Trajectory(t=np.array([0.0]), points=p0[None, :].copy(),
                          dense=lambda t: np.multiply.outer(p0, np.ones_like(np.asarray(t, dtype=float))))
    sol = solve(field_rhs(spec), (0.0, float(t_end)), p0, cfg, dense=True, events=(capture,))
    return Trajectory(t=sol.t.copy(), points=sol.y.T.copy(), dense=sol.sol)


def captured_flow_points(spec: VectorFieldSpec, t: float, points, sinks, radius: float,
                         cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Flow each point for time t, holding those that reach a sink at their capture point."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty_like(points)
    for k, p in enumerate(points):
        out[k] = captured_trajectory(spec, p, t, sinks, radius, cfg).points[-1]
    return out


def trajectory(spec: VectorFieldSpec, p0, t_end: float, cfg: IntegratorConfig | None = None) -> Trajectory:
    cfg = cfg or IntegratorConfig()
    if abs(t_end) > cfg.max_time:
        raise PreconditionError(f"|t| exceeds max_time={cfg.max_time:g}")
    sol = solve(field_rhs(spec), (0.0, float(t_end)), np.asarray(p0, dtype=float), cfg, dense=True)
    return Trajectory(t=sol.t.copy(), points=sol.y.T.copy(), dense=sol.sol)


# ----------------------------------------------------------------------
# Events
# ----------------------------------------------------------------------

def _scan_times(t: np.ndarray) -> np.ndarray:
    if t.size < 2:
        return t
    fractions = np.linspace(0.0, 1.0, SCAN_SUBSTEPS + 1)[:-1]
    grid = (t[:-1, None] + np.diff(t)[:, None] * fractions[None, :]).reshape(-1)
    return np.append(grid, t[-1])


def event_crossings(spec: VectorFieldSpec, p0, ev: EventFunction,
                    cfg: IntegratorConfig | None = None, first_chunk: float = 1.0) -> Iterator[tuple[float, np.ndarray]]:
    """
    Yield successive strictly positive event times and points along the forward orbit of p0.

    Integration proceeds in doubling chunks up to cfg.max_time; exhausting it raises the
    not-found error.
    """
    cfg = cfg or IntegratorConfig()
    rhs = field_rhs(spec)
    state = np.asarray(p0, dtype=float)
    t0 = 0.0
    previous = ev(state)
    if abs(previous) <= EVENT_ZERO_TOL:
        previous = 0.0
    chunk = first_chunk
    while t0 < cfg.max_time:
        t1 = min(t0 + chunk, cfg.max_time)
        sol = solve(rhs, (t0, t1), state, cfg, dense=True, allow_escape=True)
        times = _scan_times(sol.t)
        values = ev(sol.sol(times).T)
        values[0] = previous
        hits = np.nonzero(ev.crossed(values[:-1], values[1:]))[0]
        for k in hits:
            a, b = times[k], times[k + 1]
            if values[k + 1] == 0.0:
                t_star = b
            else:
                t_star = brentq(lambda s: ev(sol.sol(s)), a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            yield float(t_star), sol.sol(t_star).copy()
        if sol.status == 1:
            raise IntegrationError(f"trajectory escaped |p| > {cfg.escape_radius:g} at t={sol.t[-1]:.6g}")
        state = sol.y[:, -1]
        previous = values[-1]
        t0 = t1
        chunk *= 2.0
    raise EventNotFoundError(f"no event before max_time={cfg.max_time:g}")


def integrate_to_event(spec: VectorFieldSpec, p0, ev: EventFunction,
                       cfg: IntegratorConfig | None = None, skip: int = 0) -> tuple[float, np.ndarray]:
    """The (skip+1)-th strictly positive crossing of ev along the orbit of p0."""
    if skip < 0:
        raise PreconditionError("skip must be non-negative")
    for count, (t_star, p_star) in enumerate(event_crossings(spec, p0, ev, cfg)):
        if count == skip:
            return t_star, p_star
    raise EventNotFoundError("event sequence ended")  # pragma: no cover


def batch_crossing_times(spec: VectorFieldSpec, points, ev: EventFunction, horizon: float,
                         cfg: IntegratorConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """
    First strictly positive event time of every point in a batch within [0, horizon].

    Returns (times, states); both are NaN where no event occurs.
    """
    cfg = cfg or IntegratorConfig()
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if n > EVENT_BATCH:
        parts = [batch_crossing_times(spec, points[k:k + EVENT_BATCH], ev, horizon, cfg)
                 for k in range(0, n, EVENT_BATCH)]
        return np.concatenate([p[0] for p in parts]), np.vstack([p[1] for p in parts])
    times = np.full(n, np.nan)
    states = np.full((n, 2), np.nan)
    if n == 0:
        return times, states
    sol = solve(field_rhs(spec), (0.0, float(horizon)), pack(points), cfg, dense=True, allow_escape=True)
    grid = _scan_times(sol.t)
    z = sol.sol(grid)
    values = ev.g(z[0::2], z[1::2])
    values[np.abs(values[:, 0]) <= EVENT_ZERO_TOL, 0] = 0.0
    crossed = ev.crossed(values[:, :-1], values[:, 1:])
    for i in np.nonzero(crossed.any(axis=1))[0]:
        k = int(np.argmax(crossed[i]))
        a, b = grid[k], grid[k + 1]

        def g_i(s, i=i):
            zi = sol.sol(s)
            return float(ev.g(zi[2 * i], zi[2 * i + 1]))

        t_star = b if values[i, k + 1] == 0.0 else brentq(g_i, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        zi = sol.sol(t_star)
        times[i] = t_star
        states[i] = zi[2 * i: 2 * i + 2]
    if sol.status == 1:
        # one point ran away and stopped the batch: redo the points still waiting for their event
        final = unpack(sol.y[:, -1])
        escaped = np.max(np.abs(final), axis=1) >= (1.0 - 1e-9) * cfg.escape_radius
        pending = np.nonzero(np.isnan(times) & ~escaped)[0]
        if pending.size and pending.size < n:
            times[pending], states[pending] = batch_crossing_times(spec, points[pending], ev, horizon, cfg)
    return times, states


def orbit_period(spec: VectorFieldSpec, p0, cfg: IntegratorConfig | None = None) -> float:
    """Period of the closed orbit through p0, from returns to the section normal to V(p0)."""
    cfg = cfg or IntegratorConfig()
    p0 = np.asarray(p0, dtype=float)
    v0 = eval_field(spec, p0)
    speed = float(np.linalg.norm(v0))
    if speed == 0:
        raise PreconditionError("orbit_period needs a regular point")
    n = v0 / speed
    section = EventFunction(lambda x, y: (x - p0[0]) * n[0] + (y - p0[1]) * n[1], "rising")
    scale = 1.0 + float(np.linalg.norm(p0))
    try:
        for t_star, p_star in event_crossings(spec, p0, section, cfg):
            gap = float(np.linalg.norm(p_star - p0))
            if gap <= 1e-6 * scale:
                return t_star
            logger.debug(f"section return at t={t_star:.6g} is {gap:.3g} away, continuing")
    except EventNotFoundError as e:
        raise OrbitNotClosedError(f"orbit through {p0.tolist()} did not close: {e}") from e
    raise OrbitNotClosedError("orbit did not close")  # pragma: no cover


# ----------------------------------------------------------------------
# Level sets
# ----------------------------------------------------------------------

def _project(fi: FirstIntegral, points: np.ndarray, level: float, sweeps: int = 3) -> np.ndarray:
    p = np.array(points, dtype=float)
    for _ in range(sweeps):
        grad = fi.gradient(p)
        norm2 = np.sum(grad * grad, axis=-1)
        ok = norm2 > 0
        step = np.zeros_like(p)
        step[ok] = ((fi.value(p[ok]) - level) / norm2[ok])[:, None] * grad[ok]
        p -= step
    return p


def _axis_root(fi: FirstIntegral, level: float, xa: float, xb: float, guess: float) -> float:
    """
    Solve H(x, 0) = level near a chord [xa, xb] of the level curve.

    Where the curve meets the axis vertically both chord ends sit on the same side of the root, so
    the bracket is widened outward until H changes sign; the root nearest the interpolated guess wins.
    """
    f = lambda x: float(fi.axis_value(x)) - level
    fa, fb = f(xa), f(xb)
    if fa == 0.0:
        return xa
    if fb == 0.0:
        return xb
    if xa < xb and fa * fb < 0:
        return brentq(f, xa, xb, xtol=1e-15)
    width = max(xb - xa, 1e-9 * max(1.0, abs(guess)))
    for _ in range(60):
        roots = [brentq(f, lo, hi, xtol=1e-15)
                 for lo, hi, flo, fhi in ((xa - width, xa, f(xa - width), fa), (xb, xb + width, fb, f(xb + width)))
                 if flo * fhi <= 0]
        if roots:
            return min(roots, key=lambda r: abs(r - guess))
        width *= 2.0
    logger.debug(f"no axis root near x={guess:.6g} for level {level:.6g}; keeping interpolated crossing")
    return guess


def _insert_axis_crossings(fi: FirstIntegral, polyline: np.ndarray, level: float) -> np.ndarray:
    """Insert the exact y = 0 crossing between every pair of samples straddling the axis."""
    y = polyline[:, 1]
    straddle = np.nonzero(y[:-1] * y[1:] < 0)[0]
    if straddle.size == 0:
        return polyline
    pieces = []
    start = 0
    for k in straddle:
        a, b = polyline[k], polyline[k + 1]
        guess = a[0] + (b[0] - a[0]) * a[1] / (a[1] - b[1])
        x = _axis_root(fi, level, min(a[0], b[0]), max(a[0], b[0]), guess)
        pieces.append(polyline[start:k + 1])
        pieces.append(np.array([[x, 0.0]]))
        start = k + 1
    pieces.append(polyline[start:])
    return np.vstack(pieces)


def _trace_branch(fi: FirstIntegral, level: float, start: np.ndarray, sign: float, chord: float,
                  bbox: tuple[float, float, float, float], max_length: float, cfg: IntegratorConfig,
                  home: np.ndarray, home_radius: float) -> tuple[np.ndarray, str]:
    """Follow the rotated gradient from start; returns the polyline and why it stopped."""
    grad_floor = 1e-6 * float(np.linalg.norm(fi.gradient(start)))

    def rhs(s, z):
        gx, gy = fi.gradient(z)
        norm = np.hypot(gx, gy)
        if norm == 0:
            return np.zeros(2)
        return sign * np.array([gy, -gx]) / norm

    def home_event(s, z):
        return np.hypot(z[0] - home[0], z[1] - home[1]) - home_radius
    home_event.terminal = True
    home_event.direction = -1

    def box_event(s, z):
        return min(z[0] - bbox[0], bbox[1] - z[0], z[1] - bbox[2], bbox[3] - z[1])
    box_event.terminal = True
    box_event.direction = -1

    def critical_event(s, z):
        return float(np.linalg.norm(fi.gradient(z))) - grad_floor
    critical_event.terminal = True
    critical_event.direction = -1

    sol = solve_ivp(rhs, (0.0, max_length), np.asarray(start, dtype=float), method=cfg.method,
                    rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=chord,
                    events=[home_event, box_event, critical_event])
    reason = "length"
    for name, hits in zip(("home", "bbox", "critical"), sol.t_events):
        if len(hits):
            reason = name
    if sol.status == -1:
        raise IntegrationError(f"level tracing failed at arc length {sol.t[-1]:.6g}: {sol.message}")
    return sol.y.T.copy(), reason


def trace_level_set(fi: FirstIntegral, level: float, seed, cfg: IntegratorConfig | None = None, *,
                    bbox: tuple[float, float, float, float] | None = None,
                    chord: float | None = None) -> LevelCurve:
    """
    Polyline(s) along {H = level} through seed.

    A regular seed gives one branch, closed when the component is bounded, otherwise traced
    both ways and clipped to bbox. A critical seed gives a single point at an extremum, or
    every branch leaving it (loop branches once) at a saddle-like point.
    """
    cfg = cfg or IntegratorConfig()
    seed = np.asarray(seed, dtype=float)
    if abs(fi.value(seed) - level) > 1e-8 * (1.0 + abs(level)):
        raise PreconditionError(f"seed {seed.tolist()} is not on level {level}")
    scale = 1.0 + float(np.linalg.norm(seed))
    if bbox is None:
        half = 10.0 * scale
        bbox = (seed[0] - half, seed[0] + half, seed[1] - half, seed[1] + half)
    chord = chord or CHORD_FRACTION * scale
    max_length = cfg.max_time

    if np.linalg.norm(fi.gradient(seed)) <= 1e-9 * scale:
        return _trace_from_critical(fi, level, seed, cfg, bbox, chord, max_length)

    def traced(step):
        forward, reason = _trace_branch(fi, level, seed, 1.0, step, bbox, max_length, cfg,
                                        seed, 0.5 * step)
        if reason == "home":
            return np.vstack([forward, seed[None, :]]), True
        backward, _ = _trace_branch(fi, level, seed, -1.0, step, bbox, max_length, cfg,
                                    seed, 0.5 * step)
        return np.vstack([backward[::-1], forward[1:]]), False

    polyline, closed = traced(chord)
    diameter = float(np.linalg.norm(np.ptp(polyline, axis=0)))
    if diameter > 0 and chord > CHORD_FRACTION * diameter:
        polyline, closed = traced(0.9 * CHORD_FRACTION * diameter)
    polyline = _insert_axis_crossings(fi, _project(fi, polyline, level), level)
    if closed:
        polyline[-1] = polyline[0]
    return LevelCurve(branches=[polyline], closed=closed, level=level)


def _trace_from_critical(fi, level, seed, cfg, bbox, chord, max_length) -> LevelCurve:
    eigenvalues = np.linalg.eigvalsh(fi.hessian(seed))
    if eigenvalues[0] * eigenvalues[1] > 0:
        return LevelCurve(branches=[seed[None, :].copy()], closed=False, critical=True, level=level)

    radius = 10.0 * chord
    angles = np.linspace(0.0, 2 * np.pi, 721)
    on_circle = lambda a: seed + radius * np.stack([np.cos(a), np.sin(a)], axis=-1)
    values = fi.value(on_circle(angles)) - level
    starts = []
    for k in np.nonzero(values[:-1] * values[1:] < 0)[0]:
        a = brentq(lambda s: float(fi.value(on_circle(s)) - level), angles[k], angles[k + 1], xtol=1e-14)
        starts.append(_project(fi, on_circle(a)[None, :], level)[0])
    if not starts:
        return LevelCurve(branches=[seed[None, :].copy()], closed=False, critical=True, level=level)

    branches, loops = [], []
    used = set()
    for i, q in enumerate(starts):
        if i in used:
            continue
        gx, gy = fi.gradient(q)
        sign = 1.0 if np.dot([gy, -gx], q - seed) > 0 else -1.0
        polyline, reason = _trace_branch(fi, level, q, sign, chord, bbox, max_length, cfg, seed, 0.5 * radius)
        polyline = np.vstack([seed[None, :], polyline])
        if reason == "home":
            end = polyline[-1]
            others = [j for j in range(len(starts)) if j != i and j not in used]
            if others:
                used.add(min(others, key=lambda j: np.linalg.norm(starts[j] - end)))
            polyline = np.vstack([polyline, seed[None, :]])
            loops.append(len(branches))
        used.add(i)
        branches.append(_insert_axis_crossings(fi, _project(fi, polyline, level), level))
    order = loops + [k for k in range(len(branches)) if k not in loops]
    branches = [branches[k] for k in order]
    logger.debug(f"level {level:.6g}: {len(branches)} branches from critical seed, {len(loops)} loops")
    return LevelCurve(branches=branches, closed=bool(loops), critical=True, level=level)
