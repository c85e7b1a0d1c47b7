"""
Linkage module - decides whether a strip and an annulus are linked and extracts the two
rectangles of their intersection, the bridge inside the hole and a ray avoiding the strip.
"""
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from src.core.config import LINKAGE_GRID
from src.core.exceptions import NoLinkageError, AmbiguousLinkageError, GeometricFailureError
from src.core.logger import logger
from src.geometry.curves import Disk, JordanCurve
from src.geometry.domains import TopAnnulus, TopStrip, OrientedRectangle

# Lift grid used to find the components of A ∩ S
THETA_SAMPLES = 1024
RHO_LEVELS = 33
BISECTION_STEPS = 44
CIRCLE_SAMPLES = 2048


@dataclass(frozen=True)
class Linkage:
    ball: Disk
    bridge: np.ndarray
    ray: np.ndarray
    rectangles: tuple[OrientedRectangle, OrientedRectangle]
    ball_sides: tuple[np.ndarray, np.ndarray]
    exits: int


def ball_for(annulus: TopAnnulus) -> Disk:
    """Disk at the outer-boundary centroid, radius 1.1 times the largest outer radius."""
    center = annulus.outer.centroid
    radius = 1.1 * float(np.max(np.linalg.norm(annulus.outer.points - center, axis=1)))
    return Disk(center=center, radius=radius)


def _circular_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """(start, stop) index pairs of True runs in a cyclic boolean array; stop may exceed len."""
    n = mask.size
    if mask.all():
        return [(0, n)]
    if not mask.any():
        return []
    shift = int(np.argmin(mask))
    rolled = np.roll(mask, -shift)
    edges = np.diff(np.concatenate([[0], rolled.astype(int), [0]]))
    starts = np.nonzero(edges == 1)[0]
    stops = np.nonzero(edges == -1)[0]
    return [(int(a + shift), int(b + shift)) for a, b in zip(starts, stops)]


def _crossing_components(A: TopAnnulus, S: TopStrip) -> tuple[np.ndarray, np.ndarray, list[int]]:
    theta = np.arange(THETA_SAMPLES) / THETA_SAMPLES
    rho = np.linspace(-1.0, 1.0, RHO_LEVELS)
    tt, rr = np.meshgrid(theta, rho)
    points = A.unlift(tt.ravel(), rr.ravel())
    inside = S.contains(points, clip=True).reshape(tt.shape)
    labels, count = ndimage.label(inside)
    # glue components across theta = 0
    for row in range(labels.shape[0]):
        a, b = labels[row, 0], labels[row, -1]
        if a and b and a != b:
            labels[labels == b] = a
    crossing = [k for k in np.unique(labels[labels > 0])
                if np.any(labels[0] == k) and np.any(labels[-1] == k)]
    return labels, rho, crossing


def _refine_ends(A: TopAnnulus, S: TopStrip, rho: np.ndarray, inside_theta: np.ndarray,
                 outside_theta: np.ndarray) -> np.ndarray:
    """Boolean bisection along each level between an inside and an outside angle."""
    a, b = inside_theta.copy(), outside_theta.copy()
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (a + b)
        hit = S.contains(A.unlift(mid, rho), clip=False)
        a = np.where(hit, mid, a)
        b = np.where(hit, b, mid)
    return 0.5 * (a + b)


def _rectangle(A: TopAnnulus, S: TopStrip, labels: np.ndarray, rho: np.ndarray, k: int, label: str) -> OrientedRectangle:
    n = labels.shape[1]
    step = 1.0 / n
    lo_in, lo_out, hi_in, hi_out = [], [], [], []
    for row in range(labels.shape[0]):
        runs = [run for run in _circular_runs(labels[row] == k)]
        if len(runs) != 1:
            raise GeometricFailureError(f"rectangle {label} is not a single arc on level {rho[row]:.3f}")
        start, stop = runs[0]
        lo_in.append(start * step)
        lo_out.append((start - 1) * step)
        hi_in.append((stop - 1) * step)
        hi_out.append(stop * step)
    theta_lo = _refine_ends(A, S, rho, np.array(lo_in), np.array(lo_out))
    theta_hi = _refine_ends(A, S, rho, np.array(hi_in), np.array(hi_out))
    theta_hi = np.where(theta_hi < theta_lo, theta_hi + 1.0, theta_hi)

    left = A.unlift(theta_lo, rho)
    right = A.unlift(theta_hi, rho)
    outer = A.unlift(np.linspace(theta_lo[-1], theta_hi[-1], 64), np.ones(64))
    inner = A.unlift(np.linspace(theta_lo[0], theta_hi[0], 64), -np.ones(64))
    boundary = JordanCurve(np.vstack([left, outer[1:], right[::-1][1:], inner[::-1][1:]]))
    return OrientedRectangle(label=label, boundary=boundary, annulus_sides=(inner, outer),
                             strip_sides=(left, right), rho_levels=rho,
                             theta_lo=theta_lo, theta_hi=theta_hi)


def _cross_section(A: TopAnnulus, S: TopStrip) -> np.ndarray:
    lo, hi = S.chart.section_range()
    candidates = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.concatenate([[0.0], np.ravel(np.column_stack(
        [np.linspace(1, 63, 32) / 64, -np.linspace(1, 63, 32) / 64]))])
    y = np.linspace(-1.0, 1.0, RHO_LEVELS)
    for x in candidates:
        section = S.unlift(np.full(y.size, x), y)
        if np.all(A.inner.contains(section)):
            return section
    raise NoLinkageError("no strip cross-section lies inside the inner boundary")


def _ray(A: TopAnnulus, S: TopStrip, ball: Disk, rectangles) -> np.ndarray:
    taken = np.array([[np.mean(r.theta_lo), np.mean(r.theta_hi)] for r in rectangles])
    candidates = np.arange(64) / 64
    distance = np.min(np.abs(((candidates[:, None, None] - taken[None, :, :]) + 0.5) % 1.0 - 0.5), axis=(1, 2))
    for theta in candidates[np.argsort(-distance)]:
        start = A.unlift(np.array([theta]), np.array([-1.0]))[0]
        heading = start - A.center_hint
        heading /= np.linalg.norm(heading)
        offset = start - ball.center
        # |offset + s * heading| = radius
        b = float(np.dot(offset, heading))
        s_end = -b + np.sqrt(b * b - float(np.dot(offset, offset)) + ball.radius ** 2)
        ray = start + np.linspace(0.0, s_end, 256)[:, None] * heading
        if not np.any(S.contains(ray, clip=True)):
            return ray
    raise NoLinkageError("every radial ray of the annulus meets the strip")


def _ball_sides(S: TopStrip, ball: Disk, grid: int) -> tuple[np.ndarray, np.ndarray]:
    axis = np.linspace(-ball.radius, ball.radius, grid)
    xx, yy = np.meshgrid(ball.center[0] + axis, ball.center[1] + axis)
    points = np.column_stack([xx.ravel(), yy.ravel()])
    free = ball.contains(points)
    idx = np.nonzero(free)[0]
    free[idx] = ~S.contains(points[idx], clip=True)
    labels, count = ndimage.label(free.reshape(xx.shape))
    sizes = ndimage.sum(np.ones_like(labels), labels, index=np.arange(1, count + 1))
    big = [k + 1 for k in range(count) if sizes[k] >= 4]
    if len(big) != 2:
        raise NoLinkageError(f"ball minus strip has {len(big)} components, expected 2")
    flat = labels.ravel()
    return tuple(points[flat == k].mean(axis=0) for k in big)


def verify_linkage(A: TopAnnulus, S: TopStrip, grid: int = LINKAGE_GRID) -> Linkage:
    """
    Build the ball, bridge, ray and the two rectangles of a linked annulus/strip pair.

    Raises the no-linkage error when fewer than two components of A ∩ S cross the annulus, and
    the ambiguous-linkage error when more than two do.
    """
    labels, rho, crossing = _crossing_components(A, S)
    if len(crossing) < 2:
        raise NoLinkageError(f"strip traverses the annulus {len(crossing)} times, expected 2")
    if len(crossing) > 2:
        centres = [np.mean(np.nonzero(labels == k)[1]) / labels.shape[1] for k in crossing]
        raise AmbiguousLinkageError(f"strip traverses the annulus {len(crossing)} times at angles "
                                    f"{[round(c, 4) for c in centres]}")

    ball = ball_for(A)
    rectangles = tuple(_rectangle(A, S, labels, rho, k, f"R{i + 1}") for i, k in enumerate(crossing))
    rectangles = sorted(rectangles, key=lambda r: float(np.mean(r.theta_lo)) % 1.0)
    rectangles = tuple(replace(r, label=f"R{i + 1}") for i, r in enumerate(rectangles))
    bridge = _cross_section(A, S)
    ray = _ray(A, S, ball, rectangles)

    circle = S.contains(ball.boundary(CIRCLE_SAMPLES), clip=True)
    exits = len(_circular_runs(circle))
    if exits != 2:
        raise NoLinkageError(f"strip meets the ball boundary in {exits} arcs, expected 2")
    sides = _ball_sides(S, ball, grid)
    logger.debug(f"linkage: rectangles at turns {[r.window for r in rectangles]}, ball radius {ball.radius:.4g}")
    return Linkage(ball=ball, bridge=bridge, ray=ray, rectangles=rectangles, ball_sides=sides, exits=exits)


def check_linkage(linkage: Linkage, A: TopAnnulus, S: TopStrip) -> dict[str, bool]:
    """Direct geometric test of the four linkage properties."""
    r1, r2 = linkage.rectangles
    samples = []
    for rect in (r1, r2):
        rho = np.linspace(-0.9, 0.9, 7)
        frac = np.linspace(0.1, 0.9, 7)
        rr, ff = np.meshgrid(rho, frac)
        lo = np.interp(rr.ravel(), rect.rho_levels, rect.theta_lo)
        hi = np.interp(rr.ravel(), rect.rho_levels, rect.theta_hi)
        samples.append(A.unlift(lo + ff.ravel() * (hi - lo), rr.ravel()))
    inside = all(bool(np.all(A.contains(s) & S.contains(s, clip=True) & linkage.ball.contains(s))) for s in samples)
    disjoint = not np.any(r2.contains(samples[0])) and not np.any(r1.contains(samples[1]))
    return {
        "bridge_in_hole": bool(np.all(A.inner.contains(linkage.bridge))),
        "ray_avoids_strip": not bool(np.any(S.contains(linkage.ray, clip=True))),
        "two_exits": linkage.exits == 2,
        "rectangles_disjoint": disjoint,
        "rectangles_inside": inside,
    }
