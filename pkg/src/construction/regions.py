"""
Regions module - the symbol regions of a certified construction: for each crossed copy of the
target rectangle, the points of the start rectangle that the Poincare map sends through that
copy and back into the start rectangle.
"""
from dataclasses import dataclass

import numpy as np

from src.core.exceptions import PreconditionError
from src.sap.certificate import ANNULUS_AFTER_STRIP
from src.sap.crossing import target_copy
from src.construction.linked import LinkedConstruction

# Slack on window and transverse bounds when testing membership
MEMBER_TOL = 1e-9


def in_window(construction: LinkedConstruction, points, start: float) -> np.ndarray:
    """Membership in the crossing occupying annulus windows [start, start + 1/2]."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    chart = construction.annulus.chart
    inside = chart.contains(points)
    out = np.zeros(points.shape[0], dtype=bool)
    if np.any(inside):
        theta, _ = chart.lift(points[inside], check=False)
        w = np.mod(2.0 * theta - start + MEMBER_TOL, 2.0) - MEMBER_TOL
        out[inside] = w <= 0.5 + MEMBER_TOL
    return out


@dataclass(frozen=True)
class SymbolRegion:
    symbol: int
    level: int
    construction: LinkedConstruction

    def contains(self, points) -> np.ndarray:
        c = self.construction
        points = np.atleast_2d(np.asarray(points, dtype=float))
        copy = target_copy(self.level)
        out = np.zeros(points.shape[0], dtype=bool)
        if c.composition == ANNULUS_AFTER_STRIP:
            ok = np.nonzero(in_window(c, points, 1.0))[0]
            if ok.size == 0:
                return out
            mid = c.strip_lift.plane(points[ok])
            keep = in_window(c, mid, 0.0)
            ok, mid = ok[keep], mid[keep]
            if ok.size == 0:
                return out
            theta, rho = c.annulus.chart.lift(mid, check=False)
            W, R = c.annulus_lift(np.mod(2.0 * theta + MEMBER_TOL, 2.0) - MEMBER_TOL, rho)
            out[ok] = copy.contains(W, R, tol=MEMBER_TOL)
            return out
        ok = np.nonzero(in_window(c, points, 0.0))[0]
        if ok.size == 0:
            return out
        theta, rho = c.annulus.chart.lift(points[ok], check=False)
        W, R = c.annulus_lift(np.mod(2.0 * theta + MEMBER_TOL, 2.0) - MEMBER_TOL, rho)
        hit = copy.contains(W, R, tol=MEMBER_TOL)
        ok = ok[hit]
        if ok.size == 0:
            return out
        image = c.strip_lift.plane(c.annulus_lift.plane(points[ok]))
        out[ok] = in_window(c, image, 0.0)
        return out


def symbol_regions(construction: LinkedConstruction) -> list[SymbolRegion]:
    """One region per path-crossed copy, symbols numbered in increasing copy order."""
    levels = construction.crossed_levels
    if len(levels) < 2:
        raise PreconditionError(f"symbol regions need at least 2 crossed copies, got {levels}")
    return [SymbolRegion(symbol=k, level=level, construction=construction) for k, level in enumerate(levels)]
