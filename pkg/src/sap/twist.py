"""
Twist module - boundary invariance and the strip and annulus twist conditions, evaluated on
sampled boundary points of the source rectangle.

Strip lifts put the two rectangles at [-2, -1] and [1, 2]; annulus lifts are read in window
units, with the source rectangle at [0, 1/2] and the copies of the target at [2l + 1, 2l + 3/2].
"""
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from src.core.config import SAMPLES
from src.core.exceptions import PreconditionError, IntegrationError, InvarianceViolationError, TwistFailureError
from src.core.logger import logger
from src.sap.lifted import LiftBox, LiftedMap

# Allowed outward drift of a boundary point under a flow map
INVARIANCE_TOL = 1e-6
MIN_SAMPLES = 16

# Canonical annulus windows
SOURCE_WINDOW = (0.0, 0.5)
TARGET_WINDOW = (1.0, 1.5)
TURN = 2.0


def _boundary_samples(domain, samples: int, section: tuple[float, float] | None) -> np.ndarray:
    if hasattr(domain, "boundary_points"):
        inner, outer = domain.boundary_points(samples)
        return np.vstack([inner, outer])
    lo, hi = section if section is not None else domain.chart.section_range()
    x = np.linspace(lo, hi, samples)
    return np.vstack([domain.unlift(x, -np.ones(samples)), domain.unlift(x, np.ones(samples))])


def _map_boundary(plane_map: Callable[[np.ndarray], np.ndarray], points: np.ndarray) -> np.ndarray:
    """Map all points at once; if the batch fails, map them one by one to name the escaping point."""
    try:
        return np.atleast_2d(plane_map(points))
    except IntegrationError:
        pass
    images = np.empty_like(points)
    for k, p in enumerate(points):
        try:
            images[k] = np.atleast_2d(plane_map(p[None, :]))[0]
        except IntegrationError as e:
            raise InvarianceViolationError(f"boundary point {p.tolist()} leaves the domain: {e}",
                                           witness=p) from e
    return images


def check_boundary_invariance(plane_map: Callable[[np.ndarray], np.ndarray], domain,
                              samples: int = SAMPLES, section: tuple[float, float] | None = None) -> float:
    """
    Largest | |rho(map(p))| - 1 | over sampled boundary points p of an annulus or strip.

    For a strip only the boundary between the longitudinal coordinates `section` is sampled
    (default: the chart's full section range). Raises the invariance-violation error with the
    first boundary point carried outside the domain.
    """
    if samples < 2:
        raise PreconditionError("boundary invariance needs at least 2 samples per side")
    points = _boundary_samples(domain, samples, section)
    images = _map_boundary(plane_map, points)
    rho = np.asarray(domain.transverse(images), dtype=float)
    bad = ~np.isfinite(rho) | (np.abs(rho) > 1.0 + INVARIANCE_TOL)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise InvarianceViolationError(f"boundary point {points[k].tolist()} is mapped to "
                                       f"{images[k].tolist()} with transverse coordinate {rho[k]:.6g}",
                                       witness=points[k])
    residual = float(np.max(np.abs(np.abs(rho) - 1.0)))
    logger.debug(f"boundary invariance residual {residual:.3e} over {points.shape[0]} points")
    return residual


@dataclass(frozen=True)
class StripTwistResult:
    passed: bool
    margin: float
    pair: str
    xi_lower: tuple[float, float]
    xi_upper: tuple[float, float]
    samples: int
    transverse_residual: float


def check_strip_twist(lifted: LiftedMap, source: LiftBox, target: LiftBox,
                      samples: int = SAMPLES) -> StripTwistResult:
    """
    Longitudinal displacement Xi = X(x, y) - x on the two horizontal sides of the source.

    Pair "A" asks Xi(x, y0) <= t0 - s1 and Xi(x, y1) >= t1 - s0 at every sample, pair "B" the
    reverse; the better pair is reported and passes when its smallest slack is positive.
    """
    if samples < MIN_SAMPLES:
        raise PreconditionError(f"strip twist needs at least {MIN_SAMPLES} samples, got {samples}")
    x = np.linspace(source.x0, source.x1, samples)
    X_lo, Y_lo = lifted(x, np.full(samples, source.y0))
    X_hi, Y_hi = lifted(x, np.full(samples, source.y1))
    xi_lo = np.asarray(X_lo, dtype=float) - x
    xi_hi = np.asarray(X_hi, dtype=float) - x
    lo = target.x0 - source.x1
    hi = target.x1 - source.x0

    if not (np.all(np.isfinite(xi_lo)) and np.all(np.isfinite(xi_hi))):
        margin_a = margin_b = -math.inf
    else:
        margin_a = min(lo - xi_lo.max(), xi_hi.min() - hi)
        margin_b = min(xi_lo.min() - hi, lo - xi_hi.max())
    pair, margin = ("A", margin_a) if margin_a >= margin_b else ("B", margin_b)
    residual = float(np.nanmax(np.abs(np.concatenate([np.asarray(Y_lo) - source.y0,
                                                      np.asarray(Y_hi) - source.y1]))))
    result = StripTwistResult(passed=bool(margin > 0), margin=float(margin), pair=pair,
                              xi_lower=(float(np.nanmin(xi_lo)), float(np.nanmax(xi_lo))),
                              xi_upper=(float(np.nanmin(xi_hi)), float(np.nanmax(xi_hi))),
                              samples=samples, transverse_residual=residual)
    logger.debug(f"strip twist: pair {pair}, margin {margin:.4g}, Xi lower {result.xi_lower}, "
                 f"Xi upper {result.xi_upper}")
    return result


@dataclass(frozen=True)
class TwistCertificate:
    """
    Outcome of the annulus twist check.

    form "direct":  Theta(., -1) <= 2 j_minus1 + 1/2 and Theta(., 1) >= 2 j_plus1 + 3/2
    form "mirror":  Theta(., -1) >= 2 j_minus1 + 3/2 and Theta(., 1) <= 2 j_plus1 + 1/2
    """
    j_minus1: int
    j_plus1: int
    m: int
    margin: float
    boundary_residual: float
    form: str = "direct"
    samples: int = SAMPLES
    inner_range: tuple[float, float] = field(default=(0.0, 0.0))
    outer_range: tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self):
        if self.m < 1:
            raise PreconditionError(f"crossing number must be at least 1, got {self.m}")

    @property
    def passed(self) -> bool:
        return self.margin > 0

    @property
    def levels(self) -> list[int]:
        """Indices l of the target copies [2l + 1, 2l + 3/2] the twist forces across."""
        return list(range(min(self.j_minus1, self.j_plus1), max(self.j_minus1, self.j_plus1) + 1))


def _form_margin(form: str, j_minus1: int, j_plus1: int, inner: np.ndarray, outer: np.ndarray) -> float:
    s0, s1 = SOURCE_WINDOW
    t0, t1 = TARGET_WINDOW
    if form == "direct":
        return float(min(TURN * j_minus1 + s1 - inner.max(), outer.min() - (TURN * j_plus1 + t1)))
    return float(min(inner.min() - (TURN * j_minus1 + t1), TURN * j_plus1 + s1 - outer.max()))


def _candidates(inner: np.ndarray, outer: np.ndarray) -> list[tuple[int, str, int, int, float]]:
    s1, t1 = SOURCE_WINDOW[1], TARGET_WINDOW[1]
    out = []
    j_minus1 = math.ceil((inner.max() - s1) / TURN)
    j_plus1 = math.floor((outer.min() - t1) / TURN)
    if j_plus1 + 1 - j_minus1 > 0:
        out.append((abs(j_minus1 - j_plus1) + 1, "direct", j_minus1, j_plus1,
                    _form_margin("direct", j_minus1, j_plus1, inner, outer)))
    j_minus1 = math.floor((inner.min() - t1) / TURN)
    j_plus1 = math.ceil((outer.max() - s1) / TURN)
    if j_minus1 + 1 - j_plus1 > 0:
        out.append((abs(j_minus1 - j_plus1) + 1, "mirror", j_minus1, j_plus1,
                    _form_margin("mirror", j_minus1, j_plus1, inner, outer)))
    return out


def _sides(lifted: LiftedMap, source: LiftBox, samples: int):
    theta = np.linspace(source.x0, source.x1, samples)
    inner, rho_in = lifted(theta, np.full(samples, source.y0))
    outer, rho_out = lifted(theta, np.full(samples, source.y1))
    inner = np.asarray(inner, dtype=float)
    outer = np.asarray(outer, dtype=float)
    residual = float(np.nanmax(np.abs(np.concatenate([np.asarray(rho_in) - source.y0,
                                                      np.asarray(rho_out) - source.y1]))))
    return inner, outer, residual


def check_annular_twist(lifted: LiftedMap, source: LiftBox | None = None,
                        samples: int = SAMPLES) -> TwistCertificate:
    """
    Theta on the inner (rho = -1) and outer (rho = 1) sides of the source rectangle, then the
    integer pair with the most crossings (ties broken by margin) among both inequality forms.
    """
    if samples < MIN_SAMPLES:
        raise PreconditionError(f"annular twist needs at least {MIN_SAMPLES} samples, got {samples}")
    source = source or LiftBox(SOURCE_WINDOW[0], SOURCE_WINDOW[1], -1.0, 1.0, axis=1)
    inner, outer, residual = _sides(lifted, source, samples)
    if not (np.all(np.isfinite(inner)) and np.all(np.isfinite(outer))):
        raise TwistFailureError("lifted angle is undefined on part of the boundary")
    winding = abs(float(np.mean(inner) - np.mean(outer))) / TURN
    candidates = _candidates(inner, outer)
    if not candidates:
        raise TwistFailureError(f"no twist: Theta inner in [{inner.min():.4f}, {inner.max():.4f}], "
                                f"outer in [{outer.min():.4f}, {outer.max():.4f}]", best=winding)
    m, form, j_minus1, j_plus1, margin = max(candidates, key=lambda c: (c[0], c[4]))
    cert = TwistCertificate(j_minus1=j_minus1, j_plus1=j_plus1, m=m, margin=margin,
                            boundary_residual=residual, form=form, samples=samples,
                            inner_range=(float(inner.min()), float(inner.max())),
                            outer_range=(float(outer.min()), float(outer.max())))
    logger.debug(f"annular twist: {form} j=({j_minus1}, {j_plus1}), m={m}, margin {margin:.4g}")
    return cert


def resampled_margin(lifted: LiftedMap, cert: TwistCertificate, source: LiftBox | None = None,
                     factor: int = 4) -> float:
    """Margin of the certificate's own integer pair at `factor` times the sample density."""
    source = source or LiftBox(SOURCE_WINDOW[0], SOURCE_WINDOW[1], -1.0, 1.0, axis=1)
    inner, outer, _ = _sides(lifted, source, factor * cert.samples)
    return _form_margin(cert.form, cert.j_minus1, cert.j_plus1, inner, outer)
