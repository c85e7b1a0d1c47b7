"""
Saddle module - the linked construction for the Saddle family.

For lambda1 > lambda2 > 0 the annulus lies inside the heteroclinic cycle of the lambda2 field
and the strip is made of closed lambda1 orbits; for lambda1 > 0 >= lambda2 the roles swap and
the annulus sits inside the lambda1 cycle, crossed by unbounded lambda2 orbits.
"""
import numpy as np

from src.core.exceptions import ConstructionError, GeometricFailureError, PreconditionError
from src.core.logger import logger
from src.dynamics.flow import IntegratorConfig, EventFunction, integrate_to_event, trace_level_set
from src.dynamics.normal_forms import Family, FirstIntegral, VectorFieldSpec
from src.geometry.curves import JordanCurve
from src.sap.certificate import ChaosCertificate
from src.construction.linked import (ConstructionOptions, LinkedConstruction, LinkedSetup, build_linked,
                                     locate_inner_boundary, psi_bar)

OUTER_SAMPLES = 1201

__all__ = ["outer_boundary_saddle", "strip_boundary_intersections", "compute_tau1", "psi_bar",
           "find_inner_boundary", "saddle_setup", "build_saddle"]


def outer_boundary_saddle(lam: float, samples: int = OUTER_SAMPLES) -> JordanCurve:
    """
    Heteroclinic cycle of the Saddle field: the level-0 arc x = (3/2)(y^2 - lam) between the
    saddles (0, -sqrt(lam)) and (0, sqrt(lam)), closed by the segment of the y-axis.
    """
    if not lam > 0:
        raise PreconditionError(f"the heteroclinic cycle needs lambda > 0, got {lam}")
    r = np.sqrt(lam)
    y = np.linspace(-r, r, samples)
    arc = np.column_stack([1.5 * (y * y - lam), y])
    arc[0, 0] = arc[-1, 0] = 0.0
    back = np.column_stack([np.zeros(samples), y[::-1]])[1:-1]
    return JordanCurve(np.vstack([arc, back]))


def strip_boundary_intersections(lambda1: float, lambda2: float, alpha: float) -> tuple[float, float]:
    """
    Upper crossing (x_int, y_int) of the lambda1 orbit through (alpha, 0) with the lambda2
    heteroclinic arc, from H_lambda1 = C1 and (2/3) x + lambda2 = y^2.
    """
    if not lambda1 > lambda2 > 0:
        raise PreconditionError(f"need lambda1 > lambda2 > 0, got ({lambda1}, {lambda2})")
    if not alpha < 0:
        raise PreconditionError(f"alpha must be negative, got {alpha}")
    c1 = -(2.0 / 3.0) * alpha ** 3 - lambda1 * alpha ** 2
    w = c1 / (lambda2 - lambda1)
    if w < 0:
        raise GeometricFailureError(f"orbit through ({alpha}, 0) misses the heteroclinic (C1={c1:.6g})")
    x_int = -np.sqrt(w)
    y2 = (2.0 / 3.0) * x_int + lambda2
    if y2 < 0:
        raise GeometricFailureError(f"crossing x={x_int:.6g} lies left of the cycle (x* = {-1.5 * lambda2:.6g})")
    return float(x_int), float(np.sqrt(y2))


def compute_tau1(lambda1: float, lambda2: float, alpha: float,
                 cfg: IntegratorConfig | None = None) -> tuple[float, np.ndarray]:
    """
    Time for the lambda1 orbit to run from its lower heteroclinic crossing (x_int, -y_int) to
    the next arrival on the heteroclinic level, and the arrival point.
    """
    x_int, y_int = strip_boundary_intersections(lambda1, lambda2, alpha)
    fi = FirstIntegral(Family.SADDLE, lambda2)
    event = EventFunction(lambda x, y: fi.value(np.stack([x, y], axis=-1)), "rising")
    tau, arrival = integrate_to_event(VectorFieldSpec(Family.SADDLE, lambda1), np.array([x_int, -y_int]), event, cfg)
    logger.debug(f"tau1({alpha:.6g}) = {tau:.10g}, arrival {arrival.tolist()}")
    return tau, arrival


def find_inner_boundary(lambda1: float, lambda2: float, beta: float, tau1: float,
                        cfg: IntegratorConfig | None = None) -> tuple[float, JordanCurve]:
    """
    sigma_hat on the beta arc where the tau1 image of q(sigma) is its mirror, and the closed
    lambda2 orbit through q(sigma_hat).
    """
    cfg = cfg or IntegratorConfig()
    x_int, y_int = strip_boundary_intersections(lambda1, lambda2, beta)
    transit, _ = compute_tau1(lambda1, lambda2, beta, cfg)
    fi = FirstIntegral(Family.SADDLE, lambda2)
    inner = locate_inner_boundary(VectorFieldSpec(Family.SADDLE, lambda1), fi, np.array([x_int, -y_int]),
                                  transit, tau1, cfg)
    curve = trace_level_set(fi, inner.level, inner.point, cfg)
    if not curve.closed:
        raise GeometricFailureError(f"lambda2 level {inner.level:.6g} through q is not a closed orbit")
    return inner.sigma_hat, JordanCurve(curve.points)


def saddle_setup(lambda1: float, lambda2: float) -> LinkedSetup:
    """Choose the sub-case for (lambda1, lambda2) and describe its annulus and strip."""
    if not (np.isfinite(lambda1) and np.isfinite(lambda2)):
        raise PreconditionError(f"lambdas must be finite, got ({lambda1}, {lambda2})")
    if lambda1 == lambda2:
        raise PreconditionError(f"lambda1 and lambda2 must differ, both are {lambda1}")
    if lambda1 <= 0:
        raise ConstructionError(f"lambda1={lambda1} <= 0: the saddle field has no annular invariant region")
    if lambda1 < lambda2:
        raise PreconditionError(f"the saddle construction needs lambda1 > lambda2, got ({lambda1}, {lambda2})")

    if lambda2 > 0:
        x_star = -1.5 * lambda2
        interval = (-lambda2, 0.0) if x_star > -lambda1 else (-lambda1, 0.0)
        return LinkedSetup(family=Family.SADDLE, lambda1=lambda1, lambda2=lambda2, annulus_phase="second",
                           outer_level=0.0, x_edge=0.0, strip_x_edge=0.0, strip_closed=True,
                           center=np.array([-lambda2, 0.0]), x_star=x_star, alpha_interval=interval,
                           outer_curve=outer_boundary_saddle(lambda2), variant="saddle-positive")
    x_star = -1.5 * lambda1
    return LinkedSetup(family=Family.SADDLE, lambda1=lambda1, lambda2=lambda2, annulus_phase="first",
                       outer_level=0.0, x_edge=0.0, strip_x_edge=0.0, strip_closed=False,
                       center=np.array([-lambda1, 0.0]), x_star=x_star, alpha_interval=(-lambda1, 0.0),
                       outer_curve=outer_boundary_saddle(lambda1), variant="saddle-nonpositive",
                       notes=("annulus from the lambda1 cycle; inner boundary through the point the "
                              "lambda2 flow maps to its mirror",))


def build_saddle(lambda1: float, lambda2: float, m: int = 2, options: ConstructionOptions | None = None,
                 cfg: IntegratorConfig | None = None) -> tuple[LinkedConstruction, ChaosCertificate]:
    return build_linked(saddle_setup(lambda1, lambda2), m, options, cfg)
