"""
Cusp module - the linked construction for the Cusp family: an annulus inside the homoclinic
loop of the lambda1 field, crossed by lambda2 orbits (bounded below the loop of lambda2 < 0,
unbounded flow-box orbits for lambda2 >= 0).
"""
import numpy as np

from src.core.exceptions import ConstructionError, PreconditionError
from src.dynamics.flow import IntegratorConfig
from src.dynamics.normal_forms import Family
from src.geometry.curves import JordanCurve
from src.sap.certificate import ChaosCertificate
from src.construction.linked import ConstructionOptions, LinkedConstruction, LinkedSetup, build_linked

LOOP_SAMPLES = 1201


def homoclinic_level(lam: float) -> float:
    """H at the saddle (sqrt(-lam), 0), equal to H at (-2 sqrt(-lam), 0)."""
    return (2.0 / 3.0) * (-lam) ** 1.5


def homoclinic_loop(lam: float, samples: int = LOOP_SAMPLES) -> JordanCurve:
    """
    The loop y = +-(s - x) sqrt((2/3)(x + 2s)), x in [-2s, s], s = sqrt(-lam), through the saddle (s, 0).

    x is sampled on a cosine grid so the vertices crowd at both ends of the loop.
    """
    if not lam < 0:
        raise PreconditionError(f"the homoclinic loop needs lambda < 0, got {lam}")
    s = np.sqrt(-lam)
    x = -0.5 * s + 1.5 * s * np.cos(np.linspace(np.pi, 0.0, samples))
    x[0], x[-1] = -2.0 * s, s
    y = (s - x) * np.sqrt(np.clip((2.0 / 3.0) * (x + 2.0 * s), 0.0, None))
    upper = np.column_stack([x, y])
    lower = np.column_stack([x[::-1], -y[::-1]])[1:-1]
    return JordanCurve(np.vstack([upper, lower]))


def cusp_setup(lambda1: float, lambda2: float) -> LinkedSetup:
    """Describe the annulus and strip for (lambda1, lambda2)."""
    if not (np.isfinite(lambda1) and np.isfinite(lambda2)):
        raise PreconditionError(f"lambdas must be finite, got ({lambda1}, {lambda2})")
    if lambda1 == lambda2:
        raise PreconditionError(f"lambda1 and lambda2 must differ, both are {lambda1}")
    if lambda1 > 0:
        raise PreconditionError(f"the cusp construction needs lambda1 <= 0, got {lambda1}: no equilibria, "
                                f"no periodic orbits to force")
    if lambda1 == 0:
        raise ConstructionError("lambda1 = 0: the cusp point has no homoclinic loop to bound an annulus")
    if lambda2 <= lambda1:
        raise PreconditionError(f"the cusp construction needs lambda2 > lambda1, got ({lambda1}, {lambda2})")

    s1 = np.sqrt(-lambda1)
    if lambda2 < 0:
        interval = (-2.0 * s1, -2.0 * np.sqrt(-lambda2))
        variant = "cusp-negative"
    else:
        interval = (-s1, s1)
        variant = "cusp-nonnegative"
    return LinkedSetup(family=Family.CUSP, lambda1=lambda1, lambda2=lambda2, annulus_phase="first",
                       outer_level=homoclinic_level(lambda1), x_edge=float(s1), strip_x_edge=np.inf,
                       strip_closed=False, center=np.array([-s1, 0.0]), x_star=float(-2.0 * s1),
                       alpha_interval=interval, outer_curve=homoclinic_loop(lambda1), variant=variant)


def build_cusp(lambda1: float, lambda2: float, m: int = 2, options: ConstructionOptions | None = None,
               cfg: IntegratorConfig | None = None) -> tuple[LinkedConstruction, ChaosCertificate]:
    return build_linked(cusp_setup(lambda1, lambda2), m, options, cfg)
