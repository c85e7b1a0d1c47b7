"""
Normal forms module - the seven reversible planar vector fields, their equilibria,
the involution h(x, y) = (x, -y) and the first integrals of the conservative families.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from src.core.exceptions import PreconditionError, UnsupportedFamilyError


class Family(str, Enum):
    LINEAR_CENTER = "LinearCenter"
    LINEAR_SADDLE = "LinearSaddle"
    SADDLE = "Saddle"
    CUSP = "Cusp"
    NODAL_A = "NodalA"
    NODAL_B = "NodalB"
    FOCAL = "Focal"


LINEAR_FAMILIES = (Family.LINEAR_CENTER, Family.LINEAR_SADDLE)
FORCED_FAMILIES = (Family.SADDLE, Family.CUSP, Family.NODAL_A, Family.NODAL_B, Family.FOCAL)
CONSERVATIVE_FAMILIES = (Family.SADDLE, Family.CUSP)

# Tolerances used by the equilibrium classifier
DEGENERATE_TOL = 1e-12
CENTER_TOL = 1e-9


def parse_family(name: str | Family) -> Family:
    """Accept a Family or its tag (case-insensitive)."""
    if isinstance(name, Family):
        return name
    for family in Family:
        if family.value.lower() == str(name).lower():
            return family
    raise UnsupportedFamilyError(f"unknown family '{name}'")


@dataclass(frozen=True)
class VectorFieldSpec:
    """One normal form together with its parameter (`lam`, ignored by the linear families)."""
    family: Family
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", parse_family(self.family))
        if not np.isfinite(self.lam):
            raise PreconditionError(f"lambda must be finite, got {self.lam}")


@dataclass(frozen=True)
class Equilibrium:
    position: np.ndarray
    kind: str
    eigenvalues: np.ndarray


def field_components(family: Family, lam: float, x, y):
    """Vectorised field: returns (xdot, ydot) for scalar or array coordinates."""
    if family is Family.LINEAR_CENTER:
        return y, -x
    if family is Family.LINEAR_SADDLE:
        return y, x
    if family is Family.SADDLE:
        return x * y, x - y * y + lam
    if family is Family.CUSP:
        return y, x * x + lam
    if family is Family.NODAL_A:
        return x * y, x + 2.0 * y * y + lam
    if family is Family.NODAL_B:
        return -(x * y), x - 2.0 * y * y + lam
    if family is Family.FOCAL:
        return x * y + y * y * y, -x + y * y + lam
    raise UnsupportedFamilyError(f"unknown family '{family}'")


def eval_field(spec: VectorFieldSpec, p) -> np.ndarray:
    """Velocity (xdot, ydot) at p; p may also be an (N, 2) array."""
    p = np.asarray(p, dtype=float)
    vx, vy = field_components(spec.family, spec.lam, p[..., 0], p[..., 1])
    return np.stack([vx, vy], axis=-1)


def jacobian(spec: VectorFieldSpec, p) -> np.ndarray:
    x, y = float(p[0]), float(p[1])
    family = spec.family
    if family is Family.LINEAR_CENTER:
        return np.array([[0.0, 1.0], [-1.0, 0.0]])
    if family is Family.LINEAR_SADDLE:
        return np.array([[0.0, 1.0], [1.0, 0.0]])
    if family is Family.SADDLE:
        return np.array([[y, x], [1.0, -2.0 * y]])
    if family is Family.CUSP:
        return np.array([[0.0, 1.0], [2.0 * x, 0.0]])
    if family is Family.NODAL_A:
        return np.array([[y, x], [1.0, 4.0 * y]])
    if family is Family.NODAL_B:
        return np.array([[-y, -x], [1.0, -4.0 * y]])
    if family is Family.FOCAL:
        return np.array([[y, x + 3.0 * y * y], [-1.0, 2.0 * y]])
    raise UnsupportedFamilyError(f"unknown family '{family}'")


def classify(eigenvalues) -> str:
    """Equilibrium kind from the two Jacobian eigenvalues; a zero eigenvalue is 'degenerate'."""
    ev = np.asarray(eigenvalues, dtype=complex)
    if np.min(np.abs(ev)) <= DEGENERATE_TOL:
        return "degenerate"
    re, im = ev.real, ev.imag
    if np.max(np.abs(im)) > CENTER_TOL:
        return "center" if np.max(np.abs(re)) <= CENTER_TOL else "focus"
    if re[0] * re[1] < 0:
        return "saddle"
    return "repeller" if re[0] > 0 else "attractor"


def _positions(spec: VectorFieldSpec) -> list[tuple[float, float]]:
    lam = spec.lam
    family = spec.family
    if family in LINEAR_FAMILIES:
        return [(0.0, 0.0)]
    if family is Family.SADDLE:
        pts = [(-lam, 0.0)]
        if lam > 0:
            r = np.sqrt(lam)
            pts += [(0.0, -r), (0.0, r)]
        return pts
    if family is Family.CUSP:
        if lam > 0:
            return []
        if lam == 0:
            return [(0.0, 0.0)]
        r = np.sqrt(-lam)
        return [(-r, 0.0), (r, 0.0)]
    if family is Family.NODAL_A:
        pts = [(-lam, 0.0)]
        if lam < 0:
            r = np.sqrt(-lam / 2.0)
            pts += [(0.0, -r), (0.0, r)]
        return pts
    if family is Family.NODAL_B:
        pts = [(-lam, 0.0)]
        if lam > 0:
            r = np.sqrt(lam / 2.0)
            pts += [(0.0, -r), (0.0, r)]
        return pts
    if family is Family.FOCAL:
        pts = [(lam, 0.0)]
        if lam < 0:
            r = np.sqrt(-lam / 2.0)
            pts += [(lam / 2.0, -r), (lam / 2.0, r)]
        return pts
    raise UnsupportedFamilyError(f"unknown family '{family}'")


def equilibria(spec: VectorFieldSpec) -> list[Equilibrium]:
    """All real equilibria in closed form, classified from the Jacobian."""
    result = []
    for position in _positions(spec):
        p = np.array(position, dtype=float)
        eigenvalues = np.linalg.eigvals(jacobian(spec, p))
        result.append(Equilibrium(position=p, kind=classify(eigenvalues), eigenvalues=eigenvalues))
    return result


def involution(p) -> np.ndarray:
    """h(x, y) = (x, -y)."""
    p = np.array(p, dtype=float)
    p[..., 1] = -p[..., 1]
    return p


def check_reversibility(spec: VectorFieldSpec, points) -> float:
    """max |Dh(p)V(p) + V(h(p))| over the given points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not np.all(np.isfinite(points)):
        raise PreconditionError("reversibility check needs finite points")
    v = eval_field(spec, points)
    dh_v = involution(v)
    residual = dh_v + eval_field(spec, involution(points))
    return float(np.max(np.linalg.norm(residual, axis=1)))


@dataclass(frozen=True)
class FirstIntegral:
    """
    Conserved quantity of the Saddle and Cusp families.

    Both share the affine structure H = G - lam * w with w = x**2 (Saddle) or w = x (Cusp).
    """
    family: Family
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "family", parse_family(self.family))
        if self.family not in CONSERVATIVE_FAMILIES:
            raise UnsupportedFamilyError(f"no first integral for family {self.family.value}")
        if not np.isfinite(self.lam):
            raise PreconditionError(f"lambda must be finite, got {self.lam}")

    @property
    def spec(self) -> VectorFieldSpec:
        return VectorFieldSpec(self.family, self.lam)

    def value(self, points) -> np.ndarray | float:
        p = np.asarray(points, dtype=float)
        x, y = p[..., 0], p[..., 1]
        if self.family is Family.SADDLE:
            h = x * x * y * y - (2.0 / 3.0) * x ** 3 - self.lam * x * x
        else:
            h = 0.5 * y * y - x ** 3 / 3.0 - self.lam * x
        return float(h) if np.ndim(h) == 0 else h

    def __call__(self, points):
        return self.value(points)

    def gradient(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        x, y = p[..., 0], p[..., 1]
        if self.family is Family.SADDLE:
            gx = 2.0 * x * y * y - 2.0 * x * x - 2.0 * self.lam * x
            gy = 2.0 * x * x * y
        else:
            gx = -x * x - self.lam
            gy = y
        return np.stack([gx, gy], axis=-1)

    def hessian(self, point) -> np.ndarray:
        x, y = float(point[0]), float(point[1])
        if self.family is Family.SADDLE:
            return np.array([[2.0 * y * y - 4.0 * x - 2.0 * self.lam, 4.0 * x * y],
                             [4.0 * x * y, 2.0 * x * x]])
        return np.array([[-2.0 * x, 0.0], [0.0, 1.0]])

    def weight(self, x):
        """The w(x) multiplying -lam in H."""
        return x * x if self.family is Family.SADDLE else x

    def axis_value(self, x):
        """H(x, 0)."""
        x = np.asarray(x, dtype=float)
        return self.value(np.stack([x, np.zeros_like(x)], axis=-1))


def first_integral(fi: FirstIntegral, p) -> float:
    return fi.value(p)


def level_intersection(fi_annulus: FirstIntegral, level, fi_strip: FirstIntegral, strip_level):
    """
    Closed-form intersection of {H_a = level} with {H_s = strip_level} in the upper half-plane.

    Subtracting the two integrals leaves (lam_s - lam_a) * w(x) = level - strip_level; the
    Saddle family takes the x < 0 branch. Returns (x, y) with y >= 0 (NaN where empty).
    Works elementwise on arrays of levels.
    """
    if fi_annulus.family is not fi_strip.family:
        raise PreconditionError("level intersection needs two members of one family")
    dlam = fi_strip.lam - fi_annulus.lam
    if dlam == 0:
        raise PreconditionError("level intersection needs distinct parameters")
    level = np.asarray(level, dtype=float)
    w = (level - np.asarray(strip_level, dtype=float)) / dlam
    lam = fi_annulus.lam
    with np.errstate(invalid="ignore", divide="ignore"):
        if fi_annulus.family is Family.SADDLE:
            x = np.where(w > 0, -np.sqrt(np.where(w > 0, w, np.nan)), np.nan)
            y2 = (level + (2.0 / 3.0) * x ** 3 + lam * x * x) / (x * x)
        else:
            x = w
            y2 = 2.0 * (level + x ** 3 / 3.0 + lam * x)
        y = np.where(y2 >= 0, np.sqrt(np.where(y2 >= 0, y2, np.nan)), np.nan)
    if np.ndim(x) == 0:
        return float(x), float(y)
    return x, y


def loop_interior(fi: FirstIntegral, points, level: float, x_edge: float) -> np.ndarray:
    """Membership in {H <= level, x <= x_edge}: the bounded region of a connection loop."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    return (fi.value(p) <= level) & (p[:, 0] <= x_edge)
