"""
Switched system module - the pulse-forced system: a normal form whose parameter alternates
between lambda1 (for tau1) and lambda2 (for tau2), its half-period maps, Poincare map and itineraries.
"""
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from src.core.exceptions import PreconditionError, UnsupportedFamilyError, ItineraryBreakError
from src.dynamics.flow import IntegratorConfig, flow_points, field_rhs, solve
from src.dynamics.normal_forms import Family, FORCED_FAMILIES, VectorFieldSpec, parse_family


class Region(Protocol):
    def contains(self, points) -> np.ndarray: ...


@dataclass(frozen=True)
class PulseForcing:
    lambda1: float
    lambda2: float
    tau1: float
    tau2: float
    allow_degenerate: bool = field(default=False, kw_only=True)

    def __post_init__(self):
        values = (self.lambda1, self.lambda2, self.tau1, self.tau2)
        if not all(np.isfinite(v) for v in values):
            raise PreconditionError(f"forcing parameters must be finite, got {values}")
        if self.tau1 < 0 or self.tau2 < 0 or self.tau1 + self.tau2 <= 0:
            raise PreconditionError(f"pulse durations must be non-negative with positive period, "
                                    f"got tau1={self.tau1}, tau2={self.tau2}")
        if self.lambda1 == self.lambda2 and not self.allow_degenerate:
            raise PreconditionError(f"lambda1 and lambda2 must differ, both are {self.lambda1}")

    @property
    def period(self) -> float:
        return self.tau1 + self.tau2

    def phase(self, phase: str) -> tuple[float, float]:
        """(lambda, duration) of the 'first' or 'second' pulse."""
        if phase == "first":
            return self.lambda1, self.tau1
        if phase == "second":
            return self.lambda2, self.tau2
        raise PreconditionError(f"unknown phase '{phase}'")


@dataclass(frozen=True)
class SwitchedSystem:
    family: Family
    forcing: PulseForcing

    def __post_init__(self):
        family = parse_family(self.family)
        if family not in FORCED_FAMILIES:
            raise UnsupportedFamilyError(f"family {family.value} has no additive forcing")
        object.__setattr__(self, "family", family)

    def frozen(self, phase: str) -> VectorFieldSpec:
        lam, _ = self.forcing.phase(phase)
        return VectorFieldSpec(self.family, lam)


def half_map(sys: SwitchedSystem, phase: str, p, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """phi_{lambda_i}(tau_i, p); p may be a point or an (N, 2) array."""
    lam, tau = sys.forcing.phase(phase)
    points = np.asarray(p, dtype=float)
    image = flow_points(VectorFieldSpec(sys.family, lam), tau, np.atleast_2d(points), cfg)
    return image[0] if points.ndim == 1 else image


def poincare(sys: SwitchedSystem, p, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Phi = Phi_{lambda2} o Phi_{lambda1}."""
    return half_map(sys, "second", half_map(sys, "first", p, cfg), cfg)


def iterate(sys: SwitchedSystem, p, k: int, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Phi^0(p), ..., Phi^k(p) as a (k+1, 2) array."""
    if k < 0:
        raise PreconditionError("iteration count must be non-negative")
    points = [np.asarray(p, dtype=float)]
    for _ in range(k):
        points.append(poincare(sys, points[-1], cfg))
    return np.array(points)


def poincare_direct(sys: SwitchedSystem, p, k: int = 1, cfg: IntegratorConfig | None = None,
                    samples: bool = False):
    """
    Integrate the nonautonomous system over k periods, switching the parameter at the known
    switch times. Returns the k+1 period-boundary points, and with samples=True also the
    accepted-step samples (t, x, y) of the whole solution.
    """
    cfg = cfg or IntegratorConfig()
    state = np.asarray(p, dtype=float)
    boundary = [state.copy()]
    rows = [(0.0, state[0], state[1])]
    t = 0.0
    for _ in range(k):
        for phase in ("first", "second"):
            lam, tau = sys.forcing.phase(phase)
            if tau == 0:
                continue
            sol = solve(field_rhs(VectorFieldSpec(sys.family, lam)), (t, t + tau), state, cfg)
            state = sol.y[:, -1].copy()
            rows.extend((float(ti), float(x), float(y)) for ti, x, y in zip(sol.t[1:], sol.y[0, 1:], sol.y[1, 1:]))
            t += tau
        boundary.append(state.copy())
    boundary = np.array(boundary)
    return (boundary, rows) if samples else boundary


def itinerary(sys: SwitchedSystem, p, k: int, regions: Sequence[Region],
              cfg: IntegratorConfig | None = None) -> list[int]:
    """
    Symbols s_0..s_{k-1} with Phi^i(p) in regions[s_i].

    Raises the itinerary-break error naming the first iterate lying in no region.
    """
    if k < 0:
        raise PreconditionError("itinerary length must be non-negative")
    word = []
    point = np.asarray(p, dtype=float)
    for i in range(k):
        inside = [j for j, region in enumerate(regions) if bool(np.atleast_1d(region.contains(point[None, :]))[0])]
        if not inside:
            raise ItineraryBreakError(f"iterate {i} at {point.tolist()} lies in no region", index=i)
        if len(inside) > 1:
            raise PreconditionError(f"regions {inside} overlap at iterate {i}")
        word.append(inside[0])
        if i + 1 < k:
            point = poincare(sys, point, cfg)
    return word

