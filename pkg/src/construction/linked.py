"""
Linked twist module - handles the construction shared by every certified configuration.

An annulus of closed orbits of one frozen field is linked with a strip of orbits of the other:
the strip is bounded by the two orbits through (alpha, 0) and (beta, 0), the annulus by a
connection loop outside and, inside, by the closed orbit through the point the strip flow maps
to its own mirror image. Both flow maps are then checked as twist maps on the two crossings and
folded into a chaos certificate.
"""
import contextlib
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

import numpy as np
from scipy.optimize import brentq

from src.core.config import SAMPLES, GRID, PATHS, SEED, STRIP_SLACK, MARGIN_FLOOR
from src.core.exceptions import (ConstructionError, CertificationError, PreconditionError,
                                 GeometricFailureError, ResolutionError, TwistFailureError,
                                 InsufficientCrossingError)
from src.core.logger import logger, log_context
from src.dynamics.flow import (IntegratorConfig, EventFunction, batch_crossing_times, flow_map,
                               flow_points, integrate_to_event, orbit_period, trace_level_set)
from src.dynamics.normal_forms import (Family, FirstIntegral, VectorFieldSpec, equilibria, eval_field,
                                       level_intersection)
from src.geometry.charts import LevelAnnulusChart, OrbitTimeStripChart
from src.geometry.curves import Disk, JordanCurve
from src.geometry.domains import TopAnnulus, TopStrip, OrientedRectangle
from src.geometry.linkage import Linkage, ball_for, check_linkage, verify_linkage
from src.sap.certificate import (ANNULUS_AFTER_STRIP, STRIP_AFTER_ANNULUS, ChaosCertificate, Instance,
                                 assemble_chaos_certificate)
from src.sap.crossing import CrossingSets, StretchResult, crossing_sets, stretch_check, target_copy
from src.sap.lifted import LiftedMap
from src.sap.twist import (StripTwistResult, TwistCertificate, check_annular_twist, check_boundary_invariance,
                           check_strip_twist, resampled_margin)
from src.construction.lifts import (AnnulusFlowLift, StripFlowLift, UPSTREAM_STRIP, DOWNSTREAM_STRIP,
                                    DOWNSTREAM_ANNULUS)

# |d/ds H_annulus| along the strip orbit at the crossing below this counts as a tangency
TANGENCY_TOL = 1e-6
# Closed-form crossings must match the integrated ones this closely
SYMMETRY_TOL = 1e-6
BETA_STEPS = 10
RHO_GRID = 17
RECTANGLE_SAMPLES = 65
# Geometric grid of annulus times, in inner periods
TAU2_RATIO = 1.5
TAU2_PERIODS = 120.0
# Admissible annulus times tried while paths cross too few copies
MAX_TAU2_ATTEMPTS = 4
BOUNDARY_REL_TOL = 1e-12
BOUNDARY_ABS_TOL = 1e-14


@dataclass(frozen=True)
class ConstructionOptions:
    """Overrides and sampling settings of one build; None means "choose it"."""
    alpha: float | None = None
    beta: float | None = None
    tau_strip: float | None = None
    tau_annulus: float | None = None
    slack: float = STRIP_SLACK
    samples: int = SAMPLES
    grid: int = GRID
    paths: int = PATHS
    seed: int = SEED
    margin_floor: float = MARGIN_FLOOR
    max_perturbations: int = 5

    def __post_init__(self):
        if not 0 < self.slack < 0.2:
            raise PreconditionError(f"strip slack must lie in (0, 0.2), got {self.slack}")
        if self.samples < 16:
            raise PreconditionError(f"samples must be at least 16, got {self.samples}")
        if self.grid < 2:
            raise PreconditionError(f"grid must be at least 2, got {self.grid}")
        if self.paths < 8:
            raise PreconditionError(f"paths must be at least 8, got {self.paths}")
        if self.margin_floor < 0:
            raise PreconditionError(f"margin floor must be non-negative, got {self.margin_floor}")
        for name in ("tau_strip", "tau_annulus"):
            value = getattr(self, name)
            if value is not None and not (np.isfinite(value) and value > 0):
                raise PreconditionError(f"{name} override must be positive, got {value}")


@dataclass(frozen=True)
class LinkedSetup:
    """
    Which frozen field carries the annulus and which the strip.

    `annulus_phase` is the pulse ("first" or "second") whose field owns the annulus. The
    annulus is {H_A <= outer_level, x <= x_edge} around `center`; strip orbits are cut at
    x <= strip_x_edge and are closed orbits when `strip_closed`.
    """
    family: Family
    lambda1: float
    lambda2: float
    annulus_phase: str
    outer_level: float
    x_edge: float
    strip_x_edge: float
    strip_closed: bool
    center: np.ndarray
    x_star: float
    alpha_interval: tuple[float, float]
    outer_curve: JordanCurve
    variant: str
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.annulus_phase not in ("first", "second"):
            raise PreconditionError(f"unknown phase '{self.annulus_phase}'")
        lo, hi = self.alpha_interval
        if not lo < hi:
            raise PreconditionError(f"empty alpha interval ({lo}, {hi})")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def strip_phase(self) -> str:
        return "second" if self.annulus_phase == "first" else "first"

    @property
    def annulus_lambda(self) -> float:
        return self.lambda1 if self.annulus_phase == "first" else self.lambda2

    @property
    def strip_lambda(self) -> float:
        return self.lambda2 if self.annulus_phase == "first" else self.lambda1

    @property
    def composition(self) -> str:
        return STRIP_AFTER_ANNULUS if self.annulus_phase == "first" else ANNULUS_AFTER_STRIP

    @property
    def fi_annulus(self) -> FirstIntegral:
        return FirstIntegral(self.family, self.annulus_lambda)

    @property
    def fi_strip(self) -> FirstIntegral:
        return FirstIntegral(self.family, self.strip_lambda)

    @property
    def spec_annulus(self) -> VectorFieldSpec:
        return VectorFieldSpec(self.family, self.annulus_lambda)

    @property
    def spec_strip(self) -> VectorFieldSpec:
        return VectorFieldSpec(self.family, self.strip_lambda)

    def pulse_times(self, tau_strip: float, tau_annulus: float) -> tuple[float, float]:
        """(tau1, tau2) of the forcing for the given strip and annulus times."""
        return (tau_annulus, tau_strip) if self.annulus_phase == "first" else (tau_strip, tau_annulus)

    def split_times(self, tau1: float | None, tau2: float | None) -> tuple[float | None, float | None]:
        """(tau_strip, tau_annulus) from pulse times."""
        return (tau2, tau1) if self.annulus_phase == "first" else (tau1, tau2)


# ----------------------------------------------------------------------
# Strip boundary orbits
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class StripOrbit:
    """
    Orbit of the strip field through (tip, 0), from its entry into the annulus to its exit.

    `entry` is on the outer boundary on the upstream side, `arrival` the exit point reached
    after `transit`; `slope` is d/ds H_A along the orbit at the entry (unit speed).
    """
    tip: float
    level: float
    upstream_sign: int
    entry: np.ndarray
    arrival: np.ndarray
    transit: float
    slope: float


def _annulus_event(setup: LinkedSetup, level: float) -> EventFunction:
    fi = setup.fi_annulus
    return EventFunction(lambda x, y: fi.value(np.stack([x, y], axis=-1)) - level, "rising")


def strip_orbit(setup: LinkedSetup, tip: float, cfg: IntegratorConfig | None = None) -> StripOrbit:
    """Closed-form entry into the annulus and integrated transit of the strip orbit through (tip, 0)."""
    cfg = cfg or IntegratorConfig()
    fi_a, fi_s, spec_s = setup.fi_annulus, setup.fi_strip, setup.spec_strip
    level = float(fi_s.axis_value(tip))
    vy = float(eval_field(spec_s, np.array([tip, 0.0]))[1])
    if vy == 0:
        raise GeometricFailureError(f"strip orbit through ({tip:.6g}, 0) is tangent to the axis")
    upstream = -int(np.sign(vy))
    x, y = level_intersection(fi_a, setup.outer_level, fi_s, level)
    if not (np.isfinite(x) and np.isfinite(y)) or y <= 0 or x > setup.x_edge:
        raise GeometricFailureError(f"strip orbit through ({tip:.6g}, 0) does not cross the outer boundary")
    entry = np.array([x, upstream * y])
    v = eval_field(spec_s, entry)
    slope = float(np.dot(fi_a.gradient(entry), v) / np.linalg.norm(v))
    transit, arrival = integrate_to_event(spec_s, entry, _annulus_event(setup, setup.outer_level), cfg)
    mirror = entry * np.array([1.0, -1.0])
    gap = float(np.linalg.norm(arrival - mirror))
    if gap > SYMMETRY_TOL:
        raise GeometricFailureError(f"strip orbit through ({tip:.6g}, 0) leaves the annulus {gap:.3g} "
                                    f"away from the mirror of its entry")
    return StripOrbit(tip=float(tip), level=level, upstream_sign=upstream, entry=entry, arrival=arrival,
                      transit=float(transit), slope=slope)


def _checked_orbit(setup: LinkedSetup, tip: float, cfg: IntegratorConfig) -> StripOrbit:
    orbit = strip_orbit(setup, tip, cfg)
    if abs(orbit.slope) < TANGENCY_TOL:
        raise GeometricFailureError(f"strip orbit through ({tip:.6g}, 0) is tangent to the outer boundary")
    return orbit


def _search_beta(setup: LinkedSetup, alpha: StripOrbit, need: float, cfg: IntegratorConfig) -> StripOrbit:
    """First beta marching out from alpha (both directions, nearest first) whose transit is long enough."""
    lo, hi = setup.alpha_interval
    for k in range(1, BETA_STEPS):
        for end in (lo, hi):
            beta = alpha.tip + k * (end - alpha.tip) / BETA_STEPS
            try:
                orbit = _checked_orbit(setup, beta, cfg)
            except ConstructionError as e:
                logger.debug(f"beta={beta:.6g} rejected: {e}")
                continue
            if orbit.upstream_sign != alpha.upstream_sign:
                logger.debug(f"beta={beta:.6g} rejected: orbit runs the other way through the axis")
                continue
            if orbit.transit >= need:
                logger.debug(f"beta={beta:.6g}: transit {orbit.transit:.6g} >= {need:.6g}")
                return orbit
            logger.debug(f"beta={beta:.6g} rejected: transit {orbit.transit:.6g} < {need:.6g}")
    raise GeometricFailureError(f"no beta in ({lo:.6g}, {hi:.6g}) gives a strip orbit with transit >= {need:.6g}")


def _strip_reference(orbit: StripOrbit, options: ConstructionOptions) -> float:
    """The transit time the strip time and inner boundary are scaled from."""
    if options.tau_strip is not None:
        return options.tau_strip / (1.0 + options.slack)
    return orbit.transit


def boundary_orbits(setup: LinkedSetup, options: ConstructionOptions,
                    cfg: IntegratorConfig) -> tuple[StripOrbit, StripOrbit, list[str]]:
    """
    The alpha and beta orbits; alpha is moved by multiples of 1% of its interval when the
    crossing is degenerate or no beta fits.
    """
    lo, hi = setup.alpha_interval
    base = options.alpha if options.alpha is not None else 0.5 * (lo + hi)
    if not lo < base < hi:
        raise PreconditionError(f"alpha={base} is outside its admissible interval ({lo:.6g}, {hi:.6g})")
    step = 0.01 * (hi - lo)
    offsets = [0.0] + [sign * k * step for k in (1, 2, 3) for sign in (1.0, -1.0)]
    candidates = [base + d for d in offsets[:options.max_perturbations + 1] if lo < base + d < hi]
    notes = []
    last = None
    for alpha in candidates:
        try:
            orbit = _checked_orbit(setup, alpha, cfg)
            need = (1.0 + 4.0 * options.slack) * _strip_reference(orbit, options)
            if options.beta is not None:
                if not lo < options.beta < hi or options.beta == alpha:
                    raise PreconditionError(f"beta={options.beta} is outside ({lo:.6g}, {hi:.6g}) or equals alpha")
                beta = _checked_orbit(setup, options.beta, cfg)
                if beta.transit < need:
                    raise GeometricFailureError(f"beta={options.beta} transit {beta.transit:.6g} < {need:.6g}")
            else:
                beta = _search_beta(setup, orbit, need, cfg)
            if alpha != base:
                notes.append(f"alpha moved from {base:.8g} to {alpha:.8g}")
            return orbit, beta, notes
        except ConstructionError as e:
            last = e
            logger.warning(f"alpha={alpha:.8g} rejected ({e}); perturbing")
    raise GeometricFailureError(f"degenerate configuration after {len(candidates) - 1} alpha perturbations: {last}")


# ----------------------------------------------------------------------
# Inner boundary
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class InnerBoundary:
    sigma_hat: float
    point: np.ndarray
    level: float
    residual: float
    mirror_gap: float


def psi_bar(spec: VectorFieldSpec, tau: float, p, cfg: IntegratorConfig | None = None) -> float:
    """y of phi(tau, p) plus y of p: zero exactly when the tau-image of p is its mirror."""
    p = np.asarray(p, dtype=float)
    return float(flow_map(spec, tau, p, cfg)[1] + p[1])


def locate_inner_boundary(spec: VectorFieldSpec, fi_annulus: FirstIntegral, entry, transit: float, tau: float,
                        cfg: IntegratorConfig | None = None) -> InnerBoundary:
    """
    Root sigma_hat of psi_bar(q(sigma)) on the arc q(sigma) = phi(sigma, entry), sigma in
    [0, transit - tau], and the annulus level through q(sigma_hat).
    """
    cfg = cfg or IntegratorConfig()
    entry = np.asarray(entry, dtype=float)
    if not 0 < tau < transit:
        raise GeometricFailureError(f"inner-boundary time {tau:.6g} must lie in (0, {transit:.6g})")
    pair = np.vstack([entry, entry])

    def f(sigma):
        q, image = flow_points(spec, np.array([sigma, sigma + tau]), pair, cfg)
        return float(image[1] + q[1])

    a, b = 0.0, transit - tau
    fa, fb = f(a), f(b)
    if fa * fb > 0:
        raise GeometricFailureError(f"psi-bar keeps its sign on the arc ({fa:.3g}, {fb:.3g})")
    sigma = a if fa == 0 else b if fb == 0 else brentq(f, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    q = flow_map(spec, sigma, entry, cfg)
    image = flow_map(spec, tau, q, cfg)
    residual = float(image[1] + q[1])
    gap = float(np.linalg.norm(image - q * np.array([1.0, -1.0])))
    return InnerBoundary(sigma_hat=float(sigma), point=q, level=float(fi_annulus.value(q)),
                         residual=residual, mirror_gap=gap)


# ----------------------------------------------------------------------
# Charts and domains
# ----------------------------------------------------------------------

def _axis_tips(fi: FirstIntegral, levels: np.ndarray, tip_a: float, tip_b: float) -> np.ndarray:
    lo, hi = sorted((tip_a, tip_b))
    out = np.empty(levels.size)
    for i, level in enumerate(levels):
        f = lambda x: float(fi.axis_value(x)) - level
        flo, fhi = f(lo), f(hi)
        out[i] = lo if flo == 0 else hi if fhi == 0 else brentq(f, lo, hi, xtol=1e-15)
    return out


def _ball_exit(spec: VectorFieldSpec, tip: float, ball: Disk, cfg: IntegratorConfig) -> float:
    c, r2 = ball.center, ball.radius ** 2
    event = EventFunction(lambda x, y: (x - c[0]) ** 2 + (y - c[1]) ** 2 - r2, "rising")
    t, _ = integrate_to_event(spec, np.array([tip, 0.0]), event, cfg)
    return float(t)


def build_strip_chart(setup: LinkedSetup, alpha: StripOrbit, beta: StripOrbit, inner_level: float,
                      tau_strip: float, kappa_beta: float, ball: Disk, cfg: IntegratorConfig) -> OrbitTimeStripChart:
    """Orbit-time chart of the strip between the alpha and beta orbits."""
    fi_s, spec_s = setup.fi_strip, setup.spec_strip
    level_lo, level_hi = sorted((alpha.level, beta.level))
    rho_grid = np.linspace(-1.0, 1.0, RHO_GRID)
    levels = level_lo + 0.5 * (rho_grid + 1.0) * (level_hi - level_lo)
    tips = np.column_stack([_axis_tips(fi_s, levels, alpha.tip, beta.tip), np.zeros(RHO_GRID)])
    horizon = 0.6 * max(alpha.transit, beta.transit)
    inner, _ = batch_crossing_times(spec_s, tips, _annulus_event(setup, inner_level), horizon, cfg)
    outer, _ = batch_crossing_times(spec_s, tips, _annulus_event(setup, setup.outer_level), horizon, cfg)
    if not (np.all(np.isfinite(inner)) and np.all(np.isfinite(outer)) and np.all(inner < outer)):
        raise GeometricFailureError("some strip orbit does not cross the annulus from the axis")

    rho_alpha = -1.0 if alpha.level <= beta.level else 1.0
    kappa = (0.0, kappa_beta) if rho_alpha < 0 else (kappa_beta, 0.0)
    exits = [_ball_exit(spec_s, orbit.tip, ball, cfg) for orbit in (alpha, beta)]
    # long enough to leave the ball and to hold every image of the upstream rectangle
    half_window = max(1.05 * max(exits), 1.05 * float(np.max(outer)), 1.02 * float(np.max(tau_strip - inner)))
    if setup.strip_closed:
        period = min(orbit_period(spec_s, np.array([orbit.tip, 0.0]), cfg) for orbit in (alpha, beta))
        if half_window >= 0.45 * period:
            raise GeometricFailureError(f"strip window {half_window:.6g} wraps around strip orbits of "
                                        f"period {period:.6g}")
    logger.debug(f"strip chart: levels [{level_lo:.6g}, {level_hi:.6g}], a in [{inner.min():.4g}, "
                 f"{inner.max():.4g}], b in [{outer.min():.4g}, {outer.max():.4g}], U={half_window:.4g}")
    return OrbitTimeStripChart(spec=spec_s, level_lo=level_lo, level_hi=level_hi,
                               axis_tips=(alpha.tip, beta.tip), upstream_sign=alpha.upstream_sign,
                               x_edge=setup.strip_x_edge, rho_grid=rho_grid, inner_times=inner,
                               outer_times=outer, kappa=kappa, half_window=half_window, cfg=cfg)


def chart_rectangle(chart: LevelAnnulusChart, label: str, start: float,
                    samples: int = RECTANGLE_SAMPLES) -> OrientedRectangle:
    """The crossing occupying the annulus windows [start, start + 1/2]."""
    w = np.linspace(start, start + 0.5, samples)
    rho = np.linspace(-1.0, 1.0, samples)
    inner = chart.unlift(0.5 * w, -1.0)
    outer = chart.unlift(0.5 * w, 1.0)
    left = chart.unlift(np.full(samples, 0.5 * start), rho)
    right = chart.unlift(np.full(samples, 0.5 * (start + 0.5)), rho)
    boundary = JordanCurve(np.vstack([inner, right[1:], outer[::-1][1:], left[::-1][1:]]))
    return OrientedRectangle(label=label, boundary=boundary, annulus_sides=(inner, outer),
                             strip_sides=(left, right), rho_levels=rho,
                             theta_lo=np.full(samples, 0.5 * start),
                             theta_hi=np.full(samples, 0.5 * (start + 0.5)),
                             metadata={"window": (start, start + 0.5)})


# ----------------------------------------------------------------------
# Annulus time
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Tau2Choice:
    tau: float
    certificate: TwistCertificate
    tried: list[tuple[float, int | None, float | None]]
    best_winding: float


def tau2_candidates(lift_for: Callable[[float], LiftedMap], start: float, m: int, *, samples: int = SAMPLES,
                    margin_floor: float = MARGIN_FLOOR, max_time: float,
                    ratio: float = TAU2_RATIO) -> Iterator[Tau2Choice]:
    """
    Annulus times on the geometric grid start * ratio**k whose twist certificate has at least m
    crossings and a margin of at least margin_floor, in increasing order.

    Raises the twist failure once the grid passes max_time without a further admissible time.
    """
    if m < 2:
        raise PreconditionError(f"at least 2 crossings are needed, got m={m}")
    if not (start > 0 and ratio > 1):
        raise PreconditionError("annulus time grid needs start > 0 and ratio > 1")
    tau = start
    tried = []
    best = 0.0
    while tau <= max_time:
        lifted = lift_for(tau)
        try:
            cert = check_annular_twist(lifted, samples=samples)
        except TwistFailureError as e:
            best = max(best, e.best or 0.0)
            tried.append((tau, None, None))
            logger.debug(f"tau2={tau:.6g}: no twist")
            tau *= ratio
            continue
        winding = abs(0.5 * sum(cert.inner_range) - 0.5 * sum(cert.outer_range)) / 2.0
        best = max(best, winding)
        tried.append((tau, cert.m, cert.margin))
        logger.debug(f"tau2={tau:.6g}: m={cert.m}, margin {cert.margin:.4g}")
        if cert.passed and cert.m >= m and cert.margin >= margin_floor:
            yield Tau2Choice(tau=tau, certificate=cert, tried=list(tried), best_winding=best)
        tau *= ratio
    raise TwistFailureError(f"no annulus time up to {max_time:.6g} gives {m} crossings "
                            f"(best winding {best:.4g} turns)", best=best)


def choose_tau2(lift_for: Callable[[float], LiftedMap], start: float, m: int, *, samples: int = SAMPLES,
                margin_floor: float = MARGIN_FLOOR, max_time: float, ratio: float = TAU2_RATIO) -> Tau2Choice:
    """Smallest admissible annulus time on the grid (see tau2_candidates)."""
    return next(tau2_candidates(lift_for, start, m, samples=samples, margin_floor=margin_floor,
                                max_time=max_time, ratio=ratio))


# ----------------------------------------------------------------------
# The construction
# ----------------------------------------------------------------------

@dataclass
class LinkedConstruction:
    setup: LinkedSetup
    alpha: StripOrbit
    beta: StripOrbit
    tau_transit: float
    inner: InnerBoundary
    inner_period: float
    tau_strip: float
    tau_annulus: float
    annulus: TopAnnulus
    strip: TopStrip
    downstream: OrientedRectangle
    upstream: OrientedRectangle
    linkage: Linkage
    strip_lift: StripFlowLift
    annulus_lift: AnnulusFlowLift
    strip_twist: StripTwistResult
    annular_twist: TwistCertificate
    crossing: CrossingSets
    strip_stretch: StretchResult
    annulus_stretch: dict[int, StretchResult]
    residuals: tuple[float, float]
    margin_resampled: float
    slack: float
    tau2_tried: list = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def family(self) -> Family:
        return self.setup.family

    @property
    def tau1(self) -> float:
        return self.setup.pulse_times(self.tau_strip, self.tau_annulus)[0]

    @property
    def tau2(self) -> float:
        return self.setup.pulse_times(self.tau_strip, self.tau_annulus)[1]

    @property
    def composition(self) -> str:
        return self.setup.composition

    @property
    def crossed_levels(self) -> list[int]:
        return sorted(level for level, result in self.annulus_stretch.items() if result.passed)

    @property
    def rectangles(self) -> tuple[OrientedRectangle, OrientedRectangle]:
        return self.downstream, self.upstream

    @property
    def start_rectangle(self) -> OrientedRectangle:
        """Rectangle the Poincare map returns to: upstream when the strip map acts first."""
        return self.upstream if self.composition == ANNULUS_AFTER_STRIP else self.downstream

    @property
    def x_int(self) -> float:
        return float(self.alpha.entry[0])

    @property
    def y_int(self) -> float:
        return float(abs(self.alpha.entry[1]))

    @property
    def provenance(self) -> dict:
        return {
            "variant": self.setup.variant,
            "alpha": self.alpha.tip,
            "beta": self.beta.tip,
            "x_star": self.setup.x_star,
            "x_int": self.x_int,
            "y_int": self.y_int,
            "tau1": self.tau1,
            "tau2": self.tau2,
            "tau_transit": self.tau_transit,
            "tau_strip": self.tau_strip,
            "tau_annulus": self.tau_annulus,
            "sigma_hat": self.inner.sigma_hat,
            "inner_level": self.inner.level,
            "outer_level": self.setup.outer_level,
            "inner_period": self.inner_period,
            "psi_bar_residual": self.inner.residual,
            "slack": self.slack,
            "composition": self.composition,
            "notes": list(self.setup.notes) + list(self.notes),
        }


@contextlib.contextmanager
def _step(name: str):
    with log_context(step=name):
        try:
            yield
        except (ConstructionError, CertificationError, PreconditionError) as e:
            if getattr(e, "step", None) is None:
                e.step = name
            logger.error(f"{name} failed: {e}")
            raise


def _fine(cfg: IntegratorConfig) -> IntegratorConfig:
    """Tolerances used when measuring boundary invariance."""
    return replace(cfg, rel_tol=min(cfg.rel_tol, BOUNDARY_REL_TOL), abs_tol=min(cfg.abs_tol, BOUNDARY_ABS_TOL))


def _crossing_sets(lifted: LiftedMap, cert: TwistCertificate, grid: int) -> CrossingSets:
    try:
        return crossing_sets(lifted, cert, DOWNSTREAM_ANNULUS, grid)
    except ResolutionError as e:
        logger.warning(f"{e}; retrying with grid {2 * grid}")
        return crossing_sets(lifted, cert, DOWNSTREAM_ANNULUS, 2 * grid)


def _annulus_times(lift_for: Callable[[float], LiftedMap], inner_period: float, m: int,
                   options: ConstructionOptions, cfg: IntegratorConfig) -> Iterator[Tau2Choice]:
    if options.tau_annulus is None:
        yield from tau2_candidates(lift_for, inner_period, m, samples=options.samples,
                                   margin_floor=options.margin_floor,
                                   max_time=min(cfg.max_time, TAU2_PERIODS * inner_period))
        return
    tau = options.tau_annulus
    annular = check_annular_twist(lift_for(tau), samples=options.samples)
    if not annular.passed or annular.m < m:
        raise TwistFailureError(f"annulus time {tau:.6g} gives m={annular.m}, margin "
                                f"{annular.margin:.4g}", best=annular.margin)
    yield Tau2Choice(tau=tau, certificate=annular, tried=[], best_winding=0.0)


def _stretch_annulus(annulus_lift: AnnulusFlowLift, annular: TwistCertificate, m: int,
                     options: ConstructionOptions) -> tuple[CrossingSets, dict[int, StretchResult]]:
    """Crossing sets and path stretching for every forced copy; at least m copies must be crossed."""
    crossing = _crossing_sets(annulus_lift, annular, options.grid)
    annulus_stretch = {}
    for level in crossing.nonempty:
        annulus_stretch[level] = stretch_check(annulus_lift, DOWNSTREAM_ANNULUS, target_copy(level),
                                               K=crossing[level], paths=options.paths, seed=options.seed)
        if not annulus_stretch[level].passed:
            logger.warning(f"paths do not cross copy {level} inside its crossing set")
    crossed = [level for level, result in annulus_stretch.items() if result.passed]
    if len(crossed) < m:
        raise InsufficientCrossingError(f"paths cross {len(crossed)} copies {crossed}, requested {m}")
    return crossing, annulus_stretch


def build_linked(setup: LinkedSetup, m: int = 2, options: ConstructionOptions | None = None,
                 cfg: IntegratorConfig | None = None) -> tuple[LinkedConstruction, ChaosCertificate]:
    """
    Run the whole construction for one configuration and return it with its certificate.

    Raises construction errors for geometric failures and certification errors when a twist
    or stretching condition does not hold.
    """
    with log_context(instance=f"{setup.variant} ({setup.lambda1:g}, {setup.lambda2:g})"):
        return _build_linked(setup, m, options, cfg)


def _build_linked(setup: LinkedSetup, m: int, options: ConstructionOptions | None,
                  cfg: IntegratorConfig | None) -> tuple[LinkedConstruction, ChaosCertificate]:
    options = options or ConstructionOptions()
    cfg = cfg or IntegratorConfig()
    if m < 2:
        raise PreconditionError(f"at least 2 symbols are needed, got m={m}")
    s = options.slack
    fi_a, spec_a = setup.fi_annulus, setup.spec_annulus
    logger.info(f"Building {setup.variant}: {setup.family.value} lambda=({setup.lambda1}, {setup.lambda2}), m={m}")

    with _step("strip boundary orbits"):
        logger.info("Step 1: strip boundary orbits")
        alpha, beta, notes = boundary_orbits(setup, options, cfg)
        tau_ref = _strip_reference(alpha, options)
        tau_strip = options.tau_strip if options.tau_strip is not None else tau_ref * (1.0 + s)
        tau_inner = tau_ref * (1.0 + 2.0 * s)
        logger.info(f"alpha={alpha.tip:.8g} (transit {alpha.transit:.6g}), beta={beta.tip:.8g} "
                    f"(transit {beta.transit:.6g}), strip time {tau_strip:.6g}")

    with _step("inner boundary"):
        logger.info("Step 2: inner boundary")
        inner = locate_inner_boundary(setup.spec_strip, fi_a, beta.entry, beta.transit, tau_inner, cfg)
        tip_levels = fi_a.value(np.array([[alpha.tip, 0.0], [beta.tip, 0.0]]))
        center_level = float(fi_a.value(setup.center))
        if not inner.level < setup.outer_level:
            raise GeometricFailureError(f"inner level {inner.level:.6g} is not below the outer level")
        if not (inner.level > np.max(tip_levels) and inner.level > center_level):
            raise GeometricFailureError(f"inner level {inner.level:.6g} does not enclose the strip tips")
        traced = trace_level_set(fi_a, inner.level, inner.point, cfg)
        if not traced.closed:
            raise GeometricFailureError(f"annulus level {inner.level:.6g} through q is not a closed orbit")
        inner_curve = JordanCurve(traced.points)
        inner_period = orbit_period(spec_a, inner.point, cfg)
        logger.info(f"sigma_hat={inner.sigma_hat:.8g}, inner level {inner.level:.8g}, "
                    f"psi-bar residual {inner.residual:.2e}, inner period {inner_period:.6g}")

    with _step("annulus and strip"):
        logger.info("Step 3: annulus and strip")
        q = inner.point
        v = eval_field(spec_a, q)
        d = q - setup.center
        orientation = 1 if d[0] * v[1] - d[1] * v[0] > 0 else -1
        reach = 1.25 * float(np.max(np.linalg.norm(setup.outer_curve.points - setup.center, axis=1)))
        annulus_chart = LevelAnnulusChart(fi=fi_a, inner_level=inner.level, outer_level=setup.outer_level,
                                          x_edge=setup.x_edge, center=setup.center, orientation=orientation,
                                          strip_fi=setup.fi_strip, strip_levels=(alpha.level, beta.level),
                                          downstream_sign=-alpha.upstream_sign, ray_reach=reach)
        A = TopAnnulus(inner=inner_curve, outer=setup.outer_curve, center_hint=setup.center, chart=annulus_chart)
        ball = ball_for(A)
        strip_chart = build_strip_chart(setup, alpha, beta, inner.level, tau_strip, 1.0 / (1.0 + 2.0 * s),
                                        ball, cfg)
        lo, hi = strip_chart.section_range()
        x = np.linspace(lo, hi, 401)
        S = TopStrip(lower=strip_chart.unlift(x, -1.0), upper=strip_chart.unlift(x, 1.0), chart=strip_chart)
        linkage = verify_linkage(A, S)
        failed = [name for name, ok in check_linkage(linkage, A, S).items() if not ok]
        if failed:
            raise GeometricFailureError(f"linkage properties fail: {failed}")
        downstream = chart_rectangle(annulus_chart, "R_down", 0.0)
        upstream = chart_rectangle(annulus_chart, "R_up", 1.0)

    strip_lift = StripFlowLift(strip_chart, tau_strip, cfg)
    with _step("boundary invariance"):
        logger.info("Step 4: boundary invariance")
        fine_strip = StripFlowLift(strip_chart, tau_strip, _fine(cfg))
        residual_strip = check_boundary_invariance(fine_strip.plane, S, options.samples,
                                                   section=(UPSTREAM_STRIP.x0, UPSTREAM_STRIP.x1))

    with _step("strip twist"):
        logger.info("Step 5: strip twist")
        strip_twist = check_strip_twist(strip_lift, UPSTREAM_STRIP, DOWNSTREAM_STRIP, options.samples)
        if not strip_twist.passed:
            raise TwistFailureError(f"strip map does not carry the upstream rectangle across the downstream "
                                    f"one (margin {strip_twist.margin:.4g})", best=strip_twist.margin)
        strip_stretch = stretch_check(strip_lift, UPSTREAM_STRIP, DOWNSTREAM_STRIP,
                                      paths=options.paths, seed=options.seed)
        if not strip_stretch.passed:
            raise InsufficientCrossingError(f"strip map does not stretch the upstream rectangle across the "
                                            f"downstream one on path {strip_stretch.witness_index}")

    sinks = np.array([e.position for e in equilibria(spec_a) if e.kind == "saddle"]).reshape(-1, 2)
    lift_for = lambda tau: AnnulusFlowLift(annulus_chart, spec_a, tau, inner_period, cfg, sinks=sinks)
    candidates = _annulus_times(lift_for, inner_period, m, options, cfg)
    failure = None
    for attempt in range(MAX_TAU2_ATTEMPTS):
        with _step("annulus twist"):
            logger.info(f"Step 6: annulus twist (attempt {attempt + 1})")
            try:
                choice = next(candidates, None)
            except TwistFailureError:
                if failure is None:
                    raise
                choice = None
            if choice is not None:
                tau_annulus, annular, tried = choice.tau, choice.certificate, choice.tried
                annulus_lift = lift_for(tau_annulus)
                fine_lift = AnnulusFlowLift(annulus_chart, spec_a, tau_annulus, inner_period, _fine(cfg), sinks=sinks)
                residual_annulus = check_boundary_invariance(fine_lift.plane, A, options.samples)
                logger.info(f"annulus time {tau_annulus:.6g}: {annular.form} twist, j=({annular.j_minus1}, "
                            f"{annular.j_plus1}), m={annular.m}, margin {annular.margin:.4g}, "
                            f"boundary residual {residual_annulus:.2e}")
        if choice is None:
            break
        with _step("stretching along paths"):
            logger.info("Step 7: stretching along paths")
            try:
                crossing, annulus_stretch = _stretch_annulus(annulus_lift, annular, m, options)
                failure = None
                break
            except (ResolutionError, InsufficientCrossingError) as e:
                failure = e
                logger.warning(f"{e} at annulus time {tau_annulus:.6g}; trying the next admissible time")
    if failure is not None:
        with _step("stretching along paths"):
            raise failure
    with _step("stretching along paths"):
        margin_4x = resampled_margin(annulus_lift, annular)

    construction = LinkedConstruction(
        setup=setup, alpha=alpha, beta=beta, tau_transit=alpha.transit, inner=inner,
        inner_period=inner_period, tau_strip=tau_strip, tau_annulus=tau_annulus, annulus=A, strip=S,
        downstream=downstream, upstream=upstream, linkage=linkage, strip_lift=strip_lift,
        annulus_lift=annulus_lift, strip_twist=strip_twist, annular_twist=annular, crossing=crossing,
        strip_stretch=strip_stretch, annulus_stretch=annulus_stretch,
        residuals=(residual_strip, residual_annulus), margin_resampled=margin_4x, slack=s,
        tau2_tried=tried, notes=notes)

    with _step("certificate"):
        logger.info("Step 8: certificate")
        tau1, tau2 = setup.pulse_times(tau_strip, tau_annulus)
        instance = Instance(setup.family.value, setup.lambda1, setup.lambda2, tau1, tau2)
        cert = assemble_chaos_certificate(strip_twist, annular, instance, n=1,
                                          crossed_levels=construction.crossed_levels,
                                          composition=setup.composition,
                                          residuals=construction.residuals,
                                          grid_resolution=crossing.grid, margin_resampled=margin_4x)
    return construction, cert


def strip_time_interval(construction: LinkedConstruction, samples: int = SAMPLES) -> tuple[float, float]:
    """
    Strip times around tau_strip for which the strip twist still holds with this geometry: the
    ends are the roots of the twist margin below and above tau_strip.
    """
    chart, cfg = construction.strip_lift.chart, construction.strip_lift.cfg
    tau0 = construction.tau_strip
    tau_inner = construction.tau_transit * (1.0 + 2.0 * construction.slack)

    def margin(tau):
        return check_strip_twist(StripFlowLift(chart, tau, cfg), UPSTREAM_STRIP, DOWNSTREAM_STRIP, samples).margin

    ends = []
    for far in (0.9 * construction.tau_transit, 1.1 * tau_inner):
        if margin(far) > 0:
            ends.append(far)
            continue
        a, b = sorted((far, tau0))
        ends.append(brentq(margin, a, b, xtol=1e-10 * tau0))
    lo, hi = sorted(ends)
    logger.info(f"strip twist holds for strip times in ({lo:.8g}, {hi:.8g})")
    return lo, hi
