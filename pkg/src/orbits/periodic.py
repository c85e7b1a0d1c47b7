"""
Periodic orbit module - finds kT-periodic orbits of the pulse-forced system whose itinerary
through the symbol regions is a prescribed word, and re-checks itineraries by integrating the
full nonautonomous system.
"""
from dataclasses import dataclass, field

import numpy as np

from src.core.exceptions import IntegrationError, OrbitNotFoundError, PreconditionError
from src.core.logger import logger
from src.dynamics.flow import IntegratorConfig, flow_points
from src.dynamics.switched import PulseForcing, SwitchedSystem, poincare, poincare_direct
from src.sap.certificate import ANNULUS_AFTER_STRIP, ChaosCertificate
from src.construction.linked import LinkedConstruction
from src.construction.regions import SymbolRegion, symbol_regions

CLOSURE_TOL = 1e-7
RESIDUAL_TOL = 1e-8
NEWTON_TOL = 1e-11
MAX_NEWTON = 40
MAX_HALVINGS = 12
FD_STEP = 1e-7
MAX_SEEDS = 256
MIN_SEEDS = 4
DISTINCT_TOL = 1e-6


@dataclass(frozen=True)
class SymbolWord:
    """A finite word over {0, ..., symbol_count - 1}, read as a k-periodic sequence."""
    symbols: tuple[int, ...]
    symbol_count: int

    def __post_init__(self):
        symbols = tuple(int(s) for s in self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if not symbols:
            raise PreconditionError("a symbol word must not be empty")
        bad = [s for s in symbols if not 0 <= s < self.symbol_count]
        if bad:
            raise PreconditionError(f"symbols {bad} are outside 0..{self.symbol_count - 1}")

    @classmethod
    def parse(cls, text: str, symbol_count: int) -> "SymbolWord":
        """'011' or '0,1,1'."""
        text = text.strip()
        parts = text.split(",") if "," in text else list(text)
        try:
            return cls(tuple(int(p) for p in parts if p.strip()), symbol_count)
        except ValueError as e:
            raise PreconditionError(f"cannot read symbol word '{text}'") from e

    @property
    def k(self) -> int:
        return len(self.symbols)

    def __str__(self) -> str:
        if self.symbol_count <= 10:
            return "".join(str(s) for s in self.symbols)
        return ",".join(str(s) for s in self.symbols)


@dataclass(frozen=True)
class ItineraryCheck:
    passed: bool
    realized: list[int]
    closure: float
    message: str = ""


@dataclass(frozen=True)
class PeriodicOrbitResult:
    point: np.ndarray
    word: SymbolWord
    residual: float
    itinerary: list[int]
    condition: float
    iterations: int
    seeds: int
    closure: float = field(default=float("nan"))

    @property
    def k(self) -> int:
        return self.word.k

    def to_dict(self) -> dict:
        return {"word": str(self.word), "k": self.k, "residual": self.residual,
                "initial_point": [float(v) for v in self.point], "itinerary": list(self.itinerary),
                "closure": self.closure, "condition": self.condition, "iterations": self.iterations,
                "seeds": self.seeds}


def system_for(cert: ChaosCertificate) -> SwitchedSystem:
    """The pulse-forced system a certificate speaks about."""
    return SwitchedSystem(cert.family, PulseForcing(cert.lambda1, cert.lambda2, cert.tau1, cert.tau2))


def power_map(sys: SwitchedSystem, points, k: int, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Phi^k on an (N, 2) batch; rows whose orbit runs away come back as NaN."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    try:
        out = points
        for _ in range(k):
            out = poincare(sys, out, cfg)
        return out
    except IntegrationError:
        out = np.full(points.shape, np.nan)
        for i, p in enumerate(points):
            try:
                q = p[None, :]
                for _ in range(k):
                    q = poincare(sys, q, cfg)
                out[i] = q[0]
            except IntegrationError:
                logger.debug(f"orbit of {p.tolist()} runs away within {k} periods")
        return out


def _jacobians(sys, p, F, k, cfg):
    h = FD_STEP * (1.0 + np.abs(p))
    shifted = np.vstack([p + np.column_stack([h[:, 0], np.zeros(len(p))]),
                         p + np.column_stack([np.zeros(len(p)), h[:, 1]])])
    images = power_map(sys, shifted, k, cfg)
    n = len(p)
    col_x = (images[:n] - shifted[:n] - F) / h[:, [0]]
    col_y = (images[n:] - shifted[n:] - F) / h[:, [1]]
    return np.stack([col_x, col_y], axis=-1)


def _steps(J, F) -> np.ndarray:
    try:
        return np.linalg.solve(J, -F[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.array([np.linalg.lstsq(Ji, -Fi, rcond=None)[0] for Ji, Fi in zip(J, F)])


def _newton(sys, seeds, k, cfg, max_step: float):
    """Damped Newton on Phi^k - id from every seed at once; returns points, residuals, iterations."""
    p = seeds.copy()
    F = power_map(sys, p, k, cfg) - p
    res = np.linalg.norm(F, axis=1)
    res[~np.isfinite(res)] = np.inf
    active = np.isfinite(res)
    iterations = 0
    for iterations in range(1, MAX_NEWTON + 1):
        todo = np.nonzero(active & (res > NEWTON_TOL))[0]
        if todo.size == 0:
            break
        J = _jacobians(sys, p[todo], F[todo], k, cfg)
        usable = np.all(np.isfinite(J), axis=(1, 2))
        active[todo[~usable]] = False
        todo, J = todo[usable], J[usable]
        if todo.size == 0:
            break
        step = _steps(J, F[todo])
        norm = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, max_step / np.where(norm > 0, norm, 1.0))[:, None]
        scale = np.ones(todo.size)
        waiting = np.arange(todo.size)
        for _ in range(MAX_HALVINGS):
            trial = p[todo[waiting]] + scale[waiting, None] * step[waiting]
            Ft = power_map(sys, trial, k, cfg) - trial
            rt = np.linalg.norm(Ft, axis=1)
            better = np.isfinite(rt) & (rt < res[todo[waiting]])
            idx = todo[waiting[better]]
            p[idx], F[idx], res[idx] = trial[better], Ft[better], rt[better]
            waiting = waiting[~better]
            if waiting.size == 0:
                break
            scale[waiting] *= 0.5
        active[todo[waiting]] = False
    return p, res, iterations


def _seeds(construction: LinkedConstruction, region: SymbolRegion, per_side: int,
           cfg: IntegratorConfig) -> np.ndarray:
    cells = construction.crossing[region.level]
    lifted = cells.sample(per_side)
    if lifted.shape[0] > MAX_SEEDS:
        lifted = lifted[np.linspace(0, lifted.shape[0] - 1, MAX_SEEDS).astype(int)]
    plane = construction.annulus.unlift(0.5 * lifted[:, 0], lifted[:, 1])
    if construction.composition == ANNULUS_AFTER_STRIP:
        plane = flow_points(construction.setup.spec_strip, -construction.tau_strip, plane, cfg)
    return plane[region.contains(plane)]


def verify_itinerary(sys: SwitchedSystem, p, word, regions, cfg: IntegratorConfig | None = None) -> ItineraryCheck:
    """
    Integrate the nonautonomous system over k periods from p and compare the regions visited
    at the period boundaries with the word; the orbit must also close to within 1e-7.
    """
    symbols = list(word.symbols if isinstance(word, SymbolWord) else word)
    k = len(symbols)
    try:
        boundary = poincare_direct(sys, np.asarray(p, dtype=float), k, cfg)
    except IntegrationError as e:
        return ItineraryCheck(passed=False, realized=[], closure=float("inf"), message=str(e))
    realized = []
    for i in range(k):
        inside = [j for j, region in enumerate(regions) if bool(region.contains(boundary[i][None, :])[0])]
        realized.append(inside[0] if len(inside) == 1 else -1)
    closure = float(np.linalg.norm(boundary[k] - boundary[0]))
    passed = realized == symbols and closure <= CLOSURE_TOL
    message = "" if passed else (f"realized {realized}, closure {closure:.3g}")
    return ItineraryCheck(passed=passed, realized=realized, closure=closure, message=message)


def find_periodic_orbit(sys: SwitchedSystem, cert: ChaosCertificate, word: SymbolWord,
                        construction: LinkedConstruction, cfg: IntegratorConfig | None = None) -> PeriodicOrbitResult:
    """
    Multistart damped Newton on Phi^k - id, seeded in the crossing set of the word's first
    symbol; the smallest-residual root whose itinerary re-checks is returned.
    """
    cfg = cfg or IntegratorConfig()
    if word.symbol_count > cert.symbol_count or max(word.symbols) >= cert.symbol_count:
        raise PreconditionError(f"word {word} uses symbols beyond the certified {cert.symbol_count}")
    regions = symbol_regions(construction)
    if len(regions) != cert.symbol_count:
        raise PreconditionError(f"construction has {len(regions)} symbol regions, certificate {cert.symbol_count}")
    k = word.k
    first = regions[word.symbols[0]]
    seeds = _seeds(construction, first, 1, cfg)
    if seeds.shape[0] < MIN_SEEDS:
        logger.info(f"only {seeds.shape[0]} seeds in region {first.symbol}; refining")
        seeds = _seeds(construction, first, 2, cfg)
    if seeds.shape[0] == 0:
        raise OrbitNotFoundError(f"no seed lies in symbol region {first.symbol}")
    logger.info(f"Searching {k}-periodic orbit for word {word} from {seeds.shape[0]} seeds")

    max_step = 0.1 * construction.annulus.outer.diameter
    points, residuals, iterations = _newton(sys, seeds, k, cfg, max_step)
    best = float(np.min(residuals))
    tried = []
    for i in np.argsort(residuals):
        if residuals[i] > RESIDUAL_TOL:
            break
        if any(np.linalg.norm(points[i] - q) <= DISTINCT_TOL for q in tried):
            continue
        tried.append(points[i])
        check = verify_itinerary(sys, points[i], word, regions, cfg)
        if not check.passed:
            logger.debug(f"root {points[i].tolist()} rejected: {check.message}")
            continue
        F = power_map(sys, points[i][None, :], k, cfg) - points[i]
        J = _jacobians(sys, points[i][None, :], F, k, cfg)[0]
        result = PeriodicOrbitResult(point=points[i].copy(), word=word, residual=float(residuals[i]),
                                     itinerary=check.realized, condition=float(np.linalg.cond(J)),
                                     iterations=iterations, seeds=seeds.shape[0], closure=check.closure)
        logger.info(f"word {word}: orbit at {result.point.tolist()}, residual {result.residual:.2e}")
        return result
    raise OrbitNotFoundError(f"no seed converged to an orbit with itinerary {word} "
                             f"(best residual {best:.3g}; inconclusive)", best_residual=best)


def orbit_trajectory(sys: SwitchedSystem, p, k: int, cfg: IntegratorConfig | None = None) -> list[tuple[float, float, float]]:
    """Samples (t, x, y) of the full kT trajectory from p."""
    _, rows = poincare_direct(sys, np.asarray(p, dtype=float), k, cfg, samples=True)
    return rows
