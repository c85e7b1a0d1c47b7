"""
Pipeline service - coordinates one construction, certification or orbit run and writes its
artifacts.

Used by the command line, the HTTP jobs and every row of a parameter scan.
"""
from dataclasses import dataclass, field
from pathlib import Path

from src.core.exceptions import PreconditionError, UnsupportedFamilyError
from src.core.logger import logger
from src.core.run_config import RunConfig
from src.dynamics.flow import IntegratorConfig
from src.dynamics.normal_forms import Family, VectorFieldSpec, parse_family
from src.construction.cusp import cusp_setup
from src.construction.linked import (ConstructionOptions, LinkedConstruction, LinkedSetup, build_linked,
                                     strip_time_interval)
from src.construction.saddle import saddle_setup
from src.mappers.mappers import (TRAJECTORY_COLUMNS, map_certificate, map_geometry, map_orbit_summary,
                                 map_trajectory_rows)
from src.orbits.periodic import PeriodicOrbitResult, SymbolWord, find_periodic_orbit, orbit_trajectory, system_for
from src.plotting.portrait import PortraitData, Window, write_portrait
from src.sap.certificate import ChaosCertificate
from src.storage.artifacts import read_json, write_csv, write_json

EXPLORATORY_FAMILIES = (Family.NODAL_A, Family.NODAL_B, Family.FOCAL)


@dataclass
class RunResult:
    construction: LinkedConstruction
    certificate: ChaosCertificate
    orbit: PeriodicOrbitResult | None = None
    artifacts: dict[str, Path] = field(default_factory=dict)


def setup_for(family, lambda1: float, lambda2: float) -> LinkedSetup:
    """Linked setup for a certifiable family; nodal and focal families are exploratory only."""
    family = parse_family(family)
    if family in EXPLORATORY_FAMILIES:
        raise UnsupportedFamilyError(f"{family.value} is exploratory: no annular invariant region is known, "
                                     f"so it cannot be certified")
    if family is Family.SADDLE:
        return saddle_setup(lambda1, lambda2)
    if family is Family.CUSP:
        return cusp_setup(lambda1, lambda2)
    raise UnsupportedFamilyError(f"{family.value} has no parameter to pulse")


def options_for(run: RunConfig, setup: LinkedSetup) -> ConstructionOptions:
    """Construction options from the run, with alpha, beta and times taken from a saved geometry if given."""
    alpha, beta = run.alpha, run.beta
    tau_strip, tau_annulus = setup.split_times(run.tau1, run.tau2)
    if run.geometry:
        provenance = read_json(run.geometry).get('provenance', {})
        logger.info(f"Reusing alpha, beta and pulse times from {run.geometry}")
        alpha = provenance.get('alpha') if alpha is None else alpha
        beta = provenance.get('beta') if beta is None else beta
        tau_strip = provenance.get('tau_strip') if tau_strip is None else tau_strip
        tau_annulus = provenance.get('tau_annulus') if tau_annulus is None else tau_annulus
    return ConstructionOptions(alpha=alpha, beta=beta, tau_strip=tau_strip, tau_annulus=tau_annulus,
                               slack=run.slack, samples=run.samples, grid=run.grid, paths=run.paths,
                               seed=run.seed, margin_floor=run.margin_floor)


def construct(run: RunConfig) -> tuple[LinkedConstruction, ChaosCertificate]:
    setup = setup_for(run.family, run.lambda1, run.lambda2)
    return build_linked(setup, run.m, options_for(run, setup), run.integrator())


def _stem(run: RunConfig) -> str:
    return f"{run.family.value.lower()}_{run.lambda1:g}_{run.lambda2:g}"


def _log_summary(title: str, lines: list[str]) -> None:
    logger.info("=" * 60)
    logger.info(title)
    logger.info("=" * 60)
    for line in lines:
        logger.info(line)
    logger.info("=" * 60)


def run_build(run: RunConfig) -> RunResult:
    """Build the construction and write its geometry JSON."""
    construction, cert = construct(run)
    path = write_json(run.output_dir / f"{_stem(run)}_geometry.json", map_geometry(construction))
    _log_summary("BUILD SUMMARY", [
        f"Variant: {construction.setup.variant}",
        f"alpha={construction.alpha.tip:.8g}, beta={construction.beta.tip:.8g}",
        f"tau1={construction.tau1:.8g}, tau2={construction.tau2:.8g}",
        f"Crossed copies: {construction.crossed_levels}",
        f"Geometry: {path}",
    ])
    return RunResult(construction=construction, certificate=cert, artifacts={"geometry": path})


def run_certify(run: RunConfig) -> RunResult:
    """Build, certify and write certificate and geometry JSON."""
    construction, cert = construct(run)
    stem = _stem(run)
    geometry = write_json(run.output_dir / f"{stem}_geometry.json", map_geometry(construction))
    interval = strip_time_interval(construction, run.samples)
    certificate = write_json(run.output_dir / f"{stem}_certificate.json", map_certificate(cert, interval))
    _log_summary("CERTIFICATE SUMMARY", [
        f"Instance: {cert.family} lambda=({cert.lambda1:g}, {cert.lambda2:g}), tau=({cert.tau1:.8g}, {cert.tau2:.8g})",
        f"Symbols: {cert.symbol_count} (n={cert.n}, m={cert.m}), composition {cert.composition}",
        f"Margins: strip {cert.margin_strip:.4g}, annulus {cert.margin_annulus:.4g}, "
        f"resampled {cert.margin_resampled if cert.margin_resampled is not None else float('nan'):.4g}",
        f"Strip time interval: ({interval[0]:.8g}, {interval[1]:.8g})",
        f"Certificate: {certificate}",
    ])
    return RunResult(construction=construction, certificate=cert,
                     artifacts={"geometry": geometry, "certificate": certificate})


def run_orbit(run: RunConfig, cfg: IntegratorConfig | None = None) -> RunResult:
    """Certify, then find and export the periodic orbit realizing run.word."""
    if not run.word:
        raise PreconditionError("an orbit run needs a symbol word")
    construction, cert = construct(run)
    word = SymbolWord.parse(run.word, cert.symbol_count)
    cfg = cfg or run.integrator()
    sys = system_for(cert)
    result = find_periodic_orbit(sys, cert, word, construction, cfg)
    stem = f"{_stem(run)}_orbit_{str(word).replace(',', '-')}"
    rows = orbit_trajectory(sys, result.point, word.k, cfg)
    trajectory = write_csv(run.output_dir / f"{stem}.csv", TRAJECTORY_COLUMNS, map_trajectory_rows(rows))
    summary = write_json(run.output_dir / f"{stem}.json", map_orbit_summary(result))
    _log_summary("ORBIT SUMMARY", [
        f"Word: {word} (k={word.k})",
        f"Initial point: ({result.point[0]:.12g}, {result.point[1]:.12g})",
        f"Residual: {result.residual:.3e}, closure {result.closure:.3e}, condition {result.condition:.3g}",
        f"Trajectory: {trajectory}",
    ])
    return RunResult(construction=construction, certificate=cert, orbit=result,
                     artifacts={"trajectory": trajectory, "summary": summary})


def run_portrait(run: RunConfig) -> tuple[PortraitData, Path]:
    lam = run.lam if run.lam is not None else run.lambda1
    spec = VectorFieldSpec(run.family, lam)
    path = run.output_dir / f"{run.family.value.lower()}_{lam:g}_portrait.svg"
    data = write_portrait(spec, Window.parse(run.window), path, run.integrator())
    return data, path
