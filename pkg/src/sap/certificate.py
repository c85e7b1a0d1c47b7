"""
Certificate module - folds the strip and annulus checks into a chaos certificate on n x m symbols.
"""
from dataclasses import dataclass, field, asdict

from src.core.config import GRID
from src.core.exceptions import PreconditionError, InsufficientCrossingError
from src.core.logger import logger
from src.sap.twist import StripTwistResult, TwistCertificate

# Which map acts first in the Poincare map
ANNULUS_AFTER_STRIP = "annulus_after_strip"
STRIP_AFTER_ANNULUS = "strip_after_annulus"
COMPOSITIONS = (ANNULUS_AFTER_STRIP, STRIP_AFTER_ANNULUS)


@dataclass(frozen=True)
class Instance:
    family: str
    lambda1: float
    lambda2: float
    tau1: float
    tau2: float


@dataclass(frozen=True)
class ChaosCertificate:
    family: str
    lambda1: float
    lambda2: float
    tau1: float
    tau2: float
    n: int
    m: int
    symbol_count: int
    margin_strip: float
    margin_annulus: float
    samples: int
    grid_resolution: int
    composition: str
    twist_form: str
    j_minus1: int
    j_plus1: int
    twist_m: int
    crossed_levels: list[int] = field(default_factory=list)
    residual_strip: float = 0.0
    residual_annulus: float = 0.0
    margin_resampled: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def instance(self) -> Instance:
        return Instance(self.family, self.lambda1, self.lambda2, self.tau1, self.tau2)


def assemble_chaos_certificate(strip: StripTwistResult, annular: TwistCertificate, instance: Instance, *,
                               n: int = 1, crossed_levels: list[int] | None = None,
                               composition: str = ANNULUS_AFTER_STRIP,
                               residuals: tuple[float, float] = (0.0, 0.0),
                               grid_resolution: int = GRID,
                               margin_resampled: float | None = None) -> ChaosCertificate:
    """
    Emit the certificate for h = h2 o h1 with n strip crossings and m annulus crossings.

    m is the number of path-crossed levels when `crossed_levels` is given, else the twist
    certificate's own crossing number.
    """
    if not strip.passed:
        raise PreconditionError(f"strip twist did not pass (margin {strip.margin:.4g})")
    if not annular.passed:
        raise PreconditionError(f"annular twist did not pass (margin {annular.margin:.4g})")
    if composition not in COMPOSITIONS:
        raise PreconditionError(f"unknown composition '{composition}'")
    levels = list(crossed_levels) if crossed_levels is not None else annular.levels
    m = len(levels) if crossed_levels is not None else annular.m
    if n < 1 or m < 1 or max(n, m) < 2:
        raise InsufficientCrossingError(f"crossing numbers n={n}, m={m} give fewer than 2 symbols")

    cert = ChaosCertificate(
        family=instance.family, lambda1=instance.lambda1, lambda2=instance.lambda2,
        tau1=instance.tau1, tau2=instance.tau2,
        n=n, m=m, symbol_count=n * m,
        margin_strip=strip.margin, margin_annulus=annular.margin,
        samples=min(strip.samples, annular.samples), grid_resolution=grid_resolution,
        composition=composition, twist_form=annular.form,
        j_minus1=annular.j_minus1, j_plus1=annular.j_plus1, twist_m=annular.m,
        crossed_levels=levels, residual_strip=residuals[0], residual_annulus=residuals[1],
        margin_resampled=margin_resampled)
    if m != annular.m:
        logger.warning(f"twist bound gives m={annular.m}, paths crossed {m} levels; certificate uses {m}")
    logger.info(f"chaos certificate: {instance.family} lambda=({instance.lambda1}, {instance.lambda2}) "
                f"on {cert.symbol_count} symbols")
    return cert
