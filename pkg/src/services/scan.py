"""
Scan service - certifies every point of a (lambda1, lambda2) grid in a process pool and records,
per row, whether a certificate came out and at which stage it failed otherwise.
"""
import itertools
import multiprocessing as mp
from dataclasses import replace
from pathlib import Path

from src.core.config import SCAN_WORKERS
from src.core.exceptions import PreconditionError, ReversibleChaosError
from src.core.logger import logger
from src.core.run_config import RunConfig
from src.dynamics.normal_forms import parse_family
from src.mappers.mappers import SCAN_COLUMNS, map_scan_row, scan_csv_rows
from src.services.pipeline import EXPLORATORY_FAMILIES, construct
from src.storage.artifacts import write_csv


def parse_values(text: str) -> list[float]:
    """'0.5,1,2' -> [0.5, 1.0, 2.0]"""
    return [float(v) for v in str(text).split(",") if v.strip()]


def scan_row(run: RunConfig) -> dict:
    """One grid point; failures become rows, never exceptions."""
    family = run.family.value
    if run.family in EXPLORATORY_FAMILIES:
        return map_scan_row(family, run.lambda1, run.lambda2, status="exploratory", stage="precondition",
                            exploratory=True, message=f"{family} is exploratory")
    try:
        construction, cert = construct(run)
    except ReversibleChaosError as e:
        step = getattr(e, "step", None)
        message = f"{step}: {e}" if step else str(e)
        logger.warning(f"scan {family} ({run.lambda1:g}, {run.lambda2:g}) failed at {e.stage}: {message}")
        return map_scan_row(family, run.lambda1, run.lambda2, status="fail", stage=e.stage, message=message)
    except Exception as e:
        logger.error(f"scan {family} ({run.lambda1:g}, {run.lambda2:g}) raised {type(e).__name__}: {e}")
        return map_scan_row(family, run.lambda1, run.lambda2, status="fail", stage="error",
                            message=f"{type(e).__name__}: {e}")
    return map_scan_row(family, run.lambda1, run.lambda2, status="pass", cert=cert,
                        provenance=construction.provenance)


def run_scan(base: RunConfig, lambda1s: list[float], lambda2s: list[float],
             workers: int = SCAN_WORKERS) -> list[dict]:
    """Rows in grid order (lambda1 major)."""
    if not lambda1s or not lambda2s:
        raise PreconditionError("scan grid is empty")
    family = parse_family(base.family)
    runs = [replace(base, family=family, lambda1=l1, lambda2=l2)
            for l1, l2 in itertools.product(lambda1s, lambda2s)]
    logger.info(f"Scanning {len(runs)} {family.value} grid points with {workers} workers")
    if workers > 1 and len(runs) > 1:
        with mp.Pool(min(workers, len(runs))) as pool:
            rows = pool.map(scan_row, runs)
    else:
        rows = [scan_row(run) for run in runs]
    passed = sum(1 for row in rows if row["status"] == "pass")
    logger.info("=" * 60)
    logger.info(f"SCAN SUMMARY: {passed}/{len(rows)} grid points certified")
    logger.info("=" * 60)
    return rows


def write_scan_report(rows: list[dict], path) -> Path:
    return write_csv(path, SCAN_COLUMNS, scan_csv_rows(rows))
