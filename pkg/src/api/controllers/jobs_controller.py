"""
Jobs controller - handles the business logic behind the certification and scan endpoints
"""
from datetime import datetime
from pathlib import Path

from src.core.config import SCAN_WORKERS
from src.core.logger import logger
from src.core.run_config import RunConfig
from src.mappers.mappers import map_certificate
from src.services.pipeline import run_certify
from src.services.scan import parse_values, run_scan, write_scan_report
from src.storage.artifacts import to_jsonable

# Track jobs in memory
jobs = {}


def certify_job_id(family: str, lambda1: float, lambda2: float, m: int) -> str:
    return f"certify_{family.lower()}_{lambda1:g}_{lambda2:g}_m{m}"


def scan_job_id(family: str, lambda1s: str, lambda2s: str) -> str:
    return f"scan_{family.lower()}_{lambda1s}_{lambda2s}".replace(",", "-")


def check_job_in_progress(job_id: str) -> bool:
    """Check if a job with this key is already running"""
    return job_id in jobs and jobs[job_id].get("status") == "running"


def get_job_status(job_id: str) -> dict:
    """Get the record of the most recent job with this key"""
    if job_id not in jobs:
        return {"status": "no_job_found", "job_id": job_id}
    return {"job_id": job_id, **jobs[job_id]}


def _run(job_id: str, work) -> None:
    jobs[job_id] = {"status": "running", "started_at": datetime.now().isoformat()}
    try:
        result = work()
        jobs[job_id] = {
            "status": "completed",
            "started_at": jobs[job_id]["started_at"],
            "completed_at": datetime.now().isoformat(),
            "result": to_jsonable(result),
        }
    except Exception as e:
        logger.error(f"Job {job_id} failed: {e}")
        jobs[job_id] = {
            "status": "failed",
            "started_at": jobs[job_id]["started_at"],
            "failed_at": datetime.now().isoformat(),
            "stage": getattr(e, "stage", "error"),
            "error": str(e),
        }


def run_certify_task(job_id: str, family: str, lambda1: float, lambda2: float, m: int, out: str | None = None):
    """Background task running one certification"""
    def work():
        run = RunConfig().merged({"family": family, "lambda1": lambda1, "lambda2": lambda2, "m": m, "out": out})
        result = run_certify(run)
        return {
            "certificate": map_certificate(result.certificate),
            "provenance": result.construction.provenance,
            "artifacts": {k: str(v) for k, v in result.artifacts.items()},
        }
    _run(job_id, work)


def run_scan_task(job_id: str, family: str, lambda1s: str, lambda2s: str, m: int, out: str | None = None,
                  workers: int = SCAN_WORKERS):
    """Background task running a parameter scan"""
    def work():
        run = RunConfig().merged({"family": family, "m": m, "out": out})
        rows = run_scan(run, parse_values(lambda1s), parse_values(lambda2s), workers=workers)
        path = write_scan_report(rows, Path(run.output_dir) / f"{job_id}.csv")
        return {"rows": rows, "report": str(path)}
    _run(job_id, work)
