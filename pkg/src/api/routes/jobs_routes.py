"""
Jobs routes - API endpoints for certification and scan jobs
"""
from fastapi import APIRouter, BackgroundTasks, HTTPException

from src.api.controllers.jobs_controller import (
    certify_job_id,
    check_job_in_progress,
    get_job_status,
    run_certify_task,
    run_scan_task,
    scan_job_id,
)

router = APIRouter()


@router.post("/certify")
async def trigger_certify(family: str, lambda1: float, lambda2: float, m: int = 2,
                          background_tasks: BackgroundTasks = None):
    """
    Start a chaos certification for one instance.

    - family: Saddle or Cusp
    - lambda1, lambda2: the two pulsed parameter values
    - m: number of annulus crossings requested (default: 2)
    """
    job_id = certify_job_id(family, lambda1, lambda2, m)
    if check_job_in_progress(job_id):
        raise HTTPException(status_code=409, detail=f"Certification already in progress for {job_id}")

    background_tasks.add_task(run_certify_task, job_id, family, lambda1, lambda2, m)

    return {
        "status": "started",
        "message": f"Certification initiated for {family} lambda=({lambda1:g}, {lambda2:g}), m={m}",
        "job_id": job_id
    }


@router.get("/certify/status/{job_id}")
async def certify_status(job_id: str):
    """Get the status of a certification job"""
    return get_job_status(job_id)


@router.post("/scan")
async def trigger_scan(family: str, lambda1: str, lambda2: str, m: int = 2,
                       background_tasks: BackgroundTasks = None):
    """
    Start a parameter scan.

    - lambda1, lambda2: comma-separated value lists; every pair is certified
    """
    job_id = scan_job_id(family, lambda1, lambda2)
    if check_job_in_progress(job_id):
        raise HTTPException(status_code=409, detail=f"Scan already in progress for {job_id}")

    background_tasks.add_task(run_scan_task, job_id, family, lambda1, lambda2, m)

    return {
        "status": "started",
        "message": f"Scan initiated for {family} over lambda1={lambda1}, lambda2={lambda2}",
        "job_id": job_id
    }


@router.get("/scan/status/{job_id}")
async def scan_status(job_id: str):
    """Get the status of a scan job"""
    return get_job_status(job_id)


@router.get("/health")
async def health_check():
    """Health check endpoint"""
    return {"status": "ok"}
