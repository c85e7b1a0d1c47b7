"""
HTTP jobs: health, job status and the running-job guard.
"""
import pytest
from fastapi.testclient import TestClient

from app import app
from src.api.controllers.jobs_controller import certify_job_id, jobs, scan_job_id

client = TestClient(app)


@pytest.fixture(autouse=True)
def clear_jobs():
    jobs.clear()
    yield
    jobs.clear()


def test_health():
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}


def test_unknown_job():
    response = client.get("/certify/status/certify_nothing")
    assert response.json()["status"] == "no_job_found"


def test_failed_certification_is_recorded():
    response = client.post("/certify", params={"family": "Saddle", "lambda1": 1.0, "lambda2": 1.0})
    assert response.status_code == 200
    job_id = response.json()["job_id"]
    assert job_id == certify_job_id("Saddle", 1.0, 1.0, 2)
    status = client.get(f"/certify/status/{job_id}").json()
    assert status["status"] == "failed"
    assert status["stage"] == "precondition"
    assert "failed_at" in status


def test_running_job_is_not_started_twice():
    job_id = certify_job_id("Saddle", 1.0, 0.25, 2)
    jobs[job_id] = {"status": "running", "started_at": "2026-01-01T00:00:00"}
    response = client.post("/certify", params={"family": "Saddle", "lambda1": 1.0, "lambda2": 0.25})
    assert response.status_code == 409


def test_scan_job_completes(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    response = client.post("/scan", params={"family": "Saddle", "lambda1": "-1,-2", "lambda2": "-3"})
    job_id = response.json()["job_id"]
    assert job_id == scan_job_id("Saddle", "-1,-2", "-3")
    status = client.get(f"/scan/status/{job_id}").json()
    assert status["status"] == "completed"
    assert [row["stage"] for row in status["result"]["rows"]] == ["construction", "construction"]
