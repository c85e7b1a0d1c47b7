"""
Parameter scans: per-row failure stages and grid handling.
"""
import pytest

from src.core.exceptions import PreconditionError
from src.core.run_config import RunConfig
from src.services.scan import parse_values, run_scan, scan_row, write_scan_report


def test_parse_values():
    assert parse_values("0.5, 1,2,") == [0.5, 1.0, 2.0]


@pytest.mark.parametrize("family,lambdas,status,stage", [
    ("Saddle", (-1.0, -2.0), "fail", "construction"),
    ("Saddle", (1.0, 1.0), "fail", "precondition"),
    ("Cusp", (1.0, 2.0), "fail", "precondition"),
    ("Cusp", (0.0, 1.0), "fail", "construction"),
    ("NodalB", (1.0, 0.5), "exploratory", "precondition"),
])
def test_scan_row_never_raises(family, lambdas, status, stage):
    row = scan_row(RunConfig(family=family, lambda1=lambdas[0], lambda2=lambdas[1]))
    assert row["status"] == status
    assert row["stage"] == stage
    assert row["symbol_count"] is None
    assert row["message"]


def test_exploratory_rows_are_flagged():
    row = scan_row(RunConfig(family="Focal", lambda1=1.0, lambda2=-1.0))
    assert row["exploratory"] is True


def test_run_scan_keeps_grid_order(tmp_path):
    rows = run_scan(RunConfig(), [-1.0, -2.0], [-3.0, -4.0], workers=1)
    assert [(r["lambda1"], r["lambda2"]) for r in rows] == [(-1.0, -3.0), (-1.0, -4.0), (-2.0, -3.0), (-2.0, -4.0)]
    path = write_scan_report(rows, tmp_path / "scan.csv")
    assert len(path.read_text().splitlines()) == 5


def test_empty_grid():
    with pytest.raises(PreconditionError):
        run_scan(RunConfig(), [], [1.0])


@pytest.mark.slow
def test_scan_certifies_a_small_saddle_grid():
    rows = run_scan(RunConfig(), [1.0], [0.25, -0.5], workers=2)
    assert all(row["status"] == "pass" for row in rows)
    assert all(row["symbol_count"] >= 2 for row in rows)
