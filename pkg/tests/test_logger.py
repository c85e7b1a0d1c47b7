"""
Construction-context prefix of log records.
"""
import logging

from src.core.logger import ConstructionContextFilter, current_context, log_context


def _context_of_next_record() -> str:
    record = logging.LogRecord("reversible_chaos", logging.INFO, __file__, 1, "message", None, None)
    ConstructionContextFilter().filter(record)
    return record.context


def test_no_context_outside_a_construction():
    assert _context_of_next_record() == "-"


def test_nested_contexts_join_instance_and_step():
    with log_context(instance="saddle-positive (1, 0.25)"):
        assert _context_of_next_record() == "saddle-positive (1, 0.25)"
        with log_context(step="annulus twist"):
            assert _context_of_next_record() == "saddle-positive (1, 0.25) > annulus twist"
        with log_context(step="stretching along paths"):
            assert current_context()["step"] == "stretching along paths"
        assert "step" not in current_context()
    assert current_context() == {}


def test_context_is_restored_after_an_error():
    try:
        with log_context(step="inner boundary"):
            raise ValueError("boom")
    except ValueError:
        pass
    assert _context_of_next_record() == "-"
