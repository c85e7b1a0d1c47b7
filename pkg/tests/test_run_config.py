"""
Run configuration: defaults, config files and overrides.
"""
import pytest

from src.core.exceptions import ArtifactError, PreconditionError
from src.core.run_config import RunConfig, parse_config_file
from src.dynamics.normal_forms import Family


def test_defaults():
    run = RunConfig()
    assert run.family is Family.SADDLE
    assert (run.lambda1, run.lambda2, run.m) == (1.0, 0.25, 2)
    assert run.integrator().rel_tol == run.rel_tol


def test_config_file_values_are_typed(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("# cusp run\nfamily = Cusp\nlambda1 = -1   # homoclinic loop\nlambda2 = -0.25\n\nm = 3\n"
                    "tau2 = 12.5\nmargin-floor = 0.1\n")
    run = RunConfig.from_file(path)
    assert run.family is Family.CUSP
    assert run.lambda1 == -1.0
    assert run.m == 3 and isinstance(run.m, int)
    assert run.tau2 == 12.5
    assert run.margin_floor == 0.1


def test_flags_override_the_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("lambda1 = 2\nlambda2 = 0.5\n")
    run = RunConfig.from_file(path).merged({"lambda2": 0.3, "m": None})
    assert (run.lambda1, run.lambda2, run.m) == (2.0, 0.3, 2)


def test_bad_lines_and_keys(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("lambda1 2\n")
    with pytest.raises(PreconditionError):
        parse_config_file(path)
    with pytest.raises(PreconditionError):
        RunConfig().merged({"colour": "red"})
    with pytest.raises(PreconditionError):
        RunConfig().merged({"m": "two"})


def test_missing_file():
    with pytest.raises(ArtifactError):
        RunConfig.from_file("/nonexistent/run.conf")


@pytest.mark.parametrize("overrides", [{"m": 1}, {"tau1": -1.0}, {"samples": 8}, {"family": "Hopf"}])
def test_invalid_values(overrides):
    with pytest.raises(PreconditionError):
        RunConfig().merged(overrides)
