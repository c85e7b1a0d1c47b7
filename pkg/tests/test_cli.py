"""
Command-line surface: exit codes, config files and written artifacts.
"""
from src.cli.main import build_parser, main, run_config


def test_equal_lambdas_exit_with_precondition(tmp_path, capsys):
    code = main(["certify", "--family", "Saddle", "--lambda1", "1", "--lambda2", "1", "--out", str(tmp_path)])
    assert code == 2
    assert "error: precondition:" in capsys.readouterr().err


def test_unknown_family(tmp_path, capsys):
    assert main(["build", "--family", "Hopf", "--out", str(tmp_path)]) == 2
    assert "Hopf" in capsys.readouterr().err


def test_exploratory_family_is_refused(tmp_path, capsys):
    assert main(["certify", "--family", "NodalA", "--out", str(tmp_path)]) == 2
    assert "exploratory" in capsys.readouterr().err


def test_construction_failure_exit_code(tmp_path):
    assert main(["certify", "--family", "Cusp", "--lambda1", "0", "--lambda2", "1", "--out", str(tmp_path)]) == 3


def test_orbit_flags():
    parser = build_parser()
    args = parser.parse_args(["orbit", "--word", "01", "--lambda1", "2"])
    assert args.word == "01"
    assert run_config(args).lambda1 == 2.0


def test_config_file_then_flags(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("family = Cusp\nlambda1 = -1\nlambda2 = -0.25\nm = 3\n")
    args = build_parser().parse_args(["certify", "--config", str(conf), "--m", "2"])
    run = run_config(args)
    assert run.family.value == "Cusp"
    assert (run.lambda1, run.lambda2, run.m) == (-1.0, -0.25, 2)


def test_portrait_writes_svg(tmp_path):
    code = main(["portrait", "--family", "Saddle", "--lambda", "1", "--window=-2,2,-2,2", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "saddle_1_portrait.svg").read_bytes().startswith(b"<?xml")


def test_portrait_is_deterministic_across_runs(tmp_path):
    for name in ("a", "b"):
        assert main(["portrait", "--family", "Cusp", "--lambda", "-1", "--out", str(tmp_path / name)]) == 0
    first = (tmp_path / "a" / "cusp_-1_portrait.svg").read_bytes()
    second = (tmp_path / "b" / "cusp_-1_portrait.svg").read_bytes()
    assert first == second


def test_scan_writes_report(tmp_path):
    code = main(["scan", "--family", "Saddle", "--lambda1=-1,-2", "--lambda2=-3", "--workers", "1",
                 "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "scan_saddle.csv").read_text().splitlines()
    assert lines[0].startswith("family,lambda1,lambda2,status,stage")
    assert len(lines) == 3
    assert all(",fail,construction," in line for line in lines[1:])
