"""
Phase portraits: window handling, portrait data and byte-stable SVG output.
"""
import numpy as np
import pytest

from src.core.exceptions import PreconditionError
from src.dynamics.normal_forms import Family, VectorFieldSpec
from src.plotting.portrait import Window, portrait_data, render_portrait, write_portrait

WINDOW = Window(-3.0, 3.0, -3.0, 3.0)


def test_window_parse():
    assert Window.parse("-3,3,-2,2") == Window(-3.0, 3.0, -2.0, 2.0)
    with pytest.raises(PreconditionError):
        Window.parse("1,2,3")
    with pytest.raises(PreconditionError):
        Window.parse("3,-3,-3,3")


def test_window_clip_splits_runs():
    polyline = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 2.0]])
    runs = WINDOW.clip(polyline)
    assert [len(r) for r in runs] == [2, 3]


@pytest.fixture(scope="module")
def saddle_portrait():
    return portrait_data(VectorFieldSpec(Family.SADDLE, 1.0), WINDOW)


def test_saddle_portrait_content(saddle_portrait):
    assert sorted(eq.kind for eq in saddle_portrait.equilibria) == ["center", "saddle", "saddle"]
    assert saddle_portrait.separatrices
    assert saddle_portrait.trajectories
    for arc in saddle_portrait.trajectories + saddle_portrait.separatrices:
        assert np.all(WINDOW.contains(arc))


def test_svg_is_byte_stable(saddle_portrait):
    first = render_portrait(saddle_portrait)
    second = render_portrait(saddle_portrait)
    assert first == second
    assert b"<svg" in first
    assert b"<dc:date>" not in first


def test_portrait_without_equilibria(tmp_path):
    path = tmp_path / "cusp.svg"
    data = write_portrait(VectorFieldSpec(Family.CUSP, 1.0), WINDOW, path)
    assert data.equilibria == []
    assert data.separatrices == []
    assert path.read_bytes().startswith(b"<?xml")


def test_exploratory_family_portrait(tmp_path):
    data = write_portrait(VectorFieldSpec(Family.FOCAL, -1.0), WINDOW, tmp_path / "focal.svg")
    assert len(data.equilibria) == 3
