"""
Shared fixtures - synthetic lifted maps.
"""
import numpy as np
import pytest


def shear_twist(shift: float, twist: float, mirror: bool = False):
    """Lifted annulus map (w, rho) -> (w + shift + twist * (rho + 1), rho); mirrored twists on the inner side."""
    def lifted(w, rho):
        w = np.asarray(w, dtype=float)
        rho = np.asarray(rho, dtype=float)
        turn = (1.0 - rho) if mirror else (rho + 1.0)
        return w + shift + twist * turn, rho.copy()
    return lifted


def strip_shear(offset: float, slope: float):
    """Lifted strip map (x, y) -> (x + offset + slope * y, y)."""
    def lifted(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return x + offset + slope * y, y.copy()
    return lifted


@pytest.fixture
def twist_map():
    """Direct twist with two forced levels and margin 1/4."""
    return shear_twist(-0.25, 2.0)


@pytest.fixture
def strip_map():
    """Strip shear passing the reversed inequality pair with margin 1/2."""
    return strip_shear(3.0, -1.5)
