"""
Normal forms: reversibility, equilibria in closed form and the first integrals.
"""
import numpy as np
import pytest

from src.core.exceptions import PreconditionError, UnsupportedFamilyError
from src.dynamics.normal_forms import (Family, FirstIntegral, VectorFieldSpec, check_reversibility, classify,
                                       equilibria, first_integral, eval_field, involution, jacobian, level_intersection,
                                       loop_interior, parse_family)

RNG = np.random.default_rng(0)


@pytest.mark.parametrize("family", list(Family))
@pytest.mark.parametrize("lam", [-1.0, 0.0, 0.7])
def test_every_family_is_reversible(family, lam):
    """|Dh V + V o h| <= 1e-12 on random points of [-3, 3]^2."""
    points = RNG.uniform(-3.0, 3.0, size=(500, 2))
    assert check_reversibility(VectorFieldSpec(family, lam), points) <= 1e-12


def test_involution_is_an_involution():
    p = RNG.normal(size=(10, 2))
    assert np.array_equal(involution(involution(p)), p)
    assert involution([1.0, 2.0]).tolist() == [1.0, -2.0]


def test_parse_family_is_case_insensitive():
    assert parse_family("saddle") is Family.SADDLE
    assert parse_family(Family.CUSP) is Family.CUSP
    with pytest.raises(UnsupportedFamilyError):
        parse_family("Hopf")


def test_non_finite_lambda_rejected():
    with pytest.raises(PreconditionError):
        VectorFieldSpec(Family.SADDLE, float("nan"))


def test_saddle_equilibria():
    eqs = equilibria(VectorFieldSpec(Family.SADDLE, 1.0))
    kinds = sorted(e.kind for e in eqs)
    assert kinds == ["center", "saddle", "saddle"]
    center = next(e for e in eqs if e.kind == "center")
    assert center.position.tolist() == [-1.0, 0.0]
    for e in eqs:
        assert np.allclose(eval_field(VectorFieldSpec(Family.SADDLE, 1.0), e.position), 0.0)


def test_saddle_with_negative_lambda_has_one_equilibrium():
    eqs = equilibria(VectorFieldSpec(Family.SADDLE, -0.5))
    assert len(eqs) == 1
    assert eqs[0].position.tolist() == [0.5, 0.0]


def test_cusp_equilibria():
    assert equilibria(VectorFieldSpec(Family.CUSP, 1.0)) == []
    eqs = equilibria(VectorFieldSpec(Family.CUSP, -1.0))
    assert {tuple(e.position) for e in eqs} == {(-1.0, 0.0), (1.0, 0.0)}
    kinds = {tuple(e.position): e.kind for e in eqs}
    assert kinds[(-1.0, 0.0)] == "center"
    assert kinds[(1.0, 0.0)] == "saddle"
    assert equilibria(VectorFieldSpec(Family.CUSP, 0.0))[0].kind == "degenerate"


def test_focal_center():
    eqs = equilibria(VectorFieldSpec(Family.FOCAL, 1.0))
    assert len(eqs) == 1
    assert eqs[0].kind == "center"


@pytest.mark.parametrize("family,lam", [(Family.NODAL_A, -1.0), (Family.NODAL_B, 1.0), (Family.FOCAL, -1.0)])
def test_every_listed_equilibrium_is_a_zero(family, lam):
    spec = VectorFieldSpec(family, lam)
    eqs = equilibria(spec)
    assert len(eqs) == 3
    for e in eqs:
        assert np.linalg.norm(eval_field(spec, e.position)) <= 1e-12


def test_classify():
    assert classify([1j, -1j]) == "center"
    assert classify([1.0, -2.0]) == "saddle"
    assert classify([1.0 + 1j, 1.0 - 1j]) == "focus"
    assert classify([0.0, 1.0]) == "degenerate"
    assert classify([-1.0, -2.0]) == "attractor"


def test_first_integral_values():
    assert first_integral(FirstIntegral(Family.SADDLE, 0.25), [1.0, 1.0]) == pytest.approx(1.0 / 12.0)
    assert first_integral(FirstIntegral(Family.CUSP, 0.5), [1.0, 2.0]) == pytest.approx(7.0 / 6.0)


@pytest.mark.parametrize("family", [Family.SADDLE, Family.CUSP])
def test_first_integral_is_conserved_pointwise(family):
    """grad H . V vanishes identically (to 1e-10 on random points)."""
    fi = FirstIntegral(family, 0.8)
    points = RNG.uniform(-2.0, 2.0, size=(200, 2))
    v = eval_field(fi.spec, points)
    assert np.max(np.abs(np.sum(fi.gradient(points) * v, axis=1))) <= 1e-10


@pytest.mark.parametrize("family", [Family.SADDLE, Family.CUSP])
def test_gradient_matches_finite_differences(family):
    fi = FirstIntegral(family, -0.3)
    p = np.array([0.4, -0.7])
    h = 1e-6
    fd = [(fi.value(p + h * e) - fi.value(p - h * e)) / (2 * h) for e in np.eye(2)]
    assert np.allclose(fi.gradient(p), fd, atol=1e-7)


def test_jacobian_matches_finite_differences():
    spec = VectorFieldSpec(Family.FOCAL, 0.4)
    p = np.array([0.3, -0.6])
    h = 1e-6
    fd = np.column_stack([(eval_field(spec, p + h * e) - eval_field(spec, p - h * e)) / (2 * h)
                          for e in np.eye(2)])
    assert np.allclose(jacobian(spec, p), fd, atol=1e-7)


def test_no_first_integral_for_nodal_families():
    with pytest.raises(UnsupportedFamilyError):
        FirstIntegral(Family.NODAL_A, 1.0)


def test_heteroclinic_level_crosses_axis_at_x_star():
    """H_lambda(-3 lambda / 2, 0) = 0 = H at the saddles."""
    for lam in (0.25, 1.0, 2.0):
        fi = FirstIntegral(Family.SADDLE, lam)
        assert fi.axis_value(-1.5 * lam) == pytest.approx(0.0, abs=1e-12)
        assert fi.value([0.0, np.sqrt(lam)]) == 0.0


def test_homoclinic_loop_crosses_axis_at_minus_two_s():
    fi = FirstIntegral(Family.CUSP, -1.0)
    assert fi.axis_value(-2.0) == pytest.approx(fi.axis_value(1.0), abs=1e-12)


def test_level_intersection_lies_on_both_levels():
    a = FirstIntegral(Family.SADDLE, 0.25)
    s = FirstIntegral(Family.SADDLE, 1.0)
    strip_level = s.axis_value(-0.2)
    x, y = level_intersection(a, 0.0, s, strip_level)
    assert x == pytest.approx(-0.214994, abs=1e-6)
    assert a.value([x, y]) == pytest.approx(0.0, abs=1e-12)
    assert s.value([x, y]) == pytest.approx(strip_level, abs=1e-12)


def test_loop_interior():
    fi = FirstIntegral(Family.SADDLE, 1.0)
    inside = loop_interior(fi, [[-1.0, 0.0], [-2.0, 0.0], [0.5, 0.0]], 0.0, 0.0)
    assert inside.tolist() == [True, False, False]
