"""
Saddle and cusp setups: closed-form geometry, sub-case selection and preconditions, plus full
linked builds (marked slow).
"""
import numpy as np
import pytest

from src.core.exceptions import ConstructionError, GeometricFailureError, PreconditionError
from src.construction.cusp import cusp_setup, homoclinic_level, build_cusp
from src.construction.linked import ConstructionOptions, locate_inner_boundary, psi_bar, strip_time_interval
from src.construction.regions import symbol_regions
from src.construction.saddle import (build_saddle, compute_tau1, find_inner_boundary, outer_boundary_saddle,
                                     saddle_setup, strip_boundary_intersections)
from src.dynamics.flow import flow_map
from src.dynamics.normal_forms import Family, FirstIntegral, VectorFieldSpec, involution
from src.geometry.curves import hausdorff_distance
from src.geometry.linkage import check_linkage
from src.sap.certificate import ANNULUS_AFTER_STRIP, STRIP_AFTER_ANNULUS


def test_strip_boundary_intersection_closed_form():
    """Reference values for lambda = (1, 1/4), alpha = -0.2; y_int to 2e-5."""
    x_int, y_int = strip_boundary_intersections(1.0, 0.25, -0.2)
    assert x_int == pytest.approx(-0.214994, abs=1e-6)
    assert y_int == pytest.approx(0.3266, abs=2e-5)
    h1 = FirstIntegral(Family.SADDLE, 1.0)
    h2 = FirstIntegral(Family.SADDLE, 0.25)
    assert h1.value([x_int, y_int]) == pytest.approx(h1.axis_value(-0.2), abs=1e-12)
    assert h2.value([x_int, y_int]) == pytest.approx(0.0, abs=1e-12)


def test_strip_boundary_intersection_preconditions():
    with pytest.raises(PreconditionError):
        strip_boundary_intersections(0.25, 1.0, -0.2)
    with pytest.raises(PreconditionError):
        strip_boundary_intersections(1.0, 0.25, 0.2)


def test_tau1_arrives_at_the_mirror_crossing():
    """By reversibility the orbit from (x_int, -y_int) reaches the cycle again at (x_int, y_int)."""
    x_int, y_int = strip_boundary_intersections(1.0, 0.25, -0.2)
    tau, arrival = compute_tau1(1.0, 0.25, -0.2)
    assert tau > 0
    assert arrival == pytest.approx([x_int, y_int], abs=1e-6)


def test_outer_boundary_needs_positive_lambda():
    with pytest.raises(PreconditionError):
        outer_boundary_saddle(-1.0)


def test_saddle_sub_cases():
    positive = saddle_setup(1.0, 0.25)
    assert positive.variant == "saddle-positive"
    assert positive.annulus_phase == "second"
    assert positive.composition == ANNULUS_AFTER_STRIP
    assert positive.x_star == pytest.approx(-0.375)
    assert positive.alpha_interval == (-0.25, 0.0)

    nonpositive = saddle_setup(1.0, -0.5)
    assert nonpositive.variant == "saddle-nonpositive"
    assert nonpositive.annulus_phase == "first"
    assert nonpositive.composition == STRIP_AFTER_ANNULUS
    assert nonpositive.x_star == pytest.approx(-1.5)


def test_alpha_interval_when_x_star_is_left_of_the_lambda1_center():
    setup = saddle_setup(1.0, 0.8)
    assert setup.x_star == pytest.approx(-1.2)
    assert setup.alpha_interval == (-1.0, 0.0)


def test_pulse_times_follow_the_annulus_phase():
    positive = saddle_setup(1.0, 0.25)
    assert positive.pulse_times(1.0, 2.0) == (1.0, 2.0)
    assert positive.split_times(1.0, 2.0) == (1.0, 2.0)
    nonpositive = saddle_setup(1.0, -0.5)
    assert nonpositive.pulse_times(1.0, 2.0) == (2.0, 1.0)
    assert nonpositive.split_times(2.0, 1.0) == (1.0, 2.0)


@pytest.mark.parametrize("lambdas,error", [
    ((1.0, 1.0), PreconditionError),
    ((0.5, 1.0), PreconditionError),
    ((-1.0, -2.0), ConstructionError),
    ((0.0, -1.0), ConstructionError),
    ((float("inf"), 0.5), PreconditionError),
])
def test_saddle_preconditions(lambdas, error):
    with pytest.raises(error):
        saddle_setup(*lambdas)


def test_cusp_sub_cases():
    negative = cusp_setup(-1.0, -0.25)
    assert negative.variant == "cusp-negative"
    assert negative.alpha_interval == pytest.approx((-2.0, -1.0))
    assert negative.x_star == pytest.approx(-2.0)
    assert negative.composition == STRIP_AFTER_ANNULUS
    assert negative.outer_level == pytest.approx(homoclinic_level(-1.0))

    nonnegative = cusp_setup(-1.0, 0.5)
    assert nonnegative.variant == "cusp-nonnegative"
    assert nonnegative.alpha_interval == pytest.approx((-1.0, 1.0))


def test_homoclinic_level_matches_the_saddle():
    fi = FirstIntegral(Family.CUSP, -2.0)
    s = np.sqrt(2.0)
    assert homoclinic_level(-2.0) == pytest.approx(fi.axis_value(s))
    assert homoclinic_level(-2.0) == pytest.approx(fi.axis_value(-2.0 * s))


@pytest.mark.parametrize("lambdas,error", [
    ((1.0, 2.0), PreconditionError),
    ((0.0, 1.0), ConstructionError),
    ((-1.0, -2.0), PreconditionError),
    ((-1.0, -1.0), PreconditionError),
])
def test_cusp_preconditions(lambdas, error):
    with pytest.raises(error):
        cusp_setup(*lambdas)


def test_options_validation():
    with pytest.raises(PreconditionError):
        ConstructionOptions(slack=0.5)
    with pytest.raises(PreconditionError):
        ConstructionOptions(paths=4)
    with pytest.raises(PreconditionError):
        ConstructionOptions(tau_strip=-1.0)


def test_psi_bar_vanishes_half_a_time_before_the_axis():
    """Reversibility: the tau-image of phi(-tau/2, (a, 0)) is its mirror image."""
    spec = VectorFieldSpec(Family.SADDLE, 1.0)
    tau = 0.6
    q = flow_map(spec, -0.5 * tau, [-0.5, 0.0])
    assert psi_bar(spec, tau, q) == pytest.approx(0.0, abs=1e-9)
    assert abs(psi_bar(spec, tau, [-0.5, 0.0])) > 1e-3


def test_locate_inner_boundary_on_a_closed_orbit():
    spec = VectorFieldSpec(Family.SADDLE, 1.0)
    fi = FirstIntegral(Family.SADDLE, 1.0)
    entry = flow_map(spec, -1.0, [-0.5, 0.0])
    inner = locate_inner_boundary(spec, fi, entry, 1.6, 0.6)
    assert inner.sigma_hat == pytest.approx(0.7, abs=1e-8)
    assert abs(inner.residual) <= 1e-9
    assert inner.mirror_gap <= 1e-8
    assert inner.level == pytest.approx(fi.axis_value(-0.5), abs=1e-10)


def test_find_inner_boundary_is_the_midpoint_of_the_beta_arc():
    """The beta arc is mirror symmetric, so the tau1 image of q(sigma) mirrors q at sigma = (T - tau1) / 2."""
    transit, _ = compute_tau1(1.0, 0.25, -0.1)
    tau1 = 0.5 * transit
    sigma_hat, curve = find_inner_boundary(1.0, 0.25, -0.1, tau1)
    assert sigma_hat == pytest.approx(0.5 * (transit - tau1), abs=1e-7)
    fi = FirstIntegral(Family.SADDLE, 0.25)
    level = fi.value(curve.points[0])
    assert level < 0.0
    assert np.max(np.abs(fi.value(curve.points) - level)) <= 1e-9
    assert curve.contains([[-0.25, 0.0]]).tolist() == [True]


def test_locate_inner_boundary_needs_time_inside_the_transit():
    spec = VectorFieldSpec(Family.SADDLE, 1.0)
    with pytest.raises(GeometricFailureError):
        locate_inner_boundary(spec, FirstIntegral(Family.SADDLE, 1.0), [-0.5, 0.0], 1.0, 1.5)


def test_build_needs_two_symbols():
    with pytest.raises(PreconditionError):
        build_saddle(1.0, 0.25, m=1)


# ----------------------------------------------------------------------
# Full builds
# ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def saddle_positive():
    return build_saddle(1.0, 0.25, m=2)


@pytest.mark.slow
def test_saddle_positive_certificate(saddle_positive):
    construction, cert = saddle_positive
    assert cert.symbol_count >= 2
    assert cert.margin_strip > 0
    assert cert.margin_annulus > 0
    assert cert.margin_resampled > 0
    assert cert.composition == ANNULUS_AFTER_STRIP
    assert cert.tau1 == pytest.approx(construction.tau_strip)
    assert construction.crossing.pairwise_disjoint()
    assert all(check_linkage(construction.linkage, construction.annulus, construction.strip).values())


@pytest.mark.slow
def test_saddle_positive_geometry(saddle_positive):
    construction, _ = saddle_positive
    lo, hi = construction.setup.alpha_interval
    assert lo < construction.alpha.tip < hi
    assert construction.inner.level < construction.setup.outer_level
    assert construction.residuals[0] <= 1e-7 and construction.residuals[1] <= 1e-7
    assert len(symbol_regions(construction)) == len(construction.crossed_levels)


@pytest.mark.slow
def test_crossings_are_mirror_images(saddle_positive):
    construction, _ = saddle_positive
    down, up = construction.rectangles
    assert hausdorff_distance(involution(down.boundary.points), up.boundary.points) <= 1e-6


@pytest.mark.slow
def test_strip_time_interval_brackets_the_strip_time(saddle_positive):
    construction, _ = saddle_positive
    lo, hi = strip_time_interval(construction)
    assert lo < construction.tau_strip < hi


@pytest.mark.slow
def test_more_symbols_need_a_longer_annulus_time(saddle_positive):
    construction, _ = saddle_positive
    longer, cert = build_saddle(1.0, 0.25, m=3)
    assert cert.m >= 3
    assert longer.tau_annulus >= construction.tau_annulus


@pytest.mark.slow
def test_saddle_nonpositive_certificate():
    construction, cert = build_saddle(1.0, -0.5, m=2)
    assert cert.composition == STRIP_AFTER_ANNULUS
    assert cert.symbol_count >= 2
    assert construction.setup.variant == "saddle-nonpositive"


@pytest.mark.slow
@pytest.mark.parametrize("lambda2,variant", [
    (-0.25, "cusp-negative"),
    (-0.5, "cusp-negative"),
    (0.5, "cusp-nonnegative"),
])
def test_cusp_certificate(lambda2, variant):
    construction, cert = build_cusp(-1.0, lambda2, m=2)
    assert cert.symbol_count >= 2
    assert cert.margin_strip > 0 and cert.margin_annulus > 0
    assert construction.setup.variant == variant
    assert construction.residuals[1] <= 1e-7


@pytest.mark.slow
def test_saddle_with_slightly_negative_lambda2():
    construction, cert = build_saddle(1.0, -0.1, m=2)
    assert construction.setup.variant == "saddle-nonpositive"
    assert cert.symbol_count >= 2
    assert construction.residuals[1] <= 1e-7


@pytest.mark.slow
@pytest.mark.parametrize("lambda1", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("lambda2", [0.1, 0.25])
def test_saddle_positive_grid_certifies(lambda1, lambda2):
    construction, cert = build_saddle(lambda1, lambda2, m=2)
    assert cert.symbol_count >= 2
    assert cert.margin_annulus > 0
    assert construction.crossing.pairwise_disjoint()
