"""
Twist checks, crossing sets, stretching along paths and certificate assembly on synthetic lifted
maps whose twist is known exactly.
"""
import numpy as np
import pytest

from src.core.exceptions import (PreconditionError, TwistFailureError, InsufficientCrossingError,
                                 InvarianceViolationError, IntegrationError)
from src.construction.lifts import UPSTREAM_STRIP, DOWNSTREAM_STRIP, DOWNSTREAM_ANNULUS
from src.construction.linked import choose_tau2
from src.geometry.charts import RadialAnnulusChart
from src.geometry.curves import JordanCurve
from src.sap.certificate import Instance, assemble_chaos_certificate, STRIP_AFTER_ANNULUS
from src.sap.crossing import SPLIT_SPAN, crossing_sets, stretch_check, target_copy, sample_paths
from src.sap.lifted import LiftBox, CellRegion, apply
from src.sap.twist import (check_annular_twist, check_strip_twist, check_boundary_invariance,
                           resampled_margin)
from tests.conftest import shear_twist, strip_shear

INSTANCE = Instance("Saddle", 1.0, 0.25, 1.0, 2.0)


def circle(radius: float, n: int = 720) -> JordanCurve:
    phi = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    return JordanCurve(radius * np.column_stack([np.cos(phi), np.sin(phi)]))


# ----------------------------------------------------------------------
# Lift boxes and cell regions
# ----------------------------------------------------------------------

def test_box_sides_follow_axis():
    box = LiftBox(1.0, 1.5, -1.0, 1.0, axis=0)
    sides = box.side(np.array([0.5, 1.25, 2.0, 1.25]), np.array([0.0, 0.0, 0.0, 3.0]))
    assert sides.tolist() == [-1, 0, 1, 2]


def test_degenerate_box_rejected():
    with pytest.raises(PreconditionError):
        LiftBox(1.0, 1.0, 0.0, 1.0)


def test_cell_region_dilation_and_disjointness():
    a = CellRegion([[0.0, 1.0, 0.0, 1.0]])
    b = CellRegion([[1.0, 2.0, 0.0, 1.0]])
    assert a.disjoint_from(b)
    assert not a.dilated(1).disjoint_from(b)
    assert a.contains([0.5, 1.5], [0.5, 0.5]).tolist() == [True, False]
    assert a.sample(3).shape == (9, 2)


def test_target_copies_are_two_units_apart():
    assert (target_copy(0).x0, target_copy(0).x1) == (1.0, 1.5)
    assert (target_copy(2).x0, target_copy(2).x1) == (5.0, 5.5)


# ----------------------------------------------------------------------
# Annulus twist
# ----------------------------------------------------------------------

def test_direct_twist_two_levels(twist_map):
    cert = check_annular_twist(twist_map, samples=64)
    assert cert.form == "direct"
    assert (cert.j_minus1, cert.j_plus1) == (0, 1)
    assert cert.m == 2
    assert cert.margin == pytest.approx(0.25)
    assert cert.passed
    assert cert.levels == [0, 1]
    assert cert.boundary_residual == 0.0


def test_crossing_number_matches_integer_pair():
    """Twist of 6 window units forces three copies: m = |j_-1 - j_1| + 1."""
    cert = check_annular_twist(shear_twist(-0.25, 3.0))
    assert (cert.j_minus1, cert.j_plus1) == (0, 2)
    assert cert.m == abs(cert.j_minus1 - cert.j_plus1) + 1 == 3
    assert cert.margin == pytest.approx(0.25)


def test_mirror_twist():
    cert = check_annular_twist(shear_twist(-0.25, 2.0, mirror=True))
    assert cert.form == "mirror"
    assert (cert.j_minus1, cert.j_plus1) == (1, 0)
    assert cert.m == 2
    assert cert.margin == pytest.approx(0.25)


def test_twist_on_the_boundary_has_zero_margin():
    cert = check_annular_twist(shear_twist(-0.25, 1.875))
    assert cert.m == 2
    assert cert.margin == pytest.approx(0.0, abs=1e-12)
    assert not cert.passed


def test_rigid_rotation_has_no_twist():
    with pytest.raises(TwistFailureError):
        check_annular_twist(shear_twist(1.0, 0.0))


def test_twist_needs_enough_samples(twist_map):
    with pytest.raises(PreconditionError):
        check_annular_twist(twist_map, samples=8)


def test_resampled_margin_agrees_for_affine_twist(twist_map):
    cert = check_annular_twist(twist_map, samples=32)
    assert resampled_margin(twist_map, cert) == pytest.approx(cert.margin)


# ----------------------------------------------------------------------
# Strip twist
# ----------------------------------------------------------------------

def test_strip_twist_reverse_pair(strip_map):
    result = check_strip_twist(strip_map, UPSTREAM_STRIP, DOWNSTREAM_STRIP)
    assert result.passed
    assert result.pair == "B"
    assert result.margin == pytest.approx(0.5)
    assert result.xi_lower == pytest.approx((4.5, 4.5))


def test_strip_twist_forward_pair():
    result = check_strip_twist(strip_shear(3.0, 1.5), UPSTREAM_STRIP, DOWNSTREAM_STRIP)
    assert result.passed
    assert result.pair == "A"


def test_identity_has_no_strip_twist():
    result = check_strip_twist(strip_shear(0.0, 0.0), UPSTREAM_STRIP, DOWNSTREAM_STRIP)
    assert not result.passed
    assert result.margin == pytest.approx(-4.0)


# ----------------------------------------------------------------------
# Boundary invariance
# ----------------------------------------------------------------------

def test_half_turn_keeps_annulus_boundary():
    """Both boundary polygons are symmetric under p -> -p, so the residual is rounding only."""
    chart = RadialAnnulusChart(circle(1.0), circle(2.0), np.zeros(2))
    residual = check_boundary_invariance(lambda p: -p, _radial_domain(chart), samples=64)
    assert residual < 1e-9


def test_expansion_violates_annulus_boundary():
    chart = RadialAnnulusChart(circle(1.0), circle(2.0), np.zeros(2))
    with pytest.raises(InvarianceViolationError) as info:
        check_boundary_invariance(lambda p: 1.5 * p, _radial_domain(chart), samples=32)
    assert info.value.witness is not None


def test_integration_failure_on_boundary_names_the_escaping_point():
    """A map whose integration blows up for one boundary point reports that point as the witness."""
    chart = RadialAnnulusChart(circle(1.0), circle(2.0), np.zeros(2))

    def escaping(points):
        points = np.atleast_2d(points)
        if np.any(points[:, 0] < -1.5):
            raise IntegrationError("trajectory escaped |p| > 1e+06 at t=16.9")
        return points.copy()

    with pytest.raises(InvarianceViolationError) as info:
        check_boundary_invariance(escaping, _radial_domain(chart), samples=32)
    assert info.value.witness is not None
    assert info.value.witness[0] < -1.5
    assert isinstance(info.value.__cause__, IntegrationError)


def _radial_domain(chart):
    class Domain:
        def boundary_points(self, n):
            phi = np.linspace(0.0, 1.0, n, endpoint=False)
            return chart.unlift(phi, -np.ones(n)), chart.unlift(phi, np.ones(n))

        def transverse(self, points):
            return chart.transverse(points)
    return Domain()


# ----------------------------------------------------------------------
# Crossing sets and stretching
# ----------------------------------------------------------------------

def test_crossing_sets_for_two_levels(twist_map):
    cert = check_annular_twist(twist_map)
    sets = crossing_sets(twist_map, cert, grid=16)
    assert sets.nonempty == [0, 1]
    assert sets.pairwise_disjoint()
    assert sets.inside_source()
    images = apply(twist_map, sets[1].centers)
    assert np.all((images[:, 0] >= 3.0 - SPLIT_SPAN) & (images[:, 0] <= 3.5 + SPLIT_SPAN))


def test_crossing_set_covers_every_point_mapped_into_its_copy(twist_map):
    cert = check_annular_twist(twist_map)
    sets = crossing_sets(twist_map, cert, grid=16)
    w, rho = np.meshgrid(np.linspace(0.0, 0.5, 41), np.linspace(-1.0, 1.0, 41), indexing="ij")
    w, rho = w.ravel(), rho.ravel()
    X, _ = twist_map(w, rho)
    for level in cert.levels:
        box = target_copy(level)
        hit = (X >= box.x0) & (X <= box.x1)
        assert np.any(hit)
        assert np.all(sets[level].contains(w[hit], rho[hit]))


def test_crossing_sets_need_passing_certificate():
    cert = check_annular_twist(shear_twist(-0.25, 1.875))
    with pytest.raises(PreconditionError):
        crossing_sets(shear_twist(-0.25, 1.875), cert)


def test_paths_stay_in_source():
    for _, points in sample_paths(DOWNSTREAM_ANNULUS, 8, seed=3):
        assert np.all(DOWNSTREAM_ANNULUS.contains(points[:, 0], points[:, 1]))
        assert points[0, 1] == -1.0 and points[-1, 1] == 1.0


def test_annulus_stretches_within_crossing_set(twist_map):
    cert = check_annular_twist(twist_map)
    sets = crossing_sets(twist_map, cert, grid=16)
    for level in cert.levels:
        result = stretch_check(twist_map, DOWNSTREAM_ANNULUS, target_copy(level), K=sets[level], paths=8)
        assert result.passed
        assert result.crossed == 8


def test_strip_stretches_across_downstream(strip_map):
    result = stretch_check(strip_map, UPSTREAM_STRIP, DOWNSTREAM_STRIP, paths=8)
    assert result.passed
    assert len(result.runs) == 8


def test_collapse_fails_with_witness():
    def collapse(w, rho):
        return np.full(np.shape(w), 0.25), np.asarray(rho, dtype=float)

    result = stretch_check(collapse, DOWNSTREAM_ANNULUS, target_copy(0), paths=8)
    assert not result.passed
    assert result.witness_index == 0
    assert result.witness is not None


def test_stretching_needs_eight_paths(twist_map):
    with pytest.raises(PreconditionError):
        stretch_check(twist_map, DOWNSTREAM_ANNULUS, target_copy(0), paths=4)


# ----------------------------------------------------------------------
# Annulus time selection
# ----------------------------------------------------------------------

def _growing_twist(tau):
    return shear_twist(-0.25, 0.5 * tau)


def test_choose_tau2_smallest_time_on_grid():
    choice = choose_tau2(_growing_twist, 1.0, 2, samples=32, max_time=100.0)
    assert choice.tau == pytest.approx(1.5 ** 4)
    assert choice.certificate.m == 2
    assert [t[1] for t in choice.tried] == [None, None, 1, 1, 2]


def test_choose_tau2_is_monotone_in_m():
    two = choose_tau2(_growing_twist, 1.0, 2, samples=32, max_time=100.0)
    three = choose_tau2(_growing_twist, 1.0, 3, samples=32, max_time=100.0)
    assert three.tau > two.tau
    assert three.certificate.m >= 3


def test_choose_tau2_gives_up():
    with pytest.raises(TwistFailureError):
        choose_tau2(_growing_twist, 1.0, 2, samples=32, max_time=3.0)


# ----------------------------------------------------------------------
# Certificate
# ----------------------------------------------------------------------

def test_certificate_symbol_count(strip_map, twist_map):
    strip = check_strip_twist(strip_map, UPSTREAM_STRIP, DOWNSTREAM_STRIP)
    annular = check_annular_twist(twist_map)
    cert = assemble_chaos_certificate(strip, annular, INSTANCE, crossed_levels=[0, 1])
    assert (cert.n, cert.m, cert.symbol_count) == (1, 2, 2)
    assert cert.margin_strip == pytest.approx(0.5)
    assert cert.to_dict()["composition"] == "annulus_after_strip"

    wide = assemble_chaos_certificate(strip, annular, INSTANCE, n=2, composition=STRIP_AFTER_ANNULUS)
    assert wide.symbol_count == 4


def test_certificate_needs_two_symbols(strip_map, twist_map):
    strip = check_strip_twist(strip_map, UPSTREAM_STRIP, DOWNSTREAM_STRIP)
    annular = check_annular_twist(twist_map)
    with pytest.raises(InsufficientCrossingError):
        assemble_chaos_certificate(strip, annular, INSTANCE, crossed_levels=[0])


def test_certificate_needs_passing_checks(twist_map):
    strip = check_strip_twist(strip_shear(0.0, 0.0), UPSTREAM_STRIP, DOWNSTREAM_STRIP)
    with pytest.raises(PreconditionError):
        assemble_chaos_certificate(strip, check_annular_twist(twist_map), INSTANCE)
