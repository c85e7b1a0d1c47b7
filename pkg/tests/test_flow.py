"""
Flows of the frozen fields and the switched system: conservation, events, periods, level sets
and the agreement of the composed and the directly integrated Poincare map.
"""
import numpy as np
import pytest

from src.core.exceptions import PreconditionError, ItineraryBreakError, EventNotFoundError
from src.construction.cusp import homoclinic_loop
from src.construction.saddle import outer_boundary_saddle
from src.dynamics.flow import (IntegratorConfig, EventFunction, batch_crossing_times, captured_flow_points,
                               captured_trajectory, flow_map, flow_points, integrate_to_event, orbit_period,
                               trace_level_set, trajectory)
from src.dynamics.normal_forms import Family, FirstIntegral, VectorFieldSpec
from src.dynamics.switched import PulseForcing, SwitchedSystem, half_map, iterate, itinerary, poincare, poincare_direct
from src.geometry.curves import JordanCurve, hausdorff_distance

RNG = np.random.default_rng(0)
SADDLE = VectorFieldSpec(Family.SADDLE, 1.0)
CUSP = VectorFieldSpec(Family.CUSP, -1.0)


def test_integrator_config_validation():
    with pytest.raises(PreconditionError):
        IntegratorConfig(rel_tol=-1.0)
    with pytest.raises(PreconditionError):
        IntegratorConfig(rel_tol=1e-2)


@pytest.mark.parametrize("spec,start", [(SADDLE, [-0.5, 0.0]), (CUSP, [-1.5, 0.0])])
def test_first_integral_drift(spec, start):
    """Relative drift of H over t = 20 stays below 1e-8 at the default tolerances."""
    fi = FirstIntegral(spec.family, spec.lam)
    p1 = flow_map(spec, 20.0, start)
    h0 = fi.value(np.asarray(start))
    assert abs(fi.value(p1) - h0) <= 1e-8 * abs(h0)


def test_batched_flow_matches_single_points():
    points = RNG.uniform(-0.9, -0.2, size=(6, 2)) * np.array([1.0, 0.3])
    batch = flow_points(SADDLE, 2.0, points)
    single = np.array([flow_map(SADDLE, 2.0, p) for p in points])
    assert np.allclose(batch, single, rtol=0, atol=1e-8)


def test_per_point_times():
    points = np.array([[-0.5, 0.0], [-0.7, 0.1]])
    times = np.array([1.0, 2.5])
    out = flow_points(SADDLE, times, points)
    assert np.allclose(out[1], flow_map(SADDLE, 2.5, points[1]), atol=1e-8)
    assert np.allclose(out[0], flow_map(SADDLE, 1.0, points[0]), atol=1e-8)


def test_time_reversal_through_the_involution():
    """phi_t(h(p)) = h(phi_{-t}(p)) for a reversible field."""
    p = np.array([-0.6, 0.2])
    lhs = flow_map(SADDLE, 1.5, [p[0], -p[1]])
    back = flow_map(SADDLE, -1.5, p)
    assert np.allclose(lhs, [back[0], -back[1]], atol=1e-9)


def test_flow_rejects_times_past_max_time():
    with pytest.raises(PreconditionError):
        flow_map(SADDLE, 1e6, [-0.5, 0.0])


def test_trajectory_dense_output():
    traj = trajectory(SADDLE, [-0.5, 0.0], 3.0)
    assert traj.t[0] == 0.0 and traj.t[-1] == pytest.approx(3.0)
    assert np.allclose(traj(3.0), traj.points[-1], atol=1e-10)
    assert len(traj.rows()) == traj.t.size


def test_cusp_axis_event():
    """The orbit leaving (-2, 0) inside the cusp loop returns to the axis on the other side."""
    event = EventFunction(lambda x, y: y, "any")
    t, p = integrate_to_event(CUSP, [-1.5, 0.0], event)
    assert t > 0
    assert p[1] == pytest.approx(0.0, abs=1e-10)
    fi = FirstIntegral(Family.CUSP, -1.0)
    assert fi.value(p) == pytest.approx(fi.value(np.array([-1.5, 0.0])), abs=1e-9)


def test_missing_event_is_reported():
    event = EventFunction(lambda x, y: x - 10.0, "rising")
    with pytest.raises(EventNotFoundError):
        integrate_to_event(SADDLE, [-0.5, 0.0], event, IntegratorConfig(max_time=20.0))


def test_batch_crossing_times_match_single_events():
    event = EventFunction(lambda x, y: y, "rising")
    points = np.array([[-0.5, -0.01], [-1.2, -0.01]])
    times, states = batch_crossing_times(SADDLE, points, event, horizon=30.0)
    for t, p in zip(times, points):
        single, _ = integrate_to_event(SADDLE, p, event)
        assert t == pytest.approx(single, rel=1e-6)
    assert np.allclose(states[:, 1], 0.0, atol=1e-10)


def test_periods_near_centers():
    """Small orbits about the centers have the linearized periods 2 pi and 2 pi / sqrt(2)."""
    assert orbit_period(SADDLE, [-1.01, 0.0]) == pytest.approx(2 * np.pi, rel=1e-2)
    assert orbit_period(CUSP, [-1.01, 0.0]) == pytest.approx(2 * np.pi / np.sqrt(2), rel=1e-2)


def test_periods_grow_toward_the_heteroclinic_cycle():
    periods = [orbit_period(SADDLE, [x, 0.0]) for x in (-1.1, -1.25, -1.4)]
    assert periods[0] < periods[1] < periods[2]


def test_level_set_of_closed_orbit():
    fi = FirstIntegral(Family.SADDLE, 1.0)
    level = fi.axis_value(-0.5)
    curve = trace_level_set(fi, float(level), [-0.5, 0.0])
    assert curve.closed
    assert np.max(np.abs(fi.value(curve.points) - level)) <= 1e-9


def test_level_set_axis_vertices_solve_the_level_where_the_curve_is_vertical():
    """The loop meets y = 0 vertically at both ends, where chord interpolation misses the level."""
    fi = FirstIntegral(Family.SADDLE, 1.0)
    level = float(fi.axis_value(-0.5))
    curve = trace_level_set(fi, level, [-0.5, 0.0])
    on_axis = curve.points[curve.points[:, 1] == 0.0]
    assert on_axis.shape[0] >= 2
    assert np.max(np.abs(fi.value(on_axis) - level)) <= 1e-12
    assert on_axis[:, 0].max() == pytest.approx(-0.5, abs=1e-9)


def test_level_set_seed_must_be_on_level():
    fi = FirstIntegral(Family.SADDLE, 1.0)
    with pytest.raises(PreconditionError):
        trace_level_set(fi, 1.0, [-0.5, 0.0])


def test_heteroclinic_cycle_closed_form():
    """The outer boundary vertex on the axis sits at x* = -3 lambda / 2 and the arc lies on H = 0."""
    curve = outer_boundary_saddle(0.5)
    assert curve.points[:, 0].min() == pytest.approx(-0.75, abs=1e-12)
    fi = FirstIntegral(Family.SADDLE, 0.5)
    assert np.max(np.abs(fi.value(curve.points))) <= 1e-12
    assert curve.is_simple()


def test_homoclinic_loop_closed_form():
    """The loop crosses the axis at (-2 s, 0) and lies on the saddle level."""
    loop = homoclinic_loop(-1.0)
    assert loop.points[:, 0].min() == pytest.approx(-2.0, abs=1e-12)
    fi = FirstIntegral(Family.CUSP, -1.0)
    assert np.max(np.abs(fi.value(loop.points) - 2.0 / 3.0)) <= 1e-12
    assert loop.contains([[-1.0, 0.0]]).tolist() == [True]


def test_separatrix_point_is_held_at_its_saddle():
    """A point of the heteroclinic arc stops next to a saddle instead of drifting off the cycle."""
    fi = FirstIntegral(Family.SADDLE, 1.0)
    start = np.array([-0.75, np.sqrt(0.5)])
    sinks = np.array([[0.0, -1.0], [0.0, 1.0]])
    path = captured_trajectory(SADDLE, start, 40.0, sinks, 1e-5)
    end = path.points[-1]
    assert path.t[-1] < 40.0
    assert np.min(np.linalg.norm(sinks - end, axis=1)) == pytest.approx(1e-5, rel=1e-3)
    assert abs(fi.value(end)) <= 1e-10
    held = captured_flow_points(SADDLE, 40.0, np.vstack([start, [-0.5, 0.0]]), sinks, 1e-5)
    assert np.allclose(held[0], end, atol=1e-12)
    assert np.allclose(held[1], flow_map(SADDLE, 40.0, [-0.5, 0.0]), atol=1e-8)


def test_traced_orbit_near_the_loop_follows_it():
    fi = FirstIntegral(Family.CUSP, -1.0)
    level = float(fi.axis_value(-1.999))
    curve = trace_level_set(fi, level, [-1.999, 0.0])
    assert curve.closed
    assert hausdorff_distance(curve.points, homoclinic_loop(-1.0).points) < 0.1


# ----------------------------------------------------------------------
# Switched system
# ----------------------------------------------------------------------

def _system():
    return SwitchedSystem(Family.SADDLE, PulseForcing(1.0, 0.25, 0.3, 0.3))


def test_forcing_validation():
    with pytest.raises(PreconditionError):
        PulseForcing(1.0, 1.0, 1.0, 1.0)
    with pytest.raises(PreconditionError):
        PulseForcing(1.0, 0.5, -1.0, 1.0)
    assert PulseForcing(1.0, 1.0, 1.0, 1.0, allow_degenerate=True).period == 2.0


def test_half_maps_flow_each_pulse_for_its_duration():
    sys = _system()
    p = np.array([-0.3, 0.1])
    first = half_map(sys, "first", p)
    assert np.allclose(first, flow_map(SADDLE, 0.3, p), rtol=0, atol=1e-10)
    second = half_map(sys, "second", first)
    assert np.allclose(poincare(sys, p), second, rtol=0, atol=1e-10)
    with pytest.raises(PreconditionError):
        half_map(sys, "third", p)


def test_poincare_composition_matches_direct_integration():
    """Phi^3 by composed half maps and by one switched integration agree to 1e-8."""
    sys = _system()
    p = np.array([-0.3, 0.1])
    composed = iterate(sys, p, 3)
    direct = poincare_direct(sys, p, 3)
    assert np.allclose(composed, direct, rtol=0, atol=1e-8)


def test_direct_samples_cover_the_run():
    boundary, rows = poincare_direct(_system(), [-0.3, 0.1], 2, samples=True)
    assert boundary.shape == (3, 2)
    assert rows[0][0] == 0.0
    assert rows[-1][0] == pytest.approx(1.2)


def test_batched_poincare():
    sys = _system()
    points = np.array([[-0.3, 0.1], [-0.2, -0.05]])
    batch = poincare(sys, points)
    assert np.allclose(batch[1], poincare(sys, points[1]), atol=1e-8)


def _box(x0, x1, y0, y1) -> JordanCurve:
    return JordanCurve(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]))


def test_itinerary_and_break():
    sys = _system()
    p = np.array([-0.3, 0.1])
    left = _box(-10.0, p[0] - 1e-3, -10.0, 10.0)
    everything = _box(-10.0, 10.0, -10.0, 10.0)
    assert itinerary(sys, p, 2, [everything]) == [0, 0]
    with pytest.raises(ItineraryBreakError) as info:
        itinerary(sys, p, 2, [left])
    assert info.value.index == 0
