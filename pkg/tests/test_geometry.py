import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatkernel.errors import DomainError, UnsupportedClassError, UnsupportedProfileError
from heatkernel.geometry import (
    E_OFFSET,
    EndKind,
    EndSpec,
    Point,
    PowerLaw,
    SumSpec,
    Tabulated,
    classify_end,
    distance,
    h_func,
    integral_s_over_v,
    off_center_volume,
    volume_ball,
)
from heatkernel.oracle import build_grid, graph_distance


def test_volume_power_closed_forms():
    assert volume_ball(EndSpec.power(0, 2.0), 10.0) == pytest.approx(101.0, rel=1e-14)
    assert volume_ball(EndSpec.power(0, 1.0), 1.0) == pytest.approx(1.0, rel=1e-14)
    assert volume_ball(EndSpec.power(0, 1.5), 0.5) == pytest.approx(0.75)


def test_volume_rejects_nonpositive_radius():
    with pytest.raises(DomainError):
        volume_ball(EndSpec.power(0, 1.0), 0.0)
    with pytest.raises(DomainError):
        volume_ball(EndSpec.power(0, 1.0), -1.0)


def test_tabulated_linear_weight_matches_square():
    tab = Tabulated.from_function(lambda s: 2 * s, r_max=100.0, r_min=1e-3)
    assert volume_ball(tab, 50.0) == pytest.approx(2500.0, rel=5e-3)


def test_tabulated_invariants():
    with pytest.raises(DomainError):
        Tabulated((0.0, 1.0, 0.5), (1.0, 1.0, 1.0))
    with pytest.raises(DomainError):
        Tabulated((0.0, 1.0, 2.0), (1.0, 0.0, 1.0))
    with pytest.raises(DomainError):
        Tabulated((2.0, 3.0, 4.0), (1.0, 1.0, 1.0))


def test_power_law_bounds():
    with pytest.raises(DomainError):
        PowerLaw(2.5)
    with pytest.raises(DomainError):
        PowerLaw(0.0)


@pytest.mark.parametrize("r", [1.0, 10.0, 1e3, 1e5])
def test_off_center_critical_is_square_up_to_two(r):
    v = off_center_volume(EndSpec.power(0, 2.0), 50.0, r)
    assert r * r / 2 <= v <= r * r


def test_off_center_cylinder_branch():
    assert off_center_volume(EndSpec.power(0, 1.0), 100.0, 10.0) == pytest.approx(100 / 11)


def test_off_center_near_centre_matches_grid_ball():
    end = EndSpec.power(0, 1.5)
    g = build_grid(SumSpec((end, EndSpec.power(1, 1.5))), 1000.0, 2000, 1.002)
    grid_ball = g.cumulative_mass(0, 100.0)
    ratio = off_center_volume(end, E_OFFSET, 100.0) / grid_ball
    assert 0.5 <= ratio <= 2.0
    assert 0.5 <= off_center_volume(end, E_OFFSET, 100.0) / 100**1.5 <= 2.0


def test_off_center_rejects_tabulated():
    tab = Tabulated.from_function(lambda s: 1.0 + 0 * s, r_max=100.0)
    with pytest.raises(UnsupportedProfileError):
        off_center_volume(tab, 5.0, 2.0)


@pytest.mark.parametrize("alpha,kind", [(2.0, EndKind.CRITICAL), (1.0, EndKind.SUBCRITICAL), (1.5, EndKind.SUBCRITICAL), (0.5, EndKind.SUBCRITICAL)])
def test_classify_power(alpha, kind):
    assert classify_end(PowerLaw(alpha)).kind is kind


def test_classify_r2_over_log_is_neither():
    tab = Tabulated.from_function(lambda s: 2 * s / np.log(np.e + s) + 1e-3, r_max=1e12, n=6000)
    assert classify_end(tab).kind is EndKind.NEITHER


def test_classify_needs_two_decades():
    with pytest.raises(DomainError):
        classify_end(PowerLaw(1.0), r_range=(10.0, 500.0))


@pytest.mark.parametrize("c", [0.5, 0.8, 1.0, 1.6, 2.0])
@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_classify_stable_under_rescaling(alpha, c):
    r = np.geomspace(1e-3, 1e12, 6000)
    tab = Tabulated(tuple(r), tuple(c * alpha * np.maximum(r, 1.0) ** (alpha - 1)))
    assert classify_end(tab).kind is classify_end(PowerLaw(alpha)).kind


def test_neither_end_rejected_by_callers():
    tab = Tabulated.from_function(lambda s: 2 * s / np.log(np.e + s) + 1e-3, r_max=1e12, n=6000)
    with pytest.raises(UnsupportedClassError):
        EndSpec(0, tab).require_class()


def test_h_func_values():
    assert h_func(EndSpec.power(0, 1.0), 1.0) == 1.0
    assert h_func(EndSpec.power(0, 1.0), 100.0) == pytest.approx(100.0, rel=1e-9)
    h = h_func(EndSpec.power(0, 2.0), math.exp(10))
    assert 10 / 4 <= h <= 10 * 4
    with pytest.raises(DomainError):
        h_func(EndSpec.power(0, 1.0), 0.5)


def test_integral_matches_closed_form_alpha_one():
    assert integral_s_over_v(EndSpec.power(0, 1.0), 1.0, 100.0) == pytest.approx(99.0, rel=1e-10)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
def test_h_matches_closed_branch(alpha):
    end = EndSpec.power(0, alpha)
    r = np.geomspace(10, 1e4, 30)
    h = np.array([h_func(end, x) for x in r])
    ref = np.log(r) if alpha == 2 else r * r / volume_ball(end, r)
    q = h / ref
    assert q.max() / q.min() <= 4.0


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 1.9])
def test_parabolicity_proxy_subcritical(alpha):
    end = EndSpec.power(0, alpha)
    vals = [integral_s_over_v(end, 1.0, R) for R in (1e2, 1e3, 1e4)]
    assert vals[1] / vals[0] >= 1.5 and vals[2] / vals[1] >= 1.5


def test_parabolicity_proxy_critical_grows_like_log():
    end = EndSpec.power(0, 2.0)
    vals = [integral_s_over_v(end, 1.0, R) for R in (1e2, 1e3, 1e4)]
    incr = np.diff(vals)
    assert np.all(incr > 0)
    assert incr == pytest.approx([math.log(10)] * 2, rel=0.01)


@settings(max_examples=200, deadline=None)
@given(alpha=st.floats(0.05, 2.0), r=st.floats(1e-3, 1e8))
def test_doubling(alpha, r):
    end = EndSpec.power(0, alpha)
    assert volume_ball(end, 2 * r) > volume_ball(end, r)
    # the constant cap below radius 1 makes the doubling constant 2 when alpha < 1
    assert volume_ball(end, 2 * r) / volume_ball(end, r) <= max(2**alpha, 2.0) * (1 + 1e-9)
    if alpha >= 1:
        assert volume_ball(end, 2 * r) / volume_ball(end, r) <= 2**alpha * (1 + 1e-9)


def test_sum_invariants():
    with pytest.raises(DomainError):
        SumSpec((EndSpec.power(0, 1.0),))
    with pytest.raises(DomainError):
        SumSpec((EndSpec.power(0, 1.0), EndSpec.power(0, 2.0)))
    s = SumSpec.from_alphas((1.0, 2.0))
    assert s.e_offset == math.e
    assert s.dominant == 1
    assert s.v_max(100.0) == volume_ball(s.end(1), 100.0)
    assert s.v_min(100.0) == volume_ball(s.end(0), 100.0)


def test_point_invariants():
    with pytest.raises(DomainError):
        Point.on_end(0, 2.0)
    assert Point.center().abs == E_OFFSET


def test_distance_conventions():
    s = SumSpec.from_alphas((1.0, 2.0))
    x, y = Point.on_end(0, 10.0), Point.on_end(1, 5.0)
    assert distance(s, x, x) == 0
    assert distance(s, x, y) == pytest.approx(15 - 2 * math.e)
    assert distance(s, Point.center(), y) == pytest.approx(5 - math.e)
    assert distance(s, x, Point.on_end(0, 4.0)) == pytest.approx(6.0)


@settings(max_examples=100, deadline=None)
@given(
    ends=st.lists(st.sampled_from([None, 0, 1, 2]), min_size=3, max_size=3),
    absv=st.lists(st.floats(math.e, 1e4), min_size=3, max_size=3),
)
def test_distance_metric(ends, absv):
    s = SumSpec.from_alphas((1.0, 1.5, 2.0))
    p = [Point.center() if e is None else Point.on_end(e, a) for e, a in zip(ends, absv)]
    d = lambda a, b: distance(s, a, b)
    assert d(p[0], p[1]) == d(p[1], p[0]) >= 0
    assert d(p[0], p[2]) <= d(p[0], p[1]) + d(p[1], p[2]) + 1e-9


def test_distance_matches_grid_shortest_path():
    s = SumSpec.from_alphas((1.0, 2.0))
    g = build_grid(s, 500.0, 1000, 1.002)
    for (ex, ax), (ey, ay) in [((0, 10.0), (1, 50.0)), ((0, 10.0), (0, 200.0)), ((1, 3.0), (1, 400.0))]:
        cx, cy = g.cell_of_abs(ex, ax), g.cell_of_abs(ey, ay)
        d_model = distance(s, Point.on_end(ex, ax), Point.on_end(ey, ay))
        width = np.diff(g.faces[0]).max()
        assert abs(graph_distance(g, cx, cy) - d_model) <= width
