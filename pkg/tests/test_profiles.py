import math

import numpy as np
import pytest

from shrinker.profiles import (
    SQRT2,
    BracketError,
    GeodesicState,
    first_descending_crossing,
    geodesic_rhs,
    graph_ode_h,
    hemisphere_state,
    integrate_geodesic,
    legendre_psi,
    shoot_cap,
)


def test_rhs_cylinder_axis_point():
    # on the cylinder line the theta- and r-derivatives vanish exactly
    assert np.allclose(geodesic_rhs((1.0, 1.0, 0.0)), [1.0, 0.0, 0.0])


def test_rhs_equator_point():
    d = geodesic_rhs((0.0, 1.0, math.pi / 2))
    assert abs(d[0]) < 1e-16
    assert d[1] == 1.0
    assert abs(d[2]) < 1e-15


def test_rhs_matches_hemisphere_derivative():
    # derivative of the closed form at a few arclengths
    for t in [0.3, 0.9, 1.7]:
        state = hemisphere_state(t)
        d = geodesic_rhs(state)
        dt = 1e-6
        fd = (hemisphere_state(t + dt) - hemisphere_state(t - dt)) / (2 * dt)
        assert np.allclose(d, fd, atol=1e-9)


def test_rhs_domain_error():
    with pytest.raises(ValueError):
        geodesic_rhs((0.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        geodesic_rhs(GeodesicState(0.0, -0.5, 1.0))


def test_hemisphere_reproduction():
    prof = integrate_geodesic(SQRT2, SQRT2 * math.pi / 2, tol=1e-10)
    assert not prof.truncated
    exact = hemisphere_state(prof.t).T
    err = np.max(np.abs(prof.states - exact))
    assert err < 1e-8
    final = prof.states[-1]
    assert abs(final[0]) < 1e-8 and abs(final[1] - SQRT2) < 1e-8
    assert abs(final[2] - math.pi) < 1e-8


def test_cylinder_line_invariant():
    start = GeodesicState(0.5, 1.0, 0.0)
    prof = integrate_geodesic(0.0, 3 * math.pi / SQRT2, tol=1e-11, start=start)
    assert np.max(np.abs(prof.states[:, 1] - 1.0)) < 1e-9
    assert np.max(np.abs(prof.states[:, 2])) < 1e-9
    assert np.max(np.abs(prof.states[:, 0] - 0.5 - prof.t)) < 1e-9


def test_plane_line_invariant():
    start = GeodesicState(0.0, 0.3, math.pi / 2)
    prof = integrate_geodesic(0.0, 3 * math.pi / SQRT2, tol=1e-11, start=start)
    assert np.max(np.abs(prof.states[:, 0])) < 1e-9
    assert np.max(np.abs(prof.states[:, 2] - math.pi / 2)) < 1e-9


def test_series_start_consistency():
    # integrating from t0/2 to t0 reproduces the series value to O(t0^3)
    from shrinker.profiles import T0_SERIES, series_start, _rhs
    from scipy.integrate import solve_ivp

    c = 1.37
    y_half = series_start(c, T0_SERIES / 2)
    sol = solve_ivp(_rhs, (T0_SERIES / 2, T0_SERIES), y_half, rtol=1e-13,
                    atol=1e-13, dense_output=True)
    y_series = series_start(c, T0_SERIES)
    assert np.max(np.abs(sol.y[:, -1] - y_series)) < 10 * T0_SERIES ** 3


def test_bounce_off_flagged():
    # the sphere profile returns to the axis at t = sqrt(2)*pi; integration
    # past that point is reported truncated, not raised
    prof = integrate_geodesic(SQRT2, 3 * math.pi / SQRT2, tol=1e-10)
    assert prof.truncated
    assert prof.states[-1, 1] < 1e-3
    assert abs(prof.t[-1] - SQRT2 * math.pi) < 0.05


def test_shoot_hemisphere_target():
    z_line = 0.15
    theta_target = math.pi - math.asin(z_line / SQRT2)
    res = shoot_cap(theta_target, z_line, tol=1e-12)
    assert abs(res.c1 - SQRT2) < 1e-11
    assert abs(res.residual) < 1e-12


def test_shoot_linear_response():
    z_line = 0.15
    ref = math.pi - math.asin(z_line / SQRT2)
    res0 = shoot_cap(ref, z_line, tol=1e-13)
    res1 = shoot_cap(ref + 1e-3, z_line, tol=1e-13)
    ratio = abs(res1.c1 - res0.c1) / 1e-3
    # linear response with an O(1) constant
    assert 0.05 < ratio < 20.0


def test_shoot_monotone_against_dense_scan():
    z_line = 0.12
    theta_ref = math.pi - math.asin(z_line / SQRT2)
    cs = np.linspace(SQRT2 - 0.2, SQRT2 + 0.2, 200)
    angles = []
    for c in cs:
        prof = integrate_geodesic(c, 3 * math.pi / SQRT2, tol=1e-9)
        hit = first_descending_crossing(prof, z_line)
        angles.append(hit[1][2] if hit is not None else np.nan)
    angles = np.array(angles)
    ok = ~np.isnan(angles)
    diffs = np.diff(angles[ok])
    assert np.all(diffs > 0) or np.all(diffs < 0)
    # the root from shoot_cap sits where the scan says it should
    res = shoot_cap(theta_ref, z_line, tol=1e-12)
    k = np.searchsorted(cs[ok], res.c1)
    assert 0 < k < ok.sum()


def test_shoot_bracket_failure():
    z_line = 0.15
    ref = math.pi - math.asin(z_line / SQRT2)
    with pytest.raises(BracketError) as exc:
        shoot_cap(ref + 0.14, z_line, delta_c=0.01, delta_theta=0.15)
    assert exc.value.angles is not None


def test_graph_ode_equilibrium():
    prof = graph_ode_h(math.log(SQRT2), math.pi / 2, tol=1e-12)
    assert np.max(np.abs(prof.values - math.log(SQRT2))) < 1e-10


def test_graph_ode_linearization_matches_psi():
    eps = 1e-4
    hp = graph_ode_h(math.log(SQRT2) + eps, math.pi / 2, tol=1e-12)
    psi = legendre_psi(math.pi / 2, tol=1e-12)
    ts = np.linspace(0.01, math.pi / 2 - 1e-9, 200)
    response = (hp(ts)[0] - math.log(SQRT2)) / eps
    assert np.max(np.abs(response - psi(ts)[0])) < 1e-2


def test_legendre_initial_data_and_curvature():
    psi = legendre_psi(math.pi / 2)
    t = 1e-3
    val, dval = psi(t)
    assert abs(val - (1 - t * t)) < 1e-8
    assert abs(dval - (-2 * t)) < 1e-6
    # second derivative at 0 equals -2 (series 1 - t^2)
    second = (psi(2e-3)[0] - 2 * psi(1.5e-3)[0] + psi(1e-3)[0]) / (0.5e-3) ** 2
    assert abs(second - (-2.0)) < 1e-3


def test_legendre_slope_at_equator():
    # psi(t) = P(cos t) for the Legendre function P of degree (-1+sqrt(17))/2.
    # The shooting argument needs dP/dx > 0 at x = cos(pi/2) = 0; by the
    # chain rule dP/dx(0) = -psi'(pi/2), so psi itself crosses the equator
    # with strictly negative slope.
    psi = legendre_psi(math.pi / 2 + 1e-6)
    dpsi = psi(math.pi / 2)[1]
    legendre_deriv_at_zero = -dpsi
    assert legendre_deriv_at_zero > 0.5


def test_legendre_ode_residual_pointwise():
    psi = legendre_psi(1.8, tol=1e-12)
    ts = np.linspace(0.05, 1.75, 500)
    h = 3e-3
    vals = psi(ts)[0]
    dvals = psi(ts)[1]
    # 4th-order first-derivative stencil applied to psi'
    ddval = (-psi(ts + 2 * h)[1] + 8 * psi(ts + h)[1]
             - 8 * psi(ts - h)[1] + psi(ts - 2 * h)[1]) / (12 * h)
    resid = ddval + dvals / np.tan(ts) + 4 * vals
    assert np.max(np.abs(resid)) < 1e-8
