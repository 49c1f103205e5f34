import math

import numpy as np
import pytest

from shrinker.assembly import (
    Construction,
    assemble_initial_surface,
    build_scherk_strip,
    core_quadrant_points,
    cutoff,
    fit_cap_and_radius,
    unbalance_map,
    wrap_map,
)
from shrinker.params import SQRT2, ConstructionParams
from shrinker.profiles import integrate_geodesic
from shrinker.scherk import implicit_value, sigma


# --------------------------------------------------------------------- cutoff

def test_cutoff_endpoints():
    assert cutoff(0.0, 1.0, 0.0) == 0.0
    assert cutoff(0.0, 1.0, 1.0) == 1.0
    assert cutoff(0.0, 1.0, -5.0) == 0.0
    assert cutoff(0.0, 1.0, 7.0) == 1.0


def test_cutoff_descending_order():
    d = 0.25
    assert cutoff(4 * d, 3 * d, 4 * d) == 0.0
    assert cutoff(4 * d, 3 * d, 3 * d) == 1.0


def test_cutoff_monotone():
    s = np.linspace(-0.5, 1.5, 400)
    v = cutoff(0.0, 1.0, s)
    assert np.all(np.diff(v) >= 0)
    assert np.all((v >= 0) & (v <= 1))


def test_cutoff_equal_endpoints_rejected():
    with pytest.raises(ValueError):
        cutoff(1.0, 1.0, 0.5)


# ------------------------------------------------------------- unbalance map

def test_unbalance_identity_region():
    p = np.array([1.0, 0.0, 0.2])
    assert np.array_equal(unbalance_map(0.07, p), p)


def test_unbalance_full_rotation():
    b = 0.05
    out = unbalance_map(b, np.array([0.0, 0.0, 2.0]))
    assert np.allclose(out, [2 * math.sin(b), 0.0, 2 * math.cos(b)], atol=1e-15)
    # lower cone rotates toward +x as well
    out2 = unbalance_map(b, np.array([0.0, 0.0, -2.0]))
    assert np.allclose(out2, [2 * math.sin(b), 0.0, -2 * math.cos(b)], atol=1e-15)


def test_unbalance_zero_angle():
    pts = np.random.default_rng(0).normal(size=(50, 3)) * 2
    assert np.array_equal(unbalance_map(0.0, pts), pts)


def test_unbalance_half_turn_equivariant():
    b = 0.04
    pts = np.random.default_rng(1).normal(size=(200, 3)) * 2
    half = pts * np.array([1.0, -1.0, -1.0])
    lhs = unbalance_map(b, half)
    rhs = unbalance_map(b, pts) * np.array([1.0, -1.0, -1.0])
    assert np.allclose(lhs, rhs, atol=1e-14)


# ------------------------------------------------------------------ wrap map

def test_wrap_origin():
    R, tau = 10.0, SQRT2 / 10
    assert np.allclose(wrap_map(R, tau, np.zeros(3)), [R, 0, 0])


def test_wrap_quarter_turn():
    R, tau = 11.0, SQRT2 / 16
    y = (SQRT2 / tau) * (math.pi / 2)
    out = wrap_map(R, tau, np.array([0.0, y, 0.0]))
    assert np.allclose(out, [0.0, R, 0.0], atol=1e-12)


def test_wrap_conformal_at_seam():
    # unit first derivatives at x = y = 0 when R_tilde = sqrt(2)
    m = 16
    tau = SQRT2 / m
    R = SQRT2 / tau
    h = 1e-6
    dx = (wrap_map(R, tau, np.array([h, 0, 0]))
          - wrap_map(R, tau, np.array([-h, 0, 0]))) / (2 * h)
    dy = (wrap_map(R, tau, np.array([0, h, 0]))
          - wrap_map(R, tau, np.array([0, -h, 0]))) / (2 * h)
    assert abs(np.linalg.norm(dx) - 1) < 1e-8
    assert abs(np.linalg.norm(dy) - 1) < 1e-8
    assert abs(dx @ dy) < 1e-8


# ------------------------------------------------------------------- cap fit

def test_fit_defining_mismatches(construction_m8):
    f = construction_m8.fit
    assert f.position_mismatch < 1e-10
    assert f.angle_mismatch < 1e-10


def test_fit_c_converges_to_sqrt2(capsys):
    cs = {}
    for m in (8, 16, 32):
        fit = fit_cap_and_radius(0.0, SQRT2 / m, 1.0, delta_c=0.3)
        cs[m] = fit.c
    # linear in tau: the gap halves with each doubling of m
    g8, g16, g32 = (abs(cs[m] - SQRT2) for m in (8, 16, 32))
    print(f"cap intercept gaps: m=8 {g8:.4f}, m=16 {g16:.4f}, m=32 {g32:.4f}")
    assert g16 < 0.65 * g8
    assert g32 < 0.65 * g16


@pytest.mark.parametrize("m,b", [
    (8, 0.0), (8, 0.01), (8, -0.01),
    (16, 0.0), (16, 0.02), (16, -0.02),
])
def test_fit_radius_in_box(m, b):
    # the admissible tilt window at m=8 is |b| <~ 0.018 before the fitted
    # radius leaves the hypothesis box; the construction only visits smaller b
    fit = fit_cap_and_radius(b, SQRT2 / m, 1.0, delta_c=0.3)
    assert 1.3 <= fit.R_tilde <= 1.5


# ----------------------------------------------------------------- kappa map

def test_kappa_pivot_circle(construction_m8):
    con = construction_m8
    p = con.params
    for y in (0.0, 1.0, -2.5):
        pt = con.kappa_map(0.0, y)
        ang = p.tau * y / SQRT2
        expected = np.array([
            con.fit.r_pivot * math.cos(ang) / p.tau,
            con.fit.r_pivot * math.sin(ang) / p.tau,
            p.a,
        ])
        assert np.allclose(pt, expected, atol=1e-9)


def test_kappa_conformality(construction_m8):
    con = construction_m8
    h = 1e-5
    for s in (0.5, 3.0, 10.0):
        for y in (0.3, 2.0):
            ds_vec = (con.kappa_map(s + h, y) - con.kappa_map(s - h, y)) / (2 * h)
            dy_vec = (con.kappa_map(s, y + h) - con.kappa_map(s, y - h)) / (2 * h)
            rho = con.rho(s)[0] if np.ndim(con.rho(s)) else con.rho(s)
            assert abs(np.linalg.norm(ds_vec) - rho) < 1e-6
            assert abs(np.linalg.norm(dy_vec) - rho) < 1e-6
            assert abs(ds_vec @ dy_vec) < 1e-6


def test_kappa_overlays_cap_profile(construction_m8):
    # the wing geodesic is the fitted cap profile continued past the pivot
    con = construction_m8
    fresh = integrate_geodesic(con.fit.c, con.fit.u_pivot + 0.1, tol=1e-12)
    for s in (0.0, 1.0, 5.0, 15.0):
        u = con.u_of_s(s)
        pt = con.kappa_map(s, 0.0)
        z, r, _ = fresh(u)
        assert abs(pt[0] - r / con.params.tau) < 1e-8
        assert abs(pt[2] - z / con.params.tau) < 1e-8


# ------------------------------------------------------------ wing embedding

def test_wing_top_is_graph_over_kappa(construction_m8):
    con = construction_m8
    p = con.params
    for s in (1.0, 2.5, p.sigma_cut_lo - 1.0):
        for y in (0.7, -1.9):
            pt = con.wing_embedding(np.array(s), np.array(y), "top")
            kp = con.kappa_map(s, y)
            d = np.linalg.norm(pt - kp)
            expected = abs(con.psi_sigma_cut(s) * sigma(s, y, p.a))
            assert abs(d - expected) < 1e-10


def test_wing_top_pure_kappa_far_out(construction_m8):
    con = construction_m8
    p = con.params
    s = p.sigma_cut_hi + 1.0
    for y in (0.4, 2.2):
        pt = con.wing_embedding(np.array(s), np.array(y), "top")
        assert np.allclose(pt, con.kappa_map(s, y), atol=1e-12)


def test_wing_top_root_is_wrapped_template(construction_m8):
    con = construction_m8
    p = con.params
    for y in (0.0, 1.3, -0.8):
        pt = con.wing_embedding(np.array(0.0), np.array(y), "top")
        base = np.array([sigma(0.0, y, p.a), y, p.a])
        assert np.allclose(pt, con.wrap_tilt(base), atol=1e-12)


def test_core_quadrant_on_surface():
    a = 1.0
    y = np.linspace(0.05, math.pi - 0.05, 9)[:, None]
    lam = np.linspace(-1, 1, 11)[None, :]
    for quad in (1, 2, 3, 4):
        yy = y if quad in (1, 4) else -y
        pts = core_quadrant_points(yy, lam, a, quad)
        vals = implicit_value(pts[..., 0], pts[..., 1], pts[..., 2])
        assert np.max(np.abs(vals)) < 1e-13


# ------------------------------------------------------------------ assembly

def test_assembled_mesh_topology(mesh_m8):
    mesh = mesh_m8
    # oriented consistently: no directed edge repeats
    de = np.concatenate([mesh.faces[:, [0, 1]], mesh.faces[:, [1, 2]],
                         mesh.faces[:, [2, 0]]])
    assert len(np.unique(de, axis=0)) == len(de)
    # boundary is exactly the outer truncation ring
    bnd = mesh.boundary_vertices()
    con = mesh._cache["construction"]
    r = np.linalg.norm(mesh.vertices[bnd][:, :2], axis=1)
    assert len(bnd) == mesh.params.m * mesh.params.ny
    assert np.allclose(r, con.rho_max, atol=1e-9)


def test_assembled_mesh_symmetry(mesh_m8):
    assert mesh_m8.symmetry_deviation() < 1e-12


def test_assembled_regions_partition(mesh_m8):
    assert np.all(mesh_m8.region >= 0) and np.all(mesh_m8.region <= 8)
    s = mesh_m8.s
    p = mesh_m8.params
    assert np.all(s >= 0) and np.all(s <= p.s_max + 1e-12)
    # off the desingularizing piece s equals the truncation value
    off = np.isin(mesh_m8.region, [5, 6, 7, 8])
    assert np.allclose(s[off], p.s_max)


def test_hausdorff_proxy_decreases_with_m(mesh_m8, mesh_m16):
    # away from the intersection circle the surface approaches the union of
    # the sphere of radius sqrt(2) and the plane
    def proxy(mesh):
        v = mesh.vertices
        rad = np.linalg.norm(v, axis=1)
        circle = np.array([SQRT2, 0.0])
        rr = np.linalg.norm(v[:, :2], axis=1)
        d_circle = np.hypot(rr - mesh._cache["construction"].fit.R_tilde,
                            v[:, 2])
        sel = (d_circle > 0.5) & (rr < 2.5)
        d_sphere = np.abs(rad[sel] - SQRT2)
        d_plane = np.abs(v[sel, 2])
        return float(np.max(np.minimum(d_sphere, d_plane)))

    assert proxy(mesh_m16) < proxy(mesh_m8)


def test_rescaled_seam_converges_to_template(mesh_m8, mesh_m16):
    # recentring at the fitted radius and rescaling by 1/tau, core vertices
    # approach the template surface as m grows
    def proxy(mesh):
        con = mesh._cache["construction"]
        p = mesh.params
        core = mesh.region == 0
        v = mesh.vertices[core]
        phi = np.arctan2(v[:, 1], v[:, 0])
        sel = np.abs(phi) < math.pi / (2 * p.m)
        q = (v[sel] - np.array([con.fit.R_tilde, 0.0, 0.0])) / p.tau
        q[:, 1] = np.linalg.norm(v[sel, :2], axis=1) * phi[sel] / p.tau
        vals = implicit_value(q[:, 0], q[:, 1], q[:, 2])
        return float(np.max(np.abs(vals)))

    assert proxy(mesh_m16) < proxy(mesh_m8)


def test_scherk_strip_builds_and_is_exact():
    strip = build_scherk_strip(0.0, 1.0, s_max=4.0, ds=0.25, ny=16, periods=3)
    v = strip.vertices
    vals = implicit_value(v[:, 0], v[:, 1], v[:, 2])
    assert np.max(np.abs(vals)) < 1e-12
    de = np.concatenate([strip.faces[:, [0, 1]], strip.faces[:, [1, 2]],
                         strip.faces[:, [2, 0]]])
    assert len(np.unique(de, axis=0)) == len(de)
