import math

import numpy as np
import pytest

from shrinker.scherk import (
    ScherkWingPatch,
    determine_a,
    extract_core,
    implicit_value,
    reflection_pairing_distance,
    sigma,
    sigma_weighted_c5_norm,
)


def test_implicit_origin():
    assert implicit_value(0.0, 0.0, 0.0) == 0.0


def test_implicit_solved_point():
    # pick x, solve sinh z = 1/sinh x; then (x, pi/2, z) is on the surface
    x = 0.8
    z = math.asinh(1.0 / math.sinh(x))
    assert abs(implicit_value(x, math.pi / 2, z)) < 1e-15


def test_implicit_direct_value():
    assert abs(implicit_value(1.0, 0.0, 1.0) - (-math.sinh(1.0) ** 2)) < 1e-15
    assert abs(implicit_value(1.0, 0.0, 1.0) - (-1.3810978)) < 1e-6


def test_sigma_vanishes_on_period_lines():
    for a in [0.7, 1.0, 2.0]:
        for s in [0.0, 0.5, 3.0]:
            assert sigma(s, 0.0, a) == 0.0


def test_sigma_direct_value():
    a = 1.3
    assert abs(sigma(0.0, math.pi / 2, a) - math.asinh(1.0 / math.sinh(a))) < 1e-15


def test_sigma_points_on_surface_to_machine_precision():
    a = 1.0
    patch = ScherkWingPatch.build(a, 1e-3, s_max=8.0, ds=0.25, ny=48)
    pts = patch.embedded_points().reshape(-1, 3)
    vals = implicit_value(pts[:, 0], pts[:, 1], pts[:, 2])
    assert np.max(np.abs(vals)) < 1e-13


def test_sigma_decay_profile():
    # e^s |sigma(s, pi/2)| decreases in s for s >= 1 with limit 2 e^{-a}
    a = 1.2
    s = np.linspace(1.0, 12.0, 60)
    vals = np.exp(s) * np.abs(sigma(s, math.pi / 2, a))
    assert np.all(np.diff(vals) < 0)
    assert abs(vals[-1] - 2 * math.exp(-a)) < 1e-4


def test_determine_a_budget_and_monotonicity(capsys):
    eps = 1e-3
    a_star = determine_a(eps)
    norm = sigma_weighted_c5_norm(a_star)
    assert norm <= eps
    # sup e^s |sigma| is part of the order-5 norm, so it obeys the bound too
    s = np.linspace(0.0, 5.0, 200)
    sup = np.max(np.exp(s) * np.abs(sigma(s, math.pi / 2, a_star)))
    assert sup <= eps
    assert sigma(0.0, math.pi / 2, a_star) <= eps
    a_half = determine_a(eps / 2)
    assert a_half >= a_star
    print(f"determine_a({eps:g}) = {a_star:.2f}, norm {norm:.3e}; "
          f"determine_a({eps/2:g}) = {a_half:.2f}")


def test_determine_a_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        determine_a(0.1)


@pytest.fixture(scope="module")
def core_patch():
    return extract_core(0.15, a=1.0)


def test_core_vertices_on_surface(core_patch):
    v = core_patch.vertices
    vals = implicit_value(v[:, 0], v[:, 1], v[:, 2])
    assert np.max(np.abs(vals)) < 1e-10


def test_core_reflection_symmetry(core_patch):
    # reflection across y = pi/2 maps the vertex set to itself
    def refl(v):
        w = v.copy()
        w[:, 1] = np.pi - w[:, 1]
        # fold back into the sampled band |y| <= pi
        w = w[np.abs(w[:, 1]) <= np.pi - 1e-9]
        return w

    assert reflection_pairing_distance(core_patch, refl) < 5e-3


def test_core_half_turn_symmetry(core_patch):
    def half_turn(v):  # 180 degrees about the x-axis
        return v * np.array([1.0, -1.0, -1.0])

    assert reflection_pairing_distance(core_patch, half_turn) < 5e-3
