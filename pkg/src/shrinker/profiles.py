"""Profile-curve ODEs for rotationally symmetric self-shrinkers.

Surfaces of revolution are self-shrinking exactly when their profile curves
are geodesics of the half-plane {(z, r): r >= 0} with the degenerate metric
r^2 exp(-(z^2+r^2)) (dz^2 + dr^2).  Parametrized by arclength the profile
(z(t), r(t)) with tangent angle theta satisfies

    z' = cos(theta),  r' = sin(theta),
    theta' = z sin(theta) + (1/r - r) cos(theta).

Caps are the profiles that leave the axis perpendicularly, z(0)=c, r(0)=0,
theta(0)=pi/2; they form a one-parameter family in the axis intercept c and
are located by shooting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

SQRT2 = math.sqrt(2.0)

# integration starts slightly off the singular axis using a series expansion
T0_SERIES = 1e-4
# terminate when the profile returns this close to the axis ("bounce-off")
R_BOUNCE = 1e-6


@dataclass(frozen=True)
class GeodesicState:
    """Point (z, r, theta) on a profile curve; r >= 0, theta in radians."""

    z: float
    r: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.z, self.r, self.theta])


@dataclass
class CapProfile:
    """Sampled profile curve with dense evaluation.

    Attributes
    ----------
    c : float
        Axis intercept (nan when integrated from a start override).
    t : ndarray
        Accepted integration times, strictly increasing.
    states : ndarray, shape (len(t), 3)
        Columns z, r, theta.
    truncated : bool
        True when integration stopped early because the profile returned to
        the axis before t_end.
    integration_tolerance : float
    """

    c: float
    t: np.ndarray
    states: np.ndarray
    truncated: bool
    integration_tolerance: float
    _dense: object = field(default=None, repr=False)
    t_start: float = 0.0

    def __call__(self, t):
        """Dense evaluation; returns array of shape (3,) or (3, n)."""
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, self.t_start, self.t[-1])
        return self._dense(tc)

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("t,z,r,theta\n")
            for ti, (z, r, th) in zip(self.t, self.states):
                f.write(f"{ti!r},{z!r},{r!r},{th!r}\n")


@dataclass(frozen=True)
class ShootResult:
    """Outcome of locating a cap by shooting on the axis intercept."""

    c1: float
    theta_achieved: float
    residual: float
    iterations: int
    r_cross: float = float("nan")
    t_cross: float = float("nan")


class BracketError(RuntimeError):
    """No sign change of the shooting objective over the scanned bracket."""

    def __init__(self, msg, c_grid, angles):
        super().__init__(msg)
        self.c_grid = c_grid
        self.angles = angles


def geodesic_rhs(state) -> np.ndarray:
    """Right-hand side of the profile system at (z, r, theta).

    Raises ValueError when r <= 0 (the 1/r term is singular on the axis).
    """
    if isinstance(state, GeodesicState):
        z, r, theta = state.z, state.r, state.theta
    else:
        z, r, theta = state
    if r <= 0.0:
        raise ValueError(f"geodesic_rhs needs r > 0, got r={r}")
    ct, st = math.cos(theta), math.sin(theta)
    return np.array([ct, st, z * st + (1.0 / r - r) * ct])


def _rhs(t, y):
    z, r, theta = y
    ct, st = math.cos(theta), math.sin(theta)
    return (ct, st, z * st + (1.0 / r - r) * ct)


def series_start(c: float, t0: float = T0_SERIES) -> np.ndarray:
    """Near-axis expansion of the cap profile with intercept c.

    r ~ t, theta ~ pi/2 + c t/2, z ~ c - c t^2/4; exact for the hemisphere
    through this order.
    """
    return np.array([c - c * t0 * t0 / 4.0, t0, math.pi / 2.0 + c * t0 / 2.0])


def integrate_geodesic(
    c: float,
    t_end: float,
    tol: float = 1e-10,
    start: GeodesicState | None = None,
) -> CapProfile:
    """Integrate a profile geodesic.

    Without ``start`` the curve is the cap with axis intercept c, launched
    from the regularized series start at t0 << 1.  With ``start`` the given
    state is integrated directly from t=0 (used for the cylinder/plane
    invariant lines and for continuing fitted profiles).

    A profile that returns to the axis before t_end is returned truncated
    with ``truncated=True`` rather than raising.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if start is None:
        t_start = T0_SERIES
        y0 = series_start(c)
    else:
        t_start = 0.0
        y0 = start.as_array()
        if y0[1] <= 0:
            raise ValueError("start override needs r > 0")
    if t_end <= t_start:
        raise ValueError(f"t_end={t_end} too small")

    def bounce(t, y):
        return y[1] - R_BOUNCE

    bounce.terminal = True
    bounce.direction = -1

    sol = solve_ivp(
        _rhs,
        (t_start, t_end),
        y0,
        method="RK45",
        rtol=tol,
        atol=tol,
        dense_output=True,
        events=bounce,
    )
    if not sol.success:  # pragma: no cover - integrator failure is unexpected
        raise RuntimeError(f"profile integration failed: {sol.message}")
    truncated = sol.status == 1
    return CapProfile(
        c=c if start is None else float("nan"),
        t=sol.t,
        states=sol.y.T.copy(),
        truncated=truncated,
        integration_tolerance=tol,
        _dense=sol.sol,
        t_start=t_start,
    )


def _bisect_crossing(profile: CapProfile, lo: float, hi: float, z_line: float,
                     t_tol: float = 1e-12) -> float:
    """Bisection on the dense interpolant for z(t) = z_line in [lo, hi]."""
    flo = profile(lo)[0] - z_line
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= t_tol:
            return mid
        fm = profile(mid)[0] - z_line
        if flo * fm <= 0.0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def first_descending_crossing(profile: CapProfile, z_line: float):
    """First time the profile crosses z = z_line with z decreasing.

    Returns (t_cross, state) or None when no such crossing exists in the
    sampled range.  The crossing is located by bisection on the dense output
    to 1e-12 in t.
    """
    z = profile.states[:, 0] - z_line
    for k in range(len(z) - 1):
        if z[k] > 0.0 and z[k + 1] <= 0.0:
            t_cross = _bisect_crossing(profile, profile.t[k], profile.t[k + 1], z_line)
            return t_cross, profile(t_cross)
    return None


def shoot_cap(
    theta_target: float,
    z_line: float,
    tol: float = 1e-12,
    delta_c: float = 0.2,
    delta_theta: float = 0.15,
    n_scan: int = 33,
    t_end: float = 3 * math.pi / SQRT2,
    int_tol: float = 1e-12,
) -> ShootResult:
    """Find the cap intercept whose profile meets z = z_line at theta_target.

    The crossing is the first descending passage through the line.  The root
    in c is bracketed by a coarse scan over [sqrt(2)-delta_c, sqrt(2)+delta_c]
    and polished by secant steps with bisection fallback.
    """
    if not 0.0 < z_line < 0.2:
        raise ValueError(f"z_line must lie in (0, 0.2), got {z_line}")
    ref = math.pi - math.asin(z_line / SQRT2)
    if abs(theta_target - ref) > delta_theta:
        raise ValueError(
            f"theta_target={theta_target:.6f} deviates more than "
            f"delta_theta={delta_theta} from the admissible angle {ref:.6f}"
        )

    evals = [0]

    def angle_at_crossing(c: float) -> float:
        evals[0] += 1
        prof = integrate_geodesic(c, t_end, tol=int_tol)
        hit = first_descending_crossing(prof, z_line)
        if hit is None:
            return math.nan
        return hit[1][2]

    c_grid = np.linspace(SQRT2 - delta_c, SQRT2 + delta_c, n_scan)
    angles = np.array([angle_at_crossing(c) for c in c_grid])
    g = angles - theta_target
    bracket = None
    for k in range(len(c_grid) - 1):
        if np.isnan(g[k]) or np.isnan(g[k + 1]):
            continue
        if g[k] == 0.0:
            bracket = (c_grid[k], c_grid[k])
            break
        if g[k] * g[k + 1] < 0.0:
            bracket = (c_grid[k], c_grid[k + 1])
            break
    if bracket is None:
        raise BracketError(
            f"no sign change for theta_target={theta_target:.6f} over the "
            f"c-bracket [{c_grid[0]:.4f}, {c_grid[-1]:.4f}]",
            c_grid,
            angles,
        )

    a_c, b_c = bracket
    fa, fb = angle_at_crossing(a_c) - theta_target, angle_at_crossing(b_c) - theta_target
    c_prev, f_prev = a_c, fa
    c_cur, f_cur = b_c, fb
    for _ in range(80):
        if abs(f_cur) <= tol:
            break
        denom = f_cur - f_prev
        if denom != 0.0:
            c_next = c_cur - f_cur * (c_cur - c_prev) / denom
        else:
            c_next = 0.5 * (a_c + b_c)
        if not (a_c <= c_next <= b_c):
            c_next = 0.5 * (a_c + b_c)
        f_next = angle_at_crossing(c_next) - theta_target
        # keep the bracket valid for the bisection fallback
        if not math.isnan(f_next):
            if fa * f_next <= 0.0:
                b_c, fb = c_next, f_next
            else:
                a_c, fa = c_next, f_next
        c_prev, f_prev = c_cur, f_cur
        c_cur, f_cur = c_next, f_next

    prof = integrate_geodesic(c_cur, t_end, tol=int_tol)
    t_cross, state = first_descending_crossing(prof, z_line)
    return ShootResult(
        c1=float(c_cur),
        theta_achieved=float(state[2]),
        residual=float(state[2] - theta_target),
        iterations=evals[0],
        r_cross=float(state[1]),
        t_cross=float(t_cross),
    )


# ---------------------------------------------------------------------------
# graph form over the circle of radius sqrt(2) and its linearization


@dataclass
class ScalarProfile:
    """Sampled scalar ODE solution with dense evaluation."""

    t: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    truncated: bool
    _dense: object = field(default=None, repr=False)
    t_start: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, self.t_start, self.t[-1])
        return self._dense(tc)


def graph_ode_h(c_h: float, t_end: float, tol: float = 1e-12) -> ScalarProfile:
    """Integrate the log-radius graph equation of profile curves.

    h(t) = log-radius of the profile written as a polar graph over the
    circle of radius sqrt(2); satisfies h''/(1+h'^2) + cot(t) h' + e^{2h} - 2
    = 0 with h(0) = c_h, h'(0) = 0.  The regular-singular point t=0 is
    crossed with the series start h ~ c_h - (e^{2 c_h} - 2) t^2 / 4.
    """
    k = (math.exp(2.0 * c_h) - 2.0) / 4.0
    t0 = T0_SERIES
    y0 = (c_h - k * t0 * t0, -2.0 * k * t0)

    def rhs(t, y):
        h, p = y
        return (p, -(1.0 + p * p) * (p / math.tan(t) + math.exp(2.0 * h) - 2.0))

    def blowup(t, y):
        return abs(y[1]) - 1e3

    blowup.terminal = True
    blowup.direction = 1

    sol = solve_ivp(rhs, (t0, t_end), y0, method="RK45", rtol=tol, atol=tol,
                    dense_output=True, events=blowup)
    if not sol.success:  # pragma: no cover
        raise RuntimeError(f"graph ODE integration failed: {sol.message}")
    return ScalarProfile(
        t=sol.t, values=sol.y[0].copy(), derivs=sol.y[1].copy(),
        truncated=sol.status == 1, _dense=sol.sol, t_start=t0,
    )


def legendre_psi(t_end: float, tol: float = 1e-12) -> ScalarProfile:
    """First-order response of graph_ode_h to the intercept.

    Solves psi'' + cot(t) psi' + 4 psi = 0 with psi(0)=1, psi'(0)=0 via the
    series start psi ~ 1 - t^2 + (5/24) t^4.
    """
    if not 0.0 < t_end < math.pi:
        raise ValueError(f"t_end must lie in (0, pi), got {t_end}")
    t0 = T0_SERIES
    y0 = (1.0 - t0 * t0 + (5.0 / 24.0) * t0 ** 4,
          -2.0 * t0 + (5.0 / 6.0) * t0 ** 3)

    def rhs(t, y):
        psi, p = y
        return (p, -p / math.tan(t) - 4.0 * psi)

    sol = solve_ivp(rhs, (t0, t_end), y0, method="RK45", rtol=tol, atol=tol,
                    dense_output=True)
    if not sol.success:  # pragma: no cover
        raise RuntimeError(f"legendre ODE integration failed: {sol.message}")
    return ScalarProfile(
        t=sol.t, values=sol.y[0].copy(), derivs=sol.y[1].copy(),
        truncated=False, _dense=sol.sol, t_start=t0,
    )


def hemisphere_state(t) -> np.ndarray:
    """Closed-form cap profile for c = sqrt(2) (the sphere of radius sqrt 2)."""
    t = np.asarray(t, dtype=float)
    ang = math.pi / 2.0 + t / SQRT2
    return np.array([SQRT2 * np.sin(ang), -SQRT2 * np.cos(ang), ang])
