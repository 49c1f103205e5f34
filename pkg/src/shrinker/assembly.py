"""Assembly of the desingularized initial surfaces.

The initial surface is glued from closed-form pieces: the wrapped, tilted
saddle template (core plus four wings), rotationally symmetric caps generated
by a fitted profile geodesic, a flat inner disk and a truncated outer plane.
All pieces are meshed as structured grids welded through a key-addressed
vertex registry, so the result is watertight and exactly invariant under the
dihedral symmetry group and the half-turn about the x-axis.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .mesh import REGIONS, SurfaceMesh, VertexRegistry, fan_faces, grid_faces
from .params import SQRT2, ConstructionParams
from .profiles import CapProfile, integrate_geodesic, shoot_cap
from .scherk import sigma

log = logging.getLogger("shrinker")


class AssemblyError(RuntimeError):
    def __init__(self, msg, rings=None):
        super().__init__(msg)
        self.rings = rings or []


# ---------------------------------------------------------------------------
# cutoff machinery


def _smooth_base(x):
    """C^inf step: 0 on (-inf, 1/3], 1 on [2/3, inf), increasing between."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    out[x >= 2.0 / 3.0] = 1.0
    mid = (x > 1.0 / 3.0) & (x < 2.0 / 3.0)
    if np.any(mid):
        u = 3.0 * (x[mid] - 1.0 / 3.0)
        ea = np.exp(-1.0 / u)
        eb = np.exp(-1.0 / (1.0 - u))
        out[mid] = ea / (ea + eb)
    return out


def cutoff(a_end, b_end, s):
    """Smooth transition equal to 0 at a_end and 1 at b_end.

    Descending argument order is allowed; the transition occupies the middle
    third of the interval.
    """
    if a_end == b_end:
        raise ValueError("cutoff endpoints must differ")
    val = _smooth_base((np.asarray(s, dtype=float) - a_end) / (b_end - a_end))
    return float(val) if val.ndim == 0 else val


# ---------------------------------------------------------------------------
# pointwise construction maps


def unbalance_map(b, p):
    """Tilt map: rotation about the y-axis by a blended angle.

    Identity on {|z| < |x|/2}; rotation by b toward +x on the cones
    {|z| > 2|x|, |z| > 1} (the lower cone rotates by -b so both wings move
    toward the positive x-axis and the half-turn equivariance is kept).
    """
    if abs(b) >= 0.1:
        raise ValueError(f"|b| must be < 1/10, got {b}")
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    az = np.abs(z)
    ratio = az / np.maximum(np.abs(x), 1e-9)
    mu = _smooth_base((ratio - 0.5) / 1.5) * _smooth_base((az - 0.5) / 0.5)
    alpha = b * np.sign(z) * mu
    ca, sa = np.cos(alpha), np.sin(alpha)
    out = np.empty_like(p)
    out[..., 0] = x * ca + z * sa
    out[..., 1] = y
    out[..., 2] = -x * sa + z * ca
    return out


def wrap_map(R, tau, p):
    """Wrap the template around a circle of (large-scale) radius R."""
    if R <= 0:
        raise ValueError("R must be positive")
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    ang = tau * y / SQRT2
    ex = np.exp(x / R)
    out = np.empty_like(p)
    out[..., 0] = R * ex * np.cos(ang)
    out[..., 1] = R * ex * np.sin(ang)
    out[..., 2] = z
    return out


# ---------------------------------------------------------------------------
# cap fitting


@dataclass
class CapFit:
    """Matched cap profile and intersection radius for a given tilt."""

    c: float
    R_tilde: float
    beta: float
    theta_target: float
    theta_achieved: float
    position_mismatch: float
    angle_mismatch: float
    u_pivot: float
    r_pivot: float
    rounds: int
    profile: CapProfile = field(repr=False)


def _beta_of(b, tau, a, R_tilde):
    return math.atan(math.tan(b) * math.exp(a * tau * math.tan(b) / R_tilde))


def fit_cap_and_radius(
    b, tau, a,
    delta_c=0.2, delta_theta=0.15,
    tol=1e-12, max_rounds=100, angle_tol=1e-13,
) -> CapFit:
    """Fit the cap intercept c and radius R so wing and cap share a geodesic.

    The cap profile must make its first descending crossing of z = tau*a at
    radius R e^{a tau tan b / R} with tangent angle pi + beta(b, R); beta is
    recomputed from the fitted R until self-consistent.
    """
    z_line = tau * a
    R = SQRT2  # admissible starting guess
    history = []
    last_target = None
    res = None
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        beta = _beta_of(b, tau, a, R)
        theta_target = math.pi + beta
        if theta_target != last_target:
            res = shoot_cap(theta_target, z_line, tol=angle_tol,
                            delta_c=delta_c, delta_theta=delta_theta)
            last_target = theta_target
        r_star = res.r_cross
        # invert R e^{a tau tan(b)/R} = r_star by fixed point (contraction
        # factor ~ a tau |tan b| / R << 1)
        R_new = r_star
        for _ in range(60):
            R_next = r_star * math.exp(-a * tau * math.tan(b) / R_new)
            if abs(R_next - R_new) < 1e-15:
                R_new = R_next
                break
            R_new = R_next
        history.append((R, R_new, res.c1, res.residual))
        if abs(R_new - R) < tol:
            R = R_new
            break
        R = R_new
    else:
        raise RuntimeError(
            f"cap fit did not converge in {max_rounds} rounds; "
            f"residual history: {[(f'{x[0]:.6f}', f'{x[1]:.6f}') for x in history]}"
        )
    beta = _beta_of(b, tau, a, R)
    r_pivot = R * math.exp(a * tau * math.tan(b) / R)
    profile = integrate_geodesic(res.c1, min(res.t_cross + 0.25, 3 * math.pi / SQRT2),
                                 tol=1e-12)
    return CapFit(
        c=res.c1,
        R_tilde=R,
        beta=beta,
        theta_target=math.pi + beta,
        theta_achieved=res.theta_achieved,
        position_mismatch=abs(r_pivot - res.r_cross),
        angle_mismatch=abs(res.theta_achieved - (math.pi + beta)),
        u_pivot=res.t_cross,
        r_pivot=r_pivot,
        rounds=rounds,
        profile=profile,
    )


# ---------------------------------------------------------------------------
# fitted construction


class Construction:
    """Parameters plus the fitted cap data and reparametrization tables."""

    def __init__(self, params: ConstructionParams, fit: CapFit, z_angle=None):
        self.params = params
        self.fit = fit
        # tilt angle used inside the wrap/tilt factor only; the w-field
        # differentiates through this while holding the fit frozen
        self.z_angle = params.b if z_angle is None else z_angle
        self._u_dense = None

    @classmethod
    def from_params(cls, params: ConstructionParams) -> "Construction":
        fit = fit_cap_and_radius(
            params.b, params.tau, params.a,
            delta_c=params.delta_c, delta_theta=params.delta_theta,
        )
        params = params.replace(R_tilde=fit.R_tilde)
        con = cls(params, fit)
        con._solve_reparam()
        return con

    def with_z_angle(self, b_z) -> "Construction":
        """Variant moving only the tilt factor; fit and profile shared."""
        con = Construction(self.params, self.fit, z_angle=b_z)
        con._u_dense = self._u_dense
        return con

    # -- geodesic reparametrization ----------------------------------------
    def _solve_reparam(self):
        tau = self.params.tau
        prof = self.fit.profile

        def rhs(s, u):
            return (-tau * prof(u[0])[1] / SQRT2,)

        s_end = self.params.s_max + 2.0
        sol = solve_ivp(rhs, (0.0, s_end), [self.fit.u_pivot], method="RK45",
                        rtol=1e-12, atol=1e-14, dense_output=True)
        if not sol.success or sol.y[0, -1] <= 10 * 1e-4:
            raise AssemblyError(
                "wing reparametrization reached the axis before s_max; "
                "reduce delta_s or increase m"
            )
        self._u_dense = sol.sol

    def u_of_s(self, s):
        s_arr = np.asarray(s, dtype=float)
        u = self._u_dense(s_arr.ravel() if s_arr.ndim else s_arr[None])[0]
        if s_arr.ndim == 0:
            return float(u[0])
        return u.reshape(s_arr.shape)

    def kappa_state(self, s):
        """(z, r, theta) of the wing geodesic at wing coordinate s."""
        s_arr = np.asarray(s, dtype=float)
        u = np.atleast_1d(self.u_of_s(s_arr)).ravel()
        st = self.fit.profile(u)
        return st.reshape((3,) + (s_arr.shape if s_arr.ndim else (1,)))

    def rho(self, s):
        """Conformal factor of the wing chart (small-scale radius / sqrt 2)."""
        r = self.kappa_state(s)[1] / SQRT2
        return float(r[0]) if np.ndim(s) == 0 else r

    # -- embedding maps (large scale) ---------------------------------------
    @property
    def R_large(self):
        return self.params.R_tilde / self.params.tau

    def wrap_tilt(self, pts):
        return wrap_map(self.R_large, self.params.tau,
                        unbalance_map(self.z_angle, pts))

    def kappa_map(self, s, y):
        """Conformal parametrization of the asymptotic cap surface."""
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        z, r, _ = self.kappa_state(s)
        z, r = np.reshape(z, s.shape), np.reshape(r, s.shape)
        ang = self.params.tau * y / SQRT2
        tau = self.params.tau
        out = np.empty(np.broadcast_shapes(s.shape, y.shape) + (3,))
        out[..., 0] = r * np.cos(ang) / tau
        out[..., 1] = r * np.sin(ang) / tau
        out[..., 2] = z / tau
        return out

    def kappa_normal(self, s, y):
        """Gauss map of the kappa surface, equal to (cos b, 0, -sin b)-style
        at the pivot: (cos th cos ang, cos th sin ang, -sin th)."""
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        th = np.reshape(self.kappa_state(s)[2], s.shape)
        ang = self.params.tau * y / SQRT2
        out = np.empty(np.broadcast_shapes(s.shape, y.shape) + (3,))
        out[..., 0] = np.cos(th) * np.cos(ang)
        out[..., 1] = np.cos(th) * np.sin(ang)
        out[..., 2] = -np.sin(th)
        return out

    def psi_sigma_cut(self, s):
        """Wing-graph cutoff: 1 below 3 delta_s/tau, 0 above 4 delta_s/tau."""
        return cutoff(self.params.sigma_cut_hi, self.params.sigma_cut_lo, s)

    def wing_embedding(self, s, y, wing="top"):
        """Large-scale embedding of the four wings.

        The top wing blends the wrapped tilted template into the graph of the
        (cut off) wing function over the asymptotic cap surface; the bottom
        wing is its exact image under the half-turn about the x-axis; the
        inner and outer wings are wrapped template graphs cut off onto the
        flat disk and plane.
        """
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        a = self.params.a
        if wing == "bottom":
            out = self.wing_embedding(s, -y, wing="top")
            return out * np.array([1.0, -1.0, -1.0])
        if wing == "top":
            sig = sigma(s, y, a)
            blend = np.asarray(cutoff(1.0, 0.0, s))
            shape = np.broadcast_shapes(s.shape, y.shape)
            out = np.zeros(shape + (3,))
            need1 = np.broadcast_to(blend > 0.0, shape)
            need2 = np.broadcast_to(blend < 1.0, shape)
            if np.any(need1):
                pts = np.empty(shape + (3,))
                pts[..., 0] = sig
                pts[..., 1] = np.broadcast_to(y, shape)
                pts[..., 2] = s + a
                out += np.where(need1[..., None],
                                np.broadcast_to(blend, shape)[..., None]
                                * self.wrap_tilt(pts), 0.0)
            if np.any(need2):
                graph = self.kappa_map(s, y) + (
                    (self.psi_sigma_cut(s) * sig)[..., None]
                    * self.kappa_normal(s, y))
                out += np.where(need2[..., None],
                                (1.0 - np.broadcast_to(blend, shape))[..., None]
                                * graph, 0.0)
            return out
        sig = sigma(s, y, a) * self.psi_sigma_cut(s)
        shape = np.broadcast_shapes(s.shape, y.shape)
        pts = np.empty(shape + (3,))
        if wing == "outer":
            pts[..., 0] = s + a
            pts[..., 1] = np.broadcast_to(y, shape)
            pts[..., 2] = sig
        elif wing == "inner":
            pts[..., 0] = -(s + a)
            pts[..., 1] = np.broadcast_to(y, shape)
            pts[..., 2] = -sig
        else:
            raise ValueError(f"unknown wing {wing!r}")
        return self.wrap_tilt(pts)

    # -- derived radii -------------------------------------------------------
    @property
    def R_bar(self):
        p = self.params
        return p.R_tilde * math.exp(p.tau * (p.a + p.ubar_a) / p.R_tilde)

    @property
    def rho_max(self):
        return self.params.rho_max_factor * self.R_bar

    @property
    def r_plane_seam(self):
        p = self.params
        return p.R_tilde * math.exp(p.tau * (p.s_max + p.a) / p.R_tilde)

    @property
    def r_disk(self):
        p = self.params
        return p.R_tilde * math.exp(-p.tau * (p.s_max + p.a) / p.R_tilde)


# convenience wrappers matching the operation names ------------------------

def kappa_map(construction, s, y):
    return construction.kappa_map(s, y)


def wing_embedding(construction, s, y, wing="top"):
    return construction.wing_embedding(s, y, wing)


# ---------------------------------------------------------------------------
# saddle core quadrant parametrization (template coordinates)


def core_quadrant_points(y, lam, a, quadrant):
    """Exact points of the saddle core.

    Quadrant 1 covers {x >= 0, z >= 0, y in [0, pi]}; for fixed y the curve
    sinh x sinh z = sin y is parametrized by lam in [-1, 1] running from the
    outer-wing ring (x = a) to the top-wing ring (z = a).  Quadrants 2-4 are
    the exact sign mirrors (2: z<0 with y<0, 3: x<0 with y<0, 4: x<0, z<0).
    """
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if quadrant == 1:
        yy = y
    elif quadrant in (2, 3):
        yy = -y
    else:
        yy = y
    sy = np.sin(yy)
    qstar = 0.5 * (a - np.arcsinh(sy / math.sinh(a)))
    q = lam * qstar
    w = 2.0 * sy + np.cosh(2.0 * q)
    p = 0.5 * np.arccosh(np.maximum(w, 1.0))
    x1 = p - q
    z1 = p + q
    shape = np.broadcast_shapes(y.shape, lam.shape)
    out = np.empty(shape + (3,))
    out[..., 1] = np.broadcast_to(y, shape)
    if quadrant == 1:
        out[..., 0], out[..., 2] = x1, z1
    elif quadrant == 2:
        out[..., 0], out[..., 2] = x1, -z1
    elif quadrant == 3:
        out[..., 0], out[..., 2] = -x1, z1
    else:
        out[..., 0], out[..., 2] = -x1, -z1
    return out


def _core_arm_point(y, lam, a, quadrant):
    """Exact positions on the degenerate columns where sin y = 0."""
    al = a * abs(lam)
    if lam >= 0:
        x, z = 0.0, al
    else:
        x, z = al, 0.0
    if quadrant in (3, 4):
        x = -x
    if quadrant in (2, 4):
        z = -z
    return np.array([x, y, z])


# ---------------------------------------------------------------------------
# the assembled initial surface


def _rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def assemble_initial_surface(construction: Construction, check_stitching=True):
    """Build the watertight initial surface mesh (small scale).

    One fundamental period of the wrapped template (four wings plus the
    four-quadrant core) is evaluated in closed form and replicated by the
    rotation group; caps of revolution, the inner flat disk and the outer
    flat annulus (truncated at rho_max) share their junction rings with the
    wing grids through the vertex registry, so the mesh is closed.
    """
    con = construction
    p = con.params
    tau, a, m, Ny = p.tau, p.a, p.m, p.ny
    S = p.s_max
    Ns = max(4, int(math.ceil(S / p.ds)))
    dse = S / Ns
    mNy = m * Ny
    Nq = 2 * max(3, int(math.ceil(0.6 * a / p.ds)))

    reg = VertexRegistry()
    faces = []
    y_loc = -math.pi + 2.0 * math.pi * np.arange(Ny + 1) / Ny
    s_rows = dse * np.arange(Ns + 1)
    s_rows[-1] = S

    def g_of(k, j):
        return (k * Ny + j) % mNy

    rot = [_rotation(2.0 * math.pi * k / m) for k in range(m)]

    # ---- wings ------------------------------------------------------------
    wing_specs = [
        ("wT", "top", "wing-top"),
        ("wB", "bottom", "wing-bottom"),
        ("wI", "inner", "wing-inner"),
        ("wO", "outer", "wing-outer"),
    ]
    wing_pts0 = {}
    for kind, wing, _ in wing_specs:
        pts = con.wing_embedding(s_rows[:, None], y_loc[None, :], wing=wing)
        wing_pts0[kind] = tau * pts  # small scale
    for k in range(m):
        Rk = rot[k]
        for kind, wing, region in wing_specs:
            pts = wing_pts0[kind] @ Rk.T
            idx = np.empty((Ns + 1, Ny + 1), dtype=np.int64)
            for i in range(Ns + 1):
                for j in range(Ny + 1):
                    idx[i, j] = reg.add((kind, i, g_of(k, j)), pts[i, j],
                                        region, s_rows[i])
            flip = kind in ("wB", "wI")
            faces.append(grid_faces(idx, flip=flip))

    # ---- core quadrants ----------------------------------------------------
    lam = -1.0 + 2.0 * np.arange(Nq + 1) / Nq
    quad_specs = [
        # (key, quadrant, local j range, top wing key, bottom key, flip)
        ("q1", 1, range(Ny // 2, Ny + 1), "wT", "wO", False),
        ("q2", 2, range(0, Ny // 2 + 1), "wB", "wO", True),
        ("q3", 3, range(0, Ny // 2 + 1), "wT", "wI", True),
        ("q4", 4, range(Ny // 2, Ny + 1), "wB", "wI", False),
    ]
    arm_axis = {
        ("q1", 1): "Z+", ("q1", -1): "X+",
        ("q2", 1): "Z-", ("q2", -1): "X+",
        ("q3", 1): "Z+", ("q3", -1): "X-",
        ("q4", 1): "Z-", ("q4", -1): "X-",
    }
    stitch_gaps = {}
    for k in range(m):
        Rk = rot[k]
        for key, quad, jrange, top_key, low_key, flip in quad_specs:
            jlist = list(jrange)
            idx = np.empty((Nq + 1, len(jlist)), dtype=np.int64)
            for col, j in enumerate(jlist):
                yj = y_loc[j]
                on_arm = j in (0, Ny // 2, Ny)
                for kq in range(Nq + 1):
                    g = g_of(k, j)
                    if kq == Nq:
                        vkey = (top_key, 0, g)
                    elif kq == 0:
                        vkey = (low_key, 0, g)
                    elif on_arm:
                        if kq == Nq // 2:
                            vkey = ("sdl", g)
                        elif kq > Nq // 2:
                            vkey = ("arm" + arm_axis[(key, 1)], kq - Nq // 2, g)
                        else:
                            vkey = ("arm" + arm_axis[(key, -1)], Nq // 2 - kq, g)
                    else:
                        vkey = (key, kq, g)
                    if vkey in reg:
                        idx[kq, col] = reg.get(vkey)
                        if check_stitching and kq in (0, Nq) and k == 0:
                            if on_arm:
                                tpt = _core_arm_point(yj, lam[kq], a, quad)
                            else:
                                tpt = core_quadrant_points(
                                    np.array(yj), np.array(lam[kq]), a, quad)
                            pos = tau * con.wrap_tilt(tpt) @ Rk.T
                            gap = float(np.linalg.norm(
                                pos - reg.positions[idx[kq, col]]))
                            ring = (key, "top" if kq == Nq else "low")
                            stitch_gaps[ring] = max(gap,
                                                    stitch_gaps.get(ring, 0.0))
                        continue
                    if on_arm:
                        tpt = _core_arm_point(yj, lam[kq], a, quad)
                    else:
                        tpt = core_quadrant_points(
                            np.array(yj), np.array(lam[kq]), a, quad)
                    pos = tau * con.wrap_tilt(tpt) @ Rk.T
                    idx[kq, col] = reg.add(vkey, pos, "core", 0.0)
            faces.append(grid_faces(idx, flip=flip))
    if check_stitching:
        bad = [(r, g) for r, g in stitch_gaps.items() if g > p.ds]
        if bad:
            raise AssemblyError(
                f"stitching gap exceeds resolution on rings {bad}", rings=bad)

    # ---- caps ---------------------------------------------------------------
    u_meet = con.u_of_s(S)
    rho_meet = float(con.rho(S))
    n_cap = max(3, int(math.ceil(u_meet / (tau * rho_meet * dse))))
    u_rings = u_meet * (1.0 - np.arange(1, n_cap) / n_cap)
    phi_g = -math.pi / m + 2.0 * math.pi * np.arange(mNy) / mNy
    cap_states = con.fit.profile(u_rings)  # (3, n_cap-1)
    pole = np.array([0.0, 0.0, con.fit.c])
    for sign, ckey, wkey, region, pkey in (
        (1.0, "capT", "wT", "cap-top", "poleT"),
        (-1.0, "capB", "wB", "cap-bottom", "poleB"),
    ):
        rows = [np.array([reg.get((wkey, Ns, g)) for g in range(mNy)])]
        for kr in range(1, n_cap):
            zr, rr = cap_states[0, kr - 1], cap_states[1, kr - 1]
            ring = np.empty(mNy, dtype=np.int64)
            for g in range(mNy):
                pos = np.array([rr * math.cos(phi_g[g]),
                                sign * rr * math.sin(phi_g[g]),
                                sign * zr])
                ring[g] = reg.add((ckey, kr, g), pos, region, S)
            rows.append(ring)
        pid = reg.add((pkey,), pole * np.array([1.0, 1.0, sign]), region, S)
        grid = np.stack(rows)
        grid = np.concatenate([grid, grid[:, :1]], axis=1)
        flip = sign < 0
        faces.append(grid_faces(grid, flip=flip))
        faces.append(fan_faces(pid, rows[-1][::-1] if not flip else rows[-1]))

    # ---- inner disk ---------------------------------------------------------
    r_disk = con.r_disk
    ratio = 0.72
    n_disk = max(3, int(math.ceil(math.log(0.18) / math.log(ratio))))
    rows = [np.array([reg.get(("wI", Ns, g)) for g in range(mNy)])]
    for l in range(1, n_disk + 1):
        rl = r_disk * ratio ** l
        ring = np.empty(mNy, dtype=np.int64)
        for g in range(mNy):
            pos = np.array([rl * math.cos(phi_g[g]), rl * math.sin(phi_g[g]), 0.0])
            ring[g] = reg.add(("dsk", l, g), pos, "disk", S)
        rows.append(ring)
    cid = reg.add(("dskC",), np.zeros(3), "disk", S)
    grid = np.stack(rows)
    grid = np.concatenate([grid, grid[:, :1]], axis=1)
    faces.append(grid_faces(grid, flip=True))
    faces.append(fan_faces(cid, rows[-1]))

    # ---- outer plane ---------------------------------------------------------
    x_seam = S + a
    x_out = (p.R_tilde / tau) * math.log(con.rho_max / p.R_tilde)
    n_pl = max(3, int(math.ceil((x_out - x_seam) / dse)))
    x_rows = np.linspace(x_seam, x_out, n_pl + 1)
    rows = [np.array([reg.get(("wO", Ns, g)) for g in range(mNy)])]
    for l in range(1, n_pl + 1):
        rl = p.R_tilde * math.exp(tau * x_rows[l] / p.R_tilde)
        ring = np.empty(mNy, dtype=np.int64)
        for g in range(mNy):
            pos = np.array([rl * math.cos(phi_g[g]), rl * math.sin(phi_g[g]), 0.0])
            ring[g] = reg.add(("pln", l, g), pos, "plane", S)
        rows.append(ring)
    grid = np.stack(rows)
    grid = np.concatenate([grid, grid[:, :1]], axis=1)
    faces.append(grid_faces(grid))

    all_faces = np.concatenate(faces)
    mesh = reg.build_mesh(all_faces, p, orient=True)
    # global orientation: the top pole carries the inward normal -e_z
    pole_idx = reg.get(("poleT",))
    if mesh.vertex_normals()[pole_idx, 2] > 0:
        mesh = SurfaceMesh(mesh.vertices, mesh.faces[:, ::-1].copy(),
                           mesh.region, mesh.s, params=p, orient=False)
    mesh._cache["construction"] = con
    mesh._cache["registry_meta"] = {
        "Ns": Ns, "Nq": Nq, "n_cap": n_cap, "n_disk": n_disk, "n_plane": n_pl,
        "mNy": mNy, "dse": dse,
    }
    log.info("assembled m=%d mesh: %d vertices, %d faces",
             m, mesh.n_vertices, mesh.n_faces)
    return mesh


# ---------------------------------------------------------------------------
# unwrapped template strip (for balancing checks)


def build_scherk_strip(b, a, s_max=8.0, ds=0.2, ny=32, periods=3):
    """Unwrapped, optionally tilted saddle strip spanning several periods.

    The middle period is flagged in the cache under ``measure_mask`` so
    quadrature can be restricted to vertices with full interior stencils.
    """
    reg = VertexRegistry()
    faces = []
    Ns = max(4, int(math.ceil(s_max / ds)))
    s_rows = s_max * np.arange(Ns + 1) / Ns
    Ny = ny
    half = periods // 2
    nyy = periods * Ny
    y_all = -math.pi * periods + 2.0 * math.pi * np.arange(nyy + 1) / Ny

    def period_y(j):
        return y_all[j]

    Nq = 2 * max(3, int(math.ceil(0.6 * a / ds)))
    lam = -1.0 + 2.0 * np.arange(Nq + 1) / Nq

    # wings as graphs over the whole strip (no cutoff: exact surface)
    sig = sigma(s_rows[:, None], y_all[None, :], a)
    wing_pts = {
        "wT": np.stack([sig, np.broadcast_to(y_all, sig.shape),
                        np.broadcast_to(s_rows[:, None] + a, sig.shape)], axis=-1),
        "wB": np.stack([-sig, np.broadcast_to(y_all, sig.shape),
                        np.broadcast_to(-(s_rows[:, None] + a), sig.shape)], axis=-1),
        "wO": np.stack([np.broadcast_to(s_rows[:, None] + a, sig.shape),
                        np.broadcast_to(y_all, sig.shape), sig], axis=-1),
        "wI": np.stack([np.broadcast_to(-(s_rows[:, None] + a), sig.shape),
                        np.broadcast_to(y_all, sig.shape), -sig], axis=-1),
    }
    region_of = {"wT": "wing-top", "wB": "wing-bottom",
                 "wI": "wing-inner", "wO": "wing-outer"}
    for kind in ("wT", "wB", "wI", "wO"):
        pts = unbalance_map(b, wing_pts[kind])
        idx = np.empty((Ns + 1, nyy + 1), dtype=np.int64)
        for i in range(Ns + 1):
            for j in range(nyy + 1):
                idx[i, j] = reg.add((kind, i, j), pts[i, j],
                                    region_of[kind], s_rows[i])
        faces.append(grid_faces(idx, flip=kind in ("wB", "wI")))

    quad_specs = [
        ("q1", 1, 0, "wT", "wO", False),
        ("q2", 2, -1, "wB", "wO", True),
        ("q3", 3, -1, "wT", "wI", True),
        ("q4", 4, 0, "wB", "wI", False),
    ]
    arm_axis = {
        ("q1", 1): "Z+", ("q1", -1): "X+",
        ("q2", 1): "Z-", ("q2", -1): "X+",
        ("q3", 1): "Z+", ("q3", -1): "X-",
        ("q4", 4): None,
    }
    arm_axis.update({("q4", 1): "Z-", ("q4", -1): "X-"})
    for per in range(periods):
        j0 = per * Ny
        for key, quad, offset_sign, top_key, low_key, flip in quad_specs:
            if offset_sign == 0:
                jlist = list(range(j0 + Ny // 2, j0 + Ny + 1))
            else:
                jlist = list(range(j0, j0 + Ny // 2 + 1))
            idx = np.empty((Nq + 1, len(jlist)), dtype=np.int64)
            for col, j in enumerate(jlist):
                yj = period_y(j)
                on_arm = (j - j0) in (0, Ny // 2, Ny)
                for kq in range(Nq + 1):
                    if kq == Nq:
                        vkey = (top_key, 0, j)
                    elif kq == 0:
                        vkey = (low_key, 0, j)
                    elif on_arm:
                        if kq == Nq // 2:
                            vkey = ("sdl", j)
                        elif kq > Nq // 2:
                            vkey = ("arm" + arm_axis[(key, 1)], kq - Nq // 2, j)
                        else:
                            vkey = ("arm" + arm_axis[(key, -1)], Nq // 2 - kq, j)
                    else:
                        vkey = (key, kq, j)
                    if vkey in reg:
                        idx[kq, col] = reg.get(vkey)
                        continue
                    if on_arm:
                        tpt = _core_arm_point(yj, lam[kq], a, quad)
                    else:
                        tpt = core_quadrant_points(
                            np.array(yj), np.array(lam[kq]), a, quad)
                    pos = unbalance_map(b, tpt)
                    idx[kq, col] = reg.add(vkey, pos, "core", 0.0)
            faces.append(grid_faces(idx, flip=flip))

    mesh = reg.build_mesh(np.concatenate(faces), None, orient=True)
    ymid = mesh.vertices[:, 1] if b == 0 else None
    # measure mask from the pre-tilt y label: reconstruct via key table
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    for key, idx in reg.index.items():
        if key[0] in ("wT", "wB", "wI", "wO", "q1", "q2", "q3", "q4"):
            j = key[2]
            mask[idx] = half * Ny <= j <= (half + 1) * Ny
        elif key[0].startswith("arm") or key[0] == "sdl":
            j = key[-1]
            mask[idx] = half * Ny <= j <= (half + 1) * Ny
    mesh._cache["measure_mask"] = mask
    mesh._cache["strip_meta"] = {"b": b, "a": a, "s_max": s_max,
                                 "Ns": Ns, "Ny": Ny, "periods": periods}
    return mesh
