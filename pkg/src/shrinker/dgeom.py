"""Discrete curvature, residuals, weighted norms and symmetry utilities.

Curvature comes from per-vertex quadric fits over the 2-ring in a tangent
frame: the fitted gradient corrects the normal and the fitted Hessian gives
the shape operator, so the mean curvature (sum convention), |A|^2 and the
oriented normal are consistent with each other.  The same fit machinery
provides tangential first and second derivatives of scalar fields for the
operator assembly and for the weighted-norm proxies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .params import SQRT2

_CHUNK = 20000


class DegenerateFitError(RuntimeError):
    def __init__(self, msg, vertices):
        super().__init__(msg)
        self.vertices = vertices


@dataclass
class MeshField:
    """Scalar values on mesh vertices."""

    mesh: object
    values: np.ndarray
    kind: str = "generic"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != self.mesh.n_vertices:
            raise ValueError("field length does not match mesh")

    def copy(self, values=None, kind=None):
        return MeshField(self.mesh,
                         self.values.copy() if values is None else values,
                         kind or self.kind)

    def to_csv(self, path):
        with open(path, "w") as f:
            f.write("vertex_id,value\n")
            for i, v in enumerate(self.values):
                f.write(f"{i},{v!r}\n")


@dataclass(frozen=True)
class NormSpec:
    """Weighted-norm selector.

    order 0 or 2; weight one of exp-gamma-s, exp-mixed-b0, exp-mixed-b2,
    radial-star, cone; scale 'small' or 'large'.  The b2 weight uses the
    tau^-10 loss factor; pass tau10=False on construction of reports for the
    variant without it.
    """

    order: int = 0
    alpha: float = 0.5
    weight: str = "exp-gamma-s"
    scale: str = "large"

    def __post_init__(self):
        if self.order not in (0, 2):
            raise ValueError("order must be 0 or 2")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0,1)")
        if self.weight not in ("exp-gamma-s", "exp-mixed-b0", "exp-mixed-b2",
                               "radial-star", "cone"):
            raise ValueError(f"unknown weight {self.weight!r}")
        if self.scale not in ("small", "large"):
            raise ValueError("scale must be 'small' or 'large'")
        if self.weight in ("radial-star", "cone") and self.scale != "small":
            raise ValueError(f"{self.weight} weights live on the small scale")


# ---------------------------------------------------------------------------
# quadric fits


def _neighbor_table(mesh):
    """Padded 2-ring neighbor table (small stencils) plus oversized list."""
    def build():
        indices, indptr = mesh.two_ring()
        counts = np.diff(indptr)
        cap = 36
        big = np.nonzero(counts > cap)[0]
        n = mesh.n_vertices
        maxk = int(min(cap, counts.max()))
        nb = np.zeros((n, maxk), dtype=np.int64)
        mask = np.zeros((n, maxk), dtype=bool)
        small = counts <= cap
        rows = np.repeat(np.arange(n)[small], counts[small])
        offs = np.concatenate([np.arange(c) for c in counts[small]]) \
            if np.any(small) else np.array([], dtype=int)
        vals = np.concatenate([indices[indptr[v]:indptr[v + 1]]
                               for v in np.nonzero(small)[0]]) \
            if np.any(small) else np.array([], dtype=int)
        nb[rows, offs] = vals
        mask[rows, offs] = True
        big_lists = {int(v): indices[indptr[v]:indptr[v + 1]] for v in big}
        small_mask = small
        return nb, mask, big_lists, small_mask
    return mesh._get("neighbor_table", build)


def _tangent_frames(mesh):
    def build():
        vn = mesh.vertex_normals()
        pick = np.argmin(np.abs(vn), axis=1)
        e = np.eye(3)[pick]
        t1 = e - vn * np.einsum("ij,ij->i", e, vn)[:, None]
        t1 /= np.linalg.norm(t1, axis=1)[:, None]
        t2 = np.cross(vn, t1)
        return t1, t2
    return mesh._get("tangent_frames", build)


def _fit_normal_eqs(dx, t1, t2, nrm, mask):
    """Design blocks for the quadric fit u = .5 h11 x^2 + h12 xy + .5 h22 y^2
    + g1 x + g2 y over masked neighbor offsets."""
    xi1 = np.einsum("nkj,nj->nk", dx, t1)
    xi2 = np.einsum("nkj,nj->nk", dx, t2)
    u = np.einsum("nkj,nj->nk", dx, nrm)
    A = np.stack([0.5 * xi1 * xi1, xi1 * xi2, 0.5 * xi2 * xi2, xi1, xi2],
                 axis=-1)
    Aw = A * mask[..., None]
    M = np.einsum("nkp,nkq->npq", Aw, A)
    return A, Aw, M, u * mask


def _solve_fit(M, ATu, vertex_ids):
    try:
        coef = np.linalg.solve(M, ATu[..., None])[..., 0]
    except np.linalg.LinAlgError:
        sv = np.linalg.eigvalsh(M)
        bad = vertex_ids[(sv[:, 0] <= 0) | (sv[:, 0] < 1e-12 * sv[:, -1])]
        raise DegenerateFitError(
            f"rank-deficient quadric fit at vertices {bad[:20].tolist()}", bad)
    return coef


def fit_frames(mesh):
    """Per-vertex (corrected normal, mean curvature, |A|^2); cached.

    Mean curvature uses the sum-of-principal-curvatures convention and the
    mesh orientation, so the sphere of radius sqrt(2) with inward normals
    reports +sqrt(2).
    """
    def build():
        n = mesh.n_vertices
        v = mesh.vertices
        nb, mask, big_lists, small_mask = _neighbor_table(mesh)
        t1, t2 = _tangent_frames(mesh)
        vn = mesh.vertex_normals()
        H = np.empty(n)
        A2 = np.empty(n)
        nu = np.empty((n, 3))
        for start in range(0, n, _CHUNK):
            ids = np.arange(start, min(start + _CHUNK, n))
            ids = ids[small_mask[ids]]
            if not len(ids):
                continue
            dx = v[nb[ids]] - v[ids][:, None, :]
            A, Aw, M, uw = _fit_normal_eqs(dx, t1[ids], t2[ids], vn[ids],
                                           mask[ids])
            ATu = np.einsum("nkp,nk->np", Aw, uw)
            coef = _solve_fit(M, ATu, ids)
            h11, h12, h22, g1, g2 = coef.T
            det_i = 1.0 + g1 * g1 + g2 * g2
            w = 1.0 / np.sqrt(det_i)
            tr_s = w * ((1 + g2 * g2) * h11 - 2 * g1 * g2 * h12
                        + (1 + g1 * g1) * h22) / det_i
            det_s = (w * w) * (h11 * h22 - h12 * h12) / det_i
            H[ids] = tr_s
            A2[ids] = tr_s * tr_s - 2.0 * det_s
            nu[ids] = w[:, None] * (vn[ids] - g1[:, None] * t1[ids]
                                    - g2[:, None] * t2[ids])
        for vi, lst in big_lists.items():
            dx = (v[lst] - v[vi])[None]
            A, Aw, M, uw = _fit_normal_eqs(
                dx, t1[vi][None], t2[vi][None], vn[vi][None],
                np.ones((1, len(lst)), dtype=bool))
            ATu = np.einsum("nkp,nk->np", Aw, uw)
            h11, h12, h22, g1, g2 = _solve_fit(M, ATu, np.array([vi]))[0]
            det_i = 1.0 + g1 * g1 + g2 * g2
            w = 1.0 / math.sqrt(det_i)
            tr_s = w * ((1 + g2 * g2) * h11 - 2 * g1 * g2 * h12
                        + (1 + g1 * g1) * h22) / det_i
            det_s = (w * w) * (h11 * h22 - h12 * h12) / det_i
            H[vi] = tr_s
            A2[vi] = tr_s * tr_s - 2.0 * det_s
            nu[vi] = w * (vn[vi] - g1 * t1[vi] - g2 * t2[vi])
        return nu, H, A2
    return mesh._get("fit_frames", build)


def vertex_frame(mesh, vertex):
    """(oriented normal, mean curvature, |A|^2) at one vertex."""
    nu, H, A2 = fit_frames(mesh)
    return nu[vertex], float(H[vertex]), float(A2[vertex])


def field_derivatives(mesh, fields):
    """Tangential fit derivatives of one or more vertex fields.

    ``fields`` has shape (n_vertices,) or (n_vertices, q).  Returns a dict
    with g1, g2, h11, h12, h22 arrays of matching shape (small scale).
    """
    f = np.asarray(fields, dtype=float)
    squeeze = f.ndim == 1
    if squeeze:
        f = f[:, None]
    n = mesh.n_vertices
    v = mesh.vertices
    nb, mask, big_lists, small_mask = _neighbor_table(mesh)
    t1, t2 = _tangent_frames(mesh)
    vn = mesh.vertex_normals()
    out = {k: np.empty((n, f.shape[1])) for k in
           ("g1", "g2", "h11", "h12", "h22")}
    for start in range(0, n, _CHUNK):
        ids = np.arange(start, min(start + _CHUNK, n))
        ids = ids[small_mask[ids]]
        if not len(ids):
            continue
        dx = v[nb[ids]] - v[ids][:, None, :]
        A, Aw, M, _ = _fit_normal_eqs(dx, t1[ids], t2[ids], vn[ids], mask[ids])
        du = (f[nb[ids]] - f[ids][:, None, :]) * mask[ids][..., None]
        ATu = np.einsum("nkp,nkq->npq", Aw, du)
        coef = np.linalg.solve(M, ATu)
        for col, key in enumerate(("h11", "h12", "h22", "g1", "g2")):
            out[key][ids] = coef[:, col, :]
    for vi, lst in big_lists.items():
        dx = (v[lst] - v[vi])[None]
        A, Aw, M, _ = _fit_normal_eqs(
            dx, t1[vi][None], t2[vi][None], vn[vi][None],
            np.ones((1, len(lst)), dtype=bool))
        du = (f[lst] - f[vi])[None]
        ATu = np.einsum("nkp,nkq->npq", Aw, du)
        coef = np.linalg.solve(M, ATu)
        for col, key in enumerate(("h11", "h12", "h22", "g1", "g2")):
            out[key][vi] = coef[0, col, :]
    if squeeze:
        out = {k: a[:, 0] for k, a in out.items()}
    return out


def gradient_operators(mesh):
    """Sparse tangential-gradient matrices (G1, G2) in the fit frames."""
    def build():
        n = mesh.n_vertices
        v = mesh.vertices
        nb, mask, big_lists, small_mask = _neighbor_table(mesh)
        t1, t2 = _tangent_frames(mesh)
        vn = mesh.vertex_normals()
        rows, cols, val1, val2 = [], [], [], []
        for start in range(0, n, _CHUNK):
            ids = np.arange(start, min(start + _CHUNK, n))
            ids = ids[small_mask[ids]]
            if not len(ids):
                continue
            dx = v[nb[ids]] - v[ids][:, None, :]
            A, Aw, M, _ = _fit_normal_eqs(dx, t1[ids], t2[ids], vn[ids],
                                          mask[ids])
            P = np.linalg.solve(M, np.transpose(Aw, (0, 2, 1)))
            g1w, g2w = P[:, 3, :], P[:, 4, :]
            msk = mask[ids]
            r = np.repeat(ids, msk.sum(axis=1))
            c = nb[ids][msk]
            rows.extend([r, ids])
            cols.extend([c, ids])
            val1.extend([g1w[msk], -g1w.sum(axis=1)])
            val2.extend([g2w[msk], -g2w.sum(axis=1)])
        for vi, lst in big_lists.items():
            dx = (v[lst] - v[vi])[None]
            A, Aw, M, _ = _fit_normal_eqs(
                dx, t1[vi][None], t2[vi][None], vn[vi][None],
                np.ones((1, len(lst)), dtype=bool))
            P = np.linalg.solve(M, np.transpose(Aw, (0, 2, 1)))[0]
            rows.extend([np.full(len(lst), vi), [vi]])
            cols.extend([lst, [vi]])
            val1.extend([P[3], [-P[3].sum()]])
            val2.extend([P[4], [-P[4].sum()]])
        rows = np.concatenate([np.atleast_1d(x) for x in rows])
        cols = np.concatenate([np.atleast_1d(x) for x in cols])
        val1 = np.concatenate([np.atleast_1d(x) for x in val1])
        val2 = np.concatenate([np.atleast_1d(x) for x in val2])
        G1 = sparse.csr_matrix((val1, (rows, cols)), shape=(n, n))
        G2 = sparse.csr_matrix((val2, (rows, cols)), shape=(n, n))
        return G1, G2
    return mesh._get("gradient_ops", build)


# ---------------------------------------------------------------------------
# residual and tilt-derivative fields


def residual(mesh, scale="small"):
    """Discrete shrinker residual: H + X.nu (small) or H + tau^2 X.nu (large).

    The mesh stores small-scale positions; the large-scale residual is the
    exact rescaling tau * (small-scale residual).
    """
    nu, H, _ = fit_frames(mesh)
    res = H + np.einsum("ij,ij->i", mesh.vertices, nu)
    if scale == "large":
        if mesh.params is None:
            raise ValueError("large-scale residual needs mesh params")
        res = mesh.params.tau * res
    elif scale != "small":
        raise ValueError("scale must be 'small' or 'large'")
    return MeshField(mesh, res, kind="residual")


def w_field(mesh_minus, mesh_plus, db, base_mesh=None, scale="large"):
    """Central-difference tilt derivative of the mean curvature.

    The two meshes must be built with identical combinatorics (same grids,
    differing only in the tilt factor); the derivative is taken at
    corresponding vertices.
    """
    if mesh_minus.n_vertices != mesh_plus.n_vertices or \
            mesh_minus.n_faces != mesh_plus.n_faces:
        raise ValueError("tilt family meshes have mismatched combinatorics")
    if not np.array_equal(mesh_minus.faces, mesh_plus.faces):
        raise ValueError("tilt family meshes have mismatched face tables")
    _, Hm, _ = fit_frames(mesh_minus)
    _, Hp, _ = fit_frames(mesh_plus)
    w = (Hp - Hm) / (2.0 * db)
    base = base_mesh if base_mesh is not None else mesh_minus
    if scale == "large":
        w = base.params.tau * w
    return MeshField(base, w, kind="w")


def pairing(field_a: MeshField, field_b_values):
    """Area-weighted inner product of two vertex fields."""
    areas = field_a.mesh.vertex_areas()
    return float(np.sum(field_a.values * field_b_values * areas))


def ex_nu_probe(mesh):
    """Symmetrized restriction of e_x . nu (the near-kernel direction)."""
    nu, _, _ = fit_frames(mesh)
    raw = MeshField(mesh, nu[:, 0], kind="generic")
    projected, _ = symmetry_project(raw)
    return projected


# ---------------------------------------------------------------------------
# balancing


def balancing_check(strip_mesh):
    """Flux balance of one period of the (possibly tilted) template strip.

    Returns (integral, wing_sum): the quadrature of H (e_x . nu) over faces
    of the middle period, and 2 pi times the sum of the x-components of the
    asymptotic wing directions.
    """
    meta = strip_mesh._cache.get("strip_meta")
    if meta is None:
        raise ValueError("balancing_check expects a template strip mesh")
    nu, H, _ = fit_frames(strip_mesh)
    fn, fa = strip_mesh.face_normals_areas()
    dens = H * nu[:, 0]
    fy = strip_mesh.vertices[strip_mesh.faces, 1].mean(axis=1)
    mid = (fy >= -math.pi) & (fy < math.pi)
    integral = float(np.sum(fa[mid] * dens[strip_mesh.faces[mid]].mean(axis=1)))

    key_index = strip_mesh._cache["key_index"]
    Ns, Ny = meta["Ns"], meta["Ny"]
    half = meta["periods"] // 2
    j0 = half * Ny
    wing_sum = 0.0
    for kind in ("wT", "wB", "wI", "wO"):
        far = np.array([key_index[(kind, Ns, j)] for j in range(j0, j0 + Ny)])
        near = np.array([key_index[(kind, Ns - 2, j)] for j in range(j0, j0 + Ny)])
        d = strip_mesh.vertices[far].mean(axis=0) \
            - strip_mesh.vertices[near].mean(axis=0)
        d /= np.linalg.norm(d)
        wing_sum += d[0]
    return integral, 2.0 * math.pi * wing_sum


# ---------------------------------------------------------------------------
# weighted norms


def _region_masks(mesh):
    plane = mesh.region == 8
    inner = ~plane
    return inner, plane


def _vertex_weight(mesh, spec: NormSpec):
    p = mesh.params
    if spec.weight == "exp-gamma-s":
        return np.exp(-p.gamma * mesh.s)
    b0 = math.exp(-p.s_max)
    if spec.weight == "exp-mixed-b0":
        return np.maximum(np.exp(-p.gamma * mesh.s), b0)
    if spec.weight == "exp-mixed-b2":
        b2 = b0 / p.tau ** 10
        return np.maximum(np.exp(-p.gamma * mesh.s), b2)
    raise ValueError(f"{spec.weight} is not a plain vertex weight")


def holder_quotients(mesh, values, alpha, scale_factor=1.0, radius=1.0):
    """Per-vertex sup of |f(i)-f(j)| / d(i,j)^alpha over the geodesic ball."""
    i, j, d = mesh.pairs_within(radius, scale_factor=scale_factor)
    q = np.abs(values[i] - values[j]) / np.maximum(d, 1e-300) ** alpha
    out = np.zeros(mesh.n_vertices)
    np.maximum.at(out, i, q)
    np.maximum.at(out, j, q)
    return out


def weighted_norm(field: MeshField, spec: NormSpec):
    """Discrete weighted Hoelder norm proxy.

    Order 0: sup weight^-1 max(|f|, Hoelder quotient over unit geodesic
    balls).  Order 2 additionally includes the tangential gradient and
    Hessian magnitudes (scaled to the spec scale) and the quotient of the
    Hessian magnitude.  radial-star and cone specs apply the |xi|-power
    weights of the flat outer region instead.
    """
    mesh = field.mesh
    vals = field.values
    p = mesh.params

    if spec.weight in ("radial-star", "cone"):
        r = np.linalg.norm(mesh.vertices[:, :2], axis=1)
        quot = holder_quotients(mesh, vals, spec.alpha)
        if spec.weight == "cone":
            base = np.abs(vals) * r ** 0  # |xi|^{-1} weight -> multiply by r
            c0 = np.max(np.abs(vals) * r)
            return float(c0)
        if spec.order == 0:
            c0 = np.abs(vals) * r
            ch = quot * r ** (1.0 + spec.alpha)
            return float(max(c0.max(), ch.max()))
        der = field_derivatives(mesh, vals)
        grad = np.hypot(der["g1"], der["g2"])
        hess = np.sqrt(der["h11"] ** 2 + 2 * der["h12"] ** 2 + der["h22"] ** 2)
        hess_quot = holder_quotients(mesh, hess, spec.alpha)
        parts = [np.abs(vals) / np.maximum(r, 1e-300),
                 grad, hess * r, hess_quot * r ** (1.0 + spec.alpha)]
        return float(max(x.max() for x in parts))

    weight = _vertex_weight(mesh, spec)
    scale_factor = 1.0 / p.tau if spec.scale == "large" else 1.0
    quot = holder_quotients(mesh, vals, spec.alpha, scale_factor=scale_factor)
    local = np.maximum(np.abs(vals), quot)
    if spec.order == 2:
        der = field_derivatives(mesh, vals)
        g_scale = p.tau if spec.scale == "large" else 1.0
        grad = np.hypot(der["g1"], der["g2"]) * g_scale
        hess = np.sqrt(der["h11"] ** 2 + 2 * der["h12"] ** 2
                       + der["h22"] ** 2) * g_scale ** 2
        hq = holder_quotients(mesh, hess, spec.alpha,
                              scale_factor=scale_factor)
        local = np.maximum.reduce([local, grad, hess, hq])
    return float(np.max(local / weight))


def norm0(field: MeshField, alpha=0.5):
    """Global inhomogeneous-term norm: tau-scaled weighted sup over the
    desingularizing piece, caps and disk, combined with the star norm on the
    outer plane region."""
    mesh = field.mesh
    p = mesh.params
    inner, plane = _region_masks(mesh)
    b0 = math.exp(-p.s_max)

    spec = NormSpec(order=0, alpha=alpha, weight="exp-mixed-b0", scale="large")
    weight = _vertex_weight(mesh, spec)
    quot = holder_quotients(mesh, field.values, alpha, scale_factor=1.0 / p.tau)
    local = np.maximum(np.abs(field.values), quot)
    part_a = p.tau * np.max((local / weight)[inner]) if inner.any() else 0.0

    r = np.linalg.norm(mesh.vertices[:, :2], axis=1)
    quot_s = holder_quotients(mesh, field.values, alpha)
    ca = np.abs(field.values) * r
    ch = quot_s * r ** (1.0 + alpha)
    part_b = np.max(np.maximum(ca, ch)[plane]) / b0 if plane.any() else 0.0
    return float(max(part_a, part_b))


def norm2(field: MeshField, alpha=0.5, tau10=True):
    """Global solution norm with the b2 weight (documented discrete proxy).

    The outer-plane contribution uses the star-norm proxy of the cone class
    (value/|xi|, gradient, |xi|-weighted Hessian and its quotient) instead of
    an explicit cone decomposition; the full decomposition is reported by
    cone_decompose separately.
    """
    mesh = field.mesh
    p = mesh.params
    inner, plane = _region_masks(mesh)
    b0 = math.exp(-p.s_max)
    b2 = b0 / p.tau ** 10 if tau10 else b0

    weight = np.maximum(np.exp(-p.gamma * mesh.s), b2)
    der = field_derivatives(mesh, field.values)
    grad = np.hypot(der["g1"], der["g2"]) * p.tau
    hess = np.sqrt(der["h11"] ** 2 + 2 * der["h12"] ** 2
                   + der["h22"] ** 2) * p.tau ** 2
    quot = holder_quotients(mesh, field.values, alpha, scale_factor=1.0 / p.tau)
    hq = holder_quotients(mesh, hess, alpha, scale_factor=1.0 / p.tau)
    local = np.maximum.reduce([np.abs(field.values), quot, grad, hess, hq])
    part_a = np.max((local / weight)[inner]) / p.tau if inner.any() else 0.0

    r = np.linalg.norm(mesh.vertices[:, :2], axis=1)
    grad_s = np.hypot(der["g1"], der["g2"])
    hess_s = np.sqrt(der["h11"] ** 2 + 2 * der["h12"] ** 2 + der["h22"] ** 2)
    hq_s = holder_quotients(mesh, hess_s, alpha)
    parts = np.maximum.reduce([
        np.abs(field.values) / np.maximum(r, 1e-300),
        grad_s, hess_s * r, hq_s * r ** (1.0 + alpha)])
    part_b = np.max(parts[plane]) / b2 if plane.any() else 0.0
    return float(max(part_a, part_b))


# ---------------------------------------------------------------------------
# symmetry projection


def symmetry_project(obj):
    """Average a field (or mesh positions) over the symmetry orbits.

    Returns (projected, deviation) where deviation is the max change any
    entry underwent.
    """
    if isinstance(obj, MeshField):
        mesh = obj.mesh
        orbit = mesh.orbits()
        sums = np.bincount(orbit, weights=obj.values)
        counts = np.bincount(orbit)
        proj = (sums / counts)[orbit]
        dev = float(np.max(np.abs(proj - obj.values))) if len(proj) else 0.0
        return MeshField(mesh, proj, kind=obj.kind), dev
    mesh = obj
    perms, _ = mesh.symmetry_maps()
    from .mesh import dihedral_group_matrices
    mats = dihedral_group_matrices(mesh.params.m)
    acc = np.zeros_like(mesh.vertices)
    for g, perm in zip(mats, perms):
        acc += mesh.vertices[perm] @ np.linalg.inv(g).T
    acc /= len(mats)
    dev = float(np.max(np.linalg.norm(acc - mesh.vertices, axis=1)))
    from .mesh import SurfaceMesh
    projected = SurfaceMesh(acc, mesh.faces.copy(), mesh.region.copy(),
                            mesh.s.copy(), params=mesh.params, orient=False)
    return projected, dev
