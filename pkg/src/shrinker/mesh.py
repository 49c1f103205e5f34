"""Labeled triangle meshes for assembled surfaces.

A SurfaceMesh stores small-scale vertex positions together with the labels
the solvers rely on: a region tag per vertex, the wing coordinate s (extended
by its truncation value off the desingularizing piece), and symmetry orbits
under the dihedral group and the half-turn about the x-axis.  Geometry caches
(adjacency, areas, normals, neighbor rings) are built lazily and the mesh is
treated as immutable once constructed.
"""

from __future__ import annotations

import json

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

REGIONS = {
    "core": 0,
    "wing-top": 1,
    "wing-bottom": 2,
    "wing-inner": 3,
    "wing-outer": 4,
    "cap-top": 5,
    "cap-bottom": 6,
    "disk": 7,
    "plane": 8,
}
REGION_NAMES = {v: k for k, v in REGIONS.items()}


class MeshTopologyError(RuntimeError):
    pass


def orient_consistently(faces, n_vertices):
    """Flip face windings so adjacent faces induce opposite edge traversals.

    Returns (faces, n_flipped).  Raises MeshTopologyError on non-orientable
    or non-manifold input (an edge shared by more than two faces).
    """
    faces = faces.copy()
    edge_to_faces = {}
    for fi, (i, j, k) in enumerate(faces):
        for a, b in ((i, j), (j, k), (k, i)):
            key = (min(a, b), max(a, b))
            edge_to_faces.setdefault(key, []).append(fi)
    for key, fs in edge_to_faces.items():
        if len(fs) > 2:
            raise MeshTopologyError(f"edge {key} shared by {len(fs)} faces")

    face_adj = [[] for _ in range(len(faces))]
    for fs in edge_to_faces.values():
        if len(fs) == 2:
            face_adj[fs[0]].append(fs[1])
            face_adj[fs[1]].append(fs[0])

    def directed_edges(f):
        i, j, k = faces[f]
        return {(i, j), (j, k), (k, i)}

    visited = np.zeros(len(faces), dtype=bool)
    n_flipped = 0
    for seed in range(len(faces)):
        if visited[seed]:
            continue
        visited[seed] = True
        stack = [seed]
        while stack:
            f = stack.pop()
            de_f = directed_edges(f)
            for g in face_adj[f]:
                if visited[g]:
                    continue
                de_g = directed_edges(g)
                shared_same = de_f & de_g
                if shared_same:
                    faces[g] = faces[g][::-1]
                    n_flipped += 1
                visited[g] = True
                stack.append(g)
    # verify orientability
    edge_dir = {}
    for fi, (i, j, k) in enumerate(faces):
        for a, b in ((i, j), (j, k), (k, i)):
            if (a, b) in edge_dir:
                raise MeshTopologyError(
                    f"non-orientable: directed edge ({a},{b}) repeated"
                )
            edge_dir[(a, b)] = fi
    return faces, n_flipped


def dihedral_group_matrices(m):
    """Symmetry group of the construction: order 4m.

    Rotations by 2 pi k / m about the z-axis, the same rotations composed
    with the half-turn about the x-axis, and the reflections across planes
    through the z-axis at angles pi/(2m) + k pi/m with the xz-plane (and
    those composed with the half-turn).
    """
    mats = []
    half_turn = np.diag([1.0, -1.0, -1.0])
    for k in range(m):
        ang = 2.0 * np.pi * k / m
        c, s = np.cos(ang), np.sin(ang)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        mats.append(rot)
        mats.append(half_turn @ rot)
    for k in range(m):
        ang = np.pi / (2 * m) + k * np.pi / m
        c2, s2 = np.cos(2 * ang), np.sin(2 * ang)
        refl = np.array([[c2, s2, 0.0], [s2, -c2, 0.0], [0.0, 0.0, 1.0]])
        mats.append(refl)
        mats.append(half_turn @ refl)
    return mats


class SurfaceMesh:
    """Triangulated labeled surface (small-scale coordinates)."""

    def __init__(self, vertices, faces, region, s, params=None, orient=True):
        self.vertices = np.asarray(vertices, dtype=float)
        self.faces = np.asarray(faces, dtype=np.int64)
        self.region = np.asarray(region, dtype=np.int16)
        self.s = np.asarray(s, dtype=float)
        self.params = params
        if orient:
            self.faces, _ = orient_consistently(self.faces, len(self.vertices))
        self._cache = {}

    # -- basic sizes ------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    # -- cached geometry ---------------------------------------------------
    def _get(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    def face_normals_areas(self):
        def build():
            v = self.vertices
            f = self.faces
            e1 = v[f[:, 1]] - v[f[:, 0]]
            e2 = v[f[:, 2]] - v[f[:, 0]]
            cr = np.cross(e1, e2)
            nrm = np.linalg.norm(cr, axis=1)
            areas = 0.5 * nrm
            normals = cr / np.maximum(nrm, 1e-300)[:, None]
            return normals, areas
        return self._get("face_na", build)

    def vertex_areas(self):
        def build():
            _, fa = self.face_normals_areas()
            va = np.zeros(self.n_vertices)
            np.add.at(va, self.faces.ravel(),
                      np.repeat(fa / 3.0, 3))
            return va
        return self._get("vertex_areas", build)

    def vertex_normals(self):
        """Area-weighted face-normal average, unit length, oriented."""
        def build():
            fn, fa = self.face_normals_areas()
            vn = np.zeros((self.n_vertices, 3))
            w = (fn * fa[:, None])
            for c in range(3):
                np.add.at(vn[:, c], self.faces.ravel(), np.repeat(w[:, c], 3))
            vn /= np.maximum(np.linalg.norm(vn, axis=1), 1e-300)[:, None]
            return vn
        return self._get("vertex_normals", build)

    def edges(self):
        def build():
            e = np.concatenate([self.faces[:, [0, 1]],
                                self.faces[:, [1, 2]],
                                self.faces[:, [2, 0]]])
            e = np.unique(np.sort(e, axis=1), axis=0)
            return e
        return self._get("edges", build)

    def adjacency(self):
        """Symmetric vertex adjacency as CSR with edge lengths as data."""
        def build():
            e = self.edges()
            lengths = np.linalg.norm(
                self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)
            i = np.concatenate([e[:, 0], e[:, 1]])
            j = np.concatenate([e[:, 1], e[:, 0]])
            d = np.concatenate([lengths, lengths])
            return sparse.csr_matrix(
                (d, (i, j)), shape=(self.n_vertices, self.n_vertices))
        return self._get("adjacency", build)

    def one_ring(self):
        def build():
            adj = self.adjacency()
            return adj.indices, adj.indptr
        return self._get("one_ring", build)

    def two_ring(self):
        """CSR-style (indices, indptr) of the 2-ring excluding the center."""
        def build():
            adj = self.adjacency()
            pattern = adj.copy()
            pattern.data[:] = 1.0
            two = pattern + pattern @ pattern
            two = two.tocsr()
            two.setdiag(0.0)
            two.eliminate_zeros()
            return two.indices, two.indptr
        return self._get("two_ring", build)

    def boundary_vertices(self):
        def build():
            e = np.concatenate([self.faces[:, [0, 1]],
                                self.faces[:, [1, 2]],
                                self.faces[:, [2, 0]]])
            e = np.sort(e, axis=1)
            uniq, counts = np.unique(e, axis=0, return_counts=True)
            bnd_edges = uniq[counts == 1]
            return np.unique(bnd_edges)
        return self._get("boundary_vertices", build)

    def is_closed(self):
        return len(self.boundary_vertices()) == 0

    # -- symmetry ----------------------------------------------------------
    def symmetry_maps(self):
        """Per group element: permutation matching g(v_i) to a vertex.

        Returns (perms, deviation): perms is a list of index arrays, and
        deviation the worst match distance over all elements (measures how
        exactly the vertex set is group invariant).
        """
        def build():
            if self.params is None:
                raise ValueError("mesh has no params; symmetry group unknown")
            mats = dihedral_group_matrices(self.params.m)
            tree = cKDTree(self.vertices)
            perms = []
            dev = 0.0
            for g in mats:
                moved = self.vertices @ g.T
                d, idx = tree.query(moved, k=1)
                dev = max(dev, float(np.max(d)))
                perms.append(idx)
            return perms, dev
        return self._get("symmetry_maps", build)

    def orbits(self):
        """Orbit index per vertex under the full symmetry group."""
        def build():
            perms, dev = self.symmetry_maps()
            parent = np.arange(self.n_vertices)

            def find(i):
                while parent[i] != i:
                    parent[i] = parent[parent[i]]
                    i = parent[i]
                return i

            for idx in perms:
                for i in range(self.n_vertices):
                    ri, rj = find(i), find(idx[i])
                    if ri != rj:
                        parent[rj] = ri
            roots = np.array([find(i) for i in range(self.n_vertices)])
            _, orbit = np.unique(roots, return_inverse=True)
            return orbit
        return self._get("orbits", build)

    def symmetry_deviation(self):
        return self.symmetry_maps()[1]

    # -- submeshes ---------------------------------------------------------
    def submesh(self, vertex_mask):
        """Mesh restricted to faces whose vertices all satisfy the mask.

        Returns (mesh, parent_index) where parent_index maps submesh vertex
        ids to ids in this mesh.
        """
        vertex_mask = np.asarray(vertex_mask, dtype=bool)
        fmask = vertex_mask[self.faces].all(axis=1)
        faces = self.faces[fmask]
        used = np.unique(faces)
        remap = -np.ones(self.n_vertices, dtype=np.int64)
        remap[used] = np.arange(len(used))
        sub = SurfaceMesh(
            self.vertices[used],
            remap[faces],
            self.region[used],
            self.s[used],
            params=self.params,
            orient=False,
        )
        return sub, used

    # -- geodesic neighbor pairs for Hoelder quotients ----------------------
    def pairs_within(self, radius, scale_factor=1.0):
        """Vertex pairs within the given geodesic (graph) distance.

        Distances are edge-path sums scaled by ``scale_factor`` (use 1/tau
        to measure in the large scale on a small-scale mesh).  Returns
        (i, j, d) arrays with i < j and 0 < d <= radius.
        """
        key = ("pairs", round(radius, 12), round(scale_factor, 12))

        def build():
            adj = self.adjacency() * scale_factor
            limit = radius
            n = self.n_vertices
            chunks = []
            step = max(1, min(2000, n))
            for start in range(0, n, step):
                idx = np.arange(start, min(start + step, n))
                dmat = sparse.csgraph.dijkstra(
                    adj, directed=False, indices=idx, limit=limit)
                src, dst = np.nonzero(np.isfinite(dmat) & (dmat > 0))
                chunks.append((idx[src], dst, dmat[src, dst]))
            i = np.concatenate([c[0] for c in chunks])
            j = np.concatenate([c[1] for c in chunks])
            d = np.concatenate([c[2] for c in chunks])
            keep = i < j
            return i[keep], j[keep], d[keep]
        return self._get(key, build)

    # -- export -------------------------------------------------------------
    def to_obj(self, path, header_extra=None):
        """OBJ with per-vertex region and s annotations and a config header."""
        lines = []
        if self.params is not None:
            lines.append(f"# config: {self.params.to_json()}")
        if header_extra:
            for k, v in header_extra.items():
                lines.append(f"# {k}: {json.dumps(v)}")
        for p, r, sv in zip(self.vertices, self.region, self.s):
            lines.append(f"# region: {REGION_NAMES[int(r)]}")
            lines.append(f"# s: {sv!r}")
            lines.append(f"v {p[0]!r} {p[1]!r} {p[2]!r}")
        for tri in self.faces:
            lines.append(f"f {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}")
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")


class VertexRegistry:
    """Key-addressed vertex store used while welding structured patches."""

    def __init__(self):
        self.index = {}
        self.positions = []
        self.regions = []
        self.s_values = []

    def add(self, key, position, region, s):
        """Create or look up the vertex for ``key``; first writer wins."""
        idx = self.index.get(key)
        if idx is None:
            idx = len(self.positions)
            self.index[key] = idx
            self.positions.append(np.asarray(position, dtype=float))
            self.regions.append(REGIONS[region])
            self.s_values.append(float(s))
        return idx

    def get(self, key):
        return self.index[key]

    def __contains__(self, key):
        return key in self.index

    def build_mesh(self, faces, params, orient=True):
        return SurfaceMesh(
            np.array(self.positions),
            np.asarray(faces, dtype=np.int64),
            np.array(self.regions, dtype=np.int16),
            np.array(self.s_values),
            params=params,
            orient=orient,
        )


def grid_faces(idx_grid, flip=False):
    """Triangulate a structured quad grid of vertex indices.

    ``idx_grid`` is an (nr, nc) integer array; degenerate quads (repeated
    indices) contribute only their valid triangles.
    """
    idx_grid = np.asarray(idx_grid)
    a = idx_grid[:-1, :-1].ravel()
    b = idx_grid[1:, :-1].ravel()
    c = idx_grid[1:, 1:].ravel()
    d = idx_grid[:-1, 1:].ravel()
    tris = np.concatenate([
        np.stack([a, b, c], axis=1),
        np.stack([a, c, d], axis=1),
    ])
    if flip:
        tris = tris[:, ::-1]
    ok = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) \
        & (tris[:, 2] != tris[:, 0])
    return tris[ok]


def fan_faces(center, ring, flip=False):
    """Triangle fan from a center vertex to a closed ring of indices."""
    ring = np.asarray(ring)
    nxt = np.roll(ring, -1)
    tris = np.stack([np.full(len(ring), center), ring, nxt], axis=1)
    if flip:
        tris = tris[:, ::-1]
    ok = (tris[:, 1] != tris[:, 2])
    return tris[ok]
