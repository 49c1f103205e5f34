"""Reference meshes with known curvature for verification.

Spheres, cylinders, flat disks and annuli built as structured revolution
meshes.  Used by the discrete-geometry and solver tests and by the built-in
invariant suite; orientation conventions match the construction (the
sphere of radius sqrt(2) carries the inward normal, making its mean
curvature +sqrt(2)).
"""

from __future__ import annotations

import numpy as np

from .mesh import SurfaceMesh, fan_faces, grid_faces, REGIONS


def _ring_grid(radii, zs, n_phi, phi0=0.0):
    """Vertex array for stacked circles; returns (verts, index grid)."""
    phi = phi0 + 2.0 * np.pi * np.arange(n_phi) / n_phi
    verts = []
    for r, z in zip(radii, zs):
        ring = np.stack([r * np.cos(phi), r * np.sin(phi),
                         np.full(n_phi, z)], axis=1)
        verts.append(ring)
    verts = np.concatenate(verts)
    grid = np.arange(len(radii) * n_phi).reshape(len(radii), n_phi)
    # close the angular direction
    grid = np.concatenate([grid, grid[:, :1]], axis=1)
    return verts, grid


def _orient_inward(mesh, center=None):
    """Flip all faces if the area-weighted normals point away from center."""
    vn = mesh.vertex_normals()
    if center is None:
        center = mesh.vertices.mean(axis=0)
    outward = mesh.vertices - center
    score = np.mean(np.einsum("ij,ij->i", vn, outward))
    if score > 0:
        flipped = mesh.faces[:, ::-1].copy()
        return SurfaceMesh(mesh.vertices, flipped, mesh.region, mesh.s,
                           params=mesh.params, orient=False)
    return mesh


def sphere_mesh(radius=np.sqrt(2.0), n_polar=32, n_phi=32):
    """Closed revolution sphere with pole fans and inward orientation."""
    u = np.pi * np.arange(1, n_polar) / n_polar
    verts, grid = _ring_grid(radius * np.sin(u), radius * np.cos(u), n_phi)
    north = len(verts)
    south = len(verts) + 1
    verts = np.concatenate([verts, [[0, 0, radius], [0, 0, -radius]]])
    faces = [grid_faces(grid)]
    faces.append(fan_faces(north, grid[0, :-1][::-1]))
    faces.append(fan_faces(south, grid[-1, :-1]))
    faces = np.concatenate(faces)
    region = np.full(len(verts), REGIONS["cap-top"], dtype=np.int16)
    mesh = SurfaceMesh(verts, faces, region, np.zeros(len(verts)))
    return _orient_inward(mesh, center=np.zeros(3))


def cylinder_mesh(radius=1.0, z0=-1.0, z1=1.0, n_z=24, n_phi=32):
    """Open tube around the z-axis, inward orientation."""
    zs = np.linspace(z0, z1, n_z + 1)
    verts, grid = _ring_grid(np.full(len(zs), radius), zs, n_phi)
    faces = grid_faces(grid)
    region = np.full(len(verts), REGIONS["core"], dtype=np.int16)
    mesh = SurfaceMesh(verts, faces, region, np.zeros(len(verts)))
    vn = mesh.vertex_normals()
    radial = mesh.vertices * np.array([1.0, 1.0, 0.0])
    if np.mean(np.einsum("ij,ij->i", vn, radial)) > 0:
        mesh = SurfaceMesh(verts, faces[:, ::-1].copy(), region,
                           mesh.s, orient=False)
    return mesh


def disk_mesh(radius=1.0, n_r=16, n_phi=32):
    """Flat disk in the plane z = 0 with a center fan."""
    radii = radius * np.arange(n_r, 0, -1) / n_r
    verts, grid = _ring_grid(radii, np.zeros(n_r), n_phi)
    center = len(verts)
    verts = np.concatenate([verts, [[0.0, 0.0, 0.0]]])
    faces = [grid_faces(grid), fan_faces(center, grid[-1, :-1])]
    faces = np.concatenate(faces)
    region = np.full(len(verts), REGIONS["disk"], dtype=np.int16)
    return SurfaceMesh(verts, faces, region, np.zeros(len(verts)))


def annulus_mesh(r_inner, r_outer, n_r=24, n_phi=48, log_spacing=True):
    """Flat annulus in the plane z = 0.

    With log_spacing the radial samples are uniform in log(r), matching the
    conformal grids of the assembled outer plane.
    """
    if log_spacing:
        radii = np.exp(np.linspace(np.log(r_inner), np.log(r_outer), n_r + 1))
    else:
        radii = np.linspace(r_inner, r_outer, n_r + 1)
    verts, grid = _ring_grid(radii, np.zeros(n_r + 1), n_phi)
    faces = grid_faces(grid)
    region = np.full(len(verts), REGIONS["plane"], dtype=np.int16)
    mesh = SurfaceMesh(verts, faces, region, np.zeros(len(verts)))
    mesh._cache["annulus_rings"] = (radii, n_phi, grid)
    return mesh
