"""Piecewise-linear finite element assembly on triangle meshes.

Basis functions are the P1 hat functions: one per mesh vertex, affine on
each triangle, 1 at the owning vertex and 0 at the others. All matrices
are scipy CSR with explicit entries below 1e-15 removed.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.io import mmwrite

from .errors import DataError, GeometryError
from .triangulation import TriangleMesh

SPARSE_DROP_TOL = 1e-15


def _clean(m: sp.spmatrix) -> sp.csr_matrix:
    m = m.tocsr()
    m.sum_duplicates()
    m.data[np.abs(m.data) < SPARSE_DROP_TOL] = 0.0
    m.eliminate_zeros()
    return m


def _tri_geometry(mesh: TriangleMesh):
    """Per-triangle signed areas and barycentric gradient components.

    Returns (areas, b, c) where the gradient of hat function i restricted
    to triangle t is (b[t, i], c[t, i]).
    """
    p = mesh.triangle_points()
    x = p[:, :, 0]
    y = p[:, :, 1]
    areas = 0.5 * (
        (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
        - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    )
    if (areas <= 0).any():
        raise GeometryError("mesh has non-positive triangle areas")
    b = np.empty_like(x)
    c = np.empty_like(x)
    for i in range(3):
        j = (i + 1) % 3
        k = (i + 2) % 3
        b[:, i] = (y[:, j] - y[:, k]) / (2.0 * areas)
        c[:, i] = (x[:, k] - x[:, j]) / (2.0 * areas)
    return areas, b, c


def assemble_mass(mesh: TriangleMesh) -> sp.csr_matrix:
    """Mass matrix R0: R0[i, j] = integral of psi_i * psi_j.

    Local block is (A / 12) * [[2, 1, 1], [1, 2, 1], [1, 1, 2]].
    """
    areas, _, _ = _tri_geometry(mesh)
    T = mesh.n_triangles
    local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    vals = areas[:, None, None] * local[None, :, :]
    tris = mesh.triangles
    rows = np.repeat(tris, 3, axis=1).reshape(T * 9)
    cols = np.tile(tris, (1, 3)).reshape(T * 9)
    K = mesh.n_vertices
    return _clean(sp.coo_matrix((vals.reshape(-1), (rows, cols)), shape=(K, K)))


def assemble_stiffness(mesh: TriangleMesh) -> sp.csr_matrix:
    """Stiffness matrix R1: R1[i, j] = integral of grad psi_i . grad psi_j."""
    areas, b, c = _tri_geometry(mesh)
    T = mesh.n_triangles
    vals = areas[:, None, None] * (
        b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]
    )
    tris = mesh.triangles
    rows = np.repeat(tris, 3, axis=1).reshape(T * 9)
    cols = np.tile(tris, (1, 3)).reshape(T * 9)
    K = mesh.n_vertices
    return _clean(sp.coo_matrix((vals.reshape(-1), (rows, cols)), shape=(K, K)))


def boundary_edges(mesh: TriangleMesh):
    """Directed boundary edges as (a, b, triangle) with the domain on the
    left, i.e. in the owning triangle's CCW order."""
    count = {}
    for t, (a, b, c) in enumerate(mesh.triangles):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            count.setdefault(key, []).append((t, u, v))
    out = []
    for key, owners in count.items():
        if len(owners) == 1:
            t, u, v = owners[0]
            out.append((int(u), int(v), int(t)))
    out.sort(key=lambda e: e[2])
    return out


def assemble_boundary_flux(mesh: TriangleMesh) -> sp.csr_matrix:
    """Boundary flux matrix B: B[i, j] = integral over the boundary of
    psi_i * (grad psi_j . n), with n the outward unit normal.

    grad psi_j is constant on each triangle and psi_i is linear on each
    boundary edge (integral |e|/2 for each endpoint), so the integral is
    exact.
    """
    areas, b, c = _tri_geometry(mesh)
    K = mesh.n_vertices
    rows, cols, vals = [], [], []
    verts = mesh.vertices
    tris = mesh.triangles
    for u, v, t in boundary_edges(mesh):
        d = verts[v] - verts[u]
        elen = float(np.hypot(d[0], d[1]))
        if elen == 0.0:
            continue
        # CCW boundary keeps the domain on the left; outward normal is
        # the edge direction rotated clockwise
        nx, ny = d[1] / elen, -d[0] / elen
        w = elen / 2.0
        for loc in range(3):
            j = int(tris[t, loc])
            flux = b[t, loc] * nx + c[t, loc] * ny
            rows.extend((u, v))
            cols.extend((j, j))
            vals.extend((w * flux, w * flux))
    return _clean(sp.coo_matrix((vals, (rows, cols)), shape=(K, K)))


def weak_laplacian(mesh: TriangleMesh) -> sp.csr_matrix:
    """Coupling operator L for the roughness penalty.

    L = R1 - B is the weak form of -Laplacian including the boundary
    term, so L f = 0 exactly for affine fields f: the roughness penalty
    f' L' R0^-1 L f vanishes on planes regardless of their tilt, which
    the plain stiffness matrix alone does not achieve on bounded domains.
    """
    return _clean(assemble_stiffness(mesh) - assemble_boundary_flux(mesh))


def basis_matrix(mesh: TriangleMesh, points):
    """Evaluation matrix Psi and an inside mask.

    Psi[i, :] carries the barycentric weights of point i in its
    containing triangle; rows for points outside the mesh are zero and
    flagged False in the mask.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tri_idx, bary = mesh.locate_batch(pts)
    inside = tri_idx >= 0
    n = len(pts)
    rows = np.repeat(np.arange(n)[inside], 3)
    cols = mesh.triangles[tri_idx[inside]].reshape(-1)
    vals = bary[inside].reshape(-1)
    psi = sp.coo_matrix((vals, (rows, cols)), shape=(n, mesh.n_vertices))
    return _clean(psi), inside


def assemble_psi(mesh: TriangleMesh, points) -> sp.csr_matrix:
    """Psi for fitting; every point must fall inside the mesh."""
    psi, inside = basis_matrix(mesh, points)
    if not inside.all():
        bad = int(np.where(~inside)[0][0])
        raise DataError(
            "point %d lies outside the triangulated domain" % bad
        )
    return psi


def roughness_energy(mesh: TriangleMesh, field_coeffs) -> float:
    """Value of the penalty quadratic form f' L' R0^-1 L f."""
    f = np.asarray(field_coeffs, dtype=float).ravel()
    if len(f) != mesh.n_vertices:
        raise DataError("coefficient length must match the vertex count")
    R0 = assemble_mass(mesh).tocsc()
    L = weak_laplacian(mesh)
    Lf = L @ f
    return float(Lf @ spla.spsolve(R0, Lf))


def dump_matrix_market(matrix, path) -> None:
    """Write a matrix in MatrixMarket coordinate format (debug aid)."""
    m = sp.csr_matrix(matrix).tocoo()
    mmwrite(str(path), m)
