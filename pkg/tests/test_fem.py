"""Finite element assembly against hand-worked matrices and invariants.

The small-matrix references below were derived by hand from the linear
(P1) element formulas: per-triangle mass block (A/12)[[2,1,1],[1,2,1],
[1,1,2]], stiffness from the barycentric gradient products, and the
boundary line integral of the outward normal derivative.
"""
import numpy as np
import pytest
from scipy.io import mmread

from pricefield.errors import DataError
from pricefield.fem import (
    SPARSE_DROP_TOL,
    assemble_boundary_flux,
    assemble_mass,
    assemble_psi,
    assemble_stiffness,
    basis_matrix,
    dump_matrix_market,
    roughness_energy,
    weak_laplacian,
)

from conftest import interior_points, make_random_mesh


def test_single_triangle_stiffness(single_tri_mesh):
    want = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    got = assemble_stiffness(single_tri_mesh).toarray()
    assert np.allclose(got, want, atol=1e-14)


def test_single_triangle_mass(single_tri_mesh):
    # area 1/2: diagonal A/6 = 1/12, off-diagonal A/12 = 1/24
    want = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 24.0
    got = assemble_mass(single_tri_mesh).toarray()
    assert np.allclose(got, want, atol=1e-15)


def test_square_mass(unit_square_mesh):
    want = (
        np.array(
            [[4.0, 1.0, 2.0, 1.0], [1.0, 2.0, 1.0, 0.0], [2.0, 1.0, 4.0, 1.0], [1.0, 0.0, 1.0, 2.0]]
        )
        / 24.0
    )
    got = assemble_mass(unit_square_mesh).toarray()
    assert np.allclose(got, want, atol=1e-15)


def test_square_stiffness(unit_square_mesh):
    want = np.array(
        [
            [1.0, -0.5, 0.0, -0.5],
            [-0.5, 1.0, -0.5, 0.0],
            [0.0, -0.5, 1.0, -0.5],
            [-0.5, 0.0, -0.5, 1.0],
        ]
    )
    got = assemble_stiffness(unit_square_mesh).toarray()
    assert np.allclose(got, want, atol=1e-14)


def test_square_boundary_flux(unit_square_mesh):
    want = np.array(
        [
            [0.0, 0.5, -1.0, 0.5],
            [-0.5, 1.0, -0.5, 0.0],
            [-1.0, 0.5, 0.0, 0.5],
            [-0.5, 0.0, -0.5, 1.0],
        ]
    )
    got = assemble_boundary_flux(unit_square_mesh).toarray()
    assert np.allclose(got, want, atol=1e-14)


def test_square_weak_laplacian(unit_square_mesh):
    want = np.array(
        [
            [1.0, -1.0, 1.0, -1.0],
            [0.0, 0.0, 0.0, 0.0],
            [1.0, -1.0, 1.0, -1.0],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )
    got = weak_laplacian(unit_square_mesh).toarray()
    assert np.allclose(got, want, atol=1e-14)
    # and the operator is exactly stiffness minus flux
    diff = (
        got
        - assemble_stiffness(unit_square_mesh).toarray()
        + assemble_boundary_flux(unit_square_mesh).toarray()
    )
    assert np.abs(diff).max() == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_invariants_on_random_meshes(seed):
    mesh = make_random_mesh(seed, target_vertices=60)
    area = mesh.boundary_polygon().area()
    R0 = assemble_mass(mesh)
    R1 = assemble_stiffness(mesh)
    L = weak_laplacian(mesh)
    ones = np.ones(mesh.n_vertices)

    # mass integrates the constant to the domain area
    assert float(ones @ (R0 @ ones)) == pytest.approx(area, rel=1e-9)
    # stiffness annihilates constants
    assert np.abs(R1 @ ones).max() < 1e-10
    # symmetry of both Gram matrices
    assert np.abs((R0 - R0.T).toarray()).max() < 1e-14
    assert np.abs((R1 - R1.T).toarray()).max() < 1e-12
    # the penalty operator annihilates every affine function
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    for col in (ones, x, y):
        scale = max(1.0, np.abs(L @ np.ones_like(col)).max(), np.abs(col).max())
        assert np.abs(L @ col).max() < 1e-9 * scale


def test_mass_positive_definite_stiffness_psd():
    mesh = make_random_mesh(3, target_vertices=50)
    R0 = assemble_mass(mesh).toarray()
    np.linalg.cholesky(R0)  # raises if not PD
    eig = np.linalg.eigvalsh(assemble_stiffness(mesh).toarray())
    assert eig.min() >= -1e-10


def test_partition_of_unity():
    mesh = make_random_mesh(4, target_vertices=60)
    pts = interior_points(mesh, 1000, seed=4)
    psi, inside = basis_matrix(mesh, pts)
    assert inside.all()
    assert np.abs(np.asarray(psi.sum(axis=1)).ravel() - 1.0).max() < 1e-12
    # at most the three vertices of the containing triangle
    assert (np.diff(psi.tocsr().indptr) <= 3).all()


def test_basis_outside_points_flagged():
    mesh = make_random_mesh(5, target_vertices=40)
    x0, y0, x1, y1 = mesh.boundary_polygon().bbox()
    far = np.array([[x1 + 1000.0, y1 + 1000.0], [x0 - 500.0, y0]])
    psi, inside = basis_matrix(mesh, far)
    assert not inside.any()
    assert psi.nnz == 0
    with pytest.raises(DataError, match="point 0"):
        assemble_psi(mesh, far)


def test_basis_at_vertices_is_identity_rows(unit_square_mesh):
    psi, inside = basis_matrix(unit_square_mesh, unit_square_mesh.vertices)
    assert inside.all()
    assert np.allclose(psi.toarray(), np.eye(4), atol=1e-12)


def test_affine_reproduction():
    mesh = make_random_mesh(6, target_vertices=50)
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    f = 3.0 + 0.002 * x - 0.001 * y
    pts = interior_points(mesh, 300, seed=6)
    psi, _ = basis_matrix(mesh, pts)
    want = 3.0 + 0.002 * pts[:, 0] - 0.001 * pts[:, 1]
    assert np.abs(psi @ f - want).max() < 1e-10 * max(1.0, np.abs(want).max())


def test_affine_dirichlet_energy():
    # grad of b*x + c*y is constant, so f'R1f = (b^2 + c^2) * area
    mesh = make_random_mesh(7, target_vertices=60)
    area = mesh.boundary_polygon().area()
    b, c = 0.004, -0.0025
    f = 1.0 + b * mesh.vertices[:, 0] + c * mesh.vertices[:, 1]
    R1 = assemble_stiffness(mesh)
    assert float(f @ (R1 @ f)) == pytest.approx((b * b + c * c) * area, rel=1e-9)


def test_roughness_energy_vanishes_on_affine():
    mesh = make_random_mesh(8, target_vertices=40)
    f = 2.0 + 0.003 * mesh.vertices[:, 0] - 0.001 * mesh.vertices[:, 1]
    curved = f + 1e-6 * mesh.vertices[:, 0] ** 2
    e_affine = roughness_energy(mesh, f)
    e_curved = roughness_energy(mesh, curved)
    assert e_affine >= 0.0
    assert e_affine < 1e-12 * max(e_curved, 1.0)


def test_no_stored_near_zeros(unit_square_mesh):
    for op in (assemble_mass, assemble_stiffness, weak_laplacian):
        m = op(unit_square_mesh)
        if m.nnz:
            assert np.abs(m.data).min() >= SPARSE_DROP_TOL


def test_matrix_market_round_trip(tmp_path, unit_square_mesh):
    R0 = assemble_mass(unit_square_mesh)
    path = tmp_path / "R0.mtx"
    dump_matrix_market(R0, path)
    back = mmread(str(path))
    assert np.allclose(back.toarray(), R0.toarray(), atol=1e-15)
