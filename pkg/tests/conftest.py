"""Shared fixtures: hand-sized meshes and a reusable synthetic dataset."""
import numpy as np
import pytest

from pricefield.geometry import DomainPolygon, infer_domain
from pricefield.synth import SyntheticSpec, gen_synthetic
from pricefield.triangulation import (
    TriangleMesh,
    max_area_for_vertex_target,
    triangulate,
)


@pytest.fixture
def single_tri_mesh():
    # unit right triangle, area 1/2
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return TriangleMesh(verts, np.array([[0, 1, 2]]), np.ones(3, dtype=bool))


@pytest.fixture
def unit_square_mesh():
    # unit square split along the (0,0)-(1,1) diagonal
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    return TriangleMesh(verts, tris, np.ones(4, dtype=bool))


@pytest.fixture
def unit_square_domain():
    outer = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return DomainPolygon(outer=outer, holes=[])


def make_random_mesh(seed, target_vertices=40, max_vertices=None):
    """Irregular mesh over the alpha shape of a random blob.

    Used by the solver sweeps; max_vertices coarsens until the mesh
    fits under the cap (dense-oracle comparisons need small K).
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1000.0, size=(48, 2))
    dom = infer_domain(pts)
    area = max_area_for_vertex_target(dom.area(), target_vertices)
    mesh = triangulate(dom, max_area=area)
    while max_vertices is not None and mesh.n_vertices > max_vertices:
        area *= 1.7
        mesh = triangulate(dom, max_area=area)
    return mesh


def interior_points(mesh, n, seed=0):
    """n points strictly inside the mesh: random convex combinations
    pulled toward triangle centroids."""
    rng = np.random.default_rng(seed)
    t = rng.integers(0, len(mesh.triangles), size=n)
    u = rng.dirichlet((1.0, 1.0, 1.0), size=n)
    u = 0.97 * u + 0.01  # keep clear of edges
    tri = mesh.vertices[mesh.triangles[t]]
    return np.einsum("nk,nkd->nd", u, tri)


@pytest.fixture(scope="session")
def step_data():
    spec = SyntheticSpec(
        n=600, seed=5, preset="two_region_step", noise_sigma=0.05, q=3
    )
    return gen_synthetic(spec)
