"""Constrained triangulation, point location, and the text format."""
import numpy as np
import pytest

from pricefield.errors import GeometryError, InputError, ResourceError
from pricefield.geometry import DomainPolygon, points_in_ring
from pricefield.triangulation import (
    TriangleMesh,
    max_area_for_vertex_target,
    triangulate,
)

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _tri_areas(mesh):
    p = mesh.vertices[mesh.triangles]
    return 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )


def test_square_trivial_mesh(unit_square_domain):
    mesh = triangulate(unit_square_domain, max_area=1.0, min_angle=0.0)
    assert mesh.n_vertices == 4
    assert mesh.n_triangles == 2
    assert _tri_areas(mesh).sum() == pytest.approx(1.0, abs=1e-12)


def test_square_refined(unit_square_domain):
    mesh = triangulate(unit_square_domain, max_area=0.05)
    areas = _tri_areas(mesh)
    assert mesh.n_triangles >= 20
    assert (areas > 0).all()
    assert areas.max() <= 0.05 + 1e-12
    assert areas.sum() == pytest.approx(1.0, abs=1e-9)
    assert mesh.boundary_flags.any()
    # refinement quality: every angle at or above the default target,
    # except triangles the refiner explicitly exempted
    if mesh.info.get("exempt_skinny", 0) == 0:
        assert mesh.min_angles_deg().min() >= 25.0 - 1e-9


def test_hole_segments_survive():
    hole = np.array([[0.4, 0.4], [0.4, 0.6], [0.6, 0.6], [0.6, 0.4]])
    dom = DomainPolygon(outer=SQUARE, holes=[hole])
    mesh = triangulate(dom, max_area=0.02)
    areas = _tri_areas(mesh)
    assert areas.sum() == pytest.approx(1.0 - 0.04, abs=1e-9)
    # no triangle centroid may sit inside the hole
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    assert not points_in_ring(centroids, hole[::-1]).any()
    # every hole edge must appear as a mesh edge (constrained segments)
    edges = set()
    for a, b, c in mesh.triangles:
        for u, v in ((a, b), (b, c), (c, a)):
            edges.add((min(u, v), max(u, v)))
    vmap = {}
    for k, v in enumerate(mesh.vertices):
        vmap[(round(v[0], 12), round(v[1], 12))] = k
    ids = [vmap[(round(p[0], 12), round(p[1], 12))] for p in hole]
    for i in range(4):
        u, v = ids[i], ids[(i + 1) % 4]
        assert (min(u, v), max(u, v)) in edges


def test_vertex_budget_enforced(unit_square_domain):
    with pytest.raises(ResourceError):
        triangulate(unit_square_domain, max_area=1e-5, max_vertices=50)


def test_parameter_validation(unit_square_domain):
    with pytest.raises(InputError):
        triangulate(unit_square_domain, max_area=0.0)
    with pytest.raises(InputError):
        triangulate(unit_square_domain, max_area=0.5, min_angle=34.0)
    bowtie = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(GeometryError):
        triangulate(DomainPolygon(outer=bowtie), max_area=0.5)


def test_max_area_for_vertex_target():
    assert max_area_for_vertex_target(100.0, 50) == pytest.approx(2.0)
    assert max_area_for_vertex_target(100.0, 1) == pytest.approx(25.0)  # floor at 4


def test_determinism(unit_square_domain):
    a = triangulate(unit_square_domain, max_area=0.03)
    b = triangulate(unit_square_domain, max_area=0.03)
    assert a.to_text() == b.to_text()


# ---------------------------------------------------------------- locate

def test_locate_centroid(unit_square_mesh):
    loc = unit_square_mesh.locate(np.array([2.0 / 3.0, 1.0 / 3.0]))
    assert loc.triangle_index == 0
    assert max(abs(c - 1.0 / 3.0) for c in loc.coords) < 1e-12


def test_locate_vertex(unit_square_mesh):
    loc = unit_square_mesh.locate(np.array([0.0, 1.0]))
    assert loc is not None
    tri = unit_square_mesh.triangles[loc.triangle_index]
    k = list(tri).index(3)
    assert loc.coords[k] == pytest.approx(1.0, abs=1e-12)


def test_locate_shared_edge_prefers_lowest_index(unit_square_mesh):
    # (0.5, 0.5) lies on the diagonal shared by triangles 0 and 1
    loc = unit_square_mesh.locate(np.array([0.5, 0.5]))
    assert loc.triangle_index == 0


def test_locate_outside(unit_square_mesh):
    assert unit_square_mesh.locate(np.array([2.0, 2.0])) is None


def test_locate_batch_matches_scalar(unit_square_mesh):
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.2, 1.2, size=(200, 2))
    tri_idx, bary = unit_square_mesh.locate_batch(pts)
    for i, p in enumerate(pts):
        loc = unit_square_mesh.locate(p)
        if loc is None:
            assert tri_idx[i] == -1
        else:
            assert tri_idx[i] == loc.triangle_index
            assert np.abs(bary[i] - np.array(loc.coords)).max() < 1e-12


def test_edge_lengths_shape(unit_square_mesh):
    el = unit_square_mesh.edge_lengths()
    assert el.shape == (2, 3)
    # column i is the edge opposite local vertex i
    assert el.max() == pytest.approx(np.sqrt(2.0))


# ------------------------------------------------------------- text form

def test_text_round_trip(tmp_path, unit_square_domain):
    mesh = triangulate(unit_square_domain, max_area=0.07)
    path = tmp_path / "mesh.txt"
    mesh.save_text(path)
    back = TriangleMesh.load_text(path)
    assert np.array_equal(back.vertices, mesh.vertices)  # repr() floats, bit exact
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.boundary_flags, mesh.boundary_flags)
    assert back.to_text() == mesh.to_text()


def test_text_header(unit_square_mesh):
    text = unit_square_mesh.to_text()
    first = text.splitlines()[0].split()
    assert first == ["4", "2"]


def test_text_rejects_bad_indices():
    from pricefield.errors import PricefieldError

    text = "3 1\n0.0 0.0 1\n1.0 0.0 1\n0.0 1.0 1\n0 1 7\n"
    with pytest.raises(PricefieldError):
        TriangleMesh.from_text(text)


def test_validate_rejects_flipped_triangle():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(GeometryError):
        TriangleMesh(verts, np.array([[0, 2, 1]]), np.ones(3, dtype=bool)).validate()


def test_boundary_polygon_round_trip(unit_square_domain):
    hole = np.array([[0.4, 0.4], [0.4, 0.6], [0.6, 0.6], [0.6, 0.4]])
    dom = DomainPolygon(outer=SQUARE, holes=[hole])
    mesh = triangulate(dom, max_area=0.02)
    poly = mesh.boundary_polygon()
    poly.validate()
    assert poly.area() == pytest.approx(dom.area(), rel=1e-9)
    assert len(poly.holes) == 1
