"""Projection, polygon validity, and alpha-shape domain inference."""
import numpy as np
import pytest

from pricefield.errors import DataError, GeometryError, InputError
from pricefield.geometry import (
    DomainPolygon,
    default_alpha,
    domain_from_geojson,
    domain_to_geojson,
    geographic_origin,
    infer_domain,
    points_in_ring,
    project_coordinates,
    ring_area,
    ring_is_simple,
    unproject_coordinates,
    write_domain_geojson,
)

ORIGIN = (53.5, -113.5)  # roughly Edmonton


def _haversine_m(lat1, lon1, lat2, lon2, radius=6371000.0):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(lon2 - lon1)
    a = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * radius * np.arcsin(np.sqrt(a))


# ------------------------------------------------------------ projection

def test_origin_projects_to_zero():
    xy = project_coordinates(np.array([ORIGIN]), ORIGIN)
    assert np.abs(xy).max() < 1e-9


def test_one_degree_latitude():
    # R * pi / 180 = 111194.93 m per degree of latitude
    xy = project_coordinates(np.array([[ORIGIN[0] + 1.0, ORIGIN[1]]]), ORIGIN)
    assert xy[0, 0] == pytest.approx(0.0, abs=1e-6)
    assert xy[0, 1] == pytest.approx(111194.9, abs=0.1)


def test_projection_symmetry():
    up = project_coordinates(np.array([[ORIGIN[0] + 0.3, ORIGIN[1]]]), ORIGIN)
    dn = project_coordinates(np.array([[ORIGIN[0] - 0.3, ORIGIN[1]]]), ORIGIN)
    assert up[0, 1] == pytest.approx(-dn[0, 1], rel=1e-12)


def test_distances_close_to_haversine():
    rng = np.random.default_rng(0)
    latlon = np.column_stack(
        [
            ORIGIN[0] + rng.uniform(-0.05, 0.05, 40),
            ORIGIN[1] + rng.uniform(-0.08, 0.08, 40),
        ]
    )
    xy = project_coordinates(latlon, ORIGIN)
    for i in range(0, 40, 7):
        for j in range(i + 1, 40, 11):
            true = _haversine_m(*latlon[i], *latlon[j])
            flat = float(np.hypot(*(xy[i] - xy[j])))
            if true > 100.0:  # sub-100 m pairs are dominated by rounding
                assert abs(flat - true) / true < 0.01


def test_unproject_round_trip():
    rng = np.random.default_rng(1)
    latlon = np.column_stack(
        [
            ORIGIN[0] + rng.uniform(-0.1, 0.1, 25),
            ORIGIN[1] + rng.uniform(-0.1, 0.1, 25),
        ]
    )
    back = unproject_coordinates(project_coordinates(latlon, ORIGIN), ORIGIN)
    assert np.abs(back - latlon).max() < 1e-9


def test_out_of_range_coordinates_name_the_record():
    latlon = np.array([[53.5, -113.5], [95.0, -113.5]])
    with pytest.raises(DataError, match="record 1"):
        project_coordinates(latlon, ORIGIN)


def test_geographic_origin_is_centroid():
    latlon = np.array([[53.0, -113.0], [54.0, -114.0]])
    lat0, lon0 = geographic_origin(latlon)
    assert lat0 == pytest.approx(53.5)
    assert lon0 == pytest.approx(-113.5)


# ------------------------------------------------------------- polygons

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def test_ring_area_signs():
    assert ring_area(SQUARE) == pytest.approx(1.0)
    assert ring_area(SQUARE[::-1]) == pytest.approx(-1.0)


def test_ring_simplicity():
    assert ring_is_simple(SQUARE)
    bowtie = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    assert not ring_is_simple(bowtie)
    dup = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [1.0, 0.0]])
    assert not ring_is_simple(dup)


def test_points_in_ring_even_odd():
    inside = points_in_ring(np.array([[0.5, 0.5], [2.0, 0.5]]), SQUARE)
    assert inside.tolist() == [True, False]


def test_domain_validate_accepts_square_with_hole():
    hole = np.array([[0.4, 0.4], [0.4, 0.6], [0.6, 0.6], [0.6, 0.4]])  # clockwise
    dom = DomainPolygon(outer=SQUARE, holes=[hole])
    dom.validate()
    assert dom.area() == pytest.approx(1.0 - 0.04)
    assert dom.bbox() == pytest.approx((0.0, 0.0, 1.0, 1.0))
    inside = dom.contains(np.array([[0.5, 0.5], [0.2, 0.2], [3.0, 0.0]]))
    assert inside.tolist() == [False, True, False]  # hole center excluded


def test_domain_validate_rejects_bad_rings():
    with pytest.raises(GeometryError):
        DomainPolygon(outer=SQUARE[::-1]).validate()  # clockwise outer
    bowtie = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(GeometryError):
        DomainPolygon(outer=bowtie).validate()
    ccw_hole = np.array([[0.4, 0.4], [0.6, 0.4], [0.6, 0.6], [0.4, 0.6]])
    with pytest.raises(GeometryError):
        DomainPolygon(outer=SQUARE, holes=[ccw_hole]).validate()
    outside_hole = np.array([[2.0, 0.0], [2.0, 0.5], [2.5, 0.5], [2.5, 0.0]])
    with pytest.raises(GeometryError):
        DomainPolygon(outer=SQUARE, holes=[outside_hole]).validate()


def test_default_alpha_tracks_spacing():
    xs, ys = np.meshgrid(np.arange(5.0), np.arange(5.0))
    grid = np.column_stack([xs.ravel() * 10.0, ys.ravel() * 10.0])
    assert default_alpha(grid) == pytest.approx(30.0)  # 3x nearest-neighbour
    with pytest.raises(InputError):
        default_alpha(grid[:1])
    with pytest.raises(GeometryError):
        default_alpha(np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]))


# ----------------------------------------------------------- alpha shape

def test_square_corners_large_alpha():
    corners = SQUARE * 100.0
    dom = infer_domain(corners, alpha=1000.0)
    dom.validate()
    assert dom.area() == pytest.approx(10000.0)
    assert len(dom.outer) == 4
    assert not dom.holes


def test_two_clusters_keeps_largest():
    rng = np.random.default_rng(2)
    a = rng.uniform(0.0, 100.0, size=(30, 2))
    b = rng.uniform(0.0, 100.0, size=(10, 2)) + np.array([10000.0, 0.0])
    dom = infer_domain(np.vstack([a, b]))
    dom.validate()
    assert dom.meta["dropped_points"] == 10
    x0, _, x1, _ = dom.bbox()
    assert x1 < 200.0  # the far cluster is gone


def test_c_shape_keeps_opening():
    # thick C: annulus sampled away from the opening around angle 0
    rng = np.random.default_rng(3)
    t = rng.uniform(np.pi / 4, 7 * np.pi / 4, 600)
    r = rng.uniform(60.0, 100.0, 600)
    pts = np.column_stack([r * np.cos(t), r * np.sin(t)])
    dom = infer_domain(pts, alpha=18.0)
    dom.validate()
    probe = np.array([[80.0, 0.0], [0.0, 0.0], [0.0, -80.0]])
    inside = dom.contains(probe)
    assert not inside[0]  # the mouth stays open
    assert not inside[1]  # the middle stays hollow
    assert inside[2]


def test_permutation_invariance():
    rng = np.random.default_rng(4)
    pts = rng.uniform(0.0, 500.0, size=(80, 2))
    a = infer_domain(pts, alpha=90.0)
    b = infer_domain(pts[rng.permutation(80)], alpha=90.0)
    assert a.area() == pytest.approx(b.area(), rel=1e-12)
    assert a.meta["dropped_points"] == b.meta["dropped_points"]


def _pinched_annulus():
    """Ring of points whose inner wall converges onto the outer wall at
    the leftmost point, so the raw alpha shape necks to a single vertex
    there."""
    c = np.array([1.5, 0.0])
    pts = [(0.0, 0.0)]
    for k in range(28):
        t = 2 * np.pi * k / 28
        pts.append(tuple(c + 1.5 * np.array([np.cos(t), np.sin(t)])))
    for k in range(28):
        t = 2 * np.pi * k / 28
        r = 0.8 + 0.77 * np.cos(t)
        if abs(t - np.pi) < 0.3:
            continue
        pts.append(tuple(c + r * np.array([np.cos(t), np.sin(t)])))
    return np.unique(np.round(np.array(pts), 12), axis=0)


def test_pinched_boundary_is_repaired():
    # a neck meeting at one vertex admits no simple-ring decomposition;
    # the builder must fill rejected triangles there instead of emitting
    # a self-touching polygon
    pts = _pinched_annulus()
    dom = infer_domain(pts, alpha=0.8)
    dom.validate()
    assert dom.meta["filled_pinch_triangles"] > 0
    from pricefield.triangulation import triangulate

    mesh = triangulate(dom, max_area=0.08)
    assert mesh.n_vertices > len(dom.outer)


def test_collinear_points_rejected():
    line = np.column_stack([np.arange(10.0), np.zeros(10)])
    with pytest.raises(GeometryError):
        infer_domain(line)


def test_too_few_points_rejected():
    with pytest.raises(InputError):
        infer_domain(np.array([[0.0, 0.0], [1.0, 0.0]]))


# --------------------------------------------------------------- geojson

def test_geojson_round_trip(tmp_path):
    from pricefield.geometry import read_domain_geojson

    hole = 500.0 * np.array([[0.3, 0.3], [0.3, 0.7], [0.7, 0.7], [0.7, 0.3]])
    dom = DomainPolygon(outer=SQUARE * 500.0, holes=[hole], meta={"alpha": 2.0})
    path = tmp_path / "domain.geojson"
    write_domain_geojson(dom, ORIGIN, path)
    back = read_domain_geojson(path, ORIGIN)
    back.validate()
    assert np.abs(back.outer - dom.outer).max() < 1e-6
    assert len(back.holes) == 1
    assert np.abs(back.holes[0] - hole).max() < 1e-6


def test_geojson_dict_shape():
    dom = DomainPolygon(outer=SQUARE * 500.0)
    gj = domain_to_geojson(dom, ORIGIN)
    assert gj["type"] == "Polygon"
    # geojson rings repeat the first vertex at the end
    ring = gj["coordinates"][0]
    assert ring[0] == ring[-1]
    # feature wrappers are accepted on the way back in
    feat = {"type": "Feature", "geometry": gj, "properties": {}}
    back = domain_from_geojson(feat, ORIGIN)
    assert back.area() == pytest.approx(dom.area(), rel=1e-9)
