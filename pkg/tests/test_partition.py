"""Penalized distances, density-peak clustering, contiguity repair."""
import numpy as np
import pytest

import pricefield.partition as pt
from pricefield.errors import DataError, InputError, ResourceError
from pricefield.partition import (
    CfsfdpState,
    assign_region,
    cfsfdp_cluster,
    enforce_contiguity,
    partition_from_csv,
    partition_to_csv,
    psd_matrix,
)


def euclid(points):
    pts = np.asarray(points, dtype=float)
    d = pts[:, None, :] - pts[None, :, :]
    return np.hypot(d[..., 0], d[..., 1])


def two_blobs(n_a=10, n_b=10, gap=100.0, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 1.0, size=(n_a, 2))
    b = rng.normal(0.0, 1.0, size=(n_b, 2)) + np.array([gap, gap])
    return np.vstack([a, b])


# ------------------------------------------------------------- psd


def test_psd_alpha_zero_is_euclidean():
    pts = np.random.default_rng(3).uniform(0, 50, size=(12, 2))
    D = psd_matrix(pts, lambda p: np.sin(p[:, 0]), alpha_penalty=0.0)
    assert np.array_equal(D, euclid(pts))


def test_psd_constant_surface_is_euclidean():
    pts = np.random.default_rng(4).uniform(0, 50, size=(9, 2))
    D = psd_matrix(pts, lambda p: np.full(len(p), 7.0))
    assert np.array_equal(D, euclid(pts))


def test_psd_symmetric_zero_diagonal():
    pts = np.random.default_rng(5).uniform(0, 10, size=(15, 2))
    D = psd_matrix(pts, lambda p: np.cos(p[:, 0]) + p[:, 1])
    assert np.array_equal(D, D.T)
    assert np.array_equal(np.diag(D), np.zeros(len(pts)))


def test_psd_dominates_euclidean():
    pts = np.random.default_rng(6).uniform(0, 20, size=(20, 2))
    D = psd_matrix(pts, lambda p: np.sin(p[:, 0] / 3.0))
    assert np.all(D >= euclid(pts) - 1e-12)


def test_psd_step_straddle_hand_value():
    # unit step at x = 0.5, endpoints straddling it; the segment crosses
    # once so V = 1 and d = 0.5 * (1 + alpha)
    pts = np.array([[0.25, 0.5], [0.75, 0.5]])
    step = lambda p: np.where(p[:, 0] >= 0.5, 1.0, 0.0)
    D = psd_matrix(pts, step, alpha_penalty=4.0, value_range=1.0)
    assert D[0, 1] == pytest.approx(2.5, abs=1e-15)
    # auto value range from the two endpoint samples gives the same answer
    D2 = psd_matrix(pts, step, alpha_penalty=4.0)
    assert D2[0, 1] == pytest.approx(2.5, abs=1e-15)


def test_psd_linear_surface_telescopes():
    # monotone surface along the segment: V = |h(b) - h(a)| / range
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    D = psd_matrix(pts, lambda p: p[:, 0].copy(), alpha_penalty=4.0)
    assert D[0, 1] == pytest.approx(5.0, rel=1e-14)          # x varies by 1
    assert D[0, 2] == pytest.approx(1.0, rel=1e-14)          # x constant
    assert D[1, 2] == pytest.approx(5.0 * np.sqrt(2), rel=1e-14)


def test_psd_nan_gap_counts_as_exit():
    pts = np.array([[0.0, 0.5], [1.0, 0.5]])

    def gappy(p):
        v = np.zeros(len(p))
        v[(p[:, 0] > 0.4) & (p[:, 0] < 0.6)] = np.nan
        return v

    D = psd_matrix(pts, gappy, alpha_penalty=4.0, value_range=1.0)
    assert D[0, 1] == pytest.approx(5.0, rel=1e-14)
    solid = psd_matrix(pts, lambda p: np.zeros(len(p)), value_range=1.0)
    assert D[0, 1] > solid[0, 1]


def test_psd_input_validation():
    ok = lambda p: np.zeros(len(p))
    with pytest.raises(InputError, match="two points"):
        psd_matrix(np.array([[0.0, 0.0]]), ok)
    with pytest.raises(InputError, match="samples_per_edge"):
        psd_matrix(np.zeros((3, 2)), ok, samples_per_edge=0)
    with pytest.raises(InputError, match="alpha_penalty"):
        psd_matrix(np.zeros((3, 2)), ok, alpha_penalty=-1.0)


def test_psd_size_cap(monkeypatch):
    monkeypatch.setattr(pt, "PSD_MAX_POINTS", 5)
    pts = np.random.default_rng(0).uniform(0, 1, size=(6, 2))
    with pytest.raises(ResourceError, match="n=6"):
        psd_matrix(pts, lambda p: np.zeros(len(p)))


# ----------------------------------------------------------- cfsfdp


def test_cfsfdp_two_blobs_exact():
    pts = two_blobs()
    D = euclid(pts)
    labels, state, meta = cfsfdp_cluster(D, centers=2)
    assert meta["n_clusters"] == 2
    assert len(set(labels[:10])) == 1
    assert len(set(labels[10:])) == 1
    assert labels[0] != labels[10]
    assert sorted(set(labels.tolist())) == [1, 2]
    # two centers, one per blob
    sides = sorted(c // 10 for c in state.center_indices)
    assert sides == [0, 1]


def test_cfsfdp_brute_force_quantities():
    pts = two_blobs(seed=7)
    D = euclid(pts)
    labels, state, meta = cfsfdp_cluster(D, centers=2)
    n = len(pts)

    iu = np.triu_indices(n, 1)
    dc = float(np.quantile(D[iu], 0.02))
    assert state.dc == dc
    rho = np.exp(-((D / dc) ** 2)).sum(axis=1) - 1.0
    assert np.allclose(state.rho, rho, rtol=1e-12, atol=0)

    def earlier(j, i):
        return rho[j] > rho[i] or (rho[j] == rho[i] and j < i)

    top = min(range(n), key=lambda i: (-rho[i], i))
    for i in range(n):
        if i == top:
            assert state.delta[i] == D[i].max()
            assert state.nearest_higher[i] == i
            continue
        prev = [j for j in range(n) if earlier(j, i)]
        drow = D[i, prev]
        assert state.delta[i] == drow.min()
        tied = [p for p, d in zip(prev, drow) if d == drow.min()]
        assert state.nearest_higher[i] == min(tied)
    assert np.allclose(state.gamma, state.rho * state.delta, rtol=1e-15)

    # every non-center chain climbs to a center carrying the same label
    centers = set(state.center_indices)
    for i in range(n):
        j, hops = i, 0
        while j not in centers:
            j = int(state.nearest_higher[j])
            hops += 1
            assert hops <= n
        assert labels[i] == labels[j]


def test_cfsfdp_equilateral_auto_falls_back():
    # all gammas equal, so mean + 3 std selects nothing
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    labels, state, meta = cfsfdp_cluster(euclid(pts), centers="auto")
    assert meta["n_clusters"] == 1
    assert meta["warnings"] == [
        "auto center selection found no outliers; using one cluster"
    ]
    assert np.array_equal(labels, [1, 1, 1])
    assert state.center_indices == [0]


def test_cfsfdp_scale_invariant_labels():
    D = euclid(two_blobs(seed=9))
    l1, _, _ = cfsfdp_cluster(D, centers=2)
    l2, _, _ = cfsfdp_cluster(10.0 * D, centers=2)
    assert np.array_equal(l1, l2)


def test_cfsfdp_explicit_center_count():
    pts = np.vstack([two_blobs(seed=2), two_blobs(seed=3) + 500.0])
    labels, _, meta = cfsfdp_cluster(euclid(pts), centers=4)
    assert meta["n_clusters"] == 4
    assert sorted(set(labels.tolist())) == [1, 2, 3, 4]


def test_cfsfdp_input_validation():
    D = euclid(two_blobs())
    with pytest.raises(InputError, match="square"):
        cfsfdp_cluster(D[:5, :4])
    with pytest.raises(InputError, match="two points"):
        cfsfdp_cluster(np.zeros((1, 1)))
    with pytest.raises(InputError, match="dc_quantile"):
        cfsfdp_cluster(D, dc_quantile=0.0)
    with pytest.raises(InputError, match="dc_quantile"):
        cfsfdp_cluster(D, dc_quantile=1.0)
    with pytest.raises(InputError, match="centers"):
        cfsfdp_cluster(D, centers=0)
    with pytest.raises(InputError, match="centers"):
        cfsfdp_cluster(D, centers=len(D) + 1)


def test_cfsfdp_coincident_points_rejected():
    with pytest.raises(DataError, match="coincident"):
        cfsfdp_cluster(np.zeros((4, 4)))


def test_cfsfdp_state_csv(tmp_path):
    pts = two_blobs()
    labels, state, _ = cfsfdp_cluster(euclid(pts), centers=2)
    bare = tmp_path / "state.csv"
    state.to_csv(bare)
    lines = bare.read_text().splitlines()
    assert lines[0] == "point_id,rho,delta,gamma,nearest_higher,is_center"
    assert len(lines) == len(pts) + 1
    labeled = tmp_path / "state_lab.csv"
    state.to_csv(labeled, labels=labels)
    lines = labeled.read_text().splitlines()
    assert lines[0] == "point_id,rho,delta,gamma,nearest_higher,is_center,label"
    assert lines[1].startswith("0,")
    assert sum(int(l.split(",")[5]) for l in lines[1:]) == 2


# ------------------------------------------------------- contiguity


def test_contiguity_clean_labels_untouched():
    pts = two_blobs(20, 20)
    labels = np.array([1] * 20 + [2] * 20)
    out, moved = enforce_contiguity(pts, labels)
    assert moved == 0
    assert np.array_equal(out, labels)


def test_contiguity_absorbs_stray_point():
    pts = two_blobs(20, 21)
    labels = np.array([1] * 20 + [2] * 21)
    labels[20] = 1  # one point inside blob B mislabeled
    out, moved = enforce_contiguity(pts, labels)
    assert moved == 1
    assert np.array_equal(out, [1] * 20 + [2] * 21)


def test_contiguity_keeps_equal_halves():
    # label 1 lives in two equally sized far-apart pieces; both survive
    rng = np.random.default_rng(11)
    a = rng.normal(0, 1, size=(10, 2))
    b = rng.normal(0, 1, size=(10, 2)) + [60.0, 0.0]
    c = rng.normal(0, 1, size=(10, 2)) + [120.0, 0.0]
    pts = np.vstack([a, b, c])
    labels = np.array([1] * 10 + [2] * 10 + [1] * 10)
    out, moved = enforce_contiguity(pts, labels, min_frac=0.3)
    assert moved == 0
    assert np.array_equal(out, labels)


def test_contiguity_renumbers_ascending():
    pts = two_blobs(15, 15)
    labels = np.array([7] * 15 + [3] * 15)
    out, moved = enforce_contiguity(pts, labels)
    assert moved == 0
    assert np.array_equal(out, [2] * 15 + [1] * 15)


def test_contiguity_validation():
    pts = two_blobs(5, 5)
    with pytest.raises(InputError, match="length"):
        enforce_contiguity(pts, np.ones(3, dtype=int))
    with pytest.raises(InputError, match="mutual_k"):
        enforce_contiguity(pts, np.ones(10, dtype=int), mutual_k=0)


# ----------------------------------------------------- region lookup


def test_assign_region_training_identity():
    pts = two_blobs(8, 8)
    labels = np.array([1] * 8 + [2] * 8)
    assert np.array_equal(assign_region(pts, labels, pts), labels)


def test_assign_region_tie_takes_lower_index():
    train = np.array([[0.0, 0.0], [2.0, 0.0]])
    got = assign_region(train, np.array([5, 9]), np.array([[1.0, 0.0]]))
    assert got.tolist() == [5]


def test_assign_region_matches_brute_force():
    rng = np.random.default_rng(13)
    train = rng.uniform(0, 100, size=(30, 2))
    tl = rng.integers(1, 4, size=30)
    new = rng.uniform(0, 100, size=(50, 2))
    got = assign_region(train, tl, new)
    d = np.hypot(
        new[:, None, 0] - train[None, :, 0], new[:, None, 1] - train[None, :, 1]
    )
    assert np.array_equal(got, tl[np.argmin(d, axis=1)])


def test_assign_region_empty_training():
    with pytest.raises(InputError, match="training"):
        assign_region(np.zeros((0, 2)), np.zeros(0, dtype=int), np.zeros((1, 2)))


# ------------------------------------------------------- persistence


def test_partition_csv_round_trip(tmp_path):
    labels = np.array([2, 1, 1, 3, 2], dtype=np.int64)
    path = tmp_path / "part.csv"
    partition_to_csv(labels, path)
    assert np.array_equal(partition_from_csv(path), labels)
    text = path.read_text().splitlines()
    assert text[0] == "point_id,label"
    assert text[1] == "0,2"


def test_partition_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,label\n0,1\n")
    with pytest.raises(InputError, match="header"):
        partition_from_csv(path)


def test_partition_csv_rejects_out_of_order(tmp_path):
    path = tmp_path / "ooo.csv"
    path.write_text("point_id,label\n0,1\n2,1\n")
    with pytest.raises(InputError, match="out of order"):
        partition_from_csv(path)
