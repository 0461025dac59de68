"""Geographic partitioning of point sets into price-homogeneous regions.

Pipeline: pairwise distances penalized by price-surface variation along
the connecting segment (so points separated by a price cliff or by a gap
in the domain count as far apart), density-peak clustering on that
distance, then a contiguity repair pass that dissolves small disconnected
shards of each cluster into their surrounding region.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError, InputError, ResourceError

PSD_MAX_POINTS = 20000
DEFAULT_ALPHA_PENALTY = 4.0
DEFAULT_SAMPLES_PER_EDGE = 16
DEFAULT_DC_QUANTILE = 0.02
DEFAULT_MUTUAL_K = 10
MIN_COMPONENT_FRAC = 0.05


# ------------------------------------------------- penalized distances

def psd_matrix(
    points,
    sampler,
    alpha_penalty: float = DEFAULT_ALPHA_PENALTY,
    samples_per_edge: int = DEFAULT_SAMPLES_PER_EDGE,
    value_range: float = None,
):
    """Price-surface-penalized distance matrix.

    d(i, j) = ||p_i - p_j|| * (1 + alpha * V(i, j)) where V accumulates
    |surface difference| between consecutive samples along the segment
    (normalized by the surface's value range) plus 1 for every exit from
    the surface's support (NaN gap). Symmetric with a zero diagonal.

    sampler : callable mapping (m, 2) coordinates to m values, NaN
        outside the domain (a Raster.sample bound method fits).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    if n > PSD_MAX_POINTS:
        raise ResourceError(
            "penalized distance matrix refused for n=%d > %d points"
            % (n, PSD_MAX_POINTS)
        )
    if n < 2:
        raise InputError("need at least two points")
    if samples_per_edge < 1:
        raise InputError("samples_per_edge must be >= 1")
    if alpha_penalty < 0:
        raise InputError("alpha_penalty must be >= 0")

    S = int(samples_per_edge)
    ts = np.linspace(0.0, 1.0, S + 1)

    if value_range is None:
        vals_at = sampler(pts)
        finite = vals_at[np.isfinite(vals_at)]
        if finite.size >= 2:
            value_range = float(finite.max() - finite.min())
        else:
            value_range = 0.0
    rng = max(float(value_range), 1e-300)

    D = np.zeros((n, n))
    for i in range(n - 1):
        rest = pts[i + 1 :]
        m = len(rest)
        # (m, S+1, 2) sample coordinates along each segment
        seg = pts[i][None, None, :] + ts[None, :, None] * (rest - pts[i])[:, None, :]
        vals = sampler(seg.reshape(-1, 2)).reshape(m, S + 1)
        fin = np.isfinite(vals)
        both = fin[:, 1:] & fin[:, :-1]
        dv = np.where(both, np.abs(vals[:, 1:] - vals[:, :-1]), 0.0).sum(axis=1)
        exits = np.maximum(
            (fin[:, :-1] & ~fin[:, 1:]).sum(axis=1),
            (~fin[:, :-1] & fin[:, 1:]).sum(axis=1),
        )
        V = dv / rng + exits
        eu = np.hypot(rest[:, 0] - pts[i, 0], rest[:, 1] - pts[i, 1])
        row = eu * (1.0 + alpha_penalty * V)
        D[i, i + 1 :] = row
        D[i + 1 :, i] = row
    return D


# ------------------------------------------------------- density peaks

class CfsfdpState:
    """Per-point clustering quantities: density rho, separation delta,
    score gamma = rho * delta, the nearest denser point, and centers."""

    def __init__(self, rho, delta, gamma, nearest_higher, center_indices, dc):
        self.rho = np.asarray(rho, dtype=float)
        self.delta = np.asarray(delta, dtype=float)
        self.gamma = np.asarray(gamma, dtype=float)
        self.nearest_higher = np.asarray(nearest_higher, dtype=np.int64)
        self.center_indices = list(int(c) for c in center_indices)
        self.dc = float(dc)

    def to_csv(self, path, labels=None) -> None:
        centers = set(self.center_indices)
        with open(path, "w") as fh:
            cols = "point_id,rho,delta,gamma,nearest_higher,is_center"
            if labels is not None:
                cols += ",label"
            fh.write(cols + "\n")
            for i in range(len(self.rho)):
                row = "%d,%s,%s,%s,%d,%d" % (
                    i,
                    repr(float(self.rho[i])),
                    repr(float(self.delta[i])),
                    repr(float(self.gamma[i])),
                    int(self.nearest_higher[i]),
                    1 if i in centers else 0,
                )
                if labels is not None:
                    row += ",%d" % int(labels[i])
                fh.write(row + "\n")


def cfsfdp_cluster(D, dc_quantile: float = DEFAULT_DC_QUANTILE, centers="auto"):
    """Density-peak clustering on a precomputed distance matrix.

    Density uses a Gaussian kernel at bandwidth d_c (the given quantile
    of off-diagonal distances). Cluster centers are the points with the
    highest gamma = rho * delta: the top J when centers is an integer,
    or all points with gamma above mean + 3 std when centers='auto'
    (falling back to a single cluster, with a warning in meta, when the
    rule selects none). Remaining points take the label of their nearest
    denser point, in decreasing density order. Labels run 1..J, numbered
    in decreasing center gamma.

    Returns (labels, state, meta).
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if D.shape != (n, n):
        raise InputError("distance matrix must be square")
    if n < 2:
        raise InputError("need at least two points to cluster")
    if not (0 < dc_quantile < 1):
        raise InputError("dc_quantile must be in (0, 1)")

    iu = np.triu_indices(n, 1)
    off = D[iu]
    dc = float(np.quantile(off, dc_quantile))
    if dc <= 0:
        raise DataError(
            "distance quantile d_c is zero; too many coincident points"
        )

    rho = np.exp(-((D / dc) ** 2)).sum(axis=1) - 1.0  # drop self term

    # decreasing density, ties by lower point index
    order = np.lexsort((np.arange(n), -rho))
    delta = np.empty(n)
    nearest = np.empty(n, dtype=np.int64)
    top = order[0]
    delta[top] = float(D[top].max())
    nearest[top] = top
    for m in range(1, n):
        i = order[m]
        prev = order[:m]
        drow = D[i, prev]
        dmin = drow.min()
        delta[i] = float(dmin)
        nearest[i] = int(prev[drow == dmin].min())
    gamma = rho * delta

    meta = {"dc": dc, "dc_quantile": dc_quantile, "warnings": []}
    by_gamma = np.lexsort((np.arange(n), -gamma))
    if centers == "auto":
        thresh = float(gamma.mean() + 3.0 * gamma.std())
        selected = [int(i) for i in by_gamma if gamma[i] > thresh]
        if not selected:
            selected = [int(by_gamma[0])]
            meta["warnings"].append(
                "auto center selection found no outliers; using one cluster"
            )
        meta["gamma_threshold"] = thresh
    else:
        J = int(centers)
        if J < 1 or J > n:
            raise InputError("number of centers must be in [1, n]")
        selected = [int(i) for i in by_gamma[:J]]
    meta["n_clusters"] = len(selected)

    labels = np.zeros(n, dtype=np.int64)
    for rank, c in enumerate(selected):
        labels[c] = rank + 1
    center_set = set(selected)
    for m in range(n):
        i = int(order[m])
        if i in center_set:
            continue
        up = int(nearest[i])
        if up == i:
            # densest point that is not a center: attach to the nearest
            # center outside itself
            crow = D[i, selected]
            up = int(selected[int(np.argmin(crow))])
        labels[i] = labels[up]
    if (labels == 0).any():
        raise DataError("cluster assignment failed to reach every point")

    state = CfsfdpState(rho, delta, gamma, nearest, selected, dc)
    return labels, state, meta


# ----------------------------------------------------- contiguity repair

def _mutual_graph(points, k):
    n = len(points)
    tree = cKDTree(points)
    kk = min(k + 1, n)
    _, nbrs = tree.query(points, k=kk)
    nbrs = np.atleast_2d(nbrs)
    adj = [set() for _ in range(n)]
    for i in range(n):
        for j in nbrs[i, 1:]:
            j = int(j)
            adj[i].add(j)
            adj[j].add(i)
    return adj


def enforce_contiguity(
    points,
    labels,
    mutual_k: int = DEFAULT_MUTUAL_K,
    min_frac: float = MIN_COMPONENT_FRAC,
):
    """Dissolve small disconnected shards of each cluster.

    On the symmetrized k-nearest-neighbor graph, any connected component
    of a label containing fewer than min_frac of that label's points is
    relabeled to the majority label among the component's outside
    neighbors (ties to the smaller label; isolated components go to the
    label of the nearest outside point). Repeats until stable, then
    renumbers labels to consecutive 1..J in ascending old-label order.

    Returns (labels, n_moved).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    labels = np.asarray(labels, dtype=np.int64).copy()
    n = len(pts)
    if len(labels) != n:
        raise InputError("labels length must match points")
    if mutual_k < 1:
        raise InputError("mutual_k must be >= 1")
    adj = _mutual_graph(pts, mutual_k)

    moved_total = 0
    for _ in range(n):  # each pass relabels at least one point or stops
        changed = False
        for lab in sorted(set(labels.tolist())):
            members = np.where(labels == lab)[0]
            size = len(members)
            member_set = set(members.tolist())
            seen = set()
            comps = []
            for s in members:
                s = int(s)
                if s in seen:
                    continue
                comp = []
                stack = [s]
                seen.add(s)
                while stack:
                    v = stack.pop()
                    comp.append(v)
                    for w in adj[v]:
                        if w in member_set and w not in seen:
                            seen.add(w)
                            stack.append(w)
                comps.append(sorted(comp))
            if len(comps) <= 1:
                continue
            for comp in comps:
                if len(comp) >= min_frac * size:
                    continue
                comp_set = set(comp)
                votes = {}
                for v in comp:
                    for w in adj[v]:
                        if w not in comp_set and labels[w] != lab:
                            key = int(labels[w])
                            votes[key] = votes.get(key, 0) + 1
                if votes:
                    best = min(votes, key=lambda m: (-votes[m], m))
                else:
                    outside = np.setdiff1d(
                        np.arange(n), np.fromiter(comp_set, dtype=np.int64)
                    )
                    if outside.size == 0:
                        continue
                    tree = cKDTree(pts[outside])
                    d, idx = tree.query(pts[comp])
                    d = np.atleast_1d(d)
                    idx = np.atleast_1d(idx)
                    best = int(labels[outside[idx[int(np.argmin(d))]]])
                    if best == lab:
                        continue
                labels[np.asarray(comp, dtype=np.int64)] = best
                moved_total += len(comp)
                changed = True
        if not changed:
            break

    old = sorted(set(labels.tolist()))
    remap = {l: i + 1 for i, l in enumerate(old)}
    labels = np.array([remap[int(l)] for l in labels], dtype=np.int64)
    return labels, moved_total


# ------------------------------------------------------ region lookup

def assign_region(train_points, train_labels, new_points):
    """Label new points by their nearest training point (Euclidean);
    exact distance ties resolve to the lower training index."""
    tp = np.atleast_2d(np.asarray(train_points, dtype=float))
    tl = np.asarray(train_labels, dtype=np.int64)
    np_pts = np.atleast_2d(np.asarray(new_points, dtype=float))
    if len(tp) == 0:
        raise InputError("no training points to assign from")
    tree = cKDTree(tp)
    kk = min(4, len(tp))
    d, idx = tree.query(np_pts, k=kk)
    if kk == 1:
        d = d[:, None]
        idx = idx[:, None]
    out = np.empty(len(np_pts), dtype=np.int64)
    for i in range(len(np_pts)):
        dmin = d[i, 0]
        tied = idx[i][d[i] <= dmin * (1.0 + 1e-12)]
        out[i] = tl[int(tied.min())]
    return out


# ------------------------------------------------------- persistence

def partition_to_csv(labels, path) -> None:
    with open(path, "w") as fh:
        fh.write("point_id,label\n")
        for i, l in enumerate(labels):
            fh.write("%d,%d\n" % (i, int(l)))


def partition_from_csv(path) -> np.ndarray:
    labels = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "point_id,label":
            raise InputError("partition CSV must have header point_id,label")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            pid, lab = line.split(",")
            if int(pid) != len(labels):
                raise InputError("partition CSV point_id out of order")
            labels.append(int(lab))
    return np.asarray(labels, dtype=np.int64)
