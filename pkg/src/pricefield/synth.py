"""Synthetic datasets and slow independent checks for the fitted model.

The generator produces reproducible house-price-like datasets on simple
polygonal domains. The oracles here deliberately avoid the production
code paths: dense_oracle_fit rebuilds every matrix with plain Python
loops and solves the reduced normal equations densely, and
fd_penalty_check approximates the roughness penalty by finite
differences on a grid. Both exist to cross-validate the sparse solver,
not to be fast.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InputError, ResourceError
from .fem import basis_matrix, roughness_energy
from .geometry import DomainPolygon, unproject_coordinates
from .rng import SplitMix64
from .triangulation import TriangleMesh

ORACLE_MAX_VERTICES = 200
REJECTION_LIMIT = 10000
SYNTH_ORIGIN = (53.5, -113.5)  # nominal city center for generated lat/lon

PRESETS = ("smooth", "two_region_step", "lshape_smooth")


@dataclass
class SyntheticSpec:
    n: int = 500
    seed: int = 0
    preset: str = "smooth"
    noise_sigma: float = 0.05  # log-scale noise
    q: int = 3
    side: float = 1000.0

    def validate(self) -> None:
        if self.preset not in PRESETS:
            raise InputError(
                "unknown preset '%s'; expected one of %s"
                % (self.preset, ", ".join(PRESETS))
            )
        if self.n < 10:
            raise InputError("need n >= 10 synthetic points")
        if self.noise_sigma < 0:
            raise InputError("noise_sigma must be >= 0")
        if self.q not in (0, 3):
            raise InputError("q must be 0 or 3 for the synthetic presets")
        if self.side <= 0:
            raise InputError("side must be positive")


@dataclass
class SyntheticData:
    points: np.ndarray
    prices: np.ndarray
    W: np.ndarray
    feature_names: list
    domain: DomainPolygon
    z_true: np.ndarray  # noise-free log prices
    region_true: np.ndarray  # 0 when the preset has no ground-truth regions
    spec: SyntheticSpec
    meta: dict = field(default_factory=dict)


def _square_domain(side):
    outer = np.array([[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]])
    return DomainPolygon(outer=outer, holes=[], meta={"preset": "square"})


def _lshape_domain(side):
    s = side
    outer = np.array(
        [
            [0.0, 0.0],
            [s, 0.0],
            [s, 0.5 * s],
            [0.5 * s, 0.5 * s],
            [0.5 * s, s],
            [0.0, s],
        ]
    )
    return DomainPolygon(outer=outer, holes=[], meta={"preset": "lshape"})


def _log_surface(preset, pts, side):
    x = pts[:, 0] / side
    y = pts[:, 1] / side
    if preset == "two_region_step":
        z = np.where(x < 0.5, math.log(250000.0), math.log(450000.0))
        return z + 0.03 * np.sin(2 * np.pi * y)
    # smooth presets: gentle hill over a sloping base
    return 12.9 + 0.3 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y) + 0.2 * x


BETA_TRUE = np.array([0.0020, 0.05, -0.003])
FEATURE_NAMES = ["area_m2", "rooms", "age_years"]


def gen_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Reproducible synthetic dataset on the preset's domain.

    Points are rejection-sampled uniformly from the domain's bounding
    box; more than REJECTION_LIMIT consecutive misses aborts (the domain
    would be pathologically thin).
    """
    spec.validate()
    if spec.preset == "lshape_smooth":
        domain = _lshape_domain(spec.side)
    else:
        domain = _square_domain(spec.side)
    domain.validate()
    x0, y0, x1, y1 = domain.bbox()

    rng = SplitMix64(spec.seed)
    pts = np.empty((spec.n, 2))
    got = 0
    misses = 0
    while got < spec.n:
        p = (rng.uniform(x0, x1), rng.uniform(y0, y1))
        if domain.contains(np.asarray([p]))[0]:
            pts[got] = p
            got += 1
            misses = 0
        else:
            misses += 1
            if misses > REJECTION_LIMIT:
                raise ResourceError(
                    "rejection sampling failed %d times in a row" % REJECTION_LIMIT
                )

    if spec.q == 3:
        W = np.empty((spec.n, 3))
        for i in range(spec.n):
            W[i, 0] = rng.uniform(80.0, 400.0)
            W[i, 1] = float(rng.next_below(6) + 1)
            W[i, 2] = rng.uniform(0.0, 100.0)
        names = list(FEATURE_NAMES)
        effect = W @ BETA_TRUE
    else:
        W = np.zeros((spec.n, 0))
        names = []
        effect = np.zeros(spec.n)

    z_true = _log_surface(spec.preset, pts, spec.side) + effect
    noise = np.array([rng.normal(0.0, spec.noise_sigma) for _ in range(spec.n)])
    z = z_true + noise
    prices = np.exp(z)

    if spec.preset == "two_region_step":
        region_true = np.where(pts[:, 0] < 0.5 * spec.side, 1, 2).astype(np.int64)
    else:
        region_true = np.zeros(spec.n, dtype=np.int64)

    return SyntheticData(
        points=pts,
        prices=prices,
        W=W,
        feature_names=names,
        domain=domain,
        z_true=z_true,
        region_true=region_true,
        spec=spec,
        meta={"beta_true": [float(b) for b in BETA_TRUE[: spec.q]]},
    )


def write_synthetic_csv(data: SyntheticData, path, origin=SYNTH_ORIGIN) -> dict:
    """Write a synthetic dataset as a loadable house CSV, plus a
    ``<base>_truth.csv`` with the noise-free target and true regions.

    Projected coordinates are mapped back to latitude/longitude around
    ``origin`` so the file round-trips through the normal loader.
    Returns {"csv": path, "truth": path}.
    """
    latlon = unproject_coordinates(data.points, origin)
    cols = list(data.feature_names)
    with open(path, "w") as fh:
        fh.write("id,assessed_value,latitude,longitude")
        if cols:
            fh.write("," + ",".join(cols))
        fh.write("\n")
        for i in range(len(data.points)):
            row = [
                "S%06d" % i,
                repr(float(data.prices[i])),
                repr(float(latlon[i, 0])),
                repr(float(latlon[i, 1])),
            ]
            row += [repr(float(v)) for v in data.W[i]]
            fh.write(",".join(row) + "\n")
    base = str(path)
    if base.endswith(".csv"):
        base = base[:-4]
    truth_path = base + "_truth.csv"
    with open(truth_path, "w") as fh:
        fh.write("id,z_true,region_true\n")
        for i in range(len(data.points)):
            fh.write(
                "S%06d,%s,%d\n"
                % (i, repr(float(data.z_true[i])), int(data.region_true[i]))
            )
    return {"csv": str(path), "truth": truth_path}


# --------------------------------------------------------------- oracles

def _brute_psi(mesh: TriangleMesh, pts):
    """Dense evaluation matrix by scanning triangles in ascending index,
    no spatial acceleration (oracle-grade independence)."""
    n = len(pts)
    K = mesh.n_vertices
    psi = np.zeros((n, K))
    verts = mesh.vertices
    tris = mesh.triangles
    for i in range(n):
        x, y = pts[i]
        hit = False
        for t in range(len(tris)):
            a, b, c = tris[t]
            ax, ay = verts[a]
            bx, by = verts[b]
            cx, cy = verts[c]
            d = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay)
            l2 = ((x - ax) * (cy - ay) - (cx - ax) * (y - ay)) / d
            l3 = ((bx - ax) * (y - ay) - (x - ax) * (by - ay)) / d
            l1 = 1.0 - l2 - l3
            if l1 >= -1e-10 and l2 >= -1e-10 and l3 >= -1e-10:
                psi[i, a] = min(1.0, max(0.0, l1))
                psi[i, b] = min(1.0, max(0.0, l2))
                psi[i, c] = min(1.0, max(0.0, l3))
                hit = True
                break
        if not hit:
            raise DataError("oracle point %d lies outside the mesh" % i)
    return psi


def _brute_operators(mesh: TriangleMesh):
    """Mass, stiffness and boundary-flux matrices assembled with scalar
    loops straight from the per-triangle formulas."""
    K = mesh.n_vertices
    R0 = np.zeros((K, K))
    R1 = np.zeros((K, K))
    B = np.zeros((K, K))
    verts = mesh.vertices
    tris = mesh.triangles

    edge_owners = {}
    for t in range(len(tris)):
        a, b, c = (int(v) for v in tris[t])
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            edge_owners.setdefault(key, []).append((t, u, v))

    grads = {}
    for t in range(len(tris)):
        idx = [int(v) for v in tris[t]]
        px = [verts[i][0] for i in idx]
        py = [verts[i][1] for i in idx]
        area = 0.5 * (
            (px[1] - px[0]) * (py[2] - py[0]) - (px[2] - px[0]) * (py[1] - py[0])
        )
        bb = [0.0, 0.0, 0.0]
        cc = [0.0, 0.0, 0.0]
        for i in range(3):
            j = (i + 1) % 3
            k = (i + 2) % 3
            bb[i] = (py[j] - py[k]) / (2.0 * area)
            cc[i] = (px[k] - px[j]) / (2.0 * area)
        grads[t] = (idx, bb, cc)
        for i in range(3):
            for j in range(3):
                R0[idx[i], idx[j]] += area * (2.0 if i == j else 1.0) / 12.0
                R1[idx[i], idx[j]] += area * (bb[i] * bb[j] + cc[i] * cc[j])

    for key, owners in edge_owners.items():
        if len(owners) != 1:
            continue
        t, u, v = owners[0]
        dx = verts[v][0] - verts[u][0]
        dy = verts[v][1] - verts[u][1]
        elen = math.hypot(dx, dy)
        nx, ny = dy / elen, -dx / elen
        idx, bb, cc = grads[t]
        for loc in range(3):
            flux = bb[loc] * nx + cc[loc] * ny
            B[u, idx[loc]] += (elen / 2.0) * flux
            B[v, idx[loc]] += (elen / 2.0) * flux
    return R0, R1, B


def dense_oracle_fit(points, z, W, mesh: TriangleMesh, lam: float):
    """Reference solution of the penalized problem by a dense solve of
    the reduced normal equations. Limited to small meshes.

    Returns (beta, field_coeffs).
    """
    if mesh.n_vertices > ORACLE_MAX_VERTICES:
        raise InputError(
            "dense oracle limited to %d vertices" % ORACLE_MAX_VERTICES
        )
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W.reshape(len(z), -1)
    q = W.shape[1]

    psi = _brute_psi(mesh, pts)
    R0, R1, B = _brute_operators(mesh)
    L = R1 - B
    P = L.T @ np.linalg.solve(R0, L)

    PtP = psi.T @ psi
    if q > 0:
        A = np.block(
            [[W.T @ W, W.T @ psi], [psi.T @ W, PtP + lam * P]]
        )
        rhs = np.concatenate([W.T @ z, psi.T @ z])
    else:
        A = PtP + lam * P
        rhs = psi.T @ z
    x = np.linalg.solve(A, rhs)
    return x[:q], x[q:]


def fd_penalty_check(mesh: TriangleMesh, field_coeffs, cell: float = None) -> dict:
    """Finite-difference estimate of the roughness penalty.

    Samples the field on a square grid (default spacing: the median mesh
    edge length), applies the 5-point Laplacian wherever all five
    samples are inside the domain, and integrates its square. Requires
    at least 9 usable interior cells.

    Returns {"penalty_fd", "penalty_quadratic", "n_cells", "cell"}.
    """
    f = np.asarray(field_coeffs, dtype=float).ravel()
    if len(f) != mesh.n_vertices:
        raise InputError("coefficient length must match the vertex count")
    if cell is None:
        cell = float(np.median(mesh.edge_lengths()))
    if cell <= 0:
        raise InputError("cell must be positive")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    nx = int(np.ceil((hi[0] - lo[0]) / cell)) + 1
    ny = int(np.ceil((hi[1] - lo[1]) / cell)) + 1
    xs = lo[0] + np.arange(nx) * cell
    ys = lo[1] + np.arange(ny) * cell
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    psi, inside = basis_matrix(mesh, pts)
    vals = psi @ f
    vals[~inside] = np.nan
    grid = vals.reshape(ny, nx)

    lap = (
        grid[1:-1, 2:]
        + grid[1:-1, :-2]
        + grid[2:, 1:-1]
        + grid[:-2, 1:-1]
        - 4.0 * grid[1:-1, 1:-1]
    ) / cell**2
    usable = np.isfinite(lap)
    n_cells = int(usable.sum())
    if n_cells < 9:
        raise InputError(
            "grid resolution leaves only %d interior cells (< 9); "
            "choose a smaller cell" % n_cells
        )
    penalty_fd = float(np.nansum(np.where(usable, lap**2, 0.0)) * cell**2)
    return {
        "penalty_fd": penalty_fd,
        "penalty_quadratic": roughness_energy(mesh, f),
        "n_cells": n_cells,
        "cell": float(cell),
    }
