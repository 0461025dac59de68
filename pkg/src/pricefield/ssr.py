"""Spatial spline regression: penalized least squares over a triangle mesh.

Fits z_i = w_i' beta + f(p_i) + eps_i where f is a piecewise-linear field
on the mesh, penalized by the integrated squared Laplacian in weak form:

    sum_i (z_i - w_i' beta - f(p_i))^2 + lambda f' L' R0^-1 L f

with R0 the mass matrix and L the boundary-corrected weak Laplacian. The
solver works on the equivalent sparse symmetric block system in
(beta, f, g) where g = sqrt(lambda) R0^-1 L f:

    [ W'W    W'Psi     0    ] [beta]   [W'z  ]
    [ Psi'W  Psi'Psi  s L'  ] [ f  ] = [Psi'z]
    [ 0      s L      -R0   ] [ g  ]   [ 0   ]

with s = sqrt(lambda). Eliminating g recovers the normal equations, and
beta satisfies beta = (W'W)^-1 W'(z - Psi f) exactly. The augmented form
stays well conditioned across the full useful lambda range, which the
explicitly reduced system does not.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import qr
from scipy.spatial import cKDTree

from .errors import (
    CollinearityError,
    ConditioningError,
    DataError,
    InputError,
)
from .fem import assemble_mass, assemble_psi, basis_matrix, weak_laplacian
from .raster import Raster
from .rng import SplitMix64
from .triangulation import TriangleMesh

DENSE_SOLVE_LIMIT = 2000  # total unknowns at or below this use a dense solve
SOLVE_RESIDUAL_TOL = 1e-6


@dataclass
class SsrFit:
    """Fitted spatial spline regression model."""

    lambda_: float
    beta: np.ndarray
    feature_names: list
    field_coeffs: np.ndarray
    mesh: TriangleMesh
    target_is_log: bool = False
    feature_means: Optional[np.ndarray] = None
    feature_scales: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.field_coeffs = np.asarray(self.field_coeffs, dtype=float)

    @property
    def q(self) -> int:
        return len(self.beta)

    def apply_scaling(self, W: np.ndarray) -> np.ndarray:
        if self.feature_means is None:
            return W
        return (W - self.feature_means) / self.feature_scales

    # ------------------------------------------------------ persistence

    def to_dict(self) -> dict:
        out = {
            "lambda": float(self.lambda_),
            "beta": [float(b) for b in self.beta],
            "feature_names": list(self.feature_names),
            "field_coeffs": [float(c) for c in self.field_coeffs],
            "mesh": self.mesh.to_text(),
            "target_is_log": bool(self.target_is_log),
        }
        if self.feature_means is not None:
            out["feature_means"] = [float(v) for v in self.feature_means]
            out["feature_scales"] = [float(v) for v in self.feature_scales]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SsrFit":
        mesh = TriangleMesh.from_text(d["mesh"])
        means = d.get("feature_means")
        scales = d.get("feature_scales")
        return cls(
            lambda_=float(d["lambda"]),
            beta=np.asarray(d["beta"], dtype=float),
            feature_names=list(d["feature_names"]),
            field_coeffs=np.asarray(d["field_coeffs"], dtype=float),
            mesh=mesh,
            target_is_log=bool(d["target_is_log"]),
            feature_means=None if means is None else np.asarray(means, dtype=float),
            feature_scales=None if scales is None else np.asarray(scales, dtype=float),
        )

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "SsrFit":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def check_collinearity(W: np.ndarray, feature_names) -> None:
    """Raise CollinearityError naming the dependent columns.

    Rank-revealing pivoted QR on norm-scaled columns; columns pivoted
    past the numerical rank are reported.
    """
    n, q = W.shape
    if q == 0:
        return
    norms = np.linalg.norm(W, axis=0)
    dead = [feature_names[j] for j in range(q) if norms[j] < 1e-300]
    if dead:
        raise CollinearityError(
            dead, "feature columns are identically zero: %s" % ", ".join(dead)
        )
    if n < q:
        raise CollinearityError(
            list(feature_names), "fewer rows than feature columns"
        )
    _, R, piv = qr(W / norms, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int((diag > 1e-10 * diag[0]).sum()) if diag[0] > 0 else 0
    if rank < q:
        cols = sorted(feature_names[j] for j in piv[rank:])
        raise CollinearityError(
            cols, "feature columns are numerically collinear: %s" % ", ".join(cols)
        )


def _standardize(W: np.ndarray, feature_names):
    means = W.mean(axis=0)
    scales = W.std(axis=0)
    tiny = scales < 1e-12
    if tiny.any():
        cols = [feature_names[j] for j in np.where(tiny)[0]]
        raise CollinearityError(
            cols,
            "constant feature columns (the field absorbs any constant): %s"
            % ", ".join(cols),
        )
    return (W - means) / scales, means, scales


def _solve_block(W, psi, L, R0, z, lam):
    """Solve the augmented system; returns (beta, f, relative residual)."""
    n, q = W.shape
    K = psi.shape[1]
    s = float(np.sqrt(lam))
    PtP = (psi.T @ psi).tocsr()
    Ptz = psi.T @ z
    if q > 0:
        WtW = sp.csr_matrix(W.T @ W)
        WtP = sp.csr_matrix(W.T @ psi)
        A = sp.bmat(
            [
                [WtW, WtP, None],
                [WtP.T, PtP, s * L.T],
                [None, s * L, -R0],
            ],
            format="csc",
        )
        rhs = np.concatenate([W.T @ z, Ptz, np.zeros(K)])
    else:
        A = sp.bmat([[PtP, s * L.T], [s * L, -R0]], format="csc")
        rhs = np.concatenate([Ptz, np.zeros(K)])

    m = A.shape[0]
    try:
        if m <= DENSE_SOLVE_LIMIT:
            lu = None
            dense = A.toarray()
            x = np.linalg.solve(dense, rhs)
        else:
            lu = spla.splu(A)
            x = lu.solve(rhs)
    except (np.linalg.LinAlgError, RuntimeError) as exc:
        raise ConditioningError("penalized system is singular: %s" % exc) from exc
    if not np.all(np.isfinite(x)):
        raise ConditioningError("penalized system solve produced non-finite values")
    # normwise backward error ||r|| / (||A|| ||x|| + ||b||): the plain
    # ||r||/||b|| ratio overstates instability at extreme lambdas where
    # ||A|| ||x|| dwarfs ||b||
    anorm = float(np.abs(A).sum(axis=0).max())

    def backward_error(xv):
        r = float(np.linalg.norm(A @ xv - rhs))
        return r / (anorm * float(np.linalg.norm(xv)) + float(np.linalg.norm(rhs)) + 1e-300)

    rel = backward_error(x)
    for _ in range(2):  # iterative refinement, reusing the factorization
        if rel <= 0.01 * SOLVE_RESIDUAL_TOL:
            break
        res = rhs - A @ x
        dx = np.linalg.solve(dense, res) if lu is None else lu.solve(res)
        if not np.all(np.isfinite(dx)):
            break
        x = x + dx
        rel = backward_error(x)
    if rel > SOLVE_RESIDUAL_TOL:
        raise ConditioningError(
            "penalized system too ill-conditioned (backward error %.3g)" % rel
        )
    beta = x[:q]
    f = x[q : q + K]
    return beta, f, rel


def fit_ssr(
    points,
    z,
    W,
    mesh: TriangleMesh,
    lam: float,
    feature_names=None,
    target_is_log: bool = False,
    standardize: bool = False,
) -> SsrFit:
    """Fit the penalized model at smoothing level lam.

    points : (n, 2) projected coordinates, all inside the mesh
    z      : (n,) response (already log-transformed when applicable)
    W      : (n, q) feature matrix; q may be 0
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W.reshape(len(z), -1)
    n = len(pts)
    if len(z) != n or W.shape[0] != n:
        raise InputError("points, z and W must have matching row counts")
    if not np.all(np.isfinite(z)):
        raise DataError("z contains non-finite values")
    if W.size and not np.all(np.isfinite(W)):
        raise DataError("feature matrix contains non-finite values")
    if not (lam > 0) or not np.isfinite(lam):
        raise InputError("lambda must be positive and finite")
    q = W.shape[1]
    if feature_names is None:
        feature_names = ["w%d" % j for j in range(q)]
    if len(feature_names) != q:
        raise InputError("feature_names length must match W columns")
    if n < q + 3:
        raise DataError("need at least q + 3 observations to fit")

    means = scales = None
    if standardize and q > 0:
        W, means, scales = _standardize(W, feature_names)
    if q > 0:
        check_collinearity(W, feature_names)

    psi = assemble_psi(mesh, pts)
    R0 = assemble_mass(mesh)
    L = weak_laplacian(mesh)
    beta, f, rel = _solve_block(W, psi, L, R0, z, lam)

    fitted = psi @ f
    if q:
        fitted = fitted + W @ beta
    return SsrFit(
        lambda_=float(lam),
        beta=beta,
        feature_names=list(feature_names),
        field_coeffs=f,
        mesh=mesh,
        target_is_log=target_is_log,
        feature_means=means,
        feature_scales=scales,
        diagnostics={
            "solve_residual": rel,
            "rss": float(np.sum((z - fitted) ** 2)),
            "n": n,
        },
    )


def predict_ssr(fit: SsrFit, points, W=None):
    """Predict at new points.

    Returns (zhat, extrapolated). Points outside the mesh take the field
    value of the nearest mesh vertex and are flagged extrapolated. The
    result stays on the fit's target scale (log when target_is_log).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    if fit.q > 0:
        if W is None:
            raise InputError("model has features; W is required for prediction")
        W = np.asarray(W, dtype=float)
        if W.ndim == 1:
            W = W.reshape(n, -1)
        if W.shape != (n, fit.q):
            raise InputError(
                "W must be (%d, %d), got %s" % (n, fit.q, W.shape)
            )
        if not np.all(np.isfinite(W)):
            raise DataError("feature matrix contains non-finite values")
        W = fit.apply_scaling(W)

    psi, inside = basis_matrix(fit.mesh, pts)
    fvals = psi @ fit.field_coeffs
    extrapolated = ~inside
    if extrapolated.any():
        tree = cKDTree(fit.mesh.vertices)
        _, nearest = tree.query(pts[extrapolated])
        fvals[extrapolated] = fit.field_coeffs[np.asarray(nearest, dtype=int)]
    zhat = fvals if fit.q == 0 else fvals + W @ fit.beta
    return zhat, extrapolated


def evaluate_surface_grid(
    fit: SsrFit, nx: int, ny: int, bbox=None
) -> Raster:
    """Sample the spatial field f on a regular grid as a Raster.

    Cells whose centers fall outside the mesh hold NaN. Only the field
    part is sampled; feature effects are location-free by construction.
    """
    if nx < 1 or ny < 1:
        raise InputError("raster dimensions must be positive")
    if bbox is None:
        lo = fit.mesh.vertices.min(axis=0)
        hi = fit.mesh.vertices.max(axis=0)
    else:
        lo = np.asarray(bbox[0], dtype=float)
        hi = np.asarray(bbox[1], dtype=float)
    dx = (hi[0] - lo[0]) / nx
    dy = (hi[1] - lo[1]) / ny
    if dx <= 0 or dy <= 0:
        raise InputError("bbox must have positive extent")
    xs = lo[0] + (np.arange(nx) + 0.5) * dx
    ys = lo[1] + (np.arange(ny) + 0.5) * dy
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    psi, inside = basis_matrix(fit.mesh, pts)
    vals = psi @ fit.field_coeffs
    vals[~inside] = np.nan
    return Raster(vals.reshape(ny, nx), float(lo[0]), float(lo[1]), dx, dy)


def fit_linear_baseline(z, W, feature_names=None):
    """Ordinary least squares via the normal equations (W'W) beta = W'z.

    The caller supplies any intercept column. Returns (beta, fitted).
    """
    z = np.asarray(z, dtype=float).ravel()
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W.reshape(len(z), -1)
    if W.shape[0] != len(z):
        raise InputError("W and z must have matching row counts")
    if W.shape[1] == 0:
        raise InputError("linear baseline needs at least one feature column")
    if feature_names is None:
        feature_names = ["w%d" % j for j in range(W.shape[1])]
    check_collinearity(W, feature_names)
    WtW = W.T @ W
    try:
        beta = np.linalg.solve(WtW, W.T @ z)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("normal equations are singular") from exc
    return beta, W @ beta


def select_lambda(
    points,
    z,
    W,
    mesh: TriangleMesh,
    grid=None,
    k: int = 5,
    seed: int = 0,
    feature_names=None,
    standardize: bool = False,
):
    """k-fold cross-validation over a lambda grid.

    The row order is shuffled once with the seeded generator, folds are
    contiguous blocks of the shuffled order, and the winning lambda is
    the smallest one attaining the minimal mean validation MSE.

    Returns (best_lambda, table) where table rows are
    {"lambda": value, "cv_mse": value}.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W.reshape(len(z), -1)
    n = len(pts)
    if grid is None:
        grid = np.logspace(-4, 4, 9)
    grid = sorted(float(g) for g in grid)
    if len(grid) == 0:
        raise InputError("lambda grid is empty")
    if k < 2:
        raise InputError("cross-validation needs k >= 2 folds")
    if n < 2 * k:
        raise DataError("not enough observations for %d-fold CV" % k)

    rng = SplitMix64(seed)
    perm = rng.permutation(n)
    folds = np.array_split(perm, k)

    table = []
    best_lam = None
    best_mse = np.inf
    for lam in grid:
        sse = 0.0
        count = 0
        for f in range(k):
            val_idx = folds[f]
            train_idx = np.concatenate([folds[g] for g in range(k) if g != f])
            fit = fit_ssr(
                pts[train_idx],
                z[train_idx],
                W[train_idx],
                mesh,
                lam,
                feature_names=feature_names,
                standardize=standardize,
            )
            zhat, _ = predict_ssr(
                fit,
                pts[val_idx],
                None if W.shape[1] == 0 else W[val_idx],
            )
            sse += float(np.sum((zhat - z[val_idx]) ** 2))
            count += len(val_idx)
        mse = sse / count
        table.append({"lambda": lam, "cv_mse": mse})
        if mse < best_mse:
            best_mse = mse
            best_lam = lam
    return best_lam, table
