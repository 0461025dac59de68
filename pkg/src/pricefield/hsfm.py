"""Hierarchical spatial model: global fit, geographic partition, local refits.

The cascade fits a global penalized spatial regression, partitions the
training points into price-homogeneous regions using the global price
surface, then fits a local model to the residuals inside each region
that is large enough to support one. Each local model lives on its own
mesh over the region's alpha-shape footprint, so the composite surface
may be discontinuous across region boundaries. Prediction routes each
query point to the region of its nearest training point and adds the
local correction on top of the global estimate.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DataError, GeometryError, PricefieldError
from .fem import basis_matrix
from .geometry import infer_domain
from .partition import (
    DEFAULT_ALPHA_PENALTY,
    DEFAULT_DC_QUANTILE,
    DEFAULT_MUTUAL_K,
    DEFAULT_SAMPLES_PER_EDGE,
    assign_region,
    cfsfdp_cluster,
    enforce_contiguity,
    partition_from_csv,
    partition_to_csv,
    psd_matrix,
)
from .ssr import SsrFit, evaluate_surface_grid, fit_ssr, predict_ssr, select_lambda
from .triangulation import TriangleMesh, triangulate

PARTITION_RASTER_MAX_CELLS = 400


@dataclass
class HsfmConfig:
    """Knobs for the hierarchical fit; defaults follow the reference
    configuration used throughout the tests."""

    lambda_global: object = "cv"  # positive float, or "cv" to cross-validate
    lambda_local: object = None  # None reuses the resolved global lambda
    lambda_partition_surface: float = 1e-3
    target_is_log: bool = True
    alpha_penalty: float = DEFAULT_ALPHA_PENALTY
    samples_per_edge: int = DEFAULT_SAMPLES_PER_EDGE
    dc_quantile: float = DEFAULT_DC_QUANTILE
    J: object = None  # region count; None selects it from the center scores
    mutual_k: int = DEFAULT_MUTUAL_K
    min_region_size: int = 0  # 0 resolves to max(30, 3q)
    cv_folds: int = 5
    cv_grid: tuple = ()  # empty uses the built-in logarithmic grid
    seed: int = 0
    local_refit_features: bool = True

    def validate(self) -> None:
        for name in ("lambda_global", "lambda_local"):
            v = getattr(self, name)
            if v is None and name == "lambda_local":
                continue
            if v == "cv":
                continue
            try:
                ok = float(v) > 0
            except (TypeError, ValueError):
                ok = False
            if not ok:
                raise ConfigError("%s must be a positive number or 'cv'" % name)
        if self.J is not None:
            try:
                ok = int(self.J) >= 1
            except (TypeError, ValueError):
                ok = False
            if not ok:
                raise ConfigError("J must be a positive integer when given")
        if not (0 < self.dc_quantile < 1):
            raise ConfigError("dc_quantile must be in (0, 1)")
        if self.alpha_penalty < 0:
            raise ConfigError("alpha_penalty must be >= 0")
        if self.samples_per_edge < 1:
            raise ConfigError("samples_per_edge must be >= 1")
        if self.mutual_k < 1:
            raise ConfigError("mutual_k must be >= 1")
        if self.min_region_size < 0:
            raise ConfigError("min_region_size must be >= 0")
        if not (self.lambda_partition_surface > 0):
            raise ConfigError("lambda_partition_surface must be positive")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")

    def resolved_min_region_size(self, q: int) -> int:
        return self.min_region_size if self.min_region_size > 0 else max(30, 3 * q)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cv_grid"] = list(self.cv_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HsfmConfig":
        kwargs = {k: d[k] for k in d if k in cls.__dataclass_fields__}
        if "cv_grid" in kwargs and kwargs["cv_grid"] is not None:
            kwargs["cv_grid"] = tuple(kwargs["cv_grid"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def compute_residuals(fit: SsrFit, points, z, W=None) -> np.ndarray:
    """Observed minus fitted, on the fit's own target scale."""
    zhat, _ = predict_ssr(fit, points, W)
    return np.asarray(z, dtype=float).ravel() - zhat


def _stage(name, exc: PricefieldError) -> PricefieldError:
    exc.args = ("[%s] %s" % (name, exc),)
    return exc


def partition_points(points, prices_raw, mesh: TriangleMesh, config: HsfmConfig):
    """Cluster training points into contiguous price regions.

    The penalizing surface is a feature-free fit to the raw (never
    log-transformed) prices at the fixed partition smoothing level, so
    both target scales share one partition. Returns
    (labels, state, meta, raster).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    prices = np.asarray(prices_raw, dtype=float).ravel()
    # the model mesh doubles as the surface mesh on purpose: its cell size
    # blurs the surface at exactly the scale the data can support, which
    # keeps the path-variation penalty from accumulating interpolated noise
    try:
        surf_fit = fit_ssr(
            pts,
            prices,
            np.zeros((len(pts), 0)),
            mesh,
            config.lambda_partition_surface,
        )
    except PricefieldError as exc:
        raise _stage("partition surface", exc) from None

    edges = mesh.edge_lengths()
    medge = float(np.median(edges))
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    cell = max(medge / 2.0, 1e-9)
    nx = int(min(PARTITION_RASTER_MAX_CELLS, max(8, np.ceil((hi[0] - lo[0]) / cell))))
    ny = int(min(PARTITION_RASTER_MAX_CELLS, max(8, np.ceil((hi[1] - lo[1]) / cell))))
    raster = evaluate_surface_grid(surf_fit, nx, ny, bbox=(lo, hi))

    centers = "auto" if config.J is None else int(config.J)
    try:
        D = psd_matrix(
            pts,
            raster.sample,
            alpha_penalty=config.alpha_penalty,
            samples_per_edge=config.samples_per_edge,
        )
        labels, state, meta = cfsfdp_cluster(
            D, dc_quantile=config.dc_quantile, centers=centers
        )
        labels, moved = enforce_contiguity(pts, labels, mutual_k=config.mutual_k)
    except PricefieldError as exc:
        raise _stage("partition", exc) from None
    meta["contiguity_moved"] = int(moved)
    meta["n_regions"] = int(labels.max())
    return labels, state, meta, raster


@dataclass
class HsfmModel:
    """Fitted hierarchy: global model, training partition, local models."""

    global_fit: SsrFit
    train_points: np.ndarray
    labels: np.ndarray
    local_fits: dict
    config: HsfmConfig
    feature_names: list
    target_is_log: bool
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.train_points = np.asarray(self.train_points, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def n_regions(self) -> int:
        return int(self.labels.max()) if len(self.labels) else 0

    # -------------------------------------------------------- persistence

    def save(self, outdir) -> None:
        os.makedirs(outdir, exist_ok=True)
        doc = {
            "config": self.config.to_dict(),
            "feature_names": list(self.feature_names),
            "target_is_log": bool(self.target_is_log),
            "global": self.global_fit.to_dict(),
            "train_points": [[float(x), float(y)] for x, y in self.train_points],
            "local_regions": sorted(int(j) for j in self.local_fits),
            "meta": self.meta,
        }
        with open(os.path.join(outdir, "model.json"), "w") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")
        partition_to_csv(self.labels, os.path.join(outdir, "partition.csv"))
        for j in sorted(self.local_fits):
            self.local_fits[j].save_json(
                os.path.join(outdir, "local_%d.json" % int(j))
            )

    @classmethod
    def load(cls, outdir) -> "HsfmModel":
        path = os.path.join(outdir, "model.json")
        if not os.path.exists(path):
            raise DataError("model directory is missing model.json")
        with open(path) as fh:
            doc = json.load(fh)
        labels = partition_from_csv(os.path.join(outdir, "partition.csv"))
        local_fits = {}
        for j in doc.get("local_regions", []):
            local_fits[int(j)] = SsrFit.load_json(
                os.path.join(outdir, "local_%d.json" % int(j))
            )
        return cls(
            global_fit=SsrFit.from_dict(doc["global"]),
            train_points=np.asarray(doc["train_points"], dtype=float),
            labels=labels,
            local_fits=local_fits,
            config=HsfmConfig.from_dict(doc["config"]),
            feature_names=list(doc["feature_names"]),
            target_is_log=bool(doc["target_is_log"]),
            meta=doc.get("meta", {}),
        )


def _resolve_lambda(policy, points, z, W, mesh, config, feature_names):
    if policy == "cv":
        grid = list(config.cv_grid) if config.cv_grid else None
        lam, table = select_lambda(
            points,
            z,
            W,
            mesh,
            grid=grid,
            k=config.cv_folds,
            seed=config.seed,
            feature_names=feature_names,
            standardize=True,
        )
        return float(lam), table
    return float(policy), None


def _local_mesh(region_points, resolution_area):
    """Mesh the alpha-shape footprint of one region's points.

    Returns (mesh, n_outside, inside_mask): n_outside counts region
    points that the alpha shape dropped (they sit outside every kept
    triangle and take no part in the local fit).
    """
    domain = infer_domain(region_points)
    mesh = triangulate(domain, max_area=resolution_area)
    _, inside = basis_matrix(mesh, region_points)
    return mesh, int((~inside).sum()), inside


def fit_hsfm(
    points,
    z,
    W,
    mesh: TriangleMesh,
    config: HsfmConfig = None,
    feature_names=None,
    prices_raw=None,
    partition_labels=None,
) -> HsfmModel:
    """Fit the full hierarchy.

    z is the training target on the model scale (log prices when
    config.target_is_log). prices_raw supplies the untransformed prices
    for the partition surface; it defaults to exp(z) under a log target
    and to z itself otherwise. A precomputed partition can be passed to
    share one partition across model variants.

    Local fits run on per-region meshes built from the region's own
    footprint at the global mesh's resolution; regions smaller than
    min_region_size, or whose footprint cannot be meshed, contribute
    nothing and are listed in meta["warnings"].
    """
    if config is None:
        config = HsfmConfig()
    config.validate()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W.reshape(len(z), -1)
    q = W.shape[1]
    if feature_names is None:
        feature_names = ["w%d" % j for j in range(q)]
    meta = {"warnings": []}

    # ------------------------------------------------------ global fit
    try:
        lam_g, cv_table = _resolve_lambda(
            config.lambda_global, pts, z, W, mesh, config, feature_names
        )
        global_fit = fit_ssr(
            pts,
            z,
            W,
            mesh,
            lam_g,
            feature_names=feature_names,
            target_is_log=config.target_is_log,
            standardize=q > 0,
        )
    except PricefieldError as exc:
        raise _stage("global fit", exc) from None
    meta["lambda_global"] = lam_g
    if cv_table is not None:
        meta["cv_table_global"] = cv_table

    residuals = compute_residuals(global_fit, pts, z, None if q == 0 else W)

    # ------------------------------------------------------- partition
    if partition_labels is None:
        if prices_raw is None:
            prices_raw = np.exp(z) if config.target_is_log else z
        labels, state, pmeta, _ = partition_points(pts, prices_raw, mesh, config)
        meta["partition"] = pmeta
    else:
        labels = np.asarray(partition_labels, dtype=np.int64)
        if len(labels) != len(pts):
            raise ConfigError("partition_labels length must match points")
        meta["partition"] = {"provided": True, "n_regions": int(labels.max())}

    # ------------------------------------------------------ local fits
    lam_l = config.lambda_local
    if lam_l is None:
        lam_l = lam_g
    resolution_area = float(np.abs(mesh.signed_areas()).max())
    local_fits = {}
    region_stats = {}
    msize = config.resolved_min_region_size(q)
    for j in sorted(set(labels.tolist())):
        idx = np.where(labels == j)[0]
        region_stats[str(j)] = {"n": int(len(idx))}
        if len(idx) < msize:
            meta["warnings"].append(
                "region %d has %d points (< %d); using the global fit there"
                % (j, len(idx), msize)
            )
            continue
        try:
            sub_mesh, n_out, inmask = _local_mesh(pts[idx], resolution_area)
        except (GeometryError, PricefieldError) as exc:
            meta["warnings"].append(
                "region %d footprint could not be meshed (%s); global fit only"
                % (j, exc)
            )
            continue
        if n_out:
            meta["warnings"].append(
                "region %d: %d points fall outside its footprint" % (j, n_out)
            )
        idx = idx[inmask]
        region_stats[str(j)]["n_fit"] = int(len(idx))
        region_stats[str(j)]["mesh_vertices"] = int(sub_mesh.n_vertices)
        if len(idx) < msize:
            meta["warnings"].append(
                "region %d keeps %d meshable points (< %d); global fit only"
                % (j, len(idx), msize)
            )
            continue
        use_feats = config.local_refit_features and q > 0
        try:
            lam_j, _ = _resolve_lambda(
                lam_l,
                pts[idx],
                residuals[idx],
                W[idx] if use_feats else np.zeros((len(idx), 0)),
                sub_mesh,
                config,
                feature_names if use_feats else [],
            )
            try:
                lf = fit_ssr(
                    pts[idx],
                    residuals[idx],
                    W[idx] if use_feats else np.zeros((len(idx), 0)),
                    sub_mesh,
                    lam_j,
                    feature_names=feature_names if use_feats else [],
                    target_is_log=False,
                    standardize=use_feats,
                )
            except PricefieldError:
                if not use_feats:
                    raise
                # regional feature degeneracy: drop to a field-only refit
                lf = fit_ssr(
                    pts[idx],
                    residuals[idx],
                    np.zeros((len(idx), 0)),
                    sub_mesh,
                    lam_j,
                    feature_names=[],
                    target_is_log=False,
                )
                meta["warnings"].append(
                    "region %d: features degenerate in local refit; field only" % j
                )
        except PricefieldError as exc:
            raise _stage("local fit region %d" % j, exc) from None
        local_fits[int(j)] = lf
        region_stats[str(j)]["lambda"] = float(lam_j)
        region_stats[str(j)]["rss"] = lf.diagnostics.get("rss")
    meta["regions"] = region_stats
    if not local_fits:
        meta["warnings"].append(
            "no region reached min_region_size; model reduces to the global fit"
        )

    return HsfmModel(
        global_fit=global_fit,
        train_points=pts,
        labels=labels,
        local_fits=local_fits,
        config=config,
        feature_names=list(feature_names),
        target_is_log=config.target_is_log,
        meta=meta,
    )


def predict_hsfm(model: HsfmModel, points, W=None):
    """Hierarchical prediction on the original price scale.

    Returns (estimates, extrapolated, regions): the global surface plus
    the local residual correction of each point's region, exponentiated
    when the model was fitted on log prices. A point is flagged
    extrapolated when it falls outside the global mesh or outside its
    region's local mesh.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    q = model.global_fit.q
    zhat, extrap = predict_ssr(model.global_fit, pts, None if q == 0 else W)
    regions = assign_region(model.train_points, model.labels, pts)
    for j in sorted(model.local_fits):
        lf = model.local_fits[j]
        mask = regions == j
        if not mask.any():
            continue
        Wj = None
        if lf.q > 0:
            Wj = np.asarray(W, dtype=float)[mask]
        corr, ex_local = predict_ssr(lf, pts[mask], Wj)
        zhat[mask] = zhat[mask] + corr
        extrap[mask] |= ex_local
    est = np.exp(zhat) if model.target_is_log else zhat
    return est, extrap, regions
