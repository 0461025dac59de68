"""End-to-end run: load, project, mesh, fit every model variant, report.

All artifacts are deterministic: fixed iteration orders, sorted JSON
keys, repr-round-trip floats, and no timestamps, so two runs from the
same inputs are byte-identical. The manifest (written last) records the
SHA-256 of every other artifact in the output directory.
"""
from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .dataio import PipelineConfig, load_houses_csv, train_test_split
from .errors import DataError
from .fem import dump_matrix_market, assemble_mass, assemble_psi, weak_laplacian
from .geometry import (
    default_alpha,
    geographic_origin,
    infer_domain,
    project_coordinates,
    write_domain_geojson,
)
from .hsfm import fit_hsfm, partition_points, predict_hsfm
from .metrics import compare_report, compute_metrics, write_report_csv, write_report_json
from .partition import partition_to_csv
from .raster import write_raster
from .ssr import (
    evaluate_surface_grid,
    fit_linear_baseline,
    fit_ssr,
    predict_ssr,
    select_lambda,
)
from .triangulation import max_area_for_vertex_target, triangulate

SCALES = ("log", "raw")


def _resolve_lambda_policy(policy, pts, z, W, mesh, cfg, names):
    if policy == "cv":
        grid = list(cfg.model.cv_grid) if cfg.model.cv_grid else None
        lam, _ = select_lambda(
            pts,
            z,
            W,
            mesh,
            grid=grid,
            k=cfg.model.cv_folds,
            seed=cfg.model.seed,
            feature_names=names,
            standardize=W.shape[1] > 0,
        )
        return float(lam)
    return float(policy)


def build_mesh_for_points(pts, cfg: PipelineConfig):
    """Alpha-shape domain inference plus refinement-controlled meshing.

    Returns (domain, mesh, kept_mask): records outside the inferred
    domain (alpha-shape outliers) are flagged out in kept_mask.
    """
    alpha = cfg.domain.alpha if cfg.domain.alpha > 0 else default_alpha(pts)
    domain = infer_domain(pts, alpha)
    ring_coords = {(float(x), float(y)) for ring in domain.all_rings() for x, y in ring}
    inside = domain.contains(pts)
    kept = inside | np.array(
        [(float(x), float(y)) in ring_coords for x, y in pts], dtype=bool
    )
    n_kept = int(kept.sum())
    if n_kept < 10:
        raise DataError("fewer than 10 records fall inside the inferred domain")

    if cfg.domain.max_area > 0:
        max_area = cfg.domain.max_area
    else:
        target = cfg.domain.target_vertices or max(4, round(n_kept / 3))
        max_area = max_area_for_vertex_target(domain.area(), target)
    mesh = triangulate(domain, max_area=max_area, min_angle=cfg.domain.min_angle)
    return domain, mesh, kept


def run_pipeline(cfg: PipelineConfig, outdir=None) -> dict:
    """Full comparison run; returns a summary dict of counts, choices
    and test metrics, mirroring what lands in run_meta.json."""
    cfg.validate()
    outdir = outdir or cfg.output.dir
    os.makedirs(outdir, exist_ok=True)

    ds = load_houses_csv(
        cfg.data.csv, cfg.data.features, reference_year=cfg.data.reference_year
    )
    latlon = np.column_stack([ds.latitudes, ds.longitudes])
    origin = geographic_origin(latlon)
    pts_all = project_coordinates(latlon, origin)

    domain, mesh, kept = build_mesh_for_points(pts_all, cfg)
    n_domain_dropped = int((~kept).sum())
    idx_kept = np.where(kept)[0]
    pts = pts_all[kept]
    prices = ds.prices[kept]
    W = ds.W[kept]
    ids = ds.ids[kept]
    names = list(ds.feature_names)
    n = len(pts)

    train_idx, test_idx = train_test_split(
        n, train_frac=cfg.output.train_frac, seed=cfg.model.seed
    )
    tr_pts, te_pts = pts[train_idx], pts[test_idx]
    tr_W, te_W = W[train_idx], W[test_idx]
    tr_price, te_price = prices[train_idx], prices[test_idx]

    # one partition, from raw prices, shared by both target scales
    labels, state, part_meta, _ = partition_points(
        tr_pts, tr_price, mesh, cfg.model
    )

    reports = {}
    predictions = {}
    model_info = {}
    hsfm_models = {}
    ssr_fits = {}
    regions_te = None
    extrap_te = None

    for scale in SCALES:
        is_log = scale == "log"
        tr_z = np.log(tr_price) if is_log else tr_price
        back = np.exp if is_log else (lambda v: v)

        # linear baseline with an explicit intercept column
        lr_W_tr = np.column_stack([np.ones(len(tr_z)), tr_W])
        lr_W_te = np.column_stack([np.ones(len(te_pts)), te_W])
        beta_lr, _ = fit_linear_baseline(tr_z, lr_W_tr, ["intercept"] + names)
        predictions["lr_%s" % scale] = back(lr_W_te @ beta_lr)
        model_info["lr_%s" % scale] = {
            "beta": [float(b) for b in beta_lr],
            "feature_names": ["intercept"] + names,
        }

        # field-only spatial fit
        lam_field = _resolve_lambda_policy(
            cfg.model.lambda_global,
            tr_pts,
            tr_z,
            np.zeros((len(tr_z), 0)),
            mesh,
            cfg,
            [],
        )
        fit_field = fit_ssr(
            tr_pts,
            tr_z,
            np.zeros((len(tr_z), 0)),
            mesh,
            lam_field,
            feature_names=[],
            target_is_log=is_log,
        )
        zf, _ = predict_ssr(fit_field, te_pts)
        predictions["ssr_field_%s" % scale] = back(zf)
        ssr_fits["ssr_field_%s" % scale] = fit_field

        # spatial fit with features
        lam_full = _resolve_lambda_policy(
            cfg.model.lambda_global, tr_pts, tr_z, tr_W, mesh, cfg, names
        )
        fit_full = fit_ssr(
            tr_pts,
            tr_z,
            tr_W,
            mesh,
            lam_full,
            feature_names=names,
            target_is_log=is_log,
            standardize=tr_W.shape[1] > 0,
        )
        zs, _ = predict_ssr(fit_full, te_pts, te_W if tr_W.shape[1] else None)
        predictions["ssr_%s" % scale] = back(zs)
        ssr_fits["ssr_%s" % scale] = fit_full

        # hierarchical model on the shared partition
        cfg_scale = type(cfg.model)(**cfg.model.to_dict())
        cfg_scale.target_is_log = is_log
        model = fit_hsfm(
            tr_pts,
            tr_z,
            tr_W,
            mesh,
            config=cfg_scale,
            feature_names=names,
            prices_raw=tr_price,
            partition_labels=labels,
        )
        est, extrap, regions = predict_hsfm(
            model, te_pts, te_W if tr_W.shape[1] else None
        )
        predictions["hsfm_%s" % scale] = est
        hsfm_models[scale] = model
        if is_log:
            regions_te = regions
            extrap_te = extrap
        model_info["hsfm_%s" % scale] = {
            "lambda_global": model.meta.get("lambda_global"),
            "n_regions": model.n_regions,
            "n_local_fits": len(model.local_fits),
            "warnings": model.meta.get("warnings", []),
        }

    for name in (
        "lr_log",
        "ssr_field_log",
        "ssr_log",
        "hsfm_log",
        "lr_raw",
        "ssr_field_raw",
        "ssr_raw",
        "hsfm_raw",
    ):
        reports[name] = compute_metrics(te_price, predictions[name], name=name)

    # ------------------------------------------------------- artifacts
    write_domain_geojson(domain, origin, os.path.join(outdir, "domain.geojson"))
    mesh.save_text(os.path.join(outdir, "mesh.txt"))
    partition_to_csv(labels, os.path.join(outdir, "partition.csv"))
    state.to_csv(os.path.join(outdir, "cfsfdp_state.csv"), labels=labels)
    for key in ("ssr_field_log", "ssr_log", "ssr_field_raw", "ssr_raw"):
        ssr_fits[key].save_json(os.path.join(outdir, key + ".json"))
    for scale, model in hsfm_models.items():
        model.save(os.path.join(outdir, "model_hsfm_%s" % scale))

    surface = evaluate_surface_grid(
        ssr_fits["ssr_field_raw"], cfg.output.raster_nx, cfg.output.raster_ny
    )
    write_raster(surface, os.path.join(outdir, "surface"))

    text_parts = []
    rows_all = []
    for scale in SCALES:
        sub = {
            nm: reports[nm]
            for nm in reports
            if nm.endswith("_" + scale)
        }
        text, rows = compare_report(sub, baseline="lr_%s" % scale)
        text_parts.append("target scale: %s\n%s" % (scale, text))
        write_report_csv(rows, os.path.join(outdir, "report_%s.csv" % scale))
        rows_all.extend(rows)
    report_text = "\n".join(text_parts)
    with open(os.path.join(outdir, "report.txt"), "w") as fh:
        fh.write(report_text)
    write_report_json(reports, os.path.join(outdir, "report.json"))

    with open(os.path.join(outdir, "predictions.csv"), "w") as fh:
        cols = ["id", "actual"] + list(predictions.keys()) + ["region", "extrapolated"]
        fh.write(",".join(cols) + "\n")
        te_ids = ids[test_idx]
        for i in range(len(te_pts)):
            cells = [str(te_ids[i]), repr(float(te_price[i]))]
            cells += [repr(float(predictions[m][i])) for m in predictions]
            cells.append(str(int(regions_te[i])))
            cells.append(str(int(bool(extrap_te[i]))))
            fh.write(",".join(cells) + "\n")

    if cfg.output.write_debug_matrices:
        dump_matrix_market(assemble_mass(mesh), os.path.join(outdir, "R0.mtx"))
        dump_matrix_market(weak_laplacian(mesh), os.path.join(outdir, "L.mtx"))
        dump_matrix_market(
            assemble_psi(mesh, tr_pts), os.path.join(outdir, "psi.mtx")
        )

    summary = {
        "n_loaded": ds.n,
        "n_dropped_rows": ds.meta["n_dropped"],
        "n_imputed": ds.meta["n_imputed"],
        "n_domain_dropped": n_domain_dropped,
        "n_used": n,
        "n_train": int(len(train_idx)),
        "n_test": int(len(test_idx)),
        "origin": {"latitude": origin[0], "longitude": origin[1]},
        "domain": {
            "area_m2": domain.area(),
            "alpha": domain.meta.get("alpha"),
            "holes": len(domain.holes),
            "dropped_points": domain.meta.get("dropped_points"),
        },
        "mesh": {
            "n_vertices": mesh.n_vertices,
            "n_triangles": mesh.n_triangles,
            "exempt_skinny": mesh.info.get("exempt_skinny"),
        },
        "partition": part_meta,
        "models": model_info,
        "metrics": {nm: reports[nm].to_dict() for nm in reports},
        "kept_record_indices": [int(i) for i in idx_kept],
        "train_indices": [int(i) for i in train_idx],
        "test_indices": [int(i) for i in test_idx],
    }
    with open(os.path.join(outdir, "run_meta.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")

    write_manifest(outdir)
    summary["report_text"] = report_text
    summary["outdir"] = os.path.abspath(outdir)
    return summary


def write_manifest(outdir) -> str:
    """SHA-256 of every artifact under outdir (manifest excluded),
    relative POSIX paths, sorted."""
    entries = {}
    for root, dirs, files in os.walk(outdir):
        dirs.sort()
        for fn in sorted(files):
            if fn == "manifest.json" and os.path.samefile(root, outdir):
                continue
            full = os.path.join(root, fn)
            rel = os.path.relpath(full, outdir).replace(os.sep, "/")
            h = hashlib.sha256()
            with open(full, "rb") as fh:
                for chunk in iter(lambda: fh.read(65536), b""):
                    h.update(chunk)
            entries[rel] = h.hexdigest()
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w") as fh:
        json.dump({"files": entries}, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path
