"""Service operations; the CLI calls these in-process, the app over HTTP."""
from __future__ import annotations

import json
import math
import os

import numpy as np

from ..dataio import (
    PipelineConfig,
    apply_overrides,
    load_config,
    load_houses_csv,
    load_points_csv,
)
from ..errors import DataError, InputError
from ..geometry import geographic_origin, project_coordinates, write_domain_geojson
from ..hsfm import HsfmModel, fit_hsfm, partition_points, predict_hsfm
from ..pipeline import build_mesh_for_points, run_pipeline, write_manifest
from ..partition import partition_to_csv
from ..synth import SyntheticSpec, gen_synthetic, write_synthetic_csv
from . import schemas


def _load_cfg(config_path, overrides, csv=None) -> PipelineConfig:
    cfg = load_config(config_path) if config_path else PipelineConfig()
    if overrides:
        apply_overrides(cfg, list(overrides))
    if csv:
        cfg.data.csv = csv
    cfg.validate()
    return cfg


def _project_dataset(ds):
    latlon = np.column_stack([ds.latitudes, ds.longitudes])
    origin = geographic_origin(latlon)
    return origin, project_coordinates(latlon, origin)


def fit(req: schemas.FitRequest) -> schemas.FitResponse:
    """Fit the hierarchical model on every usable record and persist it."""
    cfg = _load_cfg(req.config, req.overrides, csv=req.csv)
    ds = load_houses_csv(
        cfg.data.csv, cfg.data.features, reference_year=cfg.data.reference_year
    )
    origin, pts_all = _project_dataset(ds)
    domain, mesh, kept = build_mesh_for_points(pts_all, cfg)
    pts = pts_all[kept]
    prices = ds.prices[kept]
    W = ds.W[kept]
    z = np.log(prices) if cfg.model.target_is_log else prices

    model = fit_hsfm(
        pts,
        z,
        W,
        mesh,
        config=cfg.model,
        feature_names=list(ds.feature_names),
        prices_raw=prices,
    )
    model.meta["origin"] = [origin[0], origin[1]]
    model.meta["feature_schema"] = [
        f if isinstance(f, str) else str(f) for f in cfg.data.features
    ]
    model.meta["reference_year"] = cfg.data.reference_year

    os.makedirs(req.out, exist_ok=True)
    model_dir = os.path.join(req.out, "model")
    model.save(model_dir)
    mesh.save_text(os.path.join(req.out, "mesh.txt"))
    write_domain_geojson(domain, origin, os.path.join(req.out, "domain.geojson"))
    meta = {
        "n_records_used": int(len(pts)),
        "n_dropped_rows": int(ds.meta["n_dropped"]),
        "n_imputed": ds.meta["n_imputed"],
        "n_domain_dropped": int((~kept).sum()),
        "origin": [origin[0], origin[1]],
        "mesh": {"n_vertices": mesh.n_vertices, "n_triangles": mesh.n_triangles},
        "lambda_global": model.meta.get("lambda_global"),
        "n_regions": model.n_regions,
        "warnings": model.meta.get("warnings", []),
    }
    with open(os.path.join(req.out, "fit_meta.json"), "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    write_manifest(req.out)

    return schemas.FitResponse(
        model_dir=model_dir,
        out=req.out,
        n_records_used=int(len(pts)),
        n_dropped_rows=int(ds.meta["n_dropped"]),
        n_domain_dropped=int((~kept).sum()),
        mesh_vertices=mesh.n_vertices,
        mesh_triangles=mesh.n_triangles,
        n_regions=model.n_regions,
        n_local_fits=len(model.local_fits),
        lambda_global=float(model.meta["lambda_global"]),
        target_is_log=bool(model.target_is_log),
        warnings=list(model.meta.get("warnings", [])),
    )


def predict(req: schemas.PredictRequest) -> schemas.PredictResponse:
    model = HsfmModel.load(req.model_dir)
    origin = model.meta.get("origin")
    if origin is None:
        raise DataError(
            "model directory lacks a projection origin; refit with this tool"
        )
    schema = model.meta.get("feature_schema", list(model.feature_names))
    ds = load_points_csv(
        req.csv, schema, reference_year=model.meta.get("reference_year", 2015)
    )
    if list(ds.feature_names) != list(model.feature_names):
        raise InputError(
            "prediction CSV features %s do not match the model's %s"
            % (ds.feature_names, model.feature_names)
        )
    pts = project_coordinates(
        np.column_stack([ds.latitudes, ds.longitudes]), origin
    )
    W = ds.W if model.global_fit.q > 0 else None
    est, extrap, regions = predict_hsfm(model, pts, W)

    has_actual = bool(np.isfinite(ds.prices).any())
    rows = []
    if req.out:
        with open(req.out, "w") as fh:
            cols = "id,estimate,region,extrapolated"
            if has_actual:
                cols += ",actual"
            fh.write(cols + "\n")
            for i in range(len(est)):
                line = "%s,%s,%d,%d" % (
                    ds.ids[i],
                    repr(float(est[i])),
                    int(regions[i]),
                    int(bool(extrap[i])),
                )
                if has_actual:
                    a = ds.prices[i]
                    line += ",%s" % (repr(float(a)) if math.isfinite(a) else "")
                fh.write(line + "\n")
    else:
        if len(est) > schemas.PREDICT_INLINE_CAP:
            raise InputError(
                "more than %d rows; pass an output path"
                % schemas.PREDICT_INLINE_CAP
            )
        for i in range(len(est)):
            a = float(ds.prices[i]) if math.isfinite(ds.prices[i]) else None
            rows.append(
                schemas.PredictionRow(
                    id=str(ds.ids[i]),
                    estimate=float(est[i]),
                    region=int(regions[i]),
                    extrapolated=bool(extrap[i]),
                    actual=a,
                )
            )
    return schemas.PredictResponse(
        n=int(len(est)),
        n_extrapolated=int(extrap.sum()),
        out=req.out,
        rows=rows,
    )


def partition(req: schemas.PartitionRequest) -> schemas.PartitionResponse:
    cfg = _load_cfg(req.config, req.overrides, csv=req.csv)
    ds = load_houses_csv(
        cfg.data.csv, cfg.data.features, reference_year=cfg.data.reference_year
    )
    origin, pts_all = _project_dataset(ds)
    domain, mesh, kept = build_mesh_for_points(pts_all, cfg)
    pts = pts_all[kept]
    prices = ds.prices[kept]

    labels, state, meta, _ = partition_points(pts, prices, mesh, cfg.model)
    os.makedirs(req.out, exist_ok=True)
    partition_to_csv(labels, os.path.join(req.out, "partition.csv"))
    state.to_csv(os.path.join(req.out, "cfsfdp_state.csv"), labels=labels)
    mesh.save_text(os.path.join(req.out, "mesh.txt"))
    write_domain_geojson(domain, origin, os.path.join(req.out, "domain.geojson"))
    sizes = {
        str(int(l)): int((labels == l).sum()) for l in sorted(set(labels.tolist()))
    }
    with open(os.path.join(req.out, "partition_meta.json"), "w") as fh:
        json.dump(
            {"meta": meta, "region_sizes": sizes, "n_points": int(len(pts))},
            fh,
            sort_keys=True,
            indent=2,
        )
        fh.write("\n")
    write_manifest(req.out)
    return schemas.PartitionResponse(
        out=req.out,
        n_points=int(len(pts)),
        n_regions=int(labels.max()),
        region_sizes=sizes,
        contiguity_moved=int(meta.get("contiguity_moved", 0)),
        warnings=list(meta.get("warnings", [])),
    )


def evaluate(req: schemas.EvaluateRequest) -> schemas.EvaluateResponse:
    cfg = _load_cfg(req.config, req.overrides, csv=req.csv)
    summary = run_pipeline(cfg, outdir=req.out)
    return schemas.EvaluateResponse(
        outdir=summary["outdir"],
        n_train=summary["n_train"],
        n_test=summary["n_test"],
        metrics=summary["metrics"],
        report_text=summary["report_text"],
    )


def synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
    spec = SyntheticSpec(
        n=req.n,
        seed=req.seed,
        preset=req.preset,
        noise_sigma=req.noise,
        q=req.q,
        side=req.side,
    )
    data = gen_synthetic(spec)
    outdir = os.path.dirname(os.path.abspath(req.out))
    os.makedirs(outdir, exist_ok=True)
    paths = write_synthetic_csv(data, req.out)
    return schemas.SynthResponse(
        csv=paths["csv"],
        truth=paths["truth"],
        n=req.n,
        preset=req.preset,
        seed=req.seed,
    )


def mesh(req: schemas.MeshRequest) -> schemas.MeshResponse:
    cfg = _load_cfg(req.config, req.overrides, csv=req.csv)
    ds = load_points_csv(cfg.data.csv, [])
    origin, pts_all = _project_dataset(ds)
    domain, m, kept = build_mesh_for_points(pts_all, cfg)
    os.makedirs(req.out, exist_ok=True)
    mesh_path = os.path.join(req.out, "mesh.txt")
    domain_path = os.path.join(req.out, "domain.geojson")
    m.save_text(mesh_path)
    write_domain_geojson(domain, origin, domain_path)
    write_manifest(req.out)
    return schemas.MeshResponse(
        mesh_path=mesh_path,
        domain_path=domain_path,
        n_vertices=m.n_vertices,
        n_triangles=m.n_triangles,
        exempt_skinny=int(m.info.get("exempt_skinny", 0)),
        domain_area_m2=float(domain.area()),
        domain_dropped_points=int((~kept).sum()),
    )
