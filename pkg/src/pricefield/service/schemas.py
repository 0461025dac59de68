"""Request and response bodies for the estimation service."""
from __future__ import annotations

from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict

PREDICT_INLINE_CAP = 10000


class _Model(BaseModel):
    # several fields legitimately start with "model_"
    model_config = ConfigDict(protected_namespaces=())


class FitRequest(_Model):
    csv: str
    out: str
    config: Optional[str] = None  # TOML path
    overrides: List[str] = []  # section.key=value strings


class FitResponse(_Model):
    model_dir: str
    out: str
    n_records_used: int
    n_dropped_rows: int
    n_domain_dropped: int
    mesh_vertices: int
    mesh_triangles: int
    n_regions: int
    n_local_fits: int
    lambda_global: float
    target_is_log: bool
    warnings: List[str]


class PredictRequest(_Model):
    model_dir: str
    csv: str
    out: Optional[str] = None  # output CSV; inline rows when omitted


class PredictionRow(_Model):
    id: str
    estimate: float
    region: int
    extrapolated: bool
    actual: Optional[float] = None


class PredictResponse(_Model):
    n: int
    n_extrapolated: int
    out: Optional[str] = None
    rows: List[PredictionRow] = []


class PartitionRequest(_Model):
    csv: str
    out: str
    config: Optional[str] = None
    overrides: List[str] = []


class PartitionResponse(_Model):
    out: str
    n_points: int
    n_regions: int
    region_sizes: Dict[str, int]
    contiguity_moved: int
    warnings: List[str]


class EvaluateRequest(_Model):
    csv: str
    out: str
    config: Optional[str] = None
    overrides: List[str] = []


class EvaluateResponse(_Model):
    outdir: str
    n_train: int
    n_test: int
    metrics: Dict[str, dict]
    report_text: str


class SynthRequest(_Model):
    out: str
    preset: str = "smooth"
    n: int = 500
    seed: int = 0
    noise: float = 0.05
    q: int = 3
    side: float = 1000.0


class SynthResponse(_Model):
    csv: str
    truth: str
    n: int
    preset: str
    seed: int


class MeshRequest(_Model):
    csv: str
    out: str
    config: Optional[str] = None
    overrides: List[str] = []


class MeshResponse(_Model):
    mesh_path: str
    domain_path: str
    n_vertices: int
    n_triangles: int
    exempt_skinny: int
    domain_area_m2: float
    domain_dropped_points: int


class HealthResponse(_Model):
    status: str
    version: str


class ErrorBody(_Model):
    error: str
    message: str
    exit_code: int
