"""House-record ingestion, feature schemas, splits, and run configuration.

CSV layout: one row per property with columns ``id``, ``assessed_value``,
``latitude``, ``longitude``, plus any number of feature columns. Feature
columns are declared as ``name``, ``name:numeric``, ``name:boolean``
(yes/no style tokens become 1/0) or ``name:year`` (converted to an age
relative to a reference year).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError, DataError, InputError
from .hsfm import HsfmConfig
from .rng import SplitMix64

REQUIRED_COLUMNS = ("id", "assessed_value", "latitude", "longitude")
REFERENCE_YEAR = 2015
FEATURE_KINDS = ("numeric", "boolean", "year")

_TRUE_TOKENS = {"1", "y", "yes", "t", "true"}
_FALSE_TOKENS = {"0", "n", "no", "f", "false"}


@dataclass
class FeatureSpec:
    name: str
    kind: str = "numeric"

    @classmethod
    def parse(cls, text: str) -> "FeatureSpec":
        if ":" in text:
            name, kind = text.split(":", 1)
        else:
            name, kind = text, "numeric"
        name = name.strip()
        kind = kind.strip().lower()
        if not name:
            raise ConfigError("empty feature name in schema")
        if kind not in FEATURE_KINDS:
            raise ConfigError(
                "feature '%s' has unknown kind '%s' (expected %s)"
                % (name, kind, ", ".join(FEATURE_KINDS))
            )
        return cls(name, kind)


@dataclass
class Dataset:
    ids: np.ndarray
    prices: np.ndarray
    latitudes: np.ndarray
    longitudes: np.ndarray
    W: np.ndarray
    feature_names: list
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.prices)


def _to_bool_series(s: pd.Series, colname: str) -> pd.Series:
    def conv(v):
        if pd.isna(v):
            return np.nan
        if isinstance(v, (bool, np.bool_)):
            return 1.0 if v else 0.0
        if isinstance(v, (int, float, np.integer, np.floating)):
            if v in (0, 1):
                return float(v)
            return np.nan
        tok = str(v).strip().lower()
        if tok in _TRUE_TOKENS:
            return 1.0
        if tok in _FALSE_TOKENS:
            return 0.0
        return np.nan

    return s.map(conv)


def load_houses_csv(path, features, reference_year: int = REFERENCE_YEAR) -> Dataset:
    """Load and clean a house CSV.

    Rows missing (or failing to parse) the price or either coordinate,
    and rows with a non-positive price, are dropped and counted in
    ``meta['n_dropped']``. Missing feature values are imputed with the
    column median and counted per column in ``meta['n_imputed']``.
    """
    specs = [f if isinstance(f, FeatureSpec) else FeatureSpec.parse(f) for f in features]
    try:
        # exact float parsing so written values reload bit-identically
        df = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError:
        raise InputError("house CSV not found: %s" % path) from None
    except Exception as exc:
        raise DataError("failed to parse house CSV %s: %s" % (path, exc)) from None

    for col in REQUIRED_COLUMNS:
        if col not in df.columns:
            raise InputError("house CSV is missing required column '%s'" % col)
    for spec in specs:
        if spec.name not in df.columns:
            raise InputError("house CSV is missing feature column '%s'" % spec.name)

    price = pd.to_numeric(df["assessed_value"], errors="coerce")
    lat = pd.to_numeric(df["latitude"], errors="coerce")
    lon = pd.to_numeric(df["longitude"], errors="coerce")
    keep = price.notna() & lat.notna() & lon.notna() & (price > 0)
    n_dropped = int((~keep).sum())
    df = df.loc[keep].reset_index(drop=True)
    price = price[keep].reset_index(drop=True)
    lat = lat[keep].reset_index(drop=True)
    lon = lon[keep].reset_index(drop=True)
    if len(df) == 0:
        raise DataError("no usable rows in %s after cleaning" % path)

    n_imputed = {}
    cols = []
    for spec in specs:
        if spec.kind == "boolean":
            s = _to_bool_series(df[spec.name], spec.name)
        else:
            s = pd.to_numeric(df[spec.name], errors="coerce")
            if spec.kind == "year":
                s = float(reference_year) - s
        missing = int(s.isna().sum())
        if missing:
            med = s.median()
            if pd.isna(med):
                raise DataError(
                    "feature column '%s' has no usable values" % spec.name
                )
            s = s.fillna(med)
            n_imputed[spec.name] = missing
        cols.append(s.to_numpy(dtype=float))

    W = np.column_stack(cols) if cols else np.zeros((len(df), 0))
    return Dataset(
        ids=df["id"].to_numpy(),
        prices=price.to_numpy(dtype=float),
        latitudes=lat.to_numpy(dtype=float),
        longitudes=lon.to_numpy(dtype=float),
        W=W,
        feature_names=[s.name for s in specs],
        meta={
            "n_dropped": n_dropped,
            "n_imputed": n_imputed,
            "reference_year": reference_year,
            "source": str(path),
        },
    )


def load_points_csv(path, features, reference_year: int = REFERENCE_YEAR) -> Dataset:
    """Load a prediction-input CSV: like load_houses_csv but
    assessed_value is optional (NaN when absent) and rows are only
    dropped for missing coordinates."""
    specs = [f if isinstance(f, FeatureSpec) else FeatureSpec.parse(f) for f in features]
    try:
        # exact float parsing so written values reload bit-identically
        df = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError:
        raise InputError("points CSV not found: %s" % path) from None
    except Exception as exc:
        raise DataError("failed to parse points CSV %s: %s" % (path, exc)) from None
    for col in ("id", "latitude", "longitude"):
        if col not in df.columns:
            raise InputError("points CSV is missing required column '%s'" % col)
    for spec in specs:
        if spec.name not in df.columns:
            raise InputError("points CSV is missing feature column '%s'" % spec.name)

    lat = pd.to_numeric(df["latitude"], errors="coerce")
    lon = pd.to_numeric(df["longitude"], errors="coerce")
    keep = lat.notna() & lon.notna()
    n_dropped = int((~keep).sum())
    df = df.loc[keep].reset_index(drop=True)
    lat = lat[keep].reset_index(drop=True)
    lon = lon[keep].reset_index(drop=True)
    if len(df) == 0:
        raise DataError("no usable rows in %s" % path)
    if "assessed_value" in df.columns:
        price = pd.to_numeric(df["assessed_value"], errors="coerce").to_numpy(float)
    else:
        price = np.full(len(df), np.nan)

    n_imputed = {}
    cols = []
    for spec in specs:
        if spec.kind == "boolean":
            s = _to_bool_series(df[spec.name], spec.name)
        else:
            s = pd.to_numeric(df[spec.name], errors="coerce")
            if spec.kind == "year":
                s = float(reference_year) - s
        missing = int(s.isna().sum())
        if missing:
            med = s.median()
            if pd.isna(med):
                raise DataError("feature column '%s' has no usable values" % spec.name)
            s = s.fillna(med)
            n_imputed[spec.name] = missing
        cols.append(s.to_numpy(dtype=float))
    W = np.column_stack(cols) if cols else np.zeros((len(df), 0))
    return Dataset(
        ids=df["id"].to_numpy(),
        prices=price,
        latitudes=lat.to_numpy(dtype=float),
        longitudes=lon.to_numpy(dtype=float),
        W=W,
        feature_names=[s.name for s in specs],
        meta={"n_dropped": n_dropped, "n_imputed": n_imputed, "source": str(path)},
    )


def train_test_split(n: int, train_frac: float = 0.8, seed: int = 0):
    """Seeded shuffle split; the training set gets ceil(train_frac * n)
    rows. Returns (train_idx, test_idx), each sorted ascending."""
    if not (0 < train_frac < 1):
        raise InputError("train_frac must be in (0, 1)")
    if n < 2:
        raise InputError("need at least two rows to split")
    k = math.ceil(train_frac * n)
    if k >= n:
        k = n - 1
    perm = SplitMix64(seed).permutation(n)
    train = np.sort(perm[:k])
    test = np.sort(perm[k:])
    return train, test


# ------------------------------------------------------------- config

@dataclass
class DataConfig:
    csv: str = ""
    features: list = field(default_factory=list)
    reference_year: int = REFERENCE_YEAR


@dataclass
class DomainConfig:
    alpha: float = 0.0  # 0 -> automatic (3x median nearest-neighbor distance)
    max_area: float = 0.0  # 0 -> from target_vertices
    target_vertices: int = 0  # 0 -> n/3
    min_angle: float = 25.0


@dataclass
class OutputConfig:
    dir: str = "out"
    raster_nx: int = 200
    raster_ny: int = 200
    train_frac: float = 0.8
    write_debug_matrices: bool = False


@dataclass
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    domain: DomainConfig = field(default_factory=DomainConfig)
    model: HsfmConfig = field(default_factory=HsfmConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> None:
        self.model.validate()
        if self.domain.min_angle < 0 or self.domain.min_angle > 33:
            raise ConfigError("domain.min_angle must be in [0, 33]")
        if self.domain.alpha < 0:
            raise ConfigError("domain.alpha must be >= 0")
        if self.domain.max_area < 0:
            raise ConfigError("domain.max_area must be >= 0")
        if self.domain.target_vertices < 0:
            raise ConfigError("domain.target_vertices must be >= 0")
        if not (0 < self.output.train_frac < 1):
            raise ConfigError("output.train_frac must be in (0, 1)")
        if self.output.raster_nx < 1 or self.output.raster_ny < 1:
            raise ConfigError("raster dimensions must be positive")


# keys accepted in each TOML section; [model] and [partition] both map
# onto HsfmConfig fields
_SECTION_FIELDS = {
    "data": {"csv", "features", "reference_year"},
    "domain": {"alpha", "max_area", "target_vertices", "min_angle"},
    "model": {
        "lambda_global",
        "lambda_local",
        "target_is_log",
        "min_region_size",
        "cv_folds",
        "cv_grid",
        "seed",
        "local_refit_features",
    },
    "partition": {
        "alpha_penalty",
        "samples_per_edge",
        "dc_quantile",
        "J",
        "mutual_k",
        "lambda_partition_surface",
    },
    "output": {
        "dir",
        "raster_nx",
        "raster_ny",
        "train_frac",
        "write_debug_matrices",
    },
}


def _apply_section(obj, section: str, values: dict) -> None:
    allowed = _SECTION_FIELDS[section]
    for key, val in values.items():
        if key not in allowed:
            raise ConfigError("unknown key '%s' in [%s]" % (key, section))
        setattr(obj, key, val)


def config_from_dict(doc: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    for section in doc:
        if section not in _SECTION_FIELDS:
            raise ConfigError("unknown config section [%s]" % section)
        if not isinstance(doc[section], dict):
            raise ConfigError("config section [%s] must be a table" % section)
    if "data" in doc:
        _apply_section(cfg.data, "data", doc["data"])
    if "domain" in doc:
        _apply_section(cfg.domain, "domain", doc["domain"])
    if "model" in doc:
        _apply_section(cfg.model, "model", doc["model"])
    if "partition" in doc:
        _apply_section(cfg.model, "partition", doc["partition"])
    if "output" in doc:
        _apply_section(cfg.output, "output", doc["output"])

    # TOML has no null: empty string / zero sentinels mean "default"
    if cfg.model.lambda_local in ("", 0, 0.0):
        cfg.model.lambda_local = None
    if isinstance(cfg.model.cv_grid, list):
        cfg.model.cv_grid = tuple(float(g) for g in cfg.model.cv_grid)
    cfg.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise InputError("config file not found: %s" % path) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("invalid TOML in %s: %s" % (path, exc)) from None
    return config_from_dict(doc)


def apply_overrides(cfg: PipelineConfig, overrides) -> PipelineConfig:
    """Apply ``section.key=value`` override strings on top of a config."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError("override '%s' is not section.key=value" % item)
        target, raw = item.split("=", 1)
        if "." not in target:
            raise ConfigError("override '%s' is not section.key=value" % item)
        section, key = target.split(".", 1)
        if section not in _SECTION_FIELDS:
            raise ConfigError("unknown config section '%s'" % section)
        if key not in _SECTION_FIELDS[section]:
            raise ConfigError("unknown key '%s' in [%s]" % (key, section))
        obj = {
            "data": cfg.data,
            "domain": cfg.domain,
            "model": cfg.model,
            "partition": cfg.model,
            "output": cfg.output,
        }[section]
        current = getattr(obj, key)
        setattr(obj, key, _coerce_like(current, raw, section, key))
    # re-run the sentinel logic and validation
    if cfg.model.lambda_local in ("", 0, 0.0):
        cfg.model.lambda_local = None
    cfg.validate()
    return cfg


def _coerce_like(current, raw: str, section: str, key: str):
    raw = raw.strip()
    # the lambda knobs accept "cv" regardless of their current type
    if key in ("lambda_global", "lambda_local") and raw.lower() == "cv":
        return "cv"
    if isinstance(current, bool):
        tok = raw.lower()
        if tok in _TRUE_TOKENS:
            return True
        if tok in _FALSE_TOKENS:
            return False
        raise ConfigError("%s.%s expects a boolean, got '%s'" % (section, key, raw))
    if isinstance(current, int) and not isinstance(current, bool):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(
                "%s.%s expects an integer, got '%s'" % (section, key, raw)
            ) from None
    if isinstance(current, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(
                "%s.%s expects a number, got '%s'" % (section, key, raw)
            ) from None
    if isinstance(current, (list, tuple)):
        items = [s for s in raw.split(",") if s.strip()]
        if key == "cv_grid":
            return tuple(float(s) for s in items)
        return [s.strip() for s in items]
    # lambda_global / lambda_local / centers accept numbers or keywords
    if raw.lower() in ("cv", "auto"):
        return raw.lower()
    try:
        return float(raw)
    except ValueError:
        return raw
