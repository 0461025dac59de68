"""Accuracy metrics for price estimates, on the original price scale."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InputError

RAE_THRESHOLDS = (1, 2, 3, 5, 10, 15)  # percent


@dataclass
class MetricsReport:
    mse: float
    rmse: float
    mrae: float
    rae_cdf: dict  # percent threshold -> fraction of |err|/y strictly below
    n: int
    name: str = ""
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "mse": self.mse,
            "rmse": self.rmse,
            "mrae": self.mrae,
            "rae_cdf": {str(k): v for k, v in self.rae_cdf.items()},
            "extras": self.extras,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            mse=float(d["mse"]),
            rmse=float(d["rmse"]),
            mrae=float(d["mrae"]),
            rae_cdf={int(k): float(v) for k, v in d["rae_cdf"].items()},
            n=int(d["n"]),
            name=d.get("name", ""),
            extras=d.get("extras", {}),
        )


def compute_metrics(y_true, y_pred, name: str = "") -> MetricsReport:
    """MSE, RMSE, mean relative absolute error, and the share of
    predictions with relative error strictly below each threshold.

    Both inputs must be on the original (untransformed) price scale and
    y_true strictly positive.
    """
    yt = np.asarray(y_true, dtype=float).ravel()
    yp = np.asarray(y_pred, dtype=float).ravel()
    if len(yt) != len(yp):
        raise InputError("y_true and y_pred must have equal length")
    if len(yt) == 0:
        raise InputError("cannot compute metrics on an empty set")
    if not np.all(np.isfinite(yt)) or not np.all(np.isfinite(yp)):
        raise DataError("metrics inputs contain non-finite values")
    bad = np.where(yt <= 0)[0]
    if bad.size:
        raise DataError(
            "y_true must be strictly positive for relative errors "
            "(first offender at index %d: %r)" % (bad[0], float(yt[bad[0]]))
        )
    err = yp - yt
    mse = float(np.mean(err**2))
    rae = np.abs(err) / yt
    cdf = {t: float(np.mean(rae < t / 100.0)) for t in RAE_THRESHOLDS}
    return MetricsReport(
        mse=mse,
        rmse=float(np.sqrt(mse)),
        mrae=float(np.mean(rae)),
        rae_cdf=cdf,
        n=len(yt),
        name=name,
    )


def improvement_pct(baseline_value: float, value: float) -> float:
    """Relative reduction versus the baseline, in percent (positive is
    better), rounded to 2 decimals."""
    if baseline_value == 0:
        raise InputError("baseline metric is zero; improvement undefined")
    return round(100.0 * (baseline_value - value) / baseline_value, 2)


def compare_report(reports, baseline: str):
    """Side-by-side comparison table against a named baseline.

    reports : dict name -> MetricsReport (insertion order kept)
    Returns (text, rows): a fixed-width text table and the row dicts
    (also used for the CSV writer). Improvements are percent reductions
    of MSE / RMSE / MRAE versus the baseline, rounded to 2 decimals.
    """
    if baseline not in reports:
        raise InputError("baseline '%s' missing from reports" % baseline)
    base = reports[baseline]
    rows = []
    for nm, rep in reports.items():
        row = {
            "method": nm,
            "n": rep.n,
            "mse": rep.mse,
            "rmse": rep.rmse,
            "mrae": rep.mrae,
        }
        for t in RAE_THRESHOLDS:
            row["rae_lt_%d" % t] = rep.rae_cdf.get(t, float("nan"))
        row["impr_mse_pct"] = improvement_pct(base.mse, rep.mse)
        row["impr_rmse_pct"] = improvement_pct(base.rmse, rep.rmse)
        row["impr_mrae_pct"] = improvement_pct(base.mrae, rep.mrae)
        rows.append(row)

    headers = ["method", "n", "mse", "rmse", "mrae"]
    headers += ["rae<%d%%" % t for t in RAE_THRESHOLDS]
    headers += ["dMSE%", "dRMSE%", "dMRAE%"]
    lines = []
    fmt_rows = []
    for row in rows:
        cells = [
            row["method"],
            str(row["n"]),
            "%.6g" % row["mse"],
            "%.6g" % row["rmse"],
            "%.4f" % row["mrae"],
        ]
        cells += ["%.4f" % row["rae_lt_%d" % t] for t in RAE_THRESHOLDS]
        cells += [
            "%.2f" % row["impr_mse_pct"],
            "%.2f" % row["impr_rmse_pct"],
            "%.2f" % row["impr_mrae_pct"],
        ]
        fmt_rows.append(cells)
    widths = [
        max(len(headers[c]), max(len(r[c]) for r in fmt_rows))
        for c in range(len(headers))
    ]
    lines.append("  ".join(h.ljust(widths[c]) for c, h in enumerate(headers)))
    lines.append("  ".join("-" * widths[c] for c in range(len(headers))))
    for r in fmt_rows:
        lines.append("  ".join(r[c].ljust(widths[c]) for c in range(len(headers))))
    text = "\n".join(lines) + "\n"
    return text, rows


def write_report_csv(rows, path) -> None:
    if not rows:
        raise InputError("no report rows to write")
    cols = list(rows[0].keys())
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            cells = []
            for c in cols:
                v = row[c]
                cells.append(repr(float(v)) if isinstance(v, float) else str(v))
            fh.write(",".join(cells) + "\n")


def write_report_json(reports, path) -> None:
    with open(path, "w") as fh:
        json.dump(
            {nm: rep.to_dict() for nm, rep in reports.items()},
            fh,
            sort_keys=True,
            indent=2,
        )
        fh.write("\n")
