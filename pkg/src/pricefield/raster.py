"""Regular-grid rasters of surface values, with CSV / PGM / JSON output.

A raster covers the rectangle [x0, x0 + nx*dx] x [y0, y0 + ny*dy] with
values sampled at cell centers; cells outside the domain hold NaN.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass
class Raster:
    """values[r, c] is the sample at center (x0 + (c+0.5)dx, y0 + (r+0.5)dy)."""

    values: np.ndarray  # (ny, nx), NaN where outside the domain
    x0: float
    y0: float
    dx: float
    dy: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise InputError("raster values must be a 2-d array")
        if self.dx <= 0 or self.dy <= 0:
            raise InputError("raster cell sizes must be positive")

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    def cell_centers(self):
        xs = self.x0 + (np.arange(self.nx) + 0.5) * self.dx
        ys = self.y0 + (np.arange(self.ny) + 0.5) * self.dy
        return xs, ys

    def sample(self, points) -> np.ndarray:
        """Nearest-cell lookup; NaN outside the raster rectangle."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        c = np.floor((pts[:, 0] - self.x0) / self.dx).astype(int)
        r = np.floor((pts[:, 1] - self.y0) / self.dy).astype(int)
        out = np.full(len(pts), np.nan)
        ok = (c >= 0) & (r >= 0) & (c < self.nx) & (r < self.ny)
        out[ok] = self.values[r[ok], c[ok]]
        return out

    # -------------------------------------------------------------- io

    def write_csv(self, path) -> None:
        """x,y,value rows at cell centers, y-major ascending then x."""
        xs, ys = self.cell_centers()
        with open(path, "w") as fh:
            fh.write("x,y,value\n")
            for r in range(self.ny):
                for c in range(self.nx):
                    v = self.values[r, c]
                    sval = "" if math.isnan(v) else repr(float(v))
                    fh.write("%s,%s,%s\n" % (repr(float(xs[c])), repr(float(ys[r])), sval))

    def write_pgm(self, path) -> None:
        """ASCII PGM preview: values scaled linearly to 0..255 (NaN -> 0),
        rows written north-up (max y first)."""
        finite = self.values[np.isfinite(self.values)]
        if finite.size and finite.max() > finite.min():
            vmin, vmax = float(finite.min()), float(finite.max())
            scaled = np.round(255.0 * (self.values - vmin) / (vmax - vmin))
        else:
            scaled = np.zeros_like(self.values)
        pix = np.where(np.isfinite(scaled), scaled, 0.0).astype(int)
        pix = np.clip(pix, 0, 255)
        with open(path, "w") as fh:
            fh.write("P2\n%d %d\n255\n" % (self.nx, self.ny))
            for r in range(self.ny - 1, -1, -1):
                fh.write(" ".join(str(int(v)) for v in pix[r]) + "\n")

    def meta(self) -> dict:
        finite = self.values[np.isfinite(self.values)]
        return {
            "nx": self.nx,
            "ny": self.ny,
            "x0": float(self.x0),
            "y0": float(self.y0),
            "dx": float(self.dx),
            "dy": float(self.dy),
            "crs": "local-projected-m",
            "nodata": "nan",
            "empty": bool(finite.size == 0),
            "n_nodata": int(np.isnan(self.values).sum()),
            "vmin": float(finite.min()) if finite.size else None,
            "vmax": float(finite.max()) if finite.size else None,
        }

    def write_meta(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.meta(), fh, sort_keys=True, indent=2)
            fh.write("\n")


def write_raster(raster: Raster, basepath) -> list:
    """Write <base>.csv, <base>.pgm and <base>.meta.json; returns the paths."""
    base = str(basepath)
    paths = [base + ".csv", base + ".pgm", base + ".meta.json"]
    raster.write_csv(paths[0])
    raster.write_pgm(paths[1])
    raster.write_meta(paths[2])
    return paths
