"""Hierarchical spatial functional estimation of house prices.

The package fits a penalized planar spline surface plus linear covariate
effects over an irregular city domain, partitions the city into
homogeneous submarket regions along price discontinuities, and refines
the estimate inside each region with local fits.

Layers, bottom up:

``geometry``        lon/lat projection, polygon domains, alpha-shape inference
``triangulation``   constrained Delaunay meshing with quality refinement
``fem``             linear finite element matrices on the mesh
``ssr``             the penalized spatial regression solver
``partition``       price-surface distances and density-peak clustering
``hsfm``            the hierarchical model tying the layers together
``pipeline``        the full train/test evaluation run
``service``/``cli`` HTTP and command line front ends
"""

__version__ = "0.1.0"

from .errors import (
    CollinearityError,
    ConditioningError,
    ConfigError,
    DataError,
    GeometryError,
    InputError,
    NumericError,
    PricefieldError,
    ResourceError,
)
from .geometry import DomainPolygon, infer_domain, project_coordinates
from .hsfm import HsfmConfig, HsfmModel, fit_hsfm, predict_hsfm
from .partition import cfsfdp_cluster, enforce_contiguity, psd_matrix
from .ssr import SsrFit, fit_ssr, predict_ssr, select_lambda
from .triangulation import TriangleMesh, triangulate

__all__ = [
    "__version__",
    "PricefieldError",
    "ConfigError",
    "InputError",
    "DataError",
    "GeometryError",
    "NumericError",
    "CollinearityError",
    "ConditioningError",
    "ResourceError",
    "DomainPolygon",
    "infer_domain",
    "project_coordinates",
    "TriangleMesh",
    "triangulate",
    "SsrFit",
    "fit_ssr",
    "predict_ssr",
    "select_lambda",
    "psd_matrix",
    "cfsfdp_cluster",
    "enforce_contiguity",
    "HsfmConfig",
    "HsfmModel",
    "fit_hsfm",
    "predict_hsfm",
]
