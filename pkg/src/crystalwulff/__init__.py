"""Crystalline Wulff shapes, the face-offset family C(K) and stability checks."""

from .crystal import (
    ConeFan,
    CrystalNorm,
    cone_fan,
    cone_volumes,
    dual_eval,
    k_distance,
    neighborhood_contains,
    offset_shape,
    random_norm,
    renormalize_volume,
    sandwich_check,
    support_eval,
    wulff_shape,
)
from .geometry import (
    CellComplex,
    ConvexPolytope,
    Halfspace,
    clip,
    intersect,
    intersect_halfspaces,
    simplex_decompose,
    symmetric_difference_volume,
    volume,
)
from .presets import load_preset

__version__ = "0.1.0"
