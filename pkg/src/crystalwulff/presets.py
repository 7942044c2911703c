"""Shipped norm presets (``presets/*.json``)."""

import json
from importlib import resources

import numpy as np

from .crystal import CrystalNorm

PRESETS = ("cube", "octahedron", "hexagon", "pyramid")

# square pyramid geometry; the shipped sigmas are derived from these
PYRAMID_VERTICES = np.array([
    [1.0, 1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, -1.0], [1.0, -1.0, -1.0],
    [0.0, 0.0, 2.0],
])


def preset_dict(name):
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("crystalwulff").joinpath("presets").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def load_preset(name):
    return CrystalNorm.from_dict(preset_dict(name))


def sigmas_from_facets(vertices, facets):
    """Solve ``sigma . v = 1`` over each facet's vertices (least squares)."""
    out = []
    for idx in facets:
        V = np.asarray(vertices)[list(idx)]
        s, *_ = np.linalg.lstsq(V, np.ones(len(V)), rcond=None)
        out.append(s)
    return np.array(out)
