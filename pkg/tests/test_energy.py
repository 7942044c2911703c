import json

import numpy as np
import pytest

from crystalwulff import offset_shape, random_norm, renormalize_volume
from crystalwulff.energy import (
    EnergyReport,
    ExpansionReport,
    energy,
    first_order_energy_delta,
    first_order_volume_delta,
    geo_identity_residual,
    offset_energy,
    smoothness_modulus_probe,
    surface_energy,
    wulff_bound,
    wulff_deficit,
)
from crystalwulff.errors import NonManifoldBoundary
from crystalwulff.geometry import CellComplex, Halfspace, box, clip, convex_hull


def brute_energy(P, norm):
    # f(nu) = max_x in K x . nu, evaluated directly on the vertex list
    return sum(f.area * float(np.max(norm.K.vertices @ f.normal)) for f in P.facets)


def test_wulff_identity_presets(preset):
    assert energy(preset.K, preset) == pytest.approx(preset.dim * preset.K.volume, rel=1e-12)


def test_energy_matches_brute_force(preset, rng):
    for _ in range(5):
        P = convex_hull(rng.normal(size=(20, preset.dim)))
        assert energy(P, preset) == pytest.approx(brute_energy(P, preset), rel=1e-12)


def test_cube_norm_is_area_on_boxes(presets):
    P = box([0, 0, 0], [1, 2, 3])
    assert energy(P, presets["cube"]) == pytest.approx(2 * (2 + 6 + 3))


def test_partition_invariance(preset, rng):
    K = preset.K
    h = Halfspace(rng.normal(size=preset.dim), 0.1)
    g = Halfspace(rng.normal(size=preset.dim), -0.05)
    cells = []
    for side in (h, h.flipped()):
        for cut in (g, g.flipped()):
            piece = clip(K, side)
            piece = clip(piece, cut) if piece is not None else None
            if piece is not None:
                cells.append(piece)
    E = CellComplex(tuple(cells))
    assert E.volume == pytest.approx(K.volume, rel=1e-12)
    assert energy(E, preset) == pytest.approx(energy(K, preset), rel=1e-10)


def test_non_manifold_boundary_detected(presets):
    A, B = box([0, 0], [1, 1]), box([1, 0], [2, 1])
    with pytest.raises(NonManifoldBoundary):
        surface_energy(CellComplex((A, B, B)), presets["hexagon"])


def test_report_roundtrip(presets):
    rep = surface_energy(presets["pyramid"].K, presets["pyramid"])
    again = EnergyReport.from_dict(json.loads(json.dumps(rep.to_dict())))
    assert again == rep


def test_wulff_inequality(preset, rng):
    for _ in range(20):
        E = convex_hull(rng.normal(size=(12, preset.dim)))
        assert wulff_deficit(E, preset) >= -1e-9 * wulff_bound(preset, E.volume)
    # equality on translates and dilates of K
    E = preset.K.scaled(0.7).translated(0.3 * np.ones(preset.dim))
    assert abs(wulff_deficit(E, preset)) <= 1e-12 * energy(E, preset)


def test_offset_energy_fast_path(preset, rng):
    a = rng.uniform(-0.05, 0.05, preset.N)
    assert offset_energy(preset, a) == pytest.approx(energy(offset_shape(preset, a), preset),
                                                     rel=1e-12)


def test_geo_identity(preset):
    assert np.max(np.abs(geo_identity_residual(preset.K))) <= 1e-9 * preset.K.diameter


def test_geo_identity_random_3d(rng):
    for _ in range(10):
        norm = random_norm(3, rng, min_edge=0.01)
        assert np.max(np.abs(geo_identity_residual(norm.K))) <= 1e-9 * norm.K.diameter


def _remainders(norm, a, u, hs):
    F0 = offset_energy(norm, a)
    V0 = offset_shape(norm, a).volume
    rF, rV = [], []
    for h in hs:
        a2 = a + h * u
        rep = first_order_energy_delta(norm, a, a2)
        rF.append(abs(offset_energy(norm, a2) - F0 - rep.predicted_delta_F))
        rV.append(abs(offset_shape(norm, a2).volume - V0 - rep.predicted_delta_V))
    return np.array(rF), np.array(rV)


def test_first_order_remainder_is_quadratic(presets, rng):
    hs = [1e-2, 5e-3, 2.5e-3]
    for name in ("cube", "octahedron", "pyramid"):
        norm = presets[name]
        a = rng.uniform(-0.03, 0.03, norm.N)
        u = rng.normal(size=norm.N)
        u /= np.linalg.norm(u)
        rF, rV = _remainders(norm, a, u, hs)
        assert np.all((3.5 <= rF[:-1] / rF[1:]) & (rF[:-1] / rF[1:] <= 4.5)), name
        assert np.all((3.5 <= rV[:-1] / rV[1:]) & (rV[:-1] / rV[1:] <= 4.5)), name


def test_first_order_energy_exact_in_2d(presets, rng):
    # ridges are points in 2D, so F is affine in a while the combinatorics is fixed
    norm = presets["hexagon"]
    a = rng.uniform(-0.03, 0.03, 6)
    u = rng.normal(size=6)
    rF, rV = _remainders(norm, a, u / np.linalg.norm(u), [1e-2, 5e-3])
    assert np.all(rF <= 1e-12)
    assert 3.5 <= rV[0] / rV[1] <= 4.5


def test_volume_delta_formula(presets):
    norm = presets["cube"]
    a = np.zeros(6)
    a2 = np.array([0.01, 0, 0, 0, 0, 0])
    assert first_order_volume_delta(norm, a, a2) == pytest.approx(0.04)
    rep = first_order_energy_delta(norm, a, a2)
    assert rep.predicted_delta_V == pytest.approx(0.04)
    assert ExpansionReport.from_dict(json.loads(json.dumps(rep.to_dict()))) == rep


def test_cube_box_path(presets):
    norm = presets["cube"]
    for t in (0.3, 0.1, 0.01):
        c = 2.0 / (2.0 + t) - 1.0
        a = np.array([t / 2, t / 2, 0.0, 0.0, c, c])
        assert offset_shape(norm, a).volume == pytest.approx(8.0, rel=1e-14)
        assert offset_energy(norm, a) - 24.0 == pytest.approx(4 * t * t / (2 + t), abs=1e-10)


def test_smoothness_probe_vanishes(presets, rng):
    norm = presets["octahedron"]
    u = rng.normal(size=norm.N)
    vals = smoothness_modulus_probe(norm, u, [0.0, 0.04, 0.02, 0.01])
    assert vals[0] == (0.0, 0.0)
    r = [v for _, v in vals[1:]]
    assert r[0] > r[1] > r[2] and r[2] < 0.6 * r[1]


def test_energy_increases_off_wulff(presets, rng):
    norm = presets["pyramid"]
    for _ in range(10):
        a = renormalize_volume(norm, rng.uniform(-0.05, 0.05, norm.N))
        assert offset_energy(norm, a) >= norm.dim * norm.K.volume - 1e-12
