import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull, HalfspaceIntersection

from conftest import inside, mc_volume
from crystalwulff.errors import EmptyInterior, Unbounded, ValidationError
from crystalwulff.geometry import (
    CellComplex,
    ConvexPolytope,
    Halfspace,
    box,
    clip,
    convex_hull,
    intersect,
    intersect_halfspaces,
    simplex_decompose,
    simplex_volumes,
    symmetric_difference_volume,
    to_off,
    volume_centroid,
)


def random_polytope(rng, dim, m=None):
    while True:
        k = m or int(rng.integers(dim + 5, 16))
        u = rng.normal(size=(k, dim))
        u /= np.linalg.norm(u, axis=1)[:, None]
        try:
            return intersect_halfspaces(
                [Halfspace(v, o) for v, o in zip(u, rng.uniform(0.5, 1.5, k))], dim), u
        except Unbounded:
            continue


def test_box_volume_area_and_ridges():
    P = box([-1, -2, 0], [1, 2, 3])
    assert P.volume == pytest.approx(2 * 4 * 3, rel=1e-14)
    assert sorted(P.areas) == pytest.approx(sorted([12, 12, 6, 6, 8, 8]))
    assert len(P.vertices) == 8 and len(P.ridges) == 12
    assert all(r.dihedral_angle == pytest.approx(np.pi / 2) for r in P.ridges)


@pytest.mark.parametrize("dim", [2, 3])
def test_volume_matches_qhull(dim, rng):
    # independent oracle: scipy's halfspace intersection + Qhull volume
    for _ in range(20):
        P, u = random_polytope(rng, dim)
        eqs = np.hstack([P.normals, -P.offsets[:, None]])
        hi = HalfspaceIntersection(eqs, np.zeros(dim))
        assert P.volume == pytest.approx(ConvexHull(hi.intersections).volume, rel=1e-10)
        assert len(P.vertices) == len(ConvexHull(hi.intersections).vertices)


def test_volume_monte_carlo(rng):
    P, _ = random_polytope(rng, 3, 9)
    lo, hi = P.vertices.min(axis=0), P.vertices.max(axis=0)
    est, se = mc_volume(lambda x: inside(P, x), lo, hi, 400_000, rng)
    assert abs(est - P.volume) < 4 * se


@pytest.mark.parametrize("dim", [2, 3])
def test_clip_additivity(dim, rng):
    for _ in range(20):
        P, _ = random_polytope(rng, dim)
        nu = rng.normal(size=dim)
        h = Halfspace(nu, float(rng.uniform(-0.3, 0.3)))
        parts = [clip(P, h), clip(P, h.flipped())]
        tot = sum(p.volume for p in parts if p is not None)
        assert tot == pytest.approx(P.volume, rel=1e-10)


def test_clip_empty_and_unbounded():
    P = box([-1, -1], [1, 1])
    assert clip(P, Halfspace([1.0, 0.0], -2.0)) is None
    with pytest.raises(Unbounded):
        intersect_halfspaces([Halfspace([1, 0], 1), Halfspace([0, 1], 1), Halfspace([-1, 0], 1)], 2)
    with pytest.raises(EmptyInterior):
        intersect_halfspaces([Halfspace([1, 0], -1), Halfspace([-1, 0], -1),
                              Halfspace([0, 1], 1), Halfspace([0, -1], 1)], 2)
    with pytest.raises(ValidationError):
        Halfspace([0.0, 0.0], 1.0)


def test_redundant_halfspaces_are_dropped():
    hs = [Halfspace(v, 1.0) for v in np.vstack([np.eye(2), -np.eye(2)])] + [Halfspace([1, 1], 5)]
    P = intersect_halfspaces(hs, 2)
    assert 4 in P.dropped and len(P.facets) == 4


def test_symmetric_difference_monte_carlo(rng):
    P = box([-1, -1, -1], [1, 1, 1])
    Q = box([-0.5, -1.2, -0.8], [1.3, 0.7, 1.1])
    est, se = mc_volume(lambda x: inside(P, x) ^ inside(Q, x), [-1.5] * 3, [1.5] * 3, 400_000, rng)
    assert abs(symmetric_difference_volume(P, Q) - est) < 4 * se
    inter = intersect(P, Q)
    assert inter.volume == pytest.approx(1.5 * 1.7 * 1.8, rel=1e-12)


def test_simplex_decomposition_and_centroid(rng):
    P, _ = random_polytope(rng, 3)
    simp = simplex_decompose(P)
    assert simplex_volumes(simp).sum() == pytest.approx(P.volume, rel=1e-12)
    B = box([0, 0, 0], [2, 4, 6])
    assert np.allclose(volume_centroid(B), [1, 2, 3])


def test_ridge_signed_distance_box():
    # projection of the origin onto any facet of a centred box lies at the facet centre
    P = box([-1, -2, -3], [1, 2, 3])
    for r in P.ridges:
        i, j = r.facet_pair
        for k, f in enumerate((i, j)):
            other = P.facets[(j, i)[k]]
            assert r.signed_dist[k] == pytest.approx(abs(other.d))


def test_translation_and_scaling():
    P = box([-1, -1], [1, 1])
    Q = P.translated([0.5, 0.0]).scaled(2.0)
    assert Q.volume == pytest.approx(16.0)
    assert np.allclose(Q.vertices.mean(axis=0), [1.0, 0.0])


def test_serialization_roundtrip(rng):
    P, _ = random_polytope(rng, 3)
    Q = ConvexPolytope.from_dict(json.loads(json.dumps(P.to_dict())))
    assert Q.volume == P.volume
    assert np.array_equal(Q.vertices, P.vertices)
    C = CellComplex((box([0, 0], [1, 1]), box([1, 0], [2, 1])))
    D = CellComplex.from_dict(json.loads(json.dumps(C.to_dict())))
    assert D.volume == pytest.approx(2.0) and not D.overlaps()


def test_overlap_detection():
    C = CellComplex((box([0, 0], [1, 1]), box([0.5, 0], [2, 1])))
    with pytest.raises(ValidationError):
        C.validate()


def test_convex_hull_merges_coplanar():
    pts = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float)
    H = convex_hull(pts)
    assert len(H.facets) == 6 and H.volume == pytest.approx(1.0)


def test_off_export():
    text = to_off(box([0, 0, 0], [1, 1, 1]))
    lines = text.splitlines()
    assert lines[0] == "OFF" and lines[1] == "8 6 12"
    faces = [list(map(int, line.split()))[1:] for line in lines[10:]]
    assert all(len(f) == 4 for f in faces)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.sampled_from([2, 3]))
def test_property_clip_volume_monotone(seed, dim):
    r = np.random.default_rng(seed)
    P, _ = random_polytope(r, dim)
    h = Halfspace(r.normal(size=dim), float(r.uniform(-0.2, 0.5)))
    Q = clip(P, h)
    if Q is not None:
        assert Q.volume <= P.volume * (1 + 1e-12)
        assert np.all(Q.vertices @ h.normal <= h.offset + 1e-9)
