import numpy as np
import pytest

from crystalwulff import dual_eval
from crystalwulff.correspondence import (
    build_correspondence,
    distance_comparison,
    divergence_fd,
    divergence_stats,
    dual_offset,
    fan_check,
    field_X,
)
from crystalwulff.errors import AmbiguousMatch, OriginArgument


def unit(rng, N):
    u = rng.normal(size=N)
    return u / np.linalg.norm(u)


def test_identity_at_zero(preset):
    cmap = build_correspondence(preset, np.zeros(preset.N))
    st = divergence_stats(cmap)
    assert (st.max_offT, st.measure_T, st.min_onT) == (0.0, 0.0, float(preset.dim - 1))
    assert np.array_equal(cmap.source, cmap.image)


def test_divergence_shrinks_with_t(preset, rng):
    for _ in range(3):
        u = unit(rng, preset.N)
        s1 = divergence_stats(build_correspondence(preset, 0.04 * u))
        s2 = divergence_stats(build_correspondence(preset, 0.02 * u))
        assert s2.max_offT <= 0.6 * s1.max_offT
        assert s2.measure_T <= 0.6 * s1.measure_T


def test_pyramid_has_degenerate_simplices(presets, rng):
    norm = presets["pyramid"]
    cmap = build_correspondence(norm, 0.05 * unit(rng, norm.N))
    assert cmap.in_T.any()
    st = divergence_stats(cmap)
    assert st.measure_T > 0
    assert st.min_onT < norm.dim - 1
    # the apex splits, so K^a has more vertices than K
    assert len(set(cmap.vertex_ids.ravel())) > len(norm.K.vertices)


def test_no_degenerate_set_in_2d(presets, rng):
    cmap = build_correspondence(presets["hexagon"], 0.05 * unit(rng, 6))
    assert not cmap.in_T.any()


def test_divergence_matches_finite_differences(presets, rng):
    norm = presets["pyramid"]
    cmap = build_correspondence(norm, 0.03 * unit(rng, norm.N))
    for k in range(cmap.n_simplices):
        if not cmap.in_T[k]:
            assert divergence_fd(cmap, k) == pytest.approx(cmap.div[k], abs=1e-8)


def test_fan_tiles_facets(preset, rng):
    cmap = build_correspondence(preset, 0.03 * unit(rng, preset.N))
    err = fan_check(cmap, preset)
    assert np.max(np.abs(err)) <= 1e-10


def test_apply_maps_vertices_and_barycenters(presets, rng):
    norm = presets["cube"]
    cmap = build_correspondence(norm, 0.03 * unit(rng, norm.N))
    for k in range(0, cmap.n_simplices, 3):
        f = cmap.facet[k]
        for q in range(cmap.dim):
            assert np.allclose(cmap.apply(cmap.source[k, q], f), cmap.image[k, q], atol=1e-12)


def test_field_X(presets, rng):
    norm = presets["octahedron"]
    a = 0.03 * unit(rng, norm.N)
    cmap = build_correspondence(norm, a)
    for x in rng.normal(size=(10, 3)):
        X = field_X(cmap, norm, a, x)
        assert dual_eval(norm, X) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(field_X(cmap, norm, a, 3.7 * x), X, atol=1e-12)
    with pytest.raises(OriginArgument):
        field_X(cmap, norm, a, np.zeros(3))
    assert dual_offset(norm, np.zeros(norm.N), norm.K.vertices[0]) == pytest.approx(1.0)


def test_distance_comparison_is_bounded(presets, rng):
    norm = presets["cube"]
    cmap = build_correspondence(norm, 0.02 * unit(rng, norm.N))
    ratio = distance_comparison(cmap, norm, 50, seed=1)
    assert 0 < ratio < 10


def test_ambiguous_match(presets):
    with pytest.raises(AmbiguousMatch):
        build_correspondence(presets["cube"], np.zeros(6), eps=10.0)


def test_off_export_colors_T(presets, rng):
    norm = presets["pyramid"]
    cmap = build_correspondence(norm, 0.05 * unit(rng, norm.N))
    text = cmap.to_off()
    assert text.startswith("OFF") and "0.850 0.100 0.100" in text
