import json

import numpy as np
import pytest

from crystalwulff import cone_fan, cone_volumes, offset_shape, renormalize_volume
from crystalwulff.crystal import translation_offset
from crystalwulff.errors import NotClose, ValidationError, VanishingFacet
from crystalwulff.harness import PerturbationFamily
from crystalwulff.projection import (
    ProjectionProblem,
    ProjectionResult,
    cone_weights,
    diagonal_jacobian,
    project_to_family,
    uniqueness_probe,
    volume_mismatch,
)


def family_member(norm, rng, size=0.1):
    while True:
        b = renormalize_volume(norm, rng.uniform(-size, size, norm.N))
        if np.max(np.abs(b)) > size:
            continue
        try:
            return b, offset_shape(norm, b)
        except VanishingFacet:
            continue


def test_fixed_point(preset, rng):
    for _ in range(5):
        b, E = family_member(preset, rng)
        res = project_to_family(ProjectionProblem(preset, E, eta=0.3))
        assert np.max(np.abs(res.a - b)) <= 1e-9
        assert np.max(np.abs(res.residual)) <= 1e-10 * preset.K.volume
        assert res.volume_renormalized


def test_translation_is_recovered(preset, rng):
    y = rng.normal(size=preset.dim) * 0.03
    E = preset.K.translated(y)
    res = project_to_family(ProjectionProblem(preset, E, eta=0.3))
    assert np.allclose(res.a, translation_offset(preset, y), atol=1e-9)


def test_mismatch_sums_to_volume_difference(preset, rng):
    E, _ = PerturbationFamily("vertex-jitter", 0.1, seed=3).generate(preset, 0)
    a = rng.uniform(-0.03, 0.03, preset.N)
    phi = volume_mismatch(preset, E, a)
    assert phi.sum() == pytest.approx(offset_shape(preset, a).volume - E.volume, abs=1e-12)


def test_cone_weights_at_zero(preset):
    v = cone_weights(preset, np.zeros(preset.N))
    assert np.allclose(v, cone_volumes(preset.K, cone_fan(preset, np.zeros(preset.N))))
    assert np.allclose(diagonal_jacobian(preset, np.zeros(preset.N)), preset.dim * v)


def _fd_jacobian(norm, E, a, h=1e-6):
    J = np.zeros((norm.N, norm.N))
    for j in range(norm.N):
        e = np.zeros(norm.N)
        e[j] = h
        J[:, j] = (volume_mismatch(norm, E, a + e) - volume_mismatch(norm, E, a - e)) / (2 * h)
    return J


def test_diagonal_jacobian_matches_finite_differences(preset, rng):
    # at the solution E = K^b the Jacobian is exactly diagonal
    b, E = family_member(preset, rng, 0.05)
    J = _fd_jacobian(preset, E, b)
    D = diagonal_jacobian(preset, b)
    assert np.allclose(np.diag(J), D, rtol=1e-6)
    assert np.max(np.abs(J - np.diag(np.diag(J)))) <= 1e-6 * np.max(D)
    # column sums are d|K^a|/da_i regardless of E
    areas = D  # area_i / |sigma_i|
    assert np.allclose(J.sum(axis=0), areas, rtol=1e-6)


def test_quadratic_convergence(presets):
    E, _ = PerturbationFamily("facet-offset", 0.1, seed=2).generate(presets["cube"], 0)
    res = project_to_family(ProjectionProblem(presets["cube"], E, eta=0.3))
    t = [x for x in res.trace if x > 1e-13]
    # residual roughly squares each step once it is small
    assert len(t) >= 3 and t[-1] <= 10 * t[-2] ** 2 / t[-3]


def test_general_set(preset):
    E, _ = PerturbationFamily("corner-truncation", 0.1, seed=5).generate(preset, 1)
    p = ProjectionProblem(preset, E)
    res = project_to_family(p)
    assert np.max(np.abs(res.residual)) <= p.tol
    assert res.ratio_report >= 0
    again = ProjectionResult.from_dict(json.loads(json.dumps(res.to_dict())))
    assert np.array_equal(again.a, res.a) and again.trace == res.trace


def test_uniqueness_probe(presets, rng):
    norm = presets["hexagon"]
    E, _ = PerturbationFamily("vertex-jitter", 0.05, seed=9).generate(norm, 0)
    p = ProjectionProblem(norm, E)
    starts = [rng.uniform(-0.02, 0.02, norm.N) for _ in range(4)]
    assert uniqueness_probe(p, starts, atol=1e-7)


def test_not_close(presets):
    norm = presets["cube"]
    far = norm.K.translated([0.5, 0.0, 0.0])
    with pytest.raises(NotClose):
        project_to_family(ProjectionProblem(norm, far))
    with pytest.raises(NotClose):
        project_to_family(ProjectionProblem(norm, norm.K.scaled(1.01), eta=0.3))
    with pytest.raises(ValidationError):
        ProjectionProblem(norm, norm.K, eta=0.0)
