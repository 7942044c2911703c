import json

import numpy as np
import pytest

from crystalwulff import offset_shape, renormalize_volume
from crystalwulff.crystal import sandwich_check
from crystalwulff.energy import energy
from crystalwulff.geometry import ConvexPolytope, symmetric_difference_volume
from crystalwulff.harness import (
    KINDS,
    Counterexample,
    PassReport,
    PerturbationFamily,
    StabilityRecord,
    epsilon_minimality_falsifier,
    offset_sym_diff,
    polytope_with_volume,
    stability_record,
    stability_sweep,
)


@pytest.mark.parametrize("kind", KINDS)
def test_families_keep_volume_and_sandwich(presets, kind):
    norm = presets["cube"]
    fam = PerturbationFamily(kind, 0.1, seed=1)
    for k in range(5):
        E, tries = fam.generate(norm, k)
        assert E is not None and tries >= 1
        assert E.volume == pytest.approx(norm.K.volume, rel=1e-10)
        assert sandwich_check(E, norm.K, 0.1)


def test_generation_is_order_independent(presets):
    norm = presets["hexagon"]
    fam = PerturbationFamily("vertex-jitter", 0.1, seed=4)
    late = fam.generate(norm, 7)[0]
    for k in range(7):
        fam.generate(norm, k)
    again = fam.generate(norm, 7)[0]
    assert np.array_equal(late.vertices, again.vertices)


def test_family_validation():
    with pytest.raises(ValueError):
        PerturbationFamily("twist", 0.1)
    with pytest.raises(ValueError):
        PerturbationFamily("vertex-jitter", 1.5)


def test_polytope_with_volume(presets):
    K = presets["pyramid"].K
    P = polytope_with_volume(K.normals, K.offsets * 1.1, 2.5)
    assert P.volume == pytest.approx(2.5, rel=1e-12)


def test_offset_sym_diff_matches_assembled(presets, rng):
    norm = presets["octahedron"]
    E, _ = PerturbationFamily("corner-truncation", 0.1, seed=2).generate(norm, 0)
    a = rng.uniform(-0.03, 0.03, norm.N)
    ref = symmetric_difference_volume(E, offset_shape(norm, a))
    assert offset_sym_diff(norm, E, a) == pytest.approx(ref, rel=1e-9)


def test_facet_offset_samples_are_in_family(presets):
    # for the cube a facet-offset sample of K is itself some K^b
    norm = presets["cube"]
    rec = stability_record(norm, PerturbationFamily("facet-offset", 0.1, seed=3), 0)
    assert rec.status == "in-family" and rec.ratio is None
    assert abs(rec.deltaF) <= 1e-9 * energy(norm.K, norm)


def test_sweep_ratios_are_positive(presets):
    for name in ("cube", "hexagon"):
        res = stability_sweep(presets[name], PerturbationFamily("corner-truncation", 0.1,
                                                                 seed=5), 20)
        assert len(res.ok) >= 15
        assert res.gamma_hat > 0
        for r in res.ok:
            assert r.deltaF > 0 and r.ratio == pytest.approx(r.deltaF / r.sym_diff)


def test_sweep_is_deterministic(presets):
    fam = PerturbationFamily("vertex-jitter", 0.05, seed=11)
    r1 = stability_sweep(presets["hexagon"], fam, 8)
    r2 = stability_sweep(presets["hexagon"], fam, 8)
    assert r1.summary_json() == r2.summary_json()
    assert r1.records_jsonl() == r2.records_jsonl()
    assert r1.ratios_csv() == r2.ratios_csv()
    assert r1.gamma_hat_first(4) >= r1.gamma_hat


def test_records_roundtrip(presets):
    res = stability_sweep(presets["cube"], PerturbationFamily("vertex-jitter", 0.1, seed=1), 3)
    lines = res.records_jsonl().splitlines()
    back = [StabilityRecord.from_dict(json.loads(x)) for x in lines]
    assert tuple(back) == res.records
    s = json.loads(res.summary_json())
    assert s["samples"] == 3 and s["n_ok"] + s["n_in_family"] + s["n_skipped"] == 3
    assert res.ratios_csv().splitlines()[0] == "index,ratio,deltaF,sym_diff"


def test_falsifier_passes_on_K(presets):
    norm = presets["cube"]
    rep = epsilon_minimality_falsifier(norm, norm.K, 0.0, 4.0, 200, seed=1)
    assert isinstance(rep, PassReport)
    assert rep.min_slack >= -1e-9 * energy(norm.K, norm)
    assert rep.tested + rep.filtered + rep.skipped == 200


def test_falsifier_finds_wulff_competitor(presets, rng):
    norm = presets["cube"]
    a = renormalize_volume(norm, rng.uniform(-0.02, 0.02, norm.N))
    S = offset_shape(norm, a)
    rep = epsilon_minimality_falsifier(norm, S, 0.0, 4.0, 50, seed=1)
    assert isinstance(rep, Counterexample) and rep.verified
    assert rep.F_S > rep.F_G
    d = rep.to_dict()
    assert d["counterexample"]
    G = ConvexPolytope.from_dict(json.loads(json.dumps(d["G"])))
    assert G.volume == pytest.approx(S.volume, rel=1e-10)


def test_falsifier_is_deterministic(presets):
    norm = presets["hexagon"]
    S = offset_shape(norm, renormalize_volume(norm, 0.02 * np.array([1, -1, 0, 1, 0, -1.0])))
    r1 = epsilon_minimality_falsifier(norm, S, 0.3, 3.0, 100, seed=9)
    r2 = epsilon_minimality_falsifier(norm, S, 0.3, 3.0, 100, seed=9)
    assert r1.to_dict() == r2.to_dict()
