"""Empirical stability and minimality checks.

* :func:`stability_sweep` perturbs ``K``, projects each sample onto C(K) and
  records ``(F(E) - F(K^a)) / |E delta K^a|``; the minimum is ``gamma_hat``.
* :func:`epsilon_minimality_falsifier` samples equal-volume competitors in a
  K-neighborhood of ``S`` and looks for one that beats ``S`` by more than the
  ``eps |S delta G|`` allowance.

Every sample draws from its own generator seeded by ``(seed, index)``, so
results do not depend on evaluation order.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from . import kernels
from .crystal import neighborhood_contains, offset_faces, sandwich_check
from .energy import energy, offset_energy
from .errors import CrystalWulffError
from .geometry import (
    ConvexPolytope,
    Halfspace,
    _assemble,
    _box_faceset,
    clip_faceset_many,
    faceset_volume,
    intersect,
    simplex_decompose,
    simplex_volumes,
    symmetric_difference_volume,
    volume_centroid,
)
from .potential import (  # noqa: F401  (re-exported)
    Constant,
    MinimizeConfig,
    Norm,
    Potential,
    Quadratic,
    ShiftedLinear,
    gravity_potential,
    integrate_potential,
    minimize_with_potential,
)
from .projection import DEFAULT_ETA, ProjectionProblem, project_to_family

KINDS = ("facet-offset", "vertex-jitter", "corner-truncation", "slab-cut-and-dilate")


def sample_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)]))


# ---------------------------------------------------------------------------
# building polytopes at a prescribed volume
# ---------------------------------------------------------------------------


def polytope_with_volume(normals, offsets, volume, eps=1e-9):
    """``s * {normals . x <= offsets}`` with ``s`` chosen so the volume is ``volume``.

    The face set is clipped and measured once; only the dilated result is
    assembled.  Returns ``None`` for empty or unbounded input.
    """
    normals = np.asarray(normals, dtype=float)
    nn = np.linalg.norm(normals, axis=1)
    normals = normals / nn[:, None]
    offsets = np.asarray(offsets, dtype=float) / nn
    dim = normals.shape[1]
    scale = 1.0 + float(np.max(np.abs(offsets)))
    tol = eps * scale
    fs = clip_faceset_many(_box_faceset(dim, 1e3 * scale), normals, offsets,
                           range(len(offsets)), tol)
    if fs is None:
        return None
    if np.any((fs[4] < 0) & (kernels.faceset_areas(fs[0], fs[1], fs[2]) > tol)):
        return None
    vol = faceset_volume(fs)
    if vol <= tol ** dim:
        return None
    s = (volume / vol) ** (1.0 / dim)
    try:
        return _assemble(dim, normals, offsets * s, fs[0] * s, range(len(offsets)), eps=eps)
    except CrystalWulffError:
        return None


def _uniform_in(P, rng, size):
    simp = simplex_decompose(P)
    w = simplex_volumes(simp)
    pick = rng.choice(len(simp), size=size, p=w / w.sum())
    lam = rng.dirichlet(np.ones(P.dim + 1), size=size)
    return np.einsum("sk,skd->sd", lam, simp[pick])


def _hull_planes(points):
    hull = ConvexHull(points)
    return hull.equations[:, :-1], -hull.equations[:, -1]


def perturb(kind, S, norm, m, rng, volume=None):
    """One perturbation of ``S`` of size ``m``, dilated to ``volume`` (default ``|S|``).

    * ``facet-offset``: every facet plane of ``S`` moves to ``(1 + b_i)`` times
      its offset, ``b`` uniform in ``[-m, m]``;
    * ``vertex-jitter``: hull of ``v + (m / 2) z_v`` with ``z_v`` uniform in ``K``;
    * ``corner-truncation``: cut ``u . x <= (1 - c m) h_S(u)``, ``c`` uniform in
      ``(0, 1]`` and ``u`` a random direction;
    * ``slab-cut-and-dilate``: the jittered set intersected with
      ``(1 + m/4) K^b``, ``|b|_inf <= m/2``.
    """
    volume = S.volume if volume is None else volume
    n = S.dim
    if kind == "facet-offset":
        b = rng.uniform(-m, m, size=len(S.offsets))
        return polytope_with_volume(S.normals, S.offsets * (1.0 + b), volume)
    if kind in ("vertex-jitter", "slab-cut-and-dilate"):
        pts = S.vertices + 0.5 * m * _uniform_in(norm.K, rng, len(S.vertices))
        try:
            A, c = _hull_planes(pts)
        except Exception:  # degenerate jitter (qhull error)
            return None
        if kind == "slab-cut-and-dilate":
            b = rng.uniform(-0.5 * m, 0.5 * m, size=norm.N)
            A = np.vstack([A, norm.sigmas])
            c = np.concatenate([c, (1.0 + 0.25 * m) * (1.0 + b)])
        return polytope_with_volume(A, c, volume)
    if kind == "corner-truncation":
        u = rng.normal(size=n)
        u /= np.linalg.norm(u)
        h = float(np.max(S.vertices @ u))
        frac = 1.0 - rng.uniform(0.0, 1.0)  # in (0, 1]
        A = np.vstack([S.normals, u])
        c = np.concatenate([S.offsets, [(1.0 - frac * m) * h]])
        return polytope_with_volume(A, c, volume)
    raise ValueError(f"unknown perturbation kind {kind!r}")


@dataclass(frozen=True)
class PerturbationFamily:
    """``kind`` at size ``magnitude``; sample ``k`` uses the seed ``(seed, k)``.

    Generated sets have volume ``|K|`` and satisfy the sandwich condition with
    ``eta = magnitude``; draws that do not are rejected and redrawn.
    """

    kind: str
    magnitude: float
    seed: int = 0
    max_tries: int = 50

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}; choose from {KINDS}")
        if not 0.0 < self.magnitude < 1.0:
            raise ValueError("magnitude must lie in (0, 1)")

    def generate(self, norm, index):
        """``(E, tries)``; ``E`` is ``None`` when every try was rejected."""
        rng = sample_rng(self.seed, index)
        K = norm.K
        for t in range(1, self.max_tries + 1):
            E = perturb(self.kind, K, norm, self.magnitude, rng, K.volume)
            if E is not None and sandwich_check(E, K, self.magnitude):
                return E, t
        return None, self.max_tries


# ---------------------------------------------------------------------------
# stability sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilityRecord:
    kind: str
    magnitude: float
    seed: int
    index: int
    status: str  # "ok", "in-family" or "skipped:<error>"
    tries: int = 0
    a: tuple = ()
    F_E: float = math.nan
    F_Ka: float = math.nan
    deltaF: float = math.nan
    sym_diff: float = math.nan
    ratio: float = None
    iterations: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["a"] = tuple(d.get("a", ()))
        return cls(**d)


def offset_sym_diff(norm, E, a):
    """``|E delta K^a|`` from face sets (no assembly of ``K^a``)."""
    of = offset_faces(norm, a, check=False)
    fs = clip_faceset_many(E.faceset, norm.unit_normals, of.d, range(norm.N), E.tol)
    inter = 0.0 if fs is None else max(faceset_volume(fs), 0.0)
    return max(E.volume + of.volume - 2.0 * inter, 0.0)


def _align(E, K):
    return E.translated(volume_centroid(K) - volume_centroid(E))


def stability_record(norm, family, index, eta=None, tol=None, align=False):
    E, tries = family.generate(norm, index)
    base = dict(kind=family.kind, magnitude=family.magnitude, seed=family.seed,
                index=int(index), tries=tries)
    if E is None:
        return StabilityRecord(status="skipped:Rejected", **base)
    if align:
        E = _align(E, norm.K)
    eta_p = max(DEFAULT_ETA if eta is None else eta, family.magnitude)
    try:
        res = project_to_family(ProjectionProblem(norm, E, eta=eta_p, tol=tol))
    except CrystalWulffError as exc:
        return StabilityRecord(status=f"skipped:{exc.code}", **base)
    FE = energy(E, norm)
    FKa = offset_energy(norm, res.a)
    dF = FE - FKa
    sd = offset_sym_diff(norm, E, res.a)
    in_family = sd <= 1e-9 * norm.K.volume
    return StabilityRecord(status="in-family" if in_family else "ok", a=tuple(res.a.tolist()),
                           F_E=FE, F_Ka=FKa, deltaF=dF, sym_diff=sd,
                           ratio=None if in_family else dF / sd,
                           iterations=res.iterations, **base)


@dataclass(frozen=True)
class SweepResult:
    norm_name: str
    family: PerturbationFamily
    records: tuple

    @property
    def ok(self):
        return [r for r in self.records if r.status == "ok"]

    @property
    def gamma_hat(self):
        vals = [r.ratio for r in self.ok]
        return min(vals) if vals else None

    def gamma_hat_first(self, k):
        vals = [r.ratio for r in self.records[:k] if r.status == "ok"]
        return min(vals) if vals else None

    def summary(self):
        ratios = np.array([r.ratio for r in self.ok])
        skipped = {}
        for r in self.records:
            if r.status.startswith("skipped"):
                skipped[r.status] = skipped.get(r.status, 0) + 1
        out = {
            "norm": self.norm_name,
            "family": asdict(self.family),
            "samples": len(self.records),
            "n_ok": int(len(ratios)),
            "n_in_family": sum(r.status == "in-family" for r in self.records),
            "n_skipped": sum(skipped.values()),
            "skipped": dict(sorted(skipped.items())),
            "gamma_hat": self.gamma_hat,
        }
        if len(ratios):
            k = int(np.argmin(ratios))
            out["argmin_index"] = self.ok[k].index
            out["ratio_quantiles"] = {q: float(np.quantile(ratios, float(q)))
                                      for q in ("0.01", "0.1", "0.5", "0.9")}
            out["min_deltaF"] = float(min(r.deltaF for r in self.ok))
        return out

    def summary_json(self):
        return json.dumps(self.summary(), sort_keys=True, indent=1)

    def records_jsonl(self):
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records)

    def ratios_csv(self):
        lines = ["index,ratio,deltaF,sym_diff"]
        lines += [f"{r.index},{r.ratio!r},{r.deltaF!r},{r.sym_diff!r}" for r in self.ok]
        return "\n".join(lines) + "\n"


def stability_sweep(norm, family, samples, eta=None, tol=None, align=False):
    """Project ``samples`` draws of ``family`` and collect stability ratios.

    ``gamma_hat`` is the minimum ratio over samples with ``|E delta K^a| > 0``.
    Failed projections are recorded as skipped.  ``align`` translates each
    sample so its centroid matches that of ``K`` before projecting (off by
    default: the projection works in a fixed frame).
    """
    recs = tuple(stability_record(norm, family, k, eta=eta, tol=tol, align=align)
                 for k in range(samples))
    return SweepResult(norm.name or "", family, recs)


# ---------------------------------------------------------------------------
# (eps, R)-minimality falsifier
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PassReport:
    min_slack: float
    argmin_kind: str
    tested: int
    filtered: int
    skipped: int
    unverified: int = 0
    counterexample: bool = field(default=False)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Counterexample:
    kind: str
    index: int
    G: ConvexPolytope
    F_S: float
    F_G: float
    sym_diff: float
    slack: float
    verified: bool
    tested: int
    unverified: int = 0
    counterexample: bool = field(default=True)

    def to_dict(self):
        return {
            "counterexample": True, "kind": self.kind, "index": self.index,
            "F_S": self.F_S, "F_G": self.F_G, "sym_diff": self.sym_diff, "slack": self.slack,
            "verified": self.verified, "tested": self.tested, "unverified": self.unverified,
            "G": self.G.to_dict(),
        }


COMPETITOR_KINDS = KINDS + ("translate", "family")


def competitor(norm, S, index, rng, m_range=(1e-3, 0.2)):
    """Competitor number ``index`` for ``S`` (index 0 is ``K`` dilated to ``|S|``)."""
    vol = S.volume
    if index == 0:
        K = norm.K
        return "wulff", polytope_with_volume(K.normals, K.offsets, vol)
    kind = COMPETITOR_KINDS[(index - 1) % len(COMPETITOR_KINDS)]
    m = float(np.exp(rng.uniform(np.log(m_range[0]), np.log(m_range[1]))))
    if kind == "translate":
        y = rng.normal(size=S.dim)
        y *= m * S.diameter / np.linalg.norm(y)
        return kind, polytope_with_volume(S.normals, S.offsets + S.normals @ y, vol)
    if kind == "family":
        b = rng.uniform(-m, m, size=norm.N)
        return kind, polytope_with_volume(norm.sigmas, 1.0 + b, vol)
    return kind, perturb(kind, S, norm, m, rng, vol)


def _verify(norm, S, G, eps):
    """Recompute everything from serialized halfspaces; true iff strictly violated."""
    S2 = ConvexPolytope.from_dict(S.to_dict())
    G2 = ConvexPolytope.from_dict(G.to_dict())
    FS = energy(S2, norm)
    FG = energy(G2, norm)
    inter = intersect(S2, G2)
    sd = S2.volume + G2.volume - 2.0 * (inter.volume if inter is not None else 0.0)
    coef = eps * (norm.K.volume / S2.volume) ** (1.0 / norm.dim)
    return FS > FG + coef * sd


def epsilon_minimality_falsifier(norm, S, eps, R, competitors, seed=0, rtol=1e-9):
    """Search for ``G`` with ``|G| = |S|``, ``G`` in the closed ``R``-neighborhood of ``S``
    and ``F(S) > F(G) + eps (|K|/|S|)^{1/n} |S delta G|``.

    Returns the first :class:`Counterexample` that survives an independent
    recomputation, else a :class:`PassReport` with the smallest slack seen.
    Competitors that fail to generate or are indistinguishable from ``S``
    (``|S delta G| <= 1e-9 |S|``) count as skipped.
    """
    FS = energy(S, norm)
    coef = eps * (norm.K.volume / S.volume) ** (1.0 / norm.dim)
    best = (math.inf, "")
    filtered = skipped = tested = unverified = 0
    for k in range(competitors):
        rng = sample_rng(seed, k)
        kind, G = competitor(norm, S, k, rng)
        if G is None:
            skipped += 1
            continue
        if not neighborhood_contains(norm, R, S, G):
            filtered += 1
            continue
        sd = symmetric_difference_volume(S, G)
        if sd <= 1e-9 * S.volume:
            # numerically G is S (e.g. a cut below the facet area floor)
            skipped += 1
            continue
        tested += 1
        FG = energy(G, norm)
        slack = FG + coef * sd - FS
        if slack < best[0]:
            best = (slack, kind)
        if slack < -rtol * FS:
            if _verify(norm, S, G, eps):
                return Counterexample(kind, k, G, FS, FG, sd, slack, True, tested, unverified)
            unverified += 1
    return PassReport(float(best[0]), best[1], tested, filtered, skipped, unverified)
