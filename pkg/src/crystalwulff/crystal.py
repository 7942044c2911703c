"""Crystalline surface tensions, Wulff shapes and the face-offset family.

A crystalline norm is given by vectors ``sigma_i``; its dual gauge is
``f_*(x) = max_i sigma_i . x`` and its Wulff shape ``K = {f_* <= 1}``.
The offset shape ``K^a = {sigma_i . x <= 1 + a_i}`` moves facet ``i`` to
distance ``(1 + a_i) / |sigma_i|`` and is fanned from the origin by the cones
``V_i^a`` on which ``sigma_i . x / (1 + a_i)`` is the maximal form.
"""

import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import kernels
from .errors import RedundantSigma, Unbounded, ValidationError, VanishingFacet
from .geometry import (
    EPS_GEOM,
    CellComplex,
    Halfspace,
    _assemble,
    clip_faceset_many,
    faceset_volume,
    intersect_halfspaces,
)


class CrystalNorm:
    """Dual-norm data ``{sigma_i}`` (and optional vertex data ``{x_j}``).

    ``redundant`` is ``"reject"`` (raise :class:`RedundantSigma`) or
    ``"strip"`` (drop sigmas whose cone misses ``K``, with a warning).
    """

    def __init__(self, sigmas, xs=None, redundant="reject", eps=EPS_GEOM, name=None):
        sig = np.array(sigmas, dtype=float)
        if sig.ndim != 2 or sig.shape[1] not in (2, 3):
            raise ValidationError("sigmas must be an (N, 2) or (N, 3) array")
        if np.any(np.linalg.norm(sig, axis=1) == 0):
            raise ValidationError("sigmas must be nonzero")
        if redundant not in ("reject", "strip"):
            raise ValidationError(f"unknown redundancy mode {redundant!r}")
        dim = sig.shape[1]
        try:
            K = intersect_halfspaces([Halfspace(s, 1.0) for s in sig], dim, eps=eps)
        except Unbounded as exc:
            raise ValidationError("Wulff shape is unbounded: origin not interior to {f_* <= 1}") from exc
        missing = sorted(set(range(len(sig))) - set(K.source_indices))
        if missing:
            if redundant == "reject":
                raise RedundantSigma(f"sigmas {missing} do not support a facet of K",
                                     indices=missing)
            warnings.warn(f"stripping redundant sigmas {missing}", stacklevel=2)
            sig = np.delete(sig, missing, axis=0)
            K = intersect_halfspaces([Halfspace(s, 1.0) for s in sig], dim, eps=eps)
        self.sigmas = sig
        self.sigmas.setflags(write=False)
        self.dim = dim
        self.eps = eps
        self.name = name
        self.K = K
        self.xs = None
        if xs is not None:
            xs = np.array(xs, dtype=float).reshape(-1, dim)
            fx = np.max(K.normals @ xs.T, axis=1)
            if np.max(np.abs(fx - K.offsets)) > 1e-9 * K.scale:
                raise ValidationError("vertex data xs disagree with the support function of K")
            self.xs = xs
            self.xs.setflags(write=False)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"CrystalNorm({label.strip() or 'N=' + str(self.N)}, dim={self.dim})"

    @property
    def N(self):
        return len(self.sigmas)

    @property
    def sigma_norms(self):
        return np.linalg.norm(self.sigmas, axis=1)

    @property
    def d(self):
        """Facet distances of ``K`` from the origin, ``1 / |sigma_i|``."""
        return 1.0 / self.sigma_norms

    @property
    def unit_normals(self):
        return self.sigmas / self.sigma_norms[:, None]

    def dual(self, x):
        return dual_eval(self, x)

    def support(self, nu):
        return support_eval(self, nu)

    def to_dict(self):
        out = {"dim": self.dim, "sigmas": self.sigmas.tolist()}
        if self.xs is not None:
            out["xs"] = self.xs.tolist()
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, d, redundant="reject"):
        norm = cls(d["sigmas"], xs=d.get("xs"), redundant=redundant, name=d.get("name"))
        if "dim" in d and int(d["dim"]) != norm.dim:
            raise ValidationError("dim does not match sigma length")
        return norm


def wulff_shape(norm):
    """``K = {f_* <= 1}``; facet ``i`` is supported by ``sigma_i``."""
    return norm.K


def dual_eval(norm, x):
    """``f_*(x) = max_i sigma_i . x`` (vectorised over leading axes)."""
    x = np.asarray(x, dtype=float)
    out = np.max(x @ norm.sigmas.T, axis=-1)
    return float(out) if out.ndim == 0 else out


def support_eval(norm, nu):
    """``f(nu) = max_{z in K} nu . z`` over the vertices of ``K`` (or ``xs``)."""
    nu = np.asarray(nu, dtype=float)
    pts = norm.xs if norm.xs is not None else norm.K.vertices
    out = np.max(nu @ pts.T, axis=-1)
    return float(out) if out.ndim == 0 else out


def _check_offset(norm, a):
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.shape[0] != norm.N:
        raise ValidationError(f"offset vector needs {norm.N} entries, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("offset vector has non-finite entries")
    if np.linalg.norm(a) >= 1.0:
        raise ValidationError("offset vector must satisfy |a| < 1")
    return a


@dataclass(frozen=True)
class OffsetFaces:
    """Boundary of ``K^a`` as a face set, with per-sigma facet areas."""

    faceset: tuple
    areas: np.ndarray
    volume: float
    d: np.ndarray


def offset_faces(norm, a, check=True):
    """Fast path for ``K^a``: clip ``(1 + max a) K`` by the tighter planes.

    Raises :class:`VanishingFacet` when some facet has (near) zero area.
    """
    a = _check_offset(norm, a) if check else np.asarray(a, dtype=float)
    s = 1.0 + float(np.max(a))
    verts, ptr, fn, fo, lab = norm.K.faceset
    fs = (verts * s, ptr, fn, fo * s, lab)
    offs = (1.0 + a) / norm.sigma_norms
    order = np.argsort(a, kind="stable")
    idx = [int(i) for i in order if a[i] < s - 1.0]
    tol = norm.eps * (1.0 + s * float(np.max(norm.d)))
    # every plane is a plane of K, whose vertices lie on it to round-off, so
    # clipping can resolve offsets far below the geometric tolerance
    clip_tol = 64.0 * np.finfo(float).eps * (1.0 + s * float(np.max(norm.d)))
    fs = clip_faceset_many(fs, norm.unit_normals[idx], offs[idx], idx, clip_tol)
    if fs is None:
        raise VanishingFacet(int(order[0]), "offset shape is empty")
    areas_f = kernels.faceset_areas(fs[0], fs[1], fs[2])
    areas = np.bincount(fs[4], weights=areas_f, minlength=norm.N)
    small = np.flatnonzero(areas <= tol * (1.0 + s) ** (norm.dim - 2) * 10.0)
    if small.size:
        raise VanishingFacet(int(small[0]))
    vol = float(np.dot(fs[3], areas_f) / norm.dim)
    return OffsetFaces(fs, areas, vol, offs)


def offset_shape(norm, a):
    """``K^a = {sigma_i . x <= 1 + a_i}`` with every facet present."""
    of = offset_faces(norm, a)
    P = _assemble(norm.dim, norm.unit_normals, of.d, of.faceset[0], range(norm.N), eps=norm.eps)
    present = set(P.source_indices)
    for i in range(norm.N):
        if i not in present:
            raise VanishingFacet(i)
    return P


def renormalize_volume(norm, a):
    """Dilate ``K^a`` about the origin back to volume ``|K|``.

    Returns ``a'`` with ``1 + a'_i = s (1 + a_i)``.
    """
    a = _check_offset(norm, a)
    vol = offset_faces(norm, a, check=False).volume
    s = (norm.K.volume / vol) ** (1.0 / norm.dim)
    return s * (1.0 + a) - 1.0


def translation_offset(norm, y):
    """Offset vector of ``K + y``: ``a_i = sigma_i . y``."""
    return norm.sigmas @ np.asarray(y, dtype=float)


@dataclass(frozen=True, eq=False)
class ConeFan:
    """The cones ``V_i^a`` for one offset vector."""

    a: np.ndarray
    tau: np.ndarray  # rows sigma_i / (1 + a_i)

    @property
    def N(self):
        return len(self.tau)

    def cone_halfspaces(self, i):
        """Homogeneous halfspaces ``(tau_j - tau_i) . x <= 0`` cutting out ``V_i^a``."""
        return [Halfspace(self.tau[j] - self.tau[i], 0.0) for j in range(self.N) if j != i]

    def classify(self, points):
        """Index of the cone containing each point (argmax of ``tau_i . x``)."""
        pts = np.atleast_2d(points)
        _, idx = kernels.max_affine(pts, self.tau, np.zeros(self.N))
        return idx


def cone_fan(norm, a):
    a = _check_offset(norm, a)
    return ConeFan(a, norm.sigmas / (1.0 + a)[:, None])


def cone_volumes(E, fan):
    """``|E cap V_i^a|`` for every cone, by clipping boundary faces into cones.

    For a convex cell ``P`` the divergence theorem with the field ``x`` gives
    ``|P cap V| = (1/n) sum_f offset_f area(f cap V)``; the cone walls pass
    through the origin and contribute nothing.
    """
    E = CellComplex.of(E)
    out = np.zeros(fan.N)
    for cell in E.cells:
        verts, ptr, fn, fo, _ = cell.faceset
        areas = kernels.faceset_cone_areas(verts, ptr, fn, fan.tau)
        out += fo @ areas / cell.dim
    return out


def k_distance(norm, x, A):
    """``dist_K(x, A) = min_{y in A} f_*(x - y)`` by a small dense LP.

    Variables ``(y, t)``; minimise ``t`` subject to ``sigma_i . (x - y) <= t``
    and ``y in A``.  The optimum sits at a basic solution, and with at most
    four unknowns every basis can simply be enumerated.
    """
    x = np.asarray(x, dtype=float)
    if A.contains(x, tol=0.0):
        return 0.0
    n = norm.dim
    M = np.zeros((norm.N + len(A.halfspaces), n + 1))
    r = np.zeros(len(M))
    M[:norm.N, :n] = -norm.sigmas
    M[:norm.N, n] = -1.0
    r[:norm.N] = -norm.sigmas @ x
    M[norm.N:, :n] = A.normals
    r[norm.N:] = A.offsets
    combos = np.array(list(combinations(range(len(M)), n + 1)))
    mats = M[combos]
    rhs = r[combos]
    det = np.linalg.det(mats)
    ok = np.abs(det) > 1e-12
    sol = np.linalg.solve(mats[ok], rhs[ok][..., None])[..., 0]
    tol = 1e-9 * (1.0 + float(np.max(np.abs(r))))
    feasible = np.all(sol @ M.T <= r + tol, axis=1)
    if not feasible.any():  # pragma: no cover - A nonempty guarantees a vertex
        raise ValidationError("k_distance: LP infeasible")
    return max(float(sol[feasible, n].min()), 0.0)


def neighborhood_contains(norm, R, A, G, tol=1e-9):
    """True iff ``G`` lies in the closed K-neighborhood ``{dist_K(., A) <= R}``.

    Checked on cell vertices, which suffices since ``dist_K(., A)`` is convex.
    """
    G = CellComplex.of(G)
    Av = A.vertices
    for v in G.vertices:
        upper = float(np.min(dual_eval(norm, v - Av)))
        if upper <= R + tol:
            continue
        if k_distance(norm, v, A) > R + tol:
            return False
    return True


def sandwich_check(E, K, eta, tol=1e-9):
    """Check ``(1 - eta) K subset E subset (1 + eta) K``.

    ``K`` must contain the origin in its interior.
    """
    if not 0.0 < eta < 1.0:
        raise ValidationError("eta must lie in (0, 1)")
    E = CellComplex.of(E)
    if np.any(K.gauge(E.vertices) > 1.0 + eta + tol):
        return False
    # |(1 - eta) K cap E| from the face set of the dilated K, clipped by each cell
    s = 1.0 - eta
    verts, ptr, fn, fo, lab = K.faceset
    inner = (verts * s, ptr, fn, fo * s, lab)
    covered = 0.0
    for c in E.cells:
        fs = clip_faceset_many(inner, c.normals, c.offsets, range(-1, -1 - len(c.offsets), -1),
                               K.tol)
        if fs is not None:
            covered += faceset_volume(fs)
    return K.volume * s ** K.dim - covered <= tol * K.volume


# ---------------------------------------------------------------------------
# random norms
# ---------------------------------------------------------------------------


def random_norm(dim, rng, n_sigmas=None, min_edge=0.0, length_range=(0.75, 1.25),
                max_tries=200):
    """Random crystalline norm with a bounded, minimal sigma set.

    ``min_edge`` rejects Wulff shapes with ridges (3D) or facets (2D) shorter
    than ``min_edge * diam(K)``.
    """
    for _ in range(max_tries):
        m = n_sigmas or int(rng.integers(5, 10) if dim == 2 else rng.integers(8, 15))
        u = rng.normal(size=(m, dim))
        u /= np.linalg.norm(u, axis=1)[:, None]
        sig = u * rng.uniform(*length_range, size=m)[:, None]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                norm = CrystalNorm(sig, redundant="strip")
        except ValidationError:
            continue
        K = norm.K
        short = min(r.measure for r in K.ridges) if dim == 3 else float(np.min(K.areas))
        if short < min_edge * K.diameter:
            continue
        return norm
    raise RuntimeError("could not draw a random norm")
