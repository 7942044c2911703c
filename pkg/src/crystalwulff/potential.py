"""Surface energy plus a confining potential, minimised over dilated members of C(K).

For small mass ``m`` the minimisers of ``F(E) + int_E g`` with ``|E| = m`` are
translates of ``s K^a`` with ``s = (m / |K|)^{1/n}``, so the search space is the
finite-dimensional set of pairs ``(a, y)``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi

from .crystal import _check_offset, offset_faces, renormalize_volume
from .errors import CrystalWulffError, NoDescent, ValidationError
from .geometry import CellComplex, clip_faceset_many, faceset_volume, simplex_volumes

# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


class Potential:
    """Nonnegative integrand ``g``; ``degree`` is set when ``g`` is a polynomial."""

    degree = None

    def __call__(self, x):
        raise NotImplementedError

    def kinks(self, dim):
        """Planes ``(normal, offset)`` across which ``g`` is not smooth."""
        return []

    def __add__(self, other):
        return SumPotential((self, other))

    def to_dict(self):
        raise NotImplementedError

    @staticmethod
    def from_dict(d):
        kind = d["type"]
        if kind == "sum":
            return SumPotential(tuple(Potential.from_dict(t) for t in d["terms"]))
        cls = {"quadratic": Quadratic, "norm": Norm, "shifted-linear": ShiftedLinear,
               "constant": Constant}.get(kind)
        if cls is None:
            raise ValidationError(f"unknown potential type {kind!r}")
        kw = {k: v for k, v in d.items() if k != "type"}
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class Quadratic(Potential):
    """``sum_k w_k (x_k - c_k)^2``."""

    center: tuple = None
    weights: tuple = None
    degree = 2

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = 0.0 if self.center is None else np.asarray(self.center, dtype=float)
        w = 1.0 if self.weights is None else np.asarray(self.weights, dtype=float)
        return np.sum(w * (x - c) ** 2, axis=-1)

    def to_dict(self):
        return {"type": "quadratic", "center": self.center, "weights": self.weights}


@dataclass(frozen=True, eq=False)
class Norm(Potential):
    """``|x - c|``."""

    center: tuple = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = 0.0 if self.center is None else np.asarray(self.center, dtype=float)
        return np.linalg.norm(x - c, axis=-1)

    def to_dict(self):
        return {"type": "norm", "center": self.center}


@dataclass(frozen=True, eq=False)
class ShiftedLinear(Potential):
    """``max(x_axis + h, 0) ** power``; polynomial on each side of its kink plane."""

    h: float = 0.0
    axis: int = -1
    power: int = 1

    @property
    def degree(self):
        return int(self.power) if float(self.power).is_integer() else None

    def kinks(self, dim):
        nrm = np.zeros(dim)
        nrm[self.axis] = 1.0
        return [(nrm, -float(self.h))]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.maximum(x[..., self.axis] + self.h, 0.0) ** self.power

    def to_dict(self):
        return {"type": "shifted-linear", "h": self.h, "axis": self.axis, "power": self.power}


@dataclass(frozen=True, eq=False)
class Constant(Potential):
    value: float = 1.0
    degree = 0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], float(self.value))

    def to_dict(self):
        return {"type": "constant", "value": self.value}


@dataclass(frozen=True, eq=False)
class SumPotential(Potential):
    terms: tuple = ()

    @property
    def degree(self):
        degs = [t.degree for t in self.terms]
        return None if any(d is None for d in degs) else max(degs)

    def kinks(self, dim):
        return [k for t in self.terms for k in t.kinks(dim)]

    def __call__(self, x):
        return sum(t(x) for t in self.terms)

    def to_dict(self):
        return {"type": "sum", "terms": [t.to_dict() for t in self.terms]}


def gravity_potential(h=2.0, axis=-1):
    """Coercive droplet potential ``|x|^2 + max(x_axis + h, 0)^2``."""
    return Quadratic() + ShiftedLinear(h=h, axis=axis, power=2)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

_TRI_NODES = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
_ALPHA, _BETA = 0.5854101966249685, 0.1381966011250105
_TET_NODES = np.array([[_ALPHA, _BETA, _BETA, _BETA], [_BETA, _ALPHA, _BETA, _BETA],
                       [_BETA, _BETA, _ALPHA, _BETA], [_BETA, _BETA, _BETA, _ALPHA]])


def conical_rule(dim, q):
    """Stroud conical product rule on the unit simplex, exact to degree ``2q - 1``.

    Returns barycentric nodes ``(Q, dim + 1)`` and weights summing to 1.
    """
    axes = []
    for k in range(dim):
        t, w = roots_jacobi(q, dim - 1 - k, 0)  # weight (1 - u)^(dim-1-k) on u in [0, 1]
        axes.append(((t + 1) / 2, w))
    nodes, weights = [], []
    for combo in np.ndindex(*(q,) * dim):
        u = [axes[k][0][combo[k]] for k in range(dim)]
        w = np.prod([axes[k][1][combo[k]] for k in range(dim)])
        x, rest = [], 1.0
        for uk in u:
            x.append(uk * rest)
            rest *= 1.0 - uk
        nodes.append([1.0 - sum(x)] + x)
        weights.append(w)
    weights = np.array(weights)
    return np.array(nodes), weights / weights.sum()


_RULES = {
    (2, 2): (_TRI_NODES, np.full(3, 1 / 3)),
    (3, 2): (_TET_NODES, np.full(4, 1 / 4)),
    (2, 5): conical_rule(2, 3),
    (3, 5): conical_rule(3, 3),
}


def simplex_rule(g, simplices, degree=2):
    """Fixed rule per simplex: degree 2 (equal weights) or degree 5 (conical product)."""
    simplices = np.asarray(simplices, dtype=float)
    nodes, w = _RULES[(simplices.shape[-1], degree)]
    pts = np.einsum("qk,skd->sqd", nodes, simplices)
    vals = g(pts)
    if np.any(vals < 0):
        raise ValidationError("potential is negative at a quadrature node")
    return simplex_volumes(simplices) * (vals @ w)


def _bisect(simplices):
    """Split every simplex at the midpoint of its longest edge."""
    s = simplices
    k = s.shape[1]
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    lens = np.stack([np.linalg.norm(s[:, i] - s[:, j], axis=-1) for i, j in pairs], axis=1)
    pick = np.argmax(lens, axis=1)
    rows = np.arange(len(s))
    I = np.array([pairs[p][0] for p in pick])
    J = np.array([pairs[p][1] for p in pick])
    mid = 0.5 * (s[rows, I] + s[rows, J])
    c1 = s.copy()
    c2 = s.copy()
    c1[rows, I] = mid
    c2[rows, J] = mid
    return c1, c2


@dataclass(frozen=True)
class QuadratureInfo:
    value: float
    simplices: int
    max_level: int
    converged: bool


def _refine(g, simplices):
    """Children of each simplex and their rule values."""
    c1, c2 = _bisect(simplices)
    return c1, c2, simplex_rule(g, c1, 5), simplex_rule(g, c2, 5)


def integrate_simplices(g, simplices, rtol=1e-8, max_simplices=200_000):
    """Adaptive ``int g`` over disjoint simplices by longest-edge bisection.

    Every leaf carries its own rule value and that of its two halves; the
    difference is its error indicator.  Leaves holding the largest half of
    the total indicator are bisected until the coarse and fine totals differ
    by at most ``rtol`` relative.  Potentials of degree <= 2 are integrated
    exactly by the degree-2 rule without refinement, so callers must first
    split the domain along ``g.kinks``; everything else uses the degree-5 rule.
    """
    S = np.asarray(simplices, dtype=float)
    if getattr(g, "degree", None) is not None and g.degree <= 2:
        return QuadratureInfo(float(simplex_rule(g, S).sum()), len(S), 0, True)
    coarse = simplex_rule(g, S, 5)
    c1, c2, e1, e2 = _refine(g, S)
    fine = e1 + e2
    level = 0
    while True:
        err = np.abs(fine - coarse)
        total = float(fine.sum())
        if err.sum() <= rtol * abs(total) or err.sum() == 0.0:
            return QuadratureInfo(total, len(S), level, True)
        if len(S) + np.count_nonzero(err) > max_simplices:
            return QuadratureInfo(total, len(S), level, False)
        order = np.argsort(err)[::-1]
        k = int(np.searchsorted(np.cumsum(err[order]), 0.5 * err.sum())) + 1
        pick = np.zeros(len(S), dtype=bool)
        pick[order[:k]] = True
        # children of the picked leaves become leaves
        kids = np.concatenate([c1[pick], c2[pick]])
        kid_coarse = np.concatenate([e1[pick], e2[pick]])
        k1, k2, f1, f2 = _refine(g, kids)
        keep = ~pick
        S = np.concatenate([S[keep], kids])
        coarse = np.concatenate([coarse[keep], kid_coarse])
        c1 = np.concatenate([c1[keep], k1])
        c2 = np.concatenate([c2[keep], k2])
        e1 = np.concatenate([e1[keep], f1])
        e2 = np.concatenate([e2[keep], f2])
        fine = e1 + e2
        level += 1


def faceset_simplices(fs):
    """Fan a face set from its vertex mean into simplices (valid for convex sets)."""
    verts, ptr = fs[0], fs[1]
    n = verts.shape[1]
    c = verts.mean(axis=0)
    out = []
    for f in range(len(ptr) - 1):
        poly = verts[ptr[f]:ptr[f + 1]]
        if n == 2:
            out.append([c, poly[0], poly[1]])
        else:
            for k in range(1, len(poly) - 1):
                out.append([c, poly[0], poly[k], poly[k + 1]])
    return np.array(out)


def split_faceset(fs, planes, tol):
    """Cut a convex face set along each plane; returns the nonempty pieces."""
    pieces = [fs]
    for nrm, off in planes:
        out = []
        for p in pieces:
            for nn, oo in ((nrm, off), (-nrm, -off)):
                q = clip_faceset_many(p, [nn], [oo], [-(1 << 20)], tol)
                if q is not None and faceset_volume(q) > tol:
                    out.append(q)
        pieces = out
    return pieces


def integrate_faceset(g, fs, scale=1.0, shift=None, rtol=1e-8, tol=1e-12, **kw):
    """``int_{shift + scale * P} g`` for the convex set ``P`` bounded by face set ``fs``."""
    n = fs[0].shape[1]
    shift = np.zeros(n) if shift is None else np.asarray(shift, dtype=float)
    planes = [(nrm, (off - nrm @ shift) / scale) for nrm, off in g.kinks(n)]
    simp = np.concatenate([faceset_simplices(p) for p in split_faceset(fs, planes, tol)])
    return integrate_simplices(g, simp * scale + shift, rtol=rtol, **kw).value


def integrate_potential(g, P, rtol=1e-8, **kw):
    """``int_P g`` for a polytope or cell complex, cell by cell."""
    cells = CellComplex.of(P).cells
    return sum(integrate_faceset(g, c.faceset, rtol=rtol, tol=c.tol, **kw) for c in cells)


# ---------------------------------------------------------------------------
# minimisation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MinimizeConfig:
    step_a: float = 0.05
    step_y: float = 0.1
    min_step: float = 1e-8
    max_evals: int = 200_000
    m_max_factor: float = 0.25  # m_max = factor * |K|; the small-mass regime is asymptotic
    rtol: float = 1e-10
    a0: tuple = None
    y0: tuple = None


@dataclass(frozen=True)
class MinimizeResult:
    a: np.ndarray
    y: np.ndarray
    value: float
    surface: float
    potential: float
    scale: float
    evals: int
    final_step: float
    history: tuple = field(default=())

    def to_dict(self):
        return {
            "a": self.a.tolist(), "y": self.y.tolist(), "value": self.value,
            "surface": self.surface, "potential": self.potential, "scale": self.scale,
            "evals": self.evals, "final_step": self.final_step, "history": list(self.history),
        }


class _Objective:
    def __init__(self, norm, g, s, rtol):
        self.norm, self.g, self.s, self.rtol = norm, g, s, rtol
        self.evals = 0
        self.sig_pinv = np.linalg.pinv(norm.sigmas)

    def gauge_fix(self, a, y):
        """Move the translation part of ``a`` into ``y`` (same set, canonical ``a``)."""
        yt = self.sig_pinv @ a
        return a - self.norm.sigmas @ yt, y + self.s * yt

    def parts(self, a, y):
        self.evals += 1
        of = offset_faces(self.norm, a)
        surf = self.s ** (self.norm.dim - 1) * float(of.areas @ self.norm.d)
        pot = integrate_faceset(self.g, of.faceset, self.s, y, rtol=self.rtol,
                                tol=self.norm.eps)
        return surf, pot

    def __call__(self, a, y):
        surf, pot = self.parts(a, y)
        return surf + pot


def minimize_with_potential(norm, g, m, config=None):
    """Minimise ``F(s K^a) + int_{y + s K^a} g`` over ``(a, y)`` with ``|K^a| = |K|``.

    Nested compass search: for each step size, coordinate moves in ``a``
    (each renormalised to volume ``|K|`` and gauge-fixed against translations)
    alternate with compass moves in ``y`` until neither improves; then both
    step sizes are halved.  Only strict decreases are accepted, so the value
    never increases between accepted iterates.
    """
    cfg = config or MinimizeConfig()
    K = norm.K
    if not m > 0:
        raise ValidationError("mass must be positive")
    if m > cfg.m_max_factor * K.volume:
        raise ValidationError(f"mass {m} exceeds m_max = {cfg.m_max_factor} |K|")
    n, N = norm.dim, norm.N
    s = (m / K.volume) ** (1.0 / n)
    obj = _Objective(norm, g, s, cfg.rtol)
    a = np.zeros(N) if cfg.a0 is None else renormalize_volume(norm, cfg.a0)
    y = np.zeros(n) if cfg.y0 is None else np.asarray(cfg.y0, dtype=float)
    a, y = obj.gauge_fix(a, y)
    val = obj(a, y)
    hist = [val]
    sa, sy = cfg.step_a, cfg.step_y
    while max(sa, sy) >= cfg.min_step:
        improved = True
        while improved:
            if obj.evals > cfg.max_evals:
                raise NoDescent("evaluation budget exhausted", value=val, step=sa)
            improved = False
            for i in range(N):
                for sgn in (1.0, -1.0):
                    trial = a.copy()
                    trial[i] += sgn * sa
                    try:
                        ta = renormalize_volume(norm, _check_offset(norm, trial))
                        ta, ty = obj.gauge_fix(ta, y)
                        tv = obj(ta, ty)
                    except CrystalWulffError:
                        continue
                    if tv < val:
                        a, y, val = ta, ty, tv
                        hist.append(val)
                        improved = True
                        break
            for k in range(n):
                for sgn in (1.0, -1.0):
                    ty = y.copy()
                    ty[k] += sgn * sy
                    tv = obj(a, ty)
                    if tv < val:
                        y, val = ty, tv
                        hist.append(val)
                        improved = True
                        break
        sa *= 0.5
        sy *= 0.5
    surf, pot = obj.parts(a, y)
    return MinimizeResult(a, y, surf + pot, surf, pot, s, obj.evals, max(sa, sy) * 2.0,
                          tuple(hist))
