"""Crystalline surface energy and its first-order behaviour on the offset family.

``F(E)`` integrates ``f(nu)`` over the reduced boundary.  For a cell complex,
facets shared by two cells with opposite orientation cancel, so a convex set
and any partition of it have the same energy.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .crystal import _check_offset, offset_faces, offset_shape, renormalize_volume, support_eval
from .errors import NonManifoldBoundary, ValidationError
from .geometry import CellComplex


@dataclass(frozen=True)
class FacetTerm:
    cell: int
    facet: int
    f_nu: float
    area: float
    contribution: float


@dataclass(frozen=True)
class EnergyReport:
    total: float
    per_facet: tuple

    def to_dict(self):
        return {"total": self.total, "per_facet": [asdict(t) for t in self.per_facet]}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["total"]), tuple(FacetTerm(**t) for t in d["per_facet"]))


@dataclass(frozen=True)
class RidgeTerm:
    i: int
    j: int
    b: float
    coefficient: float


@dataclass(frozen=True)
class ExpansionReport:
    predicted_delta_F: float
    predicted_delta_V: float
    ridge_terms: tuple
    geo_residuals: tuple

    def to_dict(self):
        return {
            "predicted_delta_F": self.predicted_delta_F,
            "predicted_delta_V": self.predicted_delta_V,
            "ridge_terms": [asdict(t) for t in self.ridge_terms],
            "geo_residuals": [list(r) for r in self.geo_residuals],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["predicted_delta_F"]), float(d["predicted_delta_V"]),
                   tuple(RidgeTerm(**t) for t in d["ridge_terms"]),
                   tuple(tuple(r) for r in d["geo_residuals"]))


def _shared_area(P, k, Q, tol):
    """Area of facet ``k`` of ``P`` covered by an oppositely oriented coplanar facet of ``Q``."""
    fk = P.facets[k]
    opp = [h for h in range(len(Q.facets))
           if np.max(np.abs(Q.normals[h] + fk.normal)) <= 1e-9
           and abs(Q.offsets[h] + fk.d) <= tol]
    if not opp:
        return 0.0
    rows = [h for h in range(len(Q.halfspaces)) if h not in opp]
    poly = np.ascontiguousarray(P.vertices[list(fk.vertex_indices)])
    ptr = np.array([0, len(poly)], np.int64)
    A = Q.normals[rows]
    b = Q.offsets[rows] + tol
    return float(kernels.faceset_clip_areas(poly, ptr, fk.normal[None], A, b)[0])


def surface_energy(E, norm):
    """``F(E)``: sum of ``f(nu) * area`` over the reduced boundary of ``E``.

    Raises :class:`NonManifoldBoundary` when a facet is covered more than once
    by opposite facets of other cells, or when coplanar facets of two cells
    face the same way and overlap (the cells would then overlap too).
    """
    E = CellComplex.of(E)
    cells = E.cells
    tol = max(c.tol for c in cells)
    terms = []
    for ci, P in enumerate(cells):
        fvals = support_eval(norm, P.normals)
        for k, fk in enumerate(P.facets):
            covered = 0.0
            for cj, Q in enumerate(cells):
                if cj != ci:
                    covered += _shared_area(P, k, Q, tol)
            if covered > fk.area * (1.0 + 1e-7) + 1e3 * tol:
                raise NonManifoldBoundary(f"facet {k} of cell {ci} is covered more than once",
                                          cell=ci, facet=k)
            area = max(fk.area - covered, 0.0)
            if area <= 10.0 * tol * P.scale ** (P.dim - 2):
                continue
            f_nu = float(fvals[k])
            terms.append(FacetTerm(ci, k, f_nu, float(area), f_nu * float(area)))
    return EnergyReport(float(sum(t.contribution for t in terms)), tuple(terms))


def energy(E, norm):
    return surface_energy(E, norm).total


def offset_energy(norm, a):
    """``F(K^a)`` straight from the face set: ``sum_i area_i / |sigma_i|``."""
    of = offset_faces(norm, a)
    return float(of.areas @ norm.d)


def wulff_bound(norm, vol):
    n = norm.dim
    return n * norm.K.volume ** (1.0 / n) * vol ** ((n - 1.0) / n)


def wulff_deficit(E, norm):
    """``F(E) - n |K|^{1/n} |E|^{(n-1)/n}``, nonnegative up to rounding."""
    E = CellComplex.of(E)
    vol = E.volume
    if vol <= 0:
        raise ValidationError("wulff_deficit needs |E| > 0")
    return energy(E, norm) - wulff_bound(norm, vol)


def ridge_coefficient(d_i, d_j, theta):
    return d_j / np.sin(theta) - d_i / np.tan(theta)


def geo_identity_residual(P):
    """Per ridge ``(i, j)``: ``[d_j/sin - d_i/tan] - signed_dist`` for both orders.

    Returns an ``(R, 2)`` array; column 0 is the residual seen from facet
    ``i``, column 1 from facet ``j``.
    """
    out = np.zeros((len(P.ridges), 2))
    for r, ridge in enumerate(P.ridges):
        i, j = ridge.facet_pair
        di, dj = P.facets[i].d, P.facets[j].d
        th = ridge.dihedral_angle
        out[r, 0] = ridge_coefficient(di, dj, th) - ridge.signed_dist[0]
        out[r, 1] = ridge_coefficient(dj, di, th) - ridge.signed_dist[1]
    return out


def first_order_volume_delta(norm, a, a2):
    """``sum_i (d_i^{a'} - d_i^a) * area_i(K^a)``."""
    a = _check_offset(norm, a)
    a2 = _check_offset(norm, a2)
    of = offset_faces(norm, a)
    return float(((a2 - a) * norm.d) @ of.areas)


def first_order_energy_delta(norm, a, a2):
    """Leading term of ``F(K^{a'}) - F(K^a)`` as a sum over ridges of ``K^a``.

    Each ridge contributes for both orders ``(i, j)`` and ``(j, i)``::

        b_ij (d_i^{a'} - d_i^a) [f(nu_j) / sin(theta) - f(nu_i) / tan(theta)]

    with ``f(nu_i) = 1 / |sigma_i|``.
    """
    a = _check_offset(norm, a)
    a2 = _check_offset(norm, a2)
    P = offset_shape(norm, a)
    src = P.source_indices
    fK = norm.d
    delta_d = (a2 - a) * norm.d
    terms = []
    dF = 0.0
    for ridge in P.ridges:
        p, q = ridge.facet_pair
        for i, j in ((src[p], src[q]), (src[q], src[p])):
            c = float(ridge_coefficient(fK[i], fK[j], ridge.dihedral_angle))
            terms.append(RidgeTerm(int(i), int(j), float(ridge.measure), c))
            dF += ridge.measure * delta_d[i] * c
    areas = np.zeros(norm.N)
    for k, f in enumerate(P.facets):
        areas[src[k]] = f.area
    dV = float(delta_d @ areas)
    geo = tuple(tuple(float(x) for x in r) for r in geo_identity_residual(P))
    return ExpansionReport(float(dF), dV, tuple(terms), geo)


def smoothness_modulus_probe(norm, u, t_list):
    """``(t, |F(K^{a(t)}) - F(K)| / |a(t)|)`` along ``a(t) = renormalize(t u)``."""
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        raise ValidationError("direction must be nonzero")
    FK = offset_energy(norm, np.zeros(norm.N))
    out = []
    for t in t_list:
        t = float(t)
        if t == 0.0:
            out.append((0.0, 0.0))
            continue
        at = renormalize_volume(norm, t * u)
        out.append((t, abs(offset_energy(norm, at) - FK) / float(np.linalg.norm(at))))
    return out
