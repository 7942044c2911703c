"""Convex polytope geometry in dimensions 2 and 3.

Polytopes are built by clipping a large bounding box with halfspaces, then
*assembled*: every vertex is re-solved from its incident planes, facets are
read off the vertex/plane incidence and ridges from shared vertices.  All
objects are immutable after construction.

Tolerances are absolute and scale with the data: ``eps * scale`` where
``scale = 1 + max |offset|``.
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

from . import kernels
from .errors import EmptyInterior, Unbounded, ValidationError

EPS_GEOM = 1e-9


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Halfspace:
    """``{x : normal . x <= offset}`` with the normal rescaled to unit length."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        nrm = np.asarray(self.normal, dtype=float)
        length = float(np.linalg.norm(nrm))
        if not np.isfinite(length) or length == 0.0:
            raise ValidationError("halfspace normal must be nonzero")
        if abs(length - 1.0) <= 4e-16:
            # already unit up to rounding; keep bits so serialization round-trips
            length = 1.0
        object.__setattr__(self, "normal", _readonly(nrm / length))
        object.__setattr__(self, "offset", float(self.offset) / length)

    @property
    def dim(self):
        return self.normal.shape[0]

    def flipped(self):
        return Halfspace(-self.normal, -self.offset)

    def signed_distance(self, x):
        return np.asarray(x) @ self.normal - self.offset

    def to_dict(self):
        return {"normal": self.normal.tolist(), "offset": self.offset}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["normal"], dtype=float), float(d["offset"]))


@dataclass(frozen=True, eq=False)
class Facet:
    halfspace_index: int
    vertex_indices: tuple
    normal: np.ndarray
    area: float
    barycenter: np.ndarray
    d: float  # signed distance of the facet plane from the origin


@dataclass(frozen=True, eq=False)
class Ridge:
    """Intersection of two adjacent facets.

    ``measure`` is the edge length in 3D and 1 in 2D.  ``signed_dist[k]`` is the
    in-plane signed distance from the projection of the origin onto the plane of
    ``facet_pair[k]`` to the ridge, positive when the projection lies on the
    facet's side.
    """

    facet_pair: tuple
    vertex_indices: tuple
    measure: float
    dihedral_angle: float
    signed_dist: tuple


class ConvexPolytope:
    """Bounded convex polytope with both halfspace and vertex representation.

    Use :func:`intersect_halfspaces` (or :func:`clip`, :func:`intersect`) to
    build one; the constructor expects already-consistent data.
    """

    def __init__(self, dim, halfspaces, vertices, facets, ridges,
                 source_indices=None, dropped=(), degenerate_dropped=False,
                 eps=EPS_GEOM):
        self.dim = int(dim)
        self.halfspaces = tuple(halfspaces)
        self.vertices = _readonly(vertices)
        self.facets = tuple(facets)
        self.ridges = tuple(ridges)
        if source_indices is None:
            source_indices = tuple(range(len(self.halfspaces)))
        self.source_indices = tuple(int(i) for i in source_indices)
        self.dropped = tuple(int(i) for i in dropped)
        self.degenerate_dropped = bool(degenerate_dropped)
        self.eps = eps

    def __repr__(self):
        return (f"ConvexPolytope(dim={self.dim}, facets={len(self.facets)}, "
                f"vertices={len(self.vertices)}, volume={self.volume:.6g})")

    @cached_property
    def normals(self):
        return _readonly([h.normal for h in self.halfspaces])

    @cached_property
    def offsets(self):
        return _readonly([h.offset for h in self.halfspaces])

    @cached_property
    def areas(self):
        return _readonly([f.area for f in self.facets])

    @cached_property
    def volume(self):
        return volume(self)

    @cached_property
    def centroid(self):
        return _readonly(self.vertices.mean(axis=0))

    @cached_property
    def diameter(self):
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)))

    @property
    def scale(self):
        return 1.0 + float(np.max(np.abs(self.offsets)))

    @property
    def tol(self):
        return self.eps * self.scale

    @cached_property
    def faceset(self):
        """CSR boundary representation consumed by :mod:`crystalwulff.kernels`."""
        polys = [self.vertices[list(f.vertex_indices)] for f in self.facets]
        ptr = np.zeros(len(polys) + 1, np.int64)
        ptr[1:] = np.cumsum([len(p) for p in polys])
        verts = np.ascontiguousarray(np.concatenate(polys))
        labels = np.arange(len(self.facets), dtype=np.int64)
        fs = (verts, ptr, np.ascontiguousarray(self.normals), np.array(self.offsets), labels)
        for a in fs:
            a.setflags(write=False)
        return fs

    def contains(self, x, tol=None):
        tol = self.tol if tol is None else tol
        x = np.atleast_2d(x)
        ok = np.all(x @ self.normals.T - self.offsets <= tol, axis=1)
        return ok if ok.size > 1 else bool(ok[0])

    def gauge(self, x):
        """Minkowski gauge ``max_h (n_h . x) / c_h``; requires the origin inside."""
        if np.any(self.offsets <= 0):
            raise ValidationError("gauge needs the origin in the interior")
        return np.max(np.atleast_2d(x) @ (self.normals / self.offsets[:, None]).T, axis=1)

    def scaled(self, s):
        s = float(s)
        if s <= 0:
            raise ValidationError("scale factor must be positive")
        return _assemble(self.dim, self.normals, self.offsets * s, self.vertices * s,
                         self.source_indices, eps=self.eps)

    def translated(self, y):
        y = np.asarray(y, dtype=float)
        return _assemble(self.dim, self.normals, self.offsets + self.normals @ y,
                         self.vertices + y, self.source_indices, eps=self.eps)

    def to_dict(self):
        return {
            "dim": self.dim,
            "halfspaces": [h.to_dict() for h in self.halfspaces],
            "vertices": self.vertices.tolist(),
        }

    @classmethod
    def from_dict(cls, d, eps=EPS_GEOM):
        dim = int(d["dim"])
        hs = [Halfspace.from_dict(h) for h in d["halfspaces"]]
        return intersect_halfspaces(hs, dim, eps=eps)


@dataclass(frozen=True, eq=False)
class CellComplex:
    """Finite union of convex cells with pairwise disjoint interiors."""

    cells: tuple
    dim: int = field(default=0)

    def __post_init__(self):
        cells = tuple(self.cells)
        if not cells:
            raise ValidationError("a cell complex needs at least one cell")
        dim = cells[0].dim
        if any(c.dim != dim for c in cells):
            raise ValidationError("cells of mixed dimension")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "dim", dim)

    @classmethod
    def of(cls, obj):
        if isinstance(obj, CellComplex):
            return obj
        if isinstance(obj, ConvexPolytope):
            return cls((obj,))
        return cls(tuple(obj))

    @property
    def volume(self):
        return float(sum(c.volume for c in self.cells))

    @property
    def vertices(self):
        return np.concatenate([c.vertices for c in self.cells])

    def overlaps(self, tol=None):
        """Pairs of cells whose intersection has positive volume."""
        bad = []
        for (i, p), (j, q) in combinations(enumerate(self.cells), 2):
            t = tol if tol is not None else 1e-9 * max(p.volume, q.volume)
            if intersection_volume(p, q) > t:
                bad.append((i, j))
        return bad

    def validate(self):
        bad = self.overlaps()
        if bad:
            raise ValidationError("cells overlap", pairs=bad)
        return self

    def scaled(self, s):
        return CellComplex(tuple(c.scaled(s) for c in self.cells))

    def translated(self, y):
        return CellComplex(tuple(c.translated(y) for c in self.cells))

    def to_dict(self):
        return {"dim": self.dim, "cells": [c.to_dict() for c in self.cells]}

    @classmethod
    def from_dict(cls, d, eps=EPS_GEOM):
        if "cells" in d:
            return cls(tuple(ConvexPolytope.from_dict(c, eps=eps) for c in d["cells"]))
        return cls((ConvexPolytope.from_dict(d, eps=eps),))


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def _box_faceset(dim, B):
    if dim == 2:
        corners = np.array([[-B, -B], [B, -B], [B, B], [-B, B]], dtype=float)
        polys, normals = [], []
        for k in range(4):
            p, q = corners[k], corners[(k + 1) % 4]
            e = q - p
            normals.append(np.array([e[1], -e[0]]) / np.linalg.norm(e))
            polys.append(np.array([p, q]))
    else:
        polys, normals = [], []
        for axis in range(3):
            for sign in (1.0, -1.0):
                nrm = np.zeros(3)
                nrm[axis] = sign
                u = np.zeros(3)
                u[(axis + 1) % 3] = 1.0
                w = np.cross(nrm, u)
                c = nrm * B
                polys.append(np.array([c - B * u - B * w, c + B * u - B * w,
                                       c + B * u + B * w, c - B * u + B * w]))
                normals.append(nrm)
    verts = np.concatenate(polys)
    ptr = np.arange(0, len(verts) + 1, dim if dim == 2 else 4, dtype=np.int64)
    fn = np.array(normals)
    fo = np.full(len(polys), float(B))
    labels = -1 - np.arange(len(polys), dtype=np.int64)
    return verts, ptr, fn, fo, labels


def clip_faceset_many(fs, normals, offsets, labels, tol):
    """Clip a face set successively; returns ``None`` when it empties."""
    verts, ptr, fn, fo, flab = fs
    for nrm, off, lab in zip(normals, offsets, labels):
        verts, ptr, fn, fo, flab, status = kernels.clip_faceset(
            verts, ptr, fn, fo, flab, nrm, off, lab, tol)
        if status == 2:
            return None
    return verts, ptr, fn, fo, flab


def faceset_volume(fs):
    verts, ptr, fn, fo, _ = fs
    if len(fo) == 0:
        return 0.0
    n = verts.shape[1]
    return float(np.dot(fo, kernels.faceset_areas(verts, ptr, fn)) / n)


def _order_ccw(points, normal):
    rel = points - points.mean(axis=0)
    k = int(np.argmin(np.abs(normal)))
    e = np.zeros(3)
    e[k] = 1.0
    u = e - normal[k] * normal
    u /= np.linalg.norm(u)
    w = _cross(normal, u)
    return np.argsort(np.arctan2(rel @ w, rel @ u), kind="stable")


def _dedupe(points, tol):
    keep = []
    for p in points:
        if not any(np.max(np.abs(p - q)) <= tol for q in keep):
            keep.append(p)
    return np.array(keep).reshape(-1, points.shape[1])


def _assemble(dim, normals, offsets, candidates, source_indices, eps=EPS_GEOM,
              dropped=(), degenerate_dropped=False):
    """Build a :class:`ConvexPolytope` from planes and candidate vertex points.

    Candidates not lying on ``dim`` independent planes are discarded, the rest
    are re-solved from their incident planes.  Planes without a facet of
    positive measure are dropped.
    """
    normals = np.asarray(normals, dtype=float).reshape(-1, dim)
    offsets = np.asarray(offsets, dtype=float)
    source_indices = list(source_indices)
    scale = 1.0 + float(np.max(np.abs(offsets)))
    tol = eps * scale
    inc_tol = 10.0 * tol
    cand = _dedupe(np.asarray(candidates, dtype=float), inc_tol)

    verts = []
    for p in cand:
        inc = np.flatnonzero(np.abs(normals @ p - offsets) <= inc_tol)
        if len(inc) < dim:
            continue
        sol, _, rank, _ = np.linalg.lstsq(normals[inc], offsets[inc], rcond=1e-7)
        if rank < dim:
            continue
        verts.append(sol)
    if len(verts) <= dim:
        raise EmptyInterior("fewer than n+1 vertices")
    verts = _dedupe(np.array(verts), inc_tol)
    # canonical order: the result depends only on the planes, not the construction
    verts = verts[np.lexsort(verts.T[::-1])]
    D = np.abs(normals @ verts.T - offsets[:, None]) <= inc_tol

    dropped = list(dropped)
    facets_raw = []
    for k in range(len(normals)):
        idx = np.flatnonzero(D[k])
        duplicate = any(np.max(np.abs(normals[k] - normals[j])) <= 1e-12
                        and abs(offsets[k] - offsets[j]) <= tol for j, *_ in facets_raw)
        if len(idx) < dim or duplicate:
            dropped.append(source_indices[k])
            continue
        pts = verts[idx]
        if dim == 3:
            order = _order_ccw(pts, normals[k])
            idx = idx[order]
            pts = pts[order]
            cen = pts.mean(axis=0)
            pn = np.roll(pts, -1, axis=0)
            r0, r1 = pts - cen, pn - cen
            tri = 0.5 * ((r0[:, 1] * r1[:, 2] - r0[:, 2] * r1[:, 1]) * normals[k][0]
                         + (r0[:, 2] * r1[:, 0] - r0[:, 0] * r1[:, 2]) * normals[k][1]
                         + (r0[:, 0] * r1[:, 1] - r0[:, 1] * r1[:, 0]) * normals[k][2])
            area = float(tri.sum())
            bary = ((cen + pts + pn) / 3.0 * tri[:, None]).sum(axis=0) / area if area > 0 else cen
        else:
            if len(idx) != 2:
                # collinear extra points cannot be polygon vertices
                t = np.array([-normals[k][1], normals[k][0]])
                pr = pts @ t
                idx = idx[[int(np.argmin(pr)), int(np.argmax(pr))]]
                pts = verts[idx]
            area = float(np.linalg.norm(pts[1] - pts[0]))
            bary = pts.mean(axis=0)
        if area <= tol * scale ** (dim - 2):
            dropped.append(source_indices[k])
            degenerate_dropped = True
            continue
        facets_raw.append((k, tuple(int(i) for i in idx), area, bary))

    if len(facets_raw) <= dim:
        raise EmptyInterior("degenerate polytope")

    # keep only vertices used by some facet
    used = sorted({i for f in facets_raw for i in f[1]})
    remap = {old: new for new, old in enumerate(used)}
    verts = verts[used]

    halfspaces, facets, src = [], [], []
    for new_k, (k, idx, area, bary) in enumerate(facets_raw):
        h = Halfspace(normals[k], offsets[k])
        halfspaces.append(h)
        src.append(source_indices[k])
        facets.append(Facet(new_k, tuple(remap[i] for i in idx), h.normal, area,
                            _readonly(bary), h.offset))

    vsets = [set(f.vertex_indices) for f in facets]
    ridges = []
    for i, j in combinations(range(len(facets)), 2):
        shared = sorted(vsets[i] & vsets[j])
        if dim == 3 and len(shared) < 2:
            continue
        if dim == 2 and len(shared) < 1:
            continue
        ni, nj = facets[i].normal, facets[j].normal
        cos_t = float(np.clip(ni @ nj, -1.0, 1.0))
        theta = float(np.arccos(cos_t))
        pts = verts[shared]
        if dim == 3:
            dm = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
            a, b = np.unravel_index(np.argmax(dm), dm.shape)
            q0, q1 = pts[a], pts[b]
            measure = float(dm[a, b])
            shared = [shared[a], shared[b]]
        else:
            q0 = q1 = pts[0]
            measure = 1.0
            shared = [shared[0]]
        sd = (_ridge_signed_distance(facets[i], q0, q1, dim),
              _ridge_signed_distance(facets[j], q0, q1, dim))
        ridges.append(Ridge((i, j), tuple(shared), measure, theta, sd))

    return ConvexPolytope(dim, halfspaces, verts, facets, ridges, src,
                          dropped=sorted(set(dropped)),
                          degenerate_dropped=degenerate_dropped, eps=eps)


def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def _ridge_signed_distance(facet, q0, q1, dim):
    """Signed distance, inside the facet plane, from the foot of the origin to the ridge."""
    p = facet.d * facet.normal
    c = facet.barycenter
    if dim == 2:
        dist = float(np.linalg.norm(p - q0))
        side = float((p - q0) @ (c - q0))
        return dist if side >= 0 else -dist
    e = q1 - q0
    e = e / np.linalg.norm(e)
    rel = p - q0
    perp = rel - (rel @ e) * e
    dist = float(np.linalg.norm(perp))
    side_p = _cross(e, p - q0) @ facet.normal
    side_c = _cross(e, c - q0) @ facet.normal
    return dist if side_p * side_c >= 0 else -dist


def intersect_halfspaces(hs, dim, eps=EPS_GEOM):
    """Intersect halfspaces into a bounded polytope.

    Raises :class:`Unbounded` or :class:`EmptyInterior`.  Inactive halfspaces
    are reported in ``polytope.dropped`` (input indices).
    """
    hs = [h if isinstance(h, Halfspace) else Halfspace(*h) for h in hs]
    if dim not in (2, 3):
        raise ValidationError("only dimensions 2 and 3 are supported")
    if any(h.dim != dim for h in hs):
        raise ValidationError("halfspace dimension mismatch")
    if len(hs) <= dim:
        raise Unbounded("need at least n+1 halfspaces")
    normals = np.array([h.normal for h in hs])
    offsets = np.array([h.offset for h in hs])
    scale = 1.0 + float(np.max(np.abs(offsets)))
    tol = eps * scale
    B = 1e3 * scale
    fs = clip_faceset_many(_box_faceset(dim, B), normals, offsets, range(len(hs)), tol)
    if fs is None:
        raise EmptyInterior("halfspaces have empty intersection")
    verts, ptr, fn, fo, flab = fs
    areas = kernels.faceset_areas(verts, ptr, fn)
    if np.any((flab < 0) & (areas > tol)):
        raise Unbounded("halfspace intersection is unbounded")
    if faceset_volume(fs) <= tol ** dim:
        raise EmptyInterior("halfspace intersection has empty interior")
    return _assemble(dim, normals, offsets, verts, range(len(hs)), eps=eps)


def volume(P):
    """Cone decomposition over facets from an interior point."""
    c = P.vertices.mean(axis=0)
    h = P.offsets - P.normals @ c
    return float(np.dot(h, P.areas) / P.dim)


def clip(P, h):
    """``P`` intersected with one halfspace; ``None`` when the result is empty."""
    return intersect_with_halfspaces(P, [h])


def intersect_with_halfspaces(P, hs):
    hs = [h if isinstance(h, Halfspace) else Halfspace(*h) for h in hs]
    if not hs:
        return P
    base = len(P.halfspaces)
    fs = clip_faceset_many(P.faceset, [h.normal for h in hs], [h.offset for h in hs],
                           range(base, base + len(hs)), P.tol)
    if fs is None or faceset_volume(fs) <= P.tol ** P.dim:
        return None
    normals = np.concatenate([P.normals, [h.normal for h in hs]])
    offsets = np.concatenate([P.offsets, [h.offset for h in hs]])
    src = list(P.source_indices) + [-1 - k for k in range(len(hs))]
    try:
        return _assemble(P.dim, normals, offsets, fs[0], src, eps=P.eps)
    except EmptyInterior:
        return None


def intersect(P, Q):
    """Exact convex intersection; ``None`` when empty or lower dimensional."""
    return intersect_with_halfspaces(P, Q.halfspaces)


def intersection_volume(P, Q):
    """``|P cap Q|`` without assembling the intersection."""
    fs = clip_faceset_many(P.faceset, Q.normals, Q.offsets,
                           range(len(P.halfspaces), len(P.halfspaces) + len(Q.halfspaces)),
                           max(P.tol, Q.tol))
    return 0.0 if fs is None else max(faceset_volume(fs), 0.0)


def symmetric_difference_volume(E, Q):
    """``|E delta Q| = |E| + |Q| - 2 |E cap Q|``."""
    E = CellComplex.of(E)
    inter = sum(intersection_volume(c, Q) for c in E.cells)
    return max(E.volume + Q.volume - 2.0 * inter, 0.0)


def simplex_decompose(P):
    """Disjoint-interior simplices covering ``P`` as an ``(S, n+1, n)`` array."""
    if len(P.vertices) == P.dim + 1:
        return P.vertices[None].copy()
    c = P.vertices.mean(axis=0)
    out = []
    for f in P.facets:
        pts = P.vertices[list(f.vertex_indices)]
        if P.dim == 2:
            out.append([c, pts[0], pts[1]])
        else:
            for k in range(1, len(pts) - 1):
                out.append([c, pts[0], pts[k], pts[k + 1]])
    return np.array(out)


def simplex_volumes(simplices):
    s = np.asarray(simplices)
    n = s.shape[-1]
    edges = s[:, 1:, :] - s[:, :1, :]
    fact = 2.0 if n == 2 else 6.0
    return np.abs(np.linalg.det(edges)) / fact


def volume_centroid(P):
    simp = simplex_decompose(P)
    w = simplex_volumes(simp)
    return (w[:, None] * simp.mean(axis=1)).sum(axis=0) / w.sum()


def convex_hull(points, eps=EPS_GEOM):
    """Convex hull of a point cloud as a polytope (facets via Qhull)."""
    from scipy.spatial import ConvexHull

    pts = np.asarray(points, dtype=float)
    hull = ConvexHull(pts)
    hs = [Halfspace(eq[:-1], -eq[-1]) for eq in hull.equations]
    # Qhull triangulates coplanar facets; merge duplicate planes before clipping
    uniq = []
    for h in hs:
        if not any(np.allclose(h.normal, g.normal, atol=1e-12) and abs(h.offset - g.offset) < 1e-12
                   for g in uniq):
            uniq.append(h)
    return intersect_halfspaces(uniq, pts.shape[1], eps=eps)


def box(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = len(lo)
    hs = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        hs.append(Halfspace(e, hi[k]))
        hs.append(Halfspace(-e, -lo[k]))
    return intersect_halfspaces(hs, n)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def to_off(P, face_colors=None):
    """OFF mesh text for a 3D polytope (exact vertices, outward facet cycles)."""
    if P.dim != 3:
        raise ValidationError("OFF export needs a 3D polytope")
    lines = ["OFF", f"{len(P.vertices)} {len(P.facets)} {len(P.ridges)}"]
    lines += [" ".join(repr(float(c)) for c in v) for v in P.vertices]
    for k, f in enumerate(P.facets):
        row = f"{len(f.vertex_indices)} " + " ".join(str(i) for i in f.vertex_indices)
        if face_colors is not None:
            row += " " + " ".join(f"{c:.3f}" for c in face_colors[k])
        lines.append(row)
    return "\n".join(lines) + "\n"


def triangles_to_off(triangles, colors=None):
    """OFF text for a triangle soup ``(T, 3, 3)``; used for fan diagnostics."""
    tri = np.asarray(triangles, dtype=float)
    lines = ["OFF", f"{3 * len(tri)} {len(tri)} 0"]
    for t in tri:
        lines += [" ".join(repr(float(c)) for c in v) for v in t]
    for k in range(len(tri)):
        row = f"3 {3 * k} {3 * k + 1} {3 * k + 2}"
        if colors is not None:
            row += " " + " ".join(f"{c:.3f}" for c in colors[k])
        lines.append(row)
    return "\n".join(lines) + "\n"
