"""Piecewise-affine correspondence ``phi: boundary(K^a) -> boundary(K)``.

Every facet of ``K^a`` is fanned from its area barycenter into triangles
``(c, v_k, v_{k+1})`` (segments ``(c, v_k)`` in 2D).  Vertices go to their
Euclidean nearest vertex of ``K``, barycenters go to barycenters, and each
simplex is mapped affinely.  Simplices whose two outer vertices share an image
collapse and form the degenerate set ``T``.
"""

from dataclasses import dataclass

import numpy as np

from .crystal import _check_offset, offset_shape
from .errors import AmbiguousMatch, OriginArgument
from .geometry import EPS_GEOM, triangles_to_off


def facet_frame(normal):
    """Orthonormal basis of the plane orthogonal to ``normal`` (rows)."""
    nu = np.asarray(normal, dtype=float)
    if nu.shape[0] == 2:
        return np.array([[-nu[1], nu[0]]])
    k = int(np.argmin(np.abs(nu)))
    e = np.zeros(3)
    e[k] = 1.0
    u = e - (e @ nu) * nu
    u /= np.linalg.norm(u)
    return np.array([u, np.cross(nu, u)])


@dataclass(frozen=True, eq=False)
class CorrespondenceMap:
    dim: int
    a: np.ndarray
    source: np.ndarray  # (S, n, n) simplices on K^a; row 0 is the barycenter
    image: np.ndarray  # matching simplices on K
    facet: np.ndarray  # sigma index of each simplex
    vertex_ids: np.ndarray  # (S, n - 1) K^a vertex ids of the outer corners
    matching: np.ndarray  # K^a vertex -> K vertex
    in_T: np.ndarray
    source_measure: np.ndarray
    image_measure: np.ndarray  # signed, in the facet's oriented frame
    div: np.ndarray
    frames: tuple  # per sigma index

    @property
    def n_simplices(self):
        return len(self.source)

    def differential(self, k):
        """In-plane differential of simplex ``k`` in its facet frame."""
        fr = self.frames[self.facet[k]]
        S = (self.source[k, 1:] - self.source[k, 0]) @ fr.T
        Q = (self.image[k, 1:] - self.image[k, 0]) @ fr.T
        return np.linalg.solve(S, Q).T

    def locate(self, x, facet):
        """Simplex of ``facet`` containing ``x`` and its barycentric coordinates."""
        fr = self.frames[facet]
        best = None
        for k in np.flatnonzero(self.facet == facet):
            S = (self.source[k, 1:] - self.source[k, 0]) @ fr.T
            lam = np.linalg.solve(S.T, fr @ (x - self.source[k, 0]))
            coords = np.concatenate([[1.0 - lam.sum()], lam])
            worst = float(coords.min())
            if best is None or worst > best[0]:
                best = (worst, k, coords)
        return best[1], best[2]

    def apply(self, x, facet):
        """``phi(x)`` for ``x`` on the given facet, by barycentric interpolation."""
        k, coords = self.locate(np.asarray(x, dtype=float), facet)
        return coords @ self.image[k]

    def to_off(self):
        if self.dim != 3:
            raise ValueError("OFF export needs dim 3")
        colors = [(0.85, 0.1, 0.1) if t else (0.7, 0.7, 0.7) for t in self.in_T]
        return triangles_to_off(self.source, colors)

    def to_dict(self):
        return {
            "dim": self.dim,
            "a": self.a.tolist(),
            "matching": self.matching.tolist(),
            "simplices": [
                {"facet": int(f), "source": s.tolist(), "image": q.tolist(),
                 "in_T": bool(t), "div": float(d)}
                for f, s, q, t, d in zip(self.facet, self.source, self.image, self.in_T, self.div)
            ],
        }


def _match_vertices(P, K, eps):
    d = np.linalg.norm(P.vertices[:, None, :] - K.vertices[None, :, :], axis=-1)
    order = np.argsort(d, axis=1)
    m = order[:, 0]
    if K.vertices.shape[0] > 1:
        rows = np.arange(len(m))
        gap = d[rows, order[:, 1]] - d[rows, m]
        bad = np.flatnonzero(gap <= eps * K.scale)
        if bad.size:
            raise AmbiguousMatch(f"vertex {int(bad[0])} of K^a is equidistant to two vertices of K",
                                 vertex=int(bad[0]))
    return m


def build_correspondence(norm, a, eps=EPS_GEOM):
    """Fan ``boundary(K^a)``, match vertices to ``K`` and build the affine pieces."""
    a = _check_offset(norm, a)
    K = norm.K
    P = K if not np.any(a) else offset_shape(norm, a)
    n = norm.dim
    m = _match_vertices(P, K, eps)
    kbary = {K.source_indices[k]: f.barycenter for k, f in enumerate(K.facets)}
    frames = tuple(facet_frame(nu) for nu in norm.unit_normals)
    src, img, fac, vid = [], [], [], []
    for k, f in enumerate(P.facets):
        s = P.source_indices[k]
        idx = list(f.vertex_indices)
        if n == 3:
            pairs = [(idx[q], idx[(q + 1) % len(idx)]) for q in range(len(idx))]
        else:
            pairs = [(idx[0],), (idx[1],)]
        for pr in pairs:
            src.append(np.vstack([f.barycenter, P.vertices[list(pr)]]))
            img.append(np.vstack([kbary[s], K.vertices[m[list(pr)]]]))
            fac.append(s)
            vid.append(pr)
    src = np.array(src)
    img = np.array(img)
    fac = np.array(fac, dtype=np.int64)
    vid = np.array(vid, dtype=np.int64)
    if n == 3:
        in_T = m[vid[:, 0]] == m[vid[:, 1]]
    else:
        in_T = np.zeros(len(src), dtype=bool)

    smeas, imeas, div = [], [], []
    for k in range(len(src)):
        fr = frames[fac[k]]
        S = (src[k, 1:] - src[k, 0]) @ fr.T
        Q = (img[k, 1:] - img[k, 0]) @ fr.T
        if n == 3:
            sm = 0.5 * np.linalg.det(S)
            im = 0.5 * np.linalg.det(Q)
        else:
            sm, im = float(S[0, 0]), float(Q[0, 0])
        # orientation of the source simplex fixes the sign convention
        sgn = 1.0 if sm >= 0 else -1.0
        smeas.append(abs(sm))
        imeas.append(sgn * im)
        # written as a perturbation of the identity so that a = 0 is exact
        div.append((n - 1) + float(np.trace(np.linalg.solve(S, Q - S))))
    return CorrespondenceMap(n, a, src, img, fac, vid, m, in_T, np.array(smeas),
                             np.array(imeas), np.array(div), frames)


@dataclass(frozen=True)
class DivergenceStats:
    max_offT: float
    measure_T: float
    min_onT: float

    def to_dict(self):
        return {"max_offT": self.max_offT, "measure_T": self.measure_T, "min_onT": self.min_onT}


def divergence_stats(cmap):
    """``(max |div - (n-1)| off T, measure of T, min div on T)``."""
    n = cmap.dim
    off = ~cmap.in_T
    max_off = float(np.max(np.abs(cmap.div[off] - (n - 1)))) if off.any() else 0.0
    meas = float(cmap.source_measure[cmap.in_T].sum())
    min_on = float(cmap.div[cmap.in_T].min()) if cmap.in_T.any() else float(n - 1)
    return DivergenceStats(max_off, meas, min_on)


def divergence_fd(cmap, k, h=None):
    """Tangential divergence of simplex ``k`` from central differences of ``apply``."""
    f = int(cmap.facet[k])
    fr = cmap.frames[f]
    x0 = cmap.source[k].mean(axis=0)
    size = float(np.max(np.linalg.norm(cmap.source[k, 1:] - cmap.source[k, 0], axis=1)))
    h = 1e-4 * size if h is None else h
    tot = 0.0
    for e in fr:
        # evaluate inside simplex k so the affine piece is fixed
        kp = cmap.image[k]
        sp = cmap.source[k]
        vals = []
        for x in (x0 + h * e, x0 - h * e):
            S = (sp[1:] - sp[0]) @ fr.T
            lam = np.linalg.solve(S.T, fr @ (x - sp[0]))
            vals.append(np.concatenate([[1.0 - lam.sum()], lam]) @ kp)
        tot += float(e @ (vals[0] - vals[1])) / (2.0 * h)
    return tot


def _cone_boundary_distance(tau, i, x):
    W = tau - tau[i]
    W = np.delete(W, i, axis=0)
    nrm = np.linalg.norm(W, axis=1)
    keep = nrm > 0
    return float(np.min(np.abs(W[keep] @ x) / nrm[keep]))


def distance_comparison(cmap, norm, samples, seed=0, eps=EPS_GEOM):
    """Max of ``dist(x, bd V_i^a) / dist(phi(x), bd V_i)`` over sampled ``x``.

    ``samples`` points are drawn per facet, area-weighted over the fan; the
    facet barycenters are always included.
    """
    rng = np.random.default_rng(seed)
    tau_a = norm.sigmas / (1.0 + cmap.a)[:, None]
    tau0 = norm.sigmas
    worst = 0.0
    n = cmap.dim
    for f in np.unique(cmap.facet):
        ks = np.flatnonzero(cmap.facet == f)
        w = cmap.source_measure[ks] / cmap.source_measure[ks].sum()
        picks = rng.choice(ks, size=samples, p=w)
        lam = rng.dirichlet(np.ones(n), size=samples)
        xs = np.einsum("sk,skd->sd", lam, cmap.source[picks])
        ys = np.einsum("sk,skd->sd", lam, cmap.image[picks])
        xs = np.vstack([cmap.source[ks[0], 0], xs])
        ys = np.vstack([cmap.image[ks[0], 0], ys])
        for x, y in zip(xs, ys):
            den = _cone_boundary_distance(tau0, f, y)
            if den <= eps:
                continue
            worst = max(worst, _cone_boundary_distance(tau_a, f, x) / den)
    return worst


def field_X(cmap, norm, a, x):
    """``X(x) = phi(x / f_*^a(x))``; 0-homogeneous with values on ``boundary(K)``."""
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise OriginArgument("X is undefined at the origin")
    a = np.asarray(a, dtype=float)
    tau = norm.sigmas / (1.0 + a)[:, None]
    vals = tau @ x
    i = int(np.argmax(vals))
    y = x / vals[i]
    return cmap.apply(y, i)


def fan_check(cmap, norm):
    """Per sigma: (fan source area - facet area of K^a, image area - facet area of K)."""
    P = offset_shape(norm, cmap.a)
    out = np.zeros((norm.N, 2))
    src_area = np.bincount(cmap.facet, weights=cmap.source_measure, minlength=norm.N)
    img_area = np.bincount(cmap.facet, weights=cmap.image_measure, minlength=norm.N)
    for k, f in enumerate(P.facets):
        out[P.source_indices[k], 0] = src_area[P.source_indices[k]] - f.area
    for k, f in enumerate(norm.K.facets):
        out[norm.K.source_indices[k], 1] = img_area[norm.K.source_indices[k]] - f.area
    return out


def dual_offset(norm, a, x):
    """``f_*^a(x) = max_i sigma_i . x / (1 + a_i)``."""
    tau = norm.sigmas / (1.0 + np.asarray(a, dtype=float))[:, None]
    out = np.max(np.asarray(x, dtype=float) @ tau.T, axis=-1)
    return float(out) if out.ndim == 0 else out
