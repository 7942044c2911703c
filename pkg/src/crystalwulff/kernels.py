"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from ``CRYSTALWULFF_NUMBA``
(``0``/``false``/``off`` disables numba) and can be switched at runtime with
:func:`set_backend`, which the tests and the benchmark use to compare the two
paths on identical inputs.

All kernels work on a *face set*: the boundary of a convex cell stored in CSR
form.

    verts  (T, n)   concatenated face vertex lists (3D: counter-clockwise seen
                    from the outward normal; 2D: the two segment endpoints)
    ptr    (F+1,)   face ``f`` owns ``verts[ptr[f]:ptr[f+1]]``
    fn     (F, n)   outward unit normals
    fo     (F,)     plane offsets, ``fn[f] . x = fo[f]`` on face ``f``
    flab   (F,)     integer labels (which halfspace produced the face)
"""

import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    _HAVE_NUMBA = False


def _env_wants_numba():
    flag = os.environ.get("CRYSTALWULFF_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


_USE_NUMBA = _HAVE_NUMBA and _env_wants_numba()


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` for all kernels."""
    global _USE_NUMBA
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _USE_NUMBA = name == "numba"


def backend():
    return "numba" if _USE_NUMBA else "numpy"


if _HAVE_NUMBA:
    njit = numba.njit(cache=True, nogil=True)
else:  # pragma: no cover

    def njit(fn):
        return fn


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit
def _frame_nb(normal):
    # orthonormal in-plane basis (u, w) with u x w = normal
    k = 0
    best = abs(normal[0])
    for c in range(1, 3):
        if abs(normal[c]) < best:
            best = abs(normal[c])
            k = c
    e = np.zeros(3)
    e[k] = 1.0
    dot = normal[k]
    u = e - dot * normal
    u /= np.sqrt(u[0] ** 2 + u[1] ** 2 + u[2] ** 2)
    w = np.empty(3)
    w[0] = normal[1] * u[2] - normal[2] * u[1]
    w[1] = normal[2] * u[0] - normal[0] * u[2]
    w[2] = normal[0] * u[1] - normal[1] * u[0]
    return u, w


@njit
def _clip_faceset_nb(verts, ptr, fn, fo, flab, pn, po, plab, tol):
    T, n = verts.shape
    F = ptr.shape[0] - 1
    d = np.empty(T)
    any_out = False
    any_in = False
    for k in range(T):
        s = -po
        for c in range(n):
            s += verts[k, c] * pn[c]
        d[k] = s
        if s > tol:
            any_out = True
        elif s < -tol:
            any_in = True
    if not any_out:
        return verts, ptr, fn, fo, flab, 0
    if not any_in:
        return (np.empty((0, n)), np.zeros(1, np.int64), np.empty((0, n)),
                np.empty(0), np.empty(0, np.int64), 2)

    cap_max = 3 * T + 2
    out_v = np.empty((T + F + cap_max, n))
    out_ptr = np.zeros(F + 2, np.int64)
    out_fn = np.empty((F + 1, n))
    out_fo = np.empty(F + 1)
    out_lab = np.empty(F + 1, np.int64)
    cap = np.empty((cap_max, n))
    ncap = 0
    nv = 0
    nf = 0
    for f in range(F):
        s0 = ptr[f]
        m = ptr[f + 1] - s0
        start = nv
        if n == 3:
            for idx in range(m):
                p = s0 + idx
                q = s0 + (idx + 1) % m
                dp = d[p]
                dq = d[q]
                if dp <= tol:
                    out_v[nv] = verts[p]
                    nv += 1
                    if dp >= -tol:
                        cap[ncap] = verts[p]
                        ncap += 1
                if (dp < -tol and dq > tol) or (dp > tol and dq < -tol):
                    t = dp / (dp - dq)
                    for c in range(n):
                        out_v[nv, c] = verts[p, c] + t * (verts[q, c] - verts[p, c])
                    cap[ncap] = out_v[nv]
                    ncap += 1
                    nv += 1
            keep = nv - start >= 3
        else:
            p = s0
            q = s0 + 1
            dp = d[p]
            dq = d[q]
            if dp <= tol and dq <= tol:
                out_v[nv] = verts[p]
                out_v[nv + 1] = verts[q]
                nv += 2
                if dp >= -tol:
                    cap[ncap] = verts[p]
                    ncap += 1
                if dq >= -tol:
                    cap[ncap] = verts[q]
                    ncap += 1
            elif dp >= -tol and dq >= -tol:
                if dp <= tol:
                    cap[ncap] = verts[p]
                    ncap += 1
                if dq <= tol:
                    cap[ncap] = verts[q]
                    ncap += 1
            else:
                t = dp / (dp - dq)
                if dp < 0.0:
                    out_v[nv] = verts[p]
                else:
                    out_v[nv] = verts[q]
                for c in range(n):
                    out_v[nv + 1, c] = verts[p, c] + t * (verts[q, c] - verts[p, c])
                cap[ncap] = out_v[nv + 1]
                ncap += 1
                nv += 2
            keep = nv - start == 2
        if keep:
            out_fn[nf] = fn[f]
            out_fo[nf] = fo[f]
            out_lab[nf] = flab[f]
            nf += 1
            out_ptr[nf] = nv
        else:
            nv = start

    # unique cap points
    dtol = 10.0 * tol
    uniq = np.empty((ncap, n))
    nu = 0
    for k in range(ncap):
        dup = False
        for r in range(nu):
            dmax = 0.0
            for c in range(n):
                dmax = max(dmax, abs(cap[k, c] - uniq[r, c]))
            if dmax <= dtol:
                dup = True
                break
        if not dup:
            uniq[nu] = cap[k]
            nu += 1

    if n == 3 and nu >= 3:
        u, w = _frame_nb(pn)
        cen = np.zeros(3)
        for r in range(nu):
            cen += uniq[r]
        cen /= nu
        ang = np.empty(nu)
        for r in range(nu):
            x = uniq[r] - cen
            ang[r] = np.arctan2(x[0] * w[0] + x[1] * w[1] + x[2] * w[2],
                                x[0] * u[0] + x[1] * u[1] + x[2] * u[2])
        order = np.argsort(ang)
        for r in range(nu):
            out_v[nv] = uniq[order[r]]
            nv += 1
        out_fn[nf] = pn
        out_fo[nf] = po
        out_lab[nf] = plab
        nf += 1
        out_ptr[nf] = nv
    elif n == 2 and nu >= 2:
        tx = -pn[1]
        ty = pn[0]
        kmin = 0
        kmax = 0
        for r in range(nu):
            pr = uniq[r, 0] * tx + uniq[r, 1] * ty
            if pr < uniq[kmin, 0] * tx + uniq[kmin, 1] * ty:
                kmin = r
            if pr > uniq[kmax, 0] * tx + uniq[kmax, 1] * ty:
                kmax = r
        if kmin != kmax:
            out_v[nv] = uniq[kmin]
            out_v[nv + 1] = uniq[kmax]
            nv += 2
            out_fn[nf] = pn
            out_fo[nf] = po
            out_lab[nf] = plab
            nf += 1
            out_ptr[nf] = nv

    return (out_v[:nv].copy(), out_ptr[:nf + 1].copy(), out_fn[:nf].copy(),
            out_fo[:nf].copy(), out_lab[:nf].copy(), 1)


@njit
def _poly_area_nb(poly, m, normal):
    n = poly.shape[1]
    if n == 2:
        if m < 2:
            return 0.0
        return np.sqrt((poly[1, 0] - poly[0, 0]) ** 2 + (poly[1, 1] - poly[0, 1]) ** 2)
    if m < 3:
        return 0.0
    acc = 0.0
    for k in range(1, m - 1):
        ax = poly[k, 0] - poly[0, 0]
        ay = poly[k, 1] - poly[0, 1]
        az = poly[k, 2] - poly[0, 2]
        bx = poly[k + 1, 0] - poly[0, 0]
        by = poly[k + 1, 1] - poly[0, 1]
        bz = poly[k + 1, 2] - poly[0, 2]
        acc += (ay * bz - az * by) * normal[0] + (az * bx - ax * bz) * normal[1] \
            + (ax * by - ay * bx) * normal[2]
    return 0.5 * acc


@njit
def _faceset_areas_nb(verts, ptr, fn):
    F = ptr.shape[0] - 1
    out = np.empty(F)
    for f in range(F):
        s0 = ptr[f]
        m = ptr[f + 1] - s0
        out[f] = _poly_area_nb(verts[s0:s0 + m], m, fn[f])
    return out


@njit
def _clip_poly_nb(poly, m, A, b, nrow, buf_a, buf_b):
    """Clip a planar polygon (3D) or segment (2D) by rows ``A x <= b``.

    Returns the buffer holding the result and its vertex count.
    """
    n = poly.shape[1]
    cur = buf_a
    nxt = buf_b
    for k in range(m):
        cur[k] = poly[k]
    cm = m
    for r in range(nrow):
        if n == 2:
            d0 = -b[r]
            d1 = -b[r]
            for c in range(2):
                d0 += A[r, c] * cur[0, c]
                d1 += A[r, c] * cur[1, c]
            if d0 > 0.0 and d1 > 0.0:
                return cur, 0
            if d0 > 0.0:
                t = d0 / (d0 - d1)
                for c in range(2):
                    cur[0, c] = cur[0, c] + t * (cur[1, c] - cur[0, c])
            elif d1 > 0.0:
                t = d1 / (d1 - d0)
                for c in range(2):
                    cur[1, c] = cur[1, c] + t * (cur[0, c] - cur[1, c])
            continue
        nn = 0
        for k in range(cm):
            kq = (k + 1) % cm
            dp = -b[r]
            dq = -b[r]
            for c in range(3):
                dp += A[r, c] * cur[k, c]
                dq += A[r, c] * cur[kq, c]
            if dp <= 0.0:
                nxt[nn] = cur[k]
                nn += 1
            if (dp < 0.0 and dq > 0.0) or (dp > 0.0 and dq < 0.0):
                t = dp / (dp - dq)
                for c in range(3):
                    nxt[nn, c] = cur[k, c] + t * (cur[kq, c] - cur[k, c])
                nn += 1
        tmp = cur
        cur = nxt
        nxt = tmp
        cm = nn
        if cm < 3:
            return cur, 0
    return cur, cm


@njit
def _faceset_cone_areas_nb(verts, ptr, fn, tau):
    F = ptr.shape[0] - 1
    N, n = tau.shape
    out = np.zeros((F, N))
    for f in range(F):
        s0 = ptr[f]
        m = ptr[f + 1] - s0
        poly = verts[s0:s0 + m]
        s = np.empty((m, N))
        for k in range(m):
            for i in range(N):
                acc = 0.0
                for c in range(n):
                    acc += tau[i, c] * poly[k, c]
                s[k, i] = acc
        full = _poly_area_nb(poly, m, fn[f])
        A = np.empty((N, n))
        b = np.zeros(N)
        buf_a = np.empty((m + N + 2, n))
        buf_b = np.empty((m + N + 2, n))
        for i in range(N):
            nrow = 0
            skip = False
            for j in range(N):
                if j == i:
                    continue
                any_above = False
                all_above = True
                for k in range(m):
                    if s[k, j] > s[k, i]:
                        any_above = True
                    else:
                        all_above = False
                if all_above:
                    skip = True
                    break
                if any_above:
                    for c in range(n):
                        A[nrow, c] = tau[j, c] - tau[i, c]
                    nrow += 1
            if skip:
                continue
            if nrow == 0:
                out[f, i] = full
                continue
            res, cm = _clip_poly_nb(poly, m, A, b, nrow, buf_a, buf_b)
            if n == 2:
                if cm == 0:
                    continue
                out[f, i] = _poly_area_nb(res, 2, fn[f])
            elif cm >= 3:
                out[f, i] = _poly_area_nb(res, cm, fn[f])
    return out


@njit
def _faceset_clip_areas_nb(verts, ptr, fn, A, b):
    F = ptr.shape[0] - 1
    n = verts.shape[1]
    K = A.shape[0]
    out = np.zeros(F)
    for f in range(F):
        s0 = ptr[f]
        m = ptr[f + 1] - s0
        buf_a = np.empty((m + K + 2, n))
        buf_b = np.empty((m + K + 2, n))
        res, cm = _clip_poly_nb(verts[s0:s0 + m], m, A, b, K, buf_a, buf_b)
        if n == 2:
            if cm > 0:
                out[f] = _poly_area_nb(res, 2, fn[f])
        elif cm >= 3:
            out[f] = _poly_area_nb(res, cm, fn[f])
    return out


@njit
def _max_affine_nb(points, A, b):
    P = points.shape[0]
    K, n = A.shape
    vals = np.empty(P)
    idx = np.empty(P, np.int64)
    for p in range(P):
        best = -np.inf
        bi = 0
        for k in range(K):
            acc = -b[k]
            for c in range(n):
                acc += A[k, c] * points[p, c]
            if acc > best:
                best = acc
                bi = k
        vals[p] = best
        idx[p] = bi
    return vals, idx


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------


def _frame_np(normal):
    k = int(np.argmin(np.abs(normal)))
    e = np.zeros(3)
    e[k] = 1.0
    u = e - normal[k] * normal
    u /= np.linalg.norm(u)
    return u, np.cross(normal, u)


def _clip_faceset_np(verts, ptr, fn, fo, flab, pn, po, plab, tol):
    n = verts.shape[1]
    d = verts @ pn - po
    if not np.any(d > tol):
        return verts, ptr, fn, fo, flab, 0
    if not np.any(d < -tol):
        return (np.empty((0, n)), np.zeros(1, np.int64), np.empty((0, n)),
                np.empty(0), np.empty(0, np.int64), 2)
    faces = []
    cap = []
    for f in range(len(ptr) - 1):
        poly = verts[ptr[f]:ptr[f + 1]]
        df = d[ptr[f]:ptr[f + 1]]
        inside = df <= tol
        on = inside & (df >= -tol)
        cap.extend(poly[on])
        if n == 2:
            if inside.all():
                faces.append((f, poly))
            elif (df < -tol).any() and (df > tol).any():
                t = df[0] / (df[0] - df[1])
                x = poly[0] + t * (poly[1] - poly[0])
                keep = poly[0] if df[0] < 0 else poly[1]
                faces.append((f, np.array([keep, x])))
                cap.append(x)
            continue
        if inside.all():
            faces.append((f, poly))
            continue
        nxt = np.roll(np.arange(len(poly)), -1)
        dq = df[nxt]
        cross = ((df < -tol) & (dq > tol)) | ((df > tol) & (dq < -tol))
        out = []
        for k in range(len(poly)):
            if inside[k]:
                out.append(poly[k])
            if cross[k]:
                t = df[k] / (df[k] - dq[k])
                x = poly[k] + t * (poly[nxt[k]] - poly[k])
                out.append(x)
                cap.append(x)
        if len(out) >= 3:
            faces.append((f, np.array(out)))

    uniq = []
    for p in cap:
        if not any(np.max(np.abs(p - q)) <= 10.0 * tol for q in uniq):
            uniq.append(p)
    new_face = None
    if n == 3 and len(uniq) >= 3:
        pts = np.array(uniq)
        u, w = _frame_np(pn)
        rel = pts - pts.mean(axis=0)
        order = np.argsort(np.arctan2(rel @ w, rel @ u), kind="stable")
        new_face = pts[order]
    elif n == 2 and len(uniq) >= 2:
        pts = np.array(uniq)
        pr = pts @ np.array([-pn[1], pn[0]])
        kmin, kmax = int(np.argmin(pr)), int(np.argmax(pr))
        if kmin != kmax:
            new_face = pts[[kmin, kmax]]

    polys = [p for _, p in faces]
    idx = [f for f, _ in faces]
    out_fn = [fn[f] for f in idx]
    out_fo = [fo[f] for f in idx]
    out_lab = [flab[f] for f in idx]
    if new_face is not None:
        polys.append(new_face)
        out_fn.append(pn)
        out_fo.append(po)
        out_lab.append(plab)
    counts = [len(p) for p in polys]
    new_ptr = np.zeros(len(polys) + 1, np.int64)
    new_ptr[1:] = np.cumsum(counts)
    return (np.concatenate(polys).astype(float) if polys else np.empty((0, n)),
            new_ptr,
            np.array(out_fn, dtype=float).reshape(-1, n),
            np.array(out_fo, dtype=float),
            np.array(out_lab, dtype=np.int64),
            1)


def _poly_area_np(poly, normal):
    if poly.shape[1] == 2:
        return float(np.linalg.norm(poly[1] - poly[0])) if len(poly) >= 2 else 0.0
    if len(poly) < 3:
        return 0.0
    rel = poly - poly[0]
    return 0.5 * float(np.sum(np.cross(rel[1:-1], rel[2:]) @ normal))


def _faceset_areas_np(verts, ptr, fn):
    return np.array([_poly_area_np(verts[ptr[f]:ptr[f + 1]], fn[f])
                     for f in range(len(ptr) - 1)])


def _clip_poly_np(poly, A, b):
    cur = poly
    for r in range(len(A)):
        d = cur @ A[r] - b[r]
        if poly.shape[1] == 2:
            if (d > 0).all():
                return None
            if d[0] > 0:
                cur = np.array([cur[0] + d[0] / (d[0] - d[1]) * (cur[1] - cur[0]), cur[1]])
            elif d[1] > 0:
                cur = np.array([cur[0], cur[1] + d[1] / (d[1] - d[0]) * (cur[0] - cur[1])])
            continue
        if (d <= 0).all():
            continue
        dq = np.roll(d, -1)
        nxt_pts = np.roll(cur, -1, axis=0)
        out = []
        for k in range(len(cur)):
            if d[k] <= 0:
                out.append(cur[k])
            if (d[k] < 0 < dq[k]) or (d[k] > 0 > dq[k]):
                out.append(cur[k] + d[k] / (d[k] - dq[k]) * (nxt_pts[k] - cur[k]))
        if len(out) < 3:
            return None
        cur = np.array(out)
    return cur


def _faceset_cone_areas_np(verts, ptr, fn, tau):
    F = len(ptr) - 1
    N = len(tau)
    out = np.zeros((F, N))
    for f in range(F):
        poly = verts[ptr[f]:ptr[f + 1]]
        s = poly @ tau.T
        full = _poly_area_np(poly, fn[f])
        for i in range(N):
            above = s > s[:, [i]]
            above[:, i] = False
            if above.all(axis=0).any():
                continue
            rows = np.flatnonzero(above.any(axis=0))
            if rows.size == 0:
                out[f, i] = full
                continue
            res = _clip_poly_np(poly, tau[rows] - tau[i], np.zeros(rows.size))
            if res is not None:
                out[f, i] = _poly_area_np(res, fn[f])
    return out


def _faceset_clip_areas_np(verts, ptr, fn, A, b):
    out = np.zeros(len(ptr) - 1)
    for f in range(len(ptr) - 1):
        res = _clip_poly_np(verts[ptr[f]:ptr[f + 1]], A, b)
        if res is not None:
            out[f] = _poly_area_np(res, fn[f])
    return out


def _max_affine_np(points, A, b, chunk=250_000):
    P = len(points)
    vals = np.empty(P)
    idx = np.empty(P, np.int64)
    for s in range(0, P, chunk):
        z = points[s:s + chunk] @ A.T - b
        idx[s:s + chunk] = np.argmax(z, axis=1)
        vals[s:s + chunk] = np.take_along_axis(z, idx[s:s + chunk, None], axis=1)[:, 0]
    return vals, idx


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _f8(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i8(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def clip_faceset(verts, ptr, fn, fo, flab, pn, po, plab, tol):
    """Clip a face set by ``pn . x <= po``.

    Returns ``(verts, ptr, fn, fo, flab, status)`` with status 0 when the plane
    does not cut (input returned unchanged), 1 when it cuts, 2 when nothing
    survives.
    """
    args = (_f8(verts), _i8(ptr), _f8(fn), _f8(fo), _i8(flab), _f8(pn),
            float(po), int(plab), float(tol))
    if _USE_NUMBA:
        return _clip_faceset_nb(*args)
    return _clip_faceset_np(*args)


def faceset_areas(verts, ptr, fn):
    if _USE_NUMBA:
        return _faceset_areas_nb(_f8(verts), _i8(ptr), _f8(fn))
    return _faceset_areas_np(_f8(verts), _i8(ptr), _f8(fn))


def faceset_cone_areas(verts, ptr, fn, tau):
    """Area of each face inside each cone ``{x : tau_i . x >= tau_j . x  for all j}``.

    Returns an ``(F, N)`` array.
    """
    if _USE_NUMBA:
        return _faceset_cone_areas_nb(_f8(verts), _i8(ptr), _f8(fn), _f8(tau))
    return _faceset_cone_areas_np(_f8(verts), _i8(ptr), _f8(fn), _f8(tau))


def faceset_clip_areas(verts, ptr, fn, A, b):
    """Area of each face inside the polyhedron ``A x <= b``."""
    if _USE_NUMBA:
        return _faceset_clip_areas_nb(_f8(verts), _i8(ptr), _f8(fn), _f8(A), _f8(b))
    return _faceset_clip_areas_np(_f8(verts), _i8(ptr), _f8(fn), _f8(A), _f8(b))


def max_affine(points, A, b):
    """Row-wise ``max_k (A_k . x - b_k)`` and its argmax for a point cloud."""
    if _USE_NUMBA:
        return _max_affine_nb(_f8(points), _f8(A), _f8(b))
    return _max_affine_np(_f8(points), _f8(A), _f8(b))
