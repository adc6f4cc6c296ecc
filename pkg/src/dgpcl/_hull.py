"""Quickhull convex hull in arbitrary dimension.

Facets are simplicial: ``D`` vertex indices, a unit outward normal and an
offset, so that ``normal @ x - offset`` is the signed distance of ``x`` from
the facet's hyperplane (positive outside). Points within ``eps`` of a
hyperplane count as inside; callers detect and perturb away such coplanar
configurations.
"""
import numpy as np


class DegenerateError(ValueError):
    """Point set is (numerically) affinely dependent somewhere it matters."""


class _Facet:
    __slots__ = ("verts", "normal", "offset", "neighbors", "outside")

    def __init__(self, verts, normal, offset):
        self.verts = verts
        self.normal = normal
        self.offset = offset
        self.neighbors = [None] * len(verts)
        self.outside = None  # np.ndarray of point indices, or None


def _plane(P, verts, center):
    pts = P[list(verts)]
    A = pts[1:] - pts[0]
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    if s.size and s[-1] <= 1e-14 * max(s[0], 1e-300):
        raise DegenerateError(f"flat facet on vertices {verts}")
    normal = vt[-1]
    offset = normal @ pts[0]
    if normal @ center - offset > 0:
        normal, offset = -normal, -offset
    return normal, offset


def _initial_simplex(P, eps):
    n, D = P.shape
    if n < D + 1:
        raise DegenerateError(f"need at least {D + 1} points for a full-dimensional hull, got {n}")
    i0 = int(np.argmin(P[:, 0]))
    chosen = [i0]
    base = P - P[i0]
    dist = np.linalg.norm(base, axis=1)
    for _ in range(D):
        k = int(np.argmax(dist))
        if dist[k] <= eps:
            raise DegenerateError("points do not span the full dimension")
        chosen.append(k)
        Q, _ = np.linalg.qr((P[chosen[1:]] - P[i0]).T)
        resid = base - (base @ Q) @ Q.T
        dist = np.linalg.norm(resid, axis=1)
        dist[chosen] = -1.0
    return chosen


def convex_hull(P, eps=None):
    """Return ``(verts, normals, offsets)`` arrays describing the hull facets of ``P``."""
    P = np.asarray(P, dtype=float)
    n, D = P.shape
    if eps is None:
        eps = 1e-13 * max(1.0, float(np.abs(P).max()))
    simplex = _initial_simplex(P, eps)
    center = P[simplex].mean(axis=0)

    facets = {}
    next_id = 0

    def add(verts):
        nonlocal next_id
        normal, offset = _plane(P, verts, center)
        facets[next_id] = _Facet(tuple(verts), normal, offset)
        next_id += 1
        return next_id - 1

    def link(ids):
        # connect facets among `ids` that share a ridge
        ridges = {}
        for fid in ids:
            f = facets[fid]
            for k in range(D):
                if f.neighbors[k] is not None:
                    continue
                key = frozenset(f.verts[:k] + f.verts[k + 1:])
                other = ridges.pop(key, None)
                if other is None:
                    ridges[key] = (fid, k)
                else:
                    gid, gk = other
                    f.neighbors[k] = gid
                    facets[gid].neighbors[gk] = fid

    def assign(points, ids):
        if points.size == 0 or not ids:
            return
        normals = np.array([facets[i].normal for i in ids])
        offsets = np.array([facets[i].offset for i in ids])
        dist = P[points] @ normals.T - offsets
        best = np.argmax(dist, axis=1)
        bestd = dist[np.arange(points.size), best]
        out = bestd > eps
        for j in np.unique(best[out]):
            sel = out & (best == j)
            order = np.argsort(-bestd[sel], kind="stable")
            facets[ids[j]].outside = points[sel][order]  # furthest first

    first = [add(tuple(v for v in simplex if v != s)) for s in simplex]
    link(first)
    rest = np.setdiff1d(np.arange(n), simplex)
    assign(rest, first)
    stack = [fid for fid in first if facets[fid].outside is not None]

    while stack:
        fid = stack.pop()
        f = facets.get(fid)
        if f is None or f.outside is None or f.outside.size == 0:
            continue
        p = int(f.outside[0])
        x = P[p]
        visible = {fid}
        queue = [fid]
        while queue:
            g = facets[queue.pop()]
            for nb in g.neighbors:
                if nb in visible:
                    continue
                h = facets[nb]
                if h.normal @ x - h.offset > eps:
                    visible.add(nb)
                    queue.append(nb)

        horizon = []
        pending = []
        for vid in visible:
            v = facets[vid]
            if v.outside is not None:
                pending.append(v.outside)
            for k, nb in enumerate(v.neighbors):
                if nb not in visible:
                    horizon.append((v.verts[:k] + v.verts[k + 1:], nb))
        for vid in visible:
            del facets[vid]

        new_ids = []
        for ridge, nb in horizon:
            nid = add(ridge + (p,))
            new = facets[nid]
            new.neighbors[D - 1] = nb
            g = facets[nb]
            rset = set(ridge)
            k = next(i for i, v in enumerate(g.verts) if v not in rset)
            g.neighbors[k] = nid
            new_ids.append(nid)
        link(new_ids)

        if pending:
            pts = np.concatenate(pending)
            pts = pts[pts != p]
            assign(pts, new_ids)
        stack.extend(i for i in new_ids if facets[i].outside is not None)

    ids = sorted(facets)
    verts = np.array([facets[i].verts for i in ids], dtype=np.int64)
    normals = np.array([facets[i].normal for i in ids])
    offsets = np.array([facets[i].offset for i in ids])
    return verts, normals, offsets
