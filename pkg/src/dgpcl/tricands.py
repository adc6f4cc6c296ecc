"""Triangulation candidates ("tricands") for acquisition.

Delaunay simplices come from the lower convex hull of the design lifted onto
the paraboloid ``x -> (x, |x|^2)``. Internal candidates sit at simplex
barycenters; fringe candidates sit on the outward normal of each boundary
facet, a fraction ``alpha`` of the way from the facet midpoint to the edge of
the unit cube.
"""
import csv
import io
import logging
import math
from dataclasses import dataclass

import numpy as np

from ._hull import DegenerateError, convex_hull

MAX_DIM = 8
JITTER = 1e-9
MERGE_TOL = 1e-6
INTERNAL, FRINGE = 0, 1
ORIGIN_NAMES = {INTERNAL: "internal", FRINGE: "fringe"}

logger = logging.getLogger(__name__)


@dataclass
class Triangulation:
    points: np.ndarray
    simplices: np.ndarray  # (n_T, d+1) vertex indices
    hull_facets: np.ndarray  # (n_F, d) vertex indices
    normals: np.ndarray  # (n_F, d) outward unit normals
    jittered: bool = False

    @property
    def d(self):
        return self.points.shape[1]


def _volume(V):
    d = V.shape[1]
    return abs(np.linalg.det(V[1:] - V[0])) / math.factorial(d)


def _lower_simplices(X, lifted):
    n = X.shape[0]
    # an apex above the lifted cloud keeps the hull full-dimensional (n = d + 1
    # included); facets through it are never lower facets
    apex = np.r_[X.mean(axis=0), lifted[:, -1].max() + 1.0]
    verts, normals, offsets = convex_hull(np.vstack([lifted, apex]))
    scale = max(1.0, float(np.abs(lifted).max()))
    tol = 1e-13 * scale
    lower = (normals[:, -1] < -1e-10) & np.all(verts < n, axis=1)
    verts, normals, offsets = verts[lower], normals[lower], offsets[lower]
    # slivers next to near-duplicate points are legitimate; only flat simplices are degenerate
    if verts.shape[0] == 0 or any(_volume(X[v]) <= 0.0 for v in verts):
        raise DegenerateError("flat or missing simplices")
    if np.unique(verts).size != X.shape[0]:
        raise DegenerateError("some design points are not triangulation vertices")
    # a non-vertex point on a lower facet's hyperplane means cospherical points
    dist = lifted @ normals.T - offsets
    member = np.zeros_like(dist, dtype=bool)
    member[verts, np.arange(verts.shape[0])[:, None]] = True
    if np.any((np.abs(dist) <= tol) & ~member):
        raise DegenerateError("cospherical points")
    return np.sort(verts, axis=1)


def _boundary(X, simplices):
    d = X.shape[1]
    seen = {}
    for s_idx, simp in enumerate(simplices):
        for k in range(d + 1):
            face = tuple(np.delete(simp, k))
            if face in seen:
                seen[face] = None
            else:
                seen[face] = (s_idx, simp[k])
    faces, normals = [], []
    for face, info in seen.items():
        if info is None:
            continue
        _, opposite = info
        F = X[list(face)]
        if d == 1:
            normal = np.array([1.0])
        else:
            _, _, vt = np.linalg.svd(F[1:] - F[0], full_matrices=True)
            normal = vt[-1]
        if normal @ (X[opposite] - F[0]) > 0:
            normal = -normal
        faces.append(face)
        normals.append(normal / np.linalg.norm(normal))
    order = np.lexsort(np.array(faces).T[::-1])
    return np.array(faces, dtype=np.int64)[order], np.array(normals)[order]


def delaunay(X, seed=0):
    """Delaunay triangulation of the rows of ``X`` (n >= d + 1, d <= 8).

    Cospherical or otherwise degenerate inputs trigger one retry with a seeded
    Gaussian jitter of size 1e-9 on the lifted coordinates.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    n, d = X.shape
    if d > MAX_DIM:
        raise ValueError(f"triangulation in d={d} > {MAX_DIM} dimensions is not tractable")
    if n < d + 1:
        raise ValueError(f"triangulation undefined: {n} points in {d} dimensions (need {d + 1})")
    # centring subtracts an affine function from the lift (same lower hull) and
    # keeps near-duplicate points resolvable in the height coordinate
    Z = X - X.mean(axis=0)
    lifted = np.column_stack([X, np.sum(Z * Z, axis=1)])
    jittered = False
    try:
        simplices = _lower_simplices(X, lifted)
    except DegenerateError:
        rng = np.random.default_rng(seed)
        jittered = True
        try:
            simplices = _lower_simplices(X, lifted + JITTER * rng.standard_normal(lifted.shape))
        except DegenerateError as err:
            raise DegenerateError(f"degenerate design even after jitter: {err}") from None
    order = np.lexsort(simplices.T[::-1])
    simplices = simplices[order]
    facets, normals = _boundary(X, simplices)
    return Triangulation(X, simplices, facets, normals, jittered)


def internal_candidates(tri, X=None):
    X = tri.points if X is None else np.asarray(X, dtype=float)
    return X[tri.simplices].mean(axis=1)


def ray_box_exit(m, v):
    """Distance along ``m + s v`` (s >= 0) to the boundary of the unit cube."""
    s = np.inf
    for mh, vh in zip(m, v):
        if vh > 1e-15:
            s = min(s, (1.0 - mh) / vh)
        elif vh < -1e-15:
            s = min(s, -mh / vh)
    return max(s, 0.0) if np.isfinite(s) else 0.0


def fringe_candidates(tri, X=None, alpha=0.9):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    X = tri.points if X is None else np.asarray(X, dtype=float)
    out = np.empty((tri.hull_facets.shape[0], X.shape[1]))
    for j, (face, v) in enumerate(zip(tri.hull_facets, tri.normals)):
        if abs(np.linalg.norm(v) - 1.0) > 1e-8:
            raise AssertionError(f"facet {j} normal is not unit length")
        m = X[face].mean(axis=0)
        out[j] = m + alpha * ray_box_exit(m, v) * v
    return np.clip(out, 0.0, 1.0)


@dataclass
class CandidateSet:
    X: np.ndarray  # (N, d)
    origin: np.ndarray  # INTERNAL / FRINGE
    source: np.ndarray  # simplex or facet index
    members: np.ndarray  # (N, d+1) generating vertices, -1 padded

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return CandidateSet(self.X[idx], self.origin[idx], self.source[idx], self.members[idx])

    def digest(self):
        import hashlib

        h = hashlib.sha256()
        for a in (self.X, self.origin, self.source):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.X.shape[1]
        w.writerow([f"x{h + 1}" for h in range(d)] + ["origin", "source"])
        for x, o, s in zip(self.X, self.origin, self.source):
            w.writerow([repr(float(v)) for v in x] + [ORIGIN_NAMES[int(o)], int(s)])
        return buf.getvalue()


def merge_close(X, tol=MERGE_TOL):
    """Indices of one representative per cluster of rows within ``tol`` (max-norm), in row order."""
    keep = []
    for i, x in enumerate(X):
        if not keep or np.max(np.abs(X[keep] - x), axis=1).min() > tol:
            keep.append(i)
    return np.array(keep, dtype=np.int64)


def tricands(X, alpha=0.9, tri=None):
    """All internal and fringe candidates for design ``X``.

    Design points closer than the lift can resolve (a contour-hugging design
    can pile up acquisitions ~1e-7 apart) make the triangulation degenerate. In
    that case each cluster within ``MERGE_TOL`` is triangulated through its
    first member; ``members`` still index rows of ``X``.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    index = np.arange(X.shape[0])
    if tri is None:
        try:
            tri = delaunay(X)
        except DegenerateError:
            index = merge_close(X)
            if index.size == X.shape[0]:
                raise
            logger.warning("merging %d near-coincident design points before triangulating",
                           X.shape[0] - index.size)
            tri = delaunay(X[index])
    inner = internal_candidates(tri)
    fringe = fringe_candidates(tri, alpha=alpha)
    n_t, n_f = inner.shape[0], fringe.shape[0]
    d = tri.d
    members = np.full((n_t + n_f, d + 1), -1, dtype=np.int64)
    members[:n_t] = index[tri.simplices]
    members[n_t:, :d] = index[tri.hull_facets]
    return CandidateSet(
        X=np.vstack([inner, fringe]),
        origin=np.r_[np.full(n_t, INTERNAL), np.full(n_f, FRINGE)],
        source=np.r_[np.arange(n_t), np.arange(n_f)],
        members=members,
    )


def targeted_subsample(cands, y, thr, n_max, rng):
    """Reduce to ``n_max`` candidates, first keeping one neighbour of each design point by closeness to ``g``.

    Design points are ranked by ``|y_i - g|``; walking the ranking (cycling if
    needed), one not-yet-kept candidate whose simplex/facet has the point as a
    vertex is kept at random, until ``ceil(0.1 n_max)`` are kept. The remaining
    slots are filled uniformly at random.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    N = len(cands)
    if N <= n_max:
        return cands
    y = np.asarray(y, dtype=float)
    quota = math.ceil(0.1 * n_max)
    incident = [[] for _ in range(y.size)]
    for c, mem in enumerate(cands.members):
        for v in mem:
            if v >= 0:
                incident[v].append(c)
    order = np.argsort(np.abs(y - thr.g), kind="stable")
    taken = np.zeros(N, dtype=bool)
    kept = []
    while len(kept) < quota:
        progress = False
        for i in order:
            avail = [c for c in incident[i] if not taken[c]]
            if avail:
                c = avail[rng.integers(len(avail))]
                taken[c] = True
                kept.append(c)
                progress = True
                if len(kept) >= quota:
                    break
        if not progress:
            break
    rest = np.flatnonzero(~taken)
    fill = rng.choice(rest, size=n_max - len(kept), replace=False)
    return cands.subset(np.r_[np.array(kept, dtype=np.int64), np.sort(fill)])
