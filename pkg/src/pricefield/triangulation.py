"""Constrained Delaunay triangulation with Ruppert-style refinement.

Self-contained mesher: incremental Bowyer-Watson insertion with exact
(filtered) predicates, Sloan edge flips for constraint recovery, midpoint
splitting of encroached boundary segments, and circumcenter insertion for
skinny or oversized interior triangles. Deterministic: single-threaded
with a fixed insertion order, so identical inputs give identical meshes.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import GeometryError, InputError, ResourceError
from .geometry import DomainPolygon

MIN_SPLIT_LEN = 1e-6  # constrained segments shorter than this are never split
DEFAULT_MIN_ANGLE = 25.0
MAX_VERTICES = 100000

# Shewchuk's static filter constants for double precision.
_CCW_ERR = 3.3306690738754716e-16
_ICC_ERR = 1.1102230246251577e-15


# ------------------------------------------------------------- predicates

def orient2d(ax, ay, bx, by, cx, cy) -> float:
    """Sign of the signed area of (a, b, c); exact fallback on filter
    failure, so the sign is always correct."""
    detleft = (ax - cx) * (by - cy)
    detright = (ay - cy) * (bx - cx)
    det = detleft - detright
    detsum = abs(detleft) + abs(detright)
    if abs(det) > _CCW_ERR * detsum:
        return det
    if det == 0.0 and detsum == 0.0:
        return 0.0
    return _orient2d_exact(ax, ay, bx, by, cx, cy)


def _orient2d_exact(ax, ay, bx, by, cx, cy) -> float:
    ax, ay, bx, by, cx, cy = (Fraction(v) for v in (ax, ay, bx, by, cx, cy))
    det = (ax - cx) * (by - cy) - (ay - cy) * (bx - cx)
    return float(1 if det > 0 else (-1 if det < 0 else 0))


def incircle(ax, ay, bx, by, cx, cy, dx, dy) -> float:
    """Positive iff d lies strictly inside the circumcircle of CCW
    triangle (a, b, c); exact fallback keeps the sign correct."""
    adx = ax - dx
    ady = ay - dy
    bdx = bx - dx
    bdy = by - dy
    cdx = cx - dx
    cdy = cy - dy
    bdxcdy = bdx * cdy
    cdxbdy = cdx * bdy
    alift = adx * adx + ady * ady
    cdxady = cdx * ady
    adxcdy = adx * cdy
    blift = bdx * bdx + bdy * bdy
    adxbdy = adx * bdy
    bdxady = bdx * ady
    clift = cdx * cdx + cdy * cdy
    det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady)
    permanent = (
        (abs(bdxcdy) + abs(cdxbdy)) * alift
        + (abs(cdxady) + abs(adxcdy)) * blift
        + (abs(adxbdy) + abs(bdxady)) * clift
    )
    if abs(det) > _ICC_ERR * permanent:
        return det
    return _incircle_exact(ax, ay, bx, by, cx, cy, dx, dy)


def _incircle_exact(ax, ay, bx, by, cx, cy, dx, dy) -> float:
    ax, ay, bx, by, cx, cy, dx, dy = (
        Fraction(v) for v in (ax, ay, bx, by, cx, cy, dx, dy)
    )
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    det = (
        (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
        + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady)
    )
    return float(1 if det > 0 else (-1 if det < 0 else 0))


def _circumcenter(pa, pb, pc):
    ax, ay = pa
    bx, by = pb
    cx, cy = pc
    d = 2.0 * ((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))
    if d == 0.0:
        raise GeometryError("degenerate triangle has no circumcenter")
    bl = (bx - ax) ** 2 + (by - ay) ** 2
    cl = (cx - ax) ** 2 + (cy - ay) ** 2
    ux = ax + (cl * (by - ay) - bl * (cy - ay)) / -d
    uy = ay + (bl * (cx - ax) - cl * (bx - ax)) / -d
    return (ux, uy)


# ------------------------------------------------------------------- mesh

@dataclass
class BarycentricLocation:
    """Containing triangle plus clamped barycentric coordinates."""

    triangle_index: int
    coords: tuple


@dataclass
class TriangleMesh:
    """Triangulated domain: vertex coordinates, CCW vertex-index triples,
    and a per-vertex domain-boundary flag."""

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_flags: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.boundary_flags = np.asarray(self.boundary_flags, dtype=bool)
        self._grid = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_points(self):
        return self.vertices[self.triangles]

    def signed_areas(self) -> np.ndarray:
        p = self.triangle_points()
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    def area(self) -> float:
        return float(self.signed_areas().sum())

    def centroids(self) -> np.ndarray:
        return self.triangle_points().mean(axis=1)

    def edge_lengths(self) -> np.ndarray:
        """(T, 3) edge lengths; column i is the edge opposite vertex i."""
        p = self.triangle_points()
        out = np.empty((len(self.triangles), 3))
        for i in range(3):
            a = p[:, (i + 1) % 3]
            b = p[:, (i + 2) % 3]
            out[:, i] = np.hypot(a[:, 0] - b[:, 0], a[:, 1] - b[:, 1])
        return out

    def min_angles_deg(self) -> np.ndarray:
        lens = self.edge_lengths()
        areas = np.abs(self.signed_areas())
        # smallest angle is opposite the shortest edge: sin A = 2*area*a/(a*b*c)
        a = lens.min(axis=1)
        prod = lens.prod(axis=1)
        s = np.clip(2.0 * areas * a / prod, -1.0, 1.0)
        return np.degrees(np.arcsin(s))

    def validate(self) -> None:
        K, T = self.n_vertices, self.n_triangles
        if K < 3 or T < 1:
            raise GeometryError("mesh needs >= 3 vertices and >= 1 triangle")
        if self.triangles.min() < 0 or self.triangles.max() >= K:
            raise GeometryError("triangle vertex index out of range")
        if (self.signed_areas() <= 0).any():
            raise GeometryError("mesh contains non-CCW or degenerate triangles")
        used = np.zeros(K, dtype=bool)
        used[self.triangles.ravel()] = True
        if not used.all():
            raise GeometryError("mesh has unreferenced vertices")
        if len(self.boundary_flags) != K:
            raise GeometryError("boundary flag length mismatch")

    def boundary_polygon(self) -> DomainPolygon:
        """Reconstruct the meshed domain from the boundary edges.

        Directed boundary edges inherit their triangle's orientation, so
        chained rings come out CCW around the domain and CW around holes
        with no extra orientation pass. Fails on a pinched boundary
        (a vertex shared by two rings) or a disconnected mesh.
        """
        count = {}
        for a, b, c in self.triangles:
            for u, v in ((a, b), (b, c), (c, a)):
                k = (u, v) if u < v else (v, u)
                count[k] = count.get(k, 0) + 1
        succ = {}
        for a, b, c in self.triangles:
            for u, v in ((a, b), (b, c), (c, a)):
                k = (u, v) if u < v else (v, u)
                if count[k] == 1:
                    if u in succ:
                        raise GeometryError("mesh boundary pinches at a vertex")
                    succ[int(u)] = int(v)
        rings = []
        seen = set()
        for start in sorted(succ):
            if start in seen:
                continue
            ring = [start]
            seen.add(start)
            v = succ[start]
            while v != start:
                ring.append(v)
                seen.add(v)
                v = succ[v]
            rings.append(np.asarray(self.vertices[ring], dtype=float))
        areas = []
        for r in rings:
            nxt = np.roll(r, -1, axis=0)
            areas.append(0.5 * float((r[:, 0] * nxt[:, 1] - r[:, 1] * nxt[:, 0]).sum()))
        outers = [i for i, a in enumerate(areas) if a > 0]
        if len(outers) != 1:
            raise GeometryError("mesh boundary has %d outer rings" % len(outers))
        outer = rings[outers[0]]
        holes = [rings[i] for i in range(len(rings)) if i != outers[0]]
        return DomainPolygon(outer=outer, holes=holes)

    # -------------------------------------------------- point location

    def _build_grid(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        span = np.maximum(hi - lo, 1e-12)
        ncell = max(1, min(512, int(math.sqrt(max(1, self.n_triangles)))))
        cell = span / ncell
        p = self.triangle_points()
        tlo = p.min(axis=1)
        thi = p.max(axis=1)
        ilo = np.clip(((tlo - lo) / cell).astype(int), 0, ncell - 1)
        ihi = np.clip(((thi - lo) / cell).astype(int), 0, ncell - 1)
        cells = {}
        for t in range(self.n_triangles):
            for gx in range(ilo[t, 0], ihi[t, 0] + 1):
                for gy in range(ilo[t, 1], ihi[t, 1] + 1):
                    cells.setdefault((gx, gy), []).append(t)
        self._grid = (lo, cell, ncell, cells)

    def _bary(self, t: int, x: float, y: float):
        a, b, c = self.triangles[t]
        ax, ay = self.vertices[a]
        bx, by = self.vertices[b]
        cx, cy = self.vertices[c]
        d = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay)
        l2 = ((x - ax) * (cy - ay) - (cx - ax) * (y - ay)) / d
        l3 = ((bx - ax) * (y - ay) - (x - ax) * (by - ay)) / d
        return 1.0 - l2 - l3, l2, l3

    def locate(self, p, tol: float = 1e-10):
        """Containing triangle for p, or None when outside.

        Candidates are tested in ascending triangle index, so points on
        shared edges resolve to the lowest-index triangle. Barycentric
        coordinates >= -tol count as inside and are clamped to [0, 1].
        """
        if self._grid is None:
            self._build_grid()
        lo, cell, ncell, cells = self._grid
        x, y = float(p[0]), float(p[1])
        # clamp so points on the bbox max edge still test their cell
        gx = min(ncell - 1, max(0, int((x - lo[0]) / cell[0])))
        gy = min(ncell - 1, max(0, int((y - lo[1]) / cell[1])))
        for t in cells.get((gx, gy), ()):
            l1, l2, l3 = self._bary(t, x, y)
            if l1 >= -tol and l2 >= -tol and l3 >= -tol:
                coords = tuple(min(1.0, max(0.0, v)) for v in (l1, l2, l3))
                return BarycentricLocation(int(t), coords)
        return None

    def locate_batch(self, points, tol: float = 1e-10):
        """Vectorized location of many points.

        Returns (tri_index, bary) where tri_index is -1 outside the mesh
        and bary rows are clamped coordinates. Triangles are scanned in
        ascending index and only unassigned points accept, preserving the
        lowest-index tie rule of :meth:`locate`.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(pts)
        tri_idx = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 3))
        if n == 0:
            return tri_idx, bary
        if self._grid is None:
            self._build_grid()
        lo, cell, ncell, cells = self._grid
        g = np.clip(((pts - lo) / cell), 0, ncell - 1).astype(int)
        buckets = {}
        for i in range(n):
            buckets.setdefault((g[i, 0], g[i, 1]), []).append(i)
        cand = {}
        for key, pidx in buckets.items():
            for t in cells.get(key, ()):
                cand.setdefault(t, []).extend(pidx)
        verts = self.vertices
        tris = self.triangles
        for t in sorted(cand):
            pidx = np.array(cand[t], dtype=np.int64)
            pidx = pidx[tri_idx[pidx] < 0]
            if pidx.size == 0:
                continue
            a, b, c = tris[t]
            ax, ay = verts[a]
            bx, by = verts[b]
            cx, cy = verts[c]
            d = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay)
            px = pts[pidx, 0] - ax
            py = pts[pidx, 1] - ay
            l2 = (px * (cy - ay) - (cx - ax) * py) / d
            l3 = ((bx - ax) * py - px * (by - ay)) / d
            l1 = 1.0 - l2 - l3
            hit = (l1 >= -tol) & (l2 >= -tol) & (l3 >= -tol)
            if hit.any():
                sel = pidx[hit]
                tri_idx[sel] = t
                bary[sel, 0] = np.clip(l1[hit], 0.0, 1.0)
                bary[sel, 1] = np.clip(l2[hit], 0.0, 1.0)
                bary[sel, 2] = np.clip(l3[hit], 0.0, 1.0)
        return tri_idx, bary

    # ------------------------------------------------------- persistence

    def save_text(self, path) -> None:
        """Write the ``K T`` header, K ``x y flag`` lines, then T
        0-based ``i j k`` lines."""
        with open(path, "w") as fh:
            fh.write("%d %d\n" % (self.n_vertices, self.n_triangles))
            for (x, y), bf in zip(self.vertices, self.boundary_flags):
                fh.write("%s %s %d\n" % (repr(float(x)), repr(float(y)), int(bf)))
            for i, j, k in self.triangles:
                fh.write("%d %d %d\n" % (i, j, k))

    @classmethod
    def load_text(cls, path) -> "TriangleMesh":
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise InputError("mesh file must start with a 'K T' header")
            K, T = int(header[0]), int(header[1])
            verts = np.empty((K, 2))
            flags = np.empty(K, dtype=bool)
            for i in range(K):
                parts = fh.readline().split()
                if len(parts) != 3:
                    raise InputError("bad vertex line %d in mesh file" % i)
                verts[i] = (float(parts[0]), float(parts[1]))
                flags[i] = bool(int(parts[2]))
            tris = np.empty((T, 3), dtype=np.int64)
            for t in range(T):
                parts = fh.readline().split()
                if len(parts) != 3:
                    raise InputError("bad triangle line %d in mesh file" % t)
                tris[t] = [int(v) for v in parts]
        mesh = cls(verts, tris, flags)
        mesh.validate()
        return mesh

    def to_text(self) -> str:
        lines = ["%d %d" % (self.n_vertices, self.n_triangles)]
        for (x, y), bf in zip(self.vertices, self.boundary_flags):
            lines.append("%s %s %d" % (repr(float(x)), repr(float(y)), int(bf)))
        for i, j, k in self.triangles:
            lines.append("%d %d %d" % (i, j, k))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TriangleMesh":
        lines = text.strip().splitlines()
        header = lines[0].split()
        K, T = int(header[0]), int(header[1])
        verts = np.empty((K, 2))
        flags = np.empty(K, dtype=bool)
        for i in range(K):
            parts = lines[1 + i].split()
            verts[i] = (float(parts[0]), float(parts[1]))
            flags[i] = bool(int(parts[2]))
        tris = np.empty((T, 3), dtype=np.int64)
        for t in range(T):
            tris[t] = [int(v) for v in lines[1 + K + t].split()]
        mesh = cls(verts, tris, flags)
        mesh.validate()
        return mesh


# ------------------------------------------------------------ triangulator

class _Triangulator:
    """Incremental CDT built around a global edge map.

    Triangles are (a, b, c) CCW index triples (None when deleted);
    adjacency is derived from ``edge_map[(min(u,v), max(u,v))] -> [tri
    ids]``, which keeps cavity carving and flips simple to get right.
    """

    def __init__(self, max_vertices=MAX_VERTICES):
        self.verts: list = []
        self.vert_index: dict = {}
        self.tris: list = []
        self.interior: list = []
        self.edge_map: dict = {}
        self.segments: set = set()
        self.super_ids: tuple = ()
        self.max_vertices = max_vertices
        self._last_tri = 0
        self._step_parity = 0

    # ----------------------------------------------------------- basics

    def add_vertex(self, p) -> int:
        key = (float(p[0]), float(p[1]))
        if key in self.vert_index:
            return self.vert_index[key]
        if len(self.verts) >= self.max_vertices:
            raise ResourceError(
                "mesh vertex budget exceeded (%d); loosen max_area or min_angle"
                % self.max_vertices
            )
        self.verts.append(key)
        vid = len(self.verts) - 1
        self.vert_index[key] = vid
        return vid

    def _edge_key(self, u, v):
        return (u, v) if u < v else (v, u)

    def create_tri(self, a, b, c, interior=True) -> int:
        tid = len(self.tris)
        self.tris.append((a, b, c))
        self.interior.append(interior)
        for u, v in ((a, b), (b, c), (c, a)):
            self.edge_map.setdefault(self._edge_key(u, v), []).append(tid)
        self._last_tri = tid
        return tid

    def delete_tri(self, tid) -> None:
        a, b, c = self.tris[tid]
        for u, v in ((a, b), (b, c), (c, a)):
            self.edge_map[self._edge_key(u, v)].remove(tid)
        self.tris[tid] = None

    def neighbor(self, tid, u, v):
        """Triangle on the other side of edge (u, v), or -1."""
        for t in self.edge_map.get(self._edge_key(u, v), ()):
            if t != tid:
                return t
        return -1

    def _orient_v(self, i, j, p):
        a = self.verts[i]
        b = self.verts[j]
        return orient2d(a[0], a[1], b[0], b[1], p[0], p[1])

    def _incircle_tri(self, tid, p):
        a, b, c = self.tris[tid]
        pa, pb, pc = self.verts[a], self.verts[b], self.verts[c]
        return incircle(pa[0], pa[1], pb[0], pb[1], pc[0], pc[1], p[0], p[1])

    # ------------------------------------------------------------- walk

    def _live_hint(self, hint):
        if 0 <= hint < len(self.tris) and self.tris[hint] is not None:
            return hint
        for t in range(len(self.tris) - 1, -1, -1):
            if self.tris[t] is not None:
                return t
        raise GeometryError("no live triangles")

    def walk(self, p, hint=None, stop_at_segment=False):
        """Walk to the triangle containing p.

        Returns (tid, kind, detail): kind is 'in', 'edge' (detail = the
        edge), 'vertex' (detail = vertex id), or, when stop_at_segment
        and a constrained edge blocks the path, 'segment' (detail = the
        segment key).
        """
        t = self._live_hint(self._last_tri if hint is None else hint)
        prev = -1
        for _ in range(4 * len(self.tris) + 64):
            a, b, c = self.tris[t]
            for vid in (a, b, c):
                if self.verts[vid] == (p[0], p[1]):
                    return t, "vertex", vid
            edges = ((a, b), (b, c), (c, a))
            ors = [self._orient_v(u, v, p) for (u, v) in edges]
            neg = [i for i, o in enumerate(ors) if o < 0]
            if not neg:
                zero = [i for i, o in enumerate(ors) if o == 0]
                if zero:
                    return t, "edge", edges[zero[0]]
                return t, "in", None
            if len(neg) > 1:
                self._step_parity ^= 1
                pick = [i for i in neg if self.neighbor(t, *edges[i]) != prev]
                neg = pick or neg
                i = neg[self._step_parity % len(neg)]
            else:
                i = neg[0]
            u, v = edges[i]
            if stop_at_segment and self._edge_key(u, v) in self.segments:
                return t, "segment", self._edge_key(u, v)
            nxt = self.neighbor(t, u, v)
            if nxt == -1:
                raise GeometryError("point walk escaped the triangulation")
            prev, t = t, nxt
        raise GeometryError("point walk failed to terminate")

    # -------------------------------------------------------- insertion

    def insert_point(self, p, hint=None, seeds=None):
        """Bowyer-Watson insertion respecting constrained edges.

        Returns (vertex id, new triangle ids); an exactly coincident
        existing vertex is returned with no new triangles.
        """
        if seeds is None:
            t, kind, detail = self.walk(p, hint)
            if kind == "vertex":
                return detail, []
            seeds = [t]
            if kind == "edge":
                u, v = detail
                if self._edge_key(u, v) in self.segments:
                    raise GeometryError(
                        "vertex falls exactly on a constrained segment"
                    )
                other = self.neighbor(t, u, v)
                if other != -1:
                    seeds.append(other)
        vid = self.add_vertex(p)

        cavity = []
        in_cavity = set()
        queue = deque(seeds)
        for s in seeds:
            in_cavity.add(s)
        while queue:
            t = queue.popleft()
            cavity.append(t)
            a, b, c = self.tris[t]
            for u, v in ((a, b), (b, c), (c, a)):
                if self._edge_key(u, v) in self.segments:
                    continue
                n = self.neighbor(t, u, v)
                if n == -1 or n in in_cavity:
                    continue
                if self._incircle_tri(n, p) > 0:
                    in_cavity.add(n)
                    queue.append(n)

        mixed = len({self.interior[t] for t in cavity}) > 1
        flags = {t: self.interior[t] for t in cavity}
        boundary = []  # directed edges (u, v) with the cavity on the left
        for t in cavity:
            a, b, c = self.tris[t]
            for u, v in ((a, b), (b, c), (c, a)):
                n = self.neighbor(t, u, v)
                if n == -1 or n not in in_cavity:
                    boundary.append((u, v, t))
        for t in cavity:
            self.delete_tri(t)

        succ = {u: (v, src) for (u, v, src) in boundary}
        if len(succ) != len(boundary):
            raise GeometryError("insertion cavity is not a simple polygon")
        new_tris = []
        start = boundary[0][0]
        u = start
        ring = []
        for _ in range(len(boundary)):
            v, src = succ[u]
            ring.append((u, v, src))
            u = v
        if u != start or len(ring) != len(boundary):
            raise GeometryError("insertion cavity boundary is not closed")
        for u, v, src in ring:
            if self._orient_v(u, v, p) <= 0:
                raise GeometryError("insertion produced a degenerate triangle")
            flag = flags[src] if not mixed else None
            new_tris.append((self.create_tri(vid, u, v, interior=True), flag))
        if mixed:
            # cavity straddles a just-unconstrained split segment; flags
            # are recovered per side of the old segment by the caller
            out = [t for t, _ in new_tris]
        else:
            flag = flags[cavity[0]]
            for t, _ in new_tris:
                self.interior[t] = flag
            out = [t for t, _ in new_tris]
        return vid, out

    # ------------------------------------------------------- segments

    def edge_exists(self, u, v) -> bool:
        return bool(self.edge_map.get(self._edge_key(u, v)))

    def _between(self, a, b, v) -> bool:
        """v strictly between a and b along their common line."""
        pa, pb, pv = self.verts[a], self.verts[b], self.verts[v]
        dot = (pv[0] - pa[0]) * (pb[0] - pa[0]) + (pv[1] - pa[1]) * (pb[1] - pa[1])
        ll = (pb[0] - pa[0]) ** 2 + (pb[1] - pa[1]) ** 2
        return 0 < dot < ll

    def insert_segment(self, a, b) -> None:
        """Force edge (a, b) into the triangulation and mark it
        constrained, splitting at any vertex lying exactly on it."""
        if a == b:
            raise GeometryError("zero-length constraint segment")
        if self.edge_exists(a, b):
            self.segments.add(self._edge_key(a, b))
            return
        pa, pb = self.verts[a], self.verts[b]

        # find the triangle at a crossed by (a -> b)
        crossings = deque()
        t_start = None
        for tid, tri in enumerate(self.tris):
            if tri is None or a not in tri:
                continue
            i = tri.index(a)
            p, q = tri[(i + 1) % 3], tri[(i + 2) % 3]
            s1 = orient2d(pa[0], pa[1], pb[0], pb[1], *self.verts[p])
            s2 = orient2d(pa[0], pa[1], pb[0], pb[1], *self.verts[q])
            if s1 == 0 and self._between(a, b, p):
                self.insert_segment(a, p)
                self.insert_segment(p, b)
                return
            if s2 == 0 and self._between(a, b, q):
                self.insert_segment(a, q)
                self.insert_segment(q, b)
                return
            if s1 > 0 and s2 < 0:
                # b must lie on the far side of edge (p, q): the CCW
                # triangle keeps a strictly on the left of (p, q)
                sb = orient2d(
                    self.verts[p][0],
                    self.verts[p][1],
                    self.verts[q][0],
                    self.verts[q][1],
                    pb[0],
                    pb[1],
                )
                if sb <= 0:
                    t_start = (tid, p, q)
                    break
        if t_start is None:
            raise GeometryError("constraint recovery failed to start")

        tid, p, q = t_start
        crossings.append((p, q))
        cur = self.neighbor(tid, p, q)
        guard = 0
        while True:
            guard += 1
            if guard > 4 * len(self.tris) + 64:
                raise GeometryError("constraint pipe walk failed")
            if cur == -1:
                raise GeometryError("constraint pipe left the triangulation")
            tri = self.tris[cur]
            r = next(v for v in tri if v != p and v != q)
            if r == b:
                break
            s = orient2d(pa[0], pa[1], pb[0], pb[1], *self.verts[r])
            if s == 0 and self._between(a, b, r):
                self.insert_segment(a, r)
                self.insert_segment(r, b)
                return
            if s > 0:
                nxt_edge = (r, q)
                p = r
            else:
                nxt_edge = (p, r)
                q = r
            crossings.append(nxt_edge)
            cur = self.neighbor(cur, *nxt_edge)

        # Sloan flip loop
        guard = 0
        limit = 8 * (len(crossings) + 4) ** 2 + 256
        while crossings:
            guard += 1
            if guard > limit:
                raise GeometryError("constraint recovery did not converge")
            u, v = crossings.popleft()
            pair = self.edge_map.get(self._edge_key(u, v), ())
            if len(pair) != 2:
                continue  # edge already flipped away
            if self._edge_key(u, v) in self.segments:
                raise GeometryError("constraint crosses an existing constrained edge")
            t1, t2 = pair
            x = next(w for w in self.tris[t1] if w not in (u, v))
            y = next(w for w in self.tris[t2] if w not in (u, v))
            px, py_, pu, pv = self.verts[x], self.verts[y], self.verts[u], self.verts[v]
            # flip validity: quad (u, x, v, y) strictly convex
            if (
                orient2d(px[0], px[1], py_[0], py_[1], pu[0], pu[1])
                * orient2d(px[0], px[1], py_[0], py_[1], pv[0], pv[1])
                < 0
                and orient2d(pu[0], pu[1], pv[0], pv[1], px[0], px[1])
                * orient2d(pu[0], pu[1], pv[0], pv[1], py_[0], py_[1])
                < 0
            ):
                self._flip(t1, t2, u, v, x, y)
                # does the new edge still cross segment (a, b)?
                sx = orient2d(pa[0], pa[1], pb[0], pb[1], px[0], px[1])
                sy = orient2d(pa[0], pa[1], pb[0], pb[1], py_[0], py_[1])
                if sx * sy < 0 and x != a and x != b and y != a and y != b:
                    tx = orient2d(px[0], px[1], py_[0], py_[1], pa[0], pa[1])
                    ty = orient2d(px[0], px[1], py_[0], py_[1], pb[0], pb[1])
                    if tx * ty < 0:
                        crossings.append((x, y))
            else:
                crossings.append((u, v))
        if not self.edge_exists(a, b):
            raise GeometryError("constraint recovery finished without the edge")
        self.segments.add(self._edge_key(a, b))

    def _flip(self, t1, t2, u, v, x, y) -> None:
        """Replace triangles sharing (u, v) by the (x, y) diagonal.

        Only runs during constraint recovery, before interior
        classification, so the flags set here are provisional.
        """
        f = self.interior[t1] and self.interior[t2]
        self.delete_tri(t1)
        self.delete_tri(t2)
        if self._orient_v(x, y, self.verts[u]) > 0:
            ta = self.create_tri(x, y, u)
            tb = self.create_tri(y, x, v)
        else:
            ta = self.create_tri(y, x, u)
            tb = self.create_tri(x, y, v)
        self.interior[ta] = f
        self.interior[tb] = f

    # ----------------------------------------------------- construction

    def build(self, domain: DomainPolygon) -> None:
        rings = domain.all_rings()
        allv = np.vstack(rings)
        lo = allv.min(axis=0)
        hi = allv.max(axis=0)
        cx, cy = (lo + hi) / 2.0
        s = max(hi[0] - lo[0], hi[1] - lo[1], 1e-6)
        sa = self.add_vertex((cx - 40.0 * s, cy - 20.0 * s))
        sb = self.add_vertex((cx + 40.0 * s, cy - 20.0 * s))
        sc = self.add_vertex((cx, cy + 40.0 * s))
        self.super_ids = (sa, sb, sc)
        self.create_tri(sa, sb, sc, interior=False)

        ring_ids = []
        for ring in rings:
            ids = []
            for p in ring:
                vid, _ = self.insert_point((float(p[0]), float(p[1])))
                ids.append(vid)
            ring_ids.append(ids)
        for ids in ring_ids:
            m = len(ids)
            for i in range(m):
                u, v = ids[i], ids[(i + 1) % m]
                if u != v:
                    self.insert_segment(u, v)
        self._classify(domain)

    def _classify(self, domain: DomainPolygon) -> None:
        """Flood components across non-constrained edges; exterior when
        the component touches a super vertex, else by centroid test."""
        live = [t for t, tri in enumerate(self.tris) if tri is not None]
        seen = set()
        for t0 in live:
            if t0 in seen:
                continue
            comp = []
            stack = [t0]
            seen.add(t0)
            touches_super = False
            while stack:
                t = stack.pop()
                comp.append(t)
                a, b, c = self.tris[t]
                if any(v in self.super_ids for v in (a, b, c)):
                    touches_super = True
                for u, v in ((a, b), (b, c), (c, a)):
                    if self._edge_key(u, v) in self.segments:
                        continue
                    n = self.neighbor(t, u, v)
                    if n != -1 and n not in seen:
                        seen.add(n)
                        stack.append(n)
            if touches_super:
                flag = False
            else:
                rep = min(comp)
                a, b, c = self.tris[rep]
                cxy = np.mean([self.verts[a], self.verts[b], self.verts[c]], axis=0)
                flag = bool(domain.contains(cxy[None, :])[0])
            for t in comp:
                self.interior[t] = flag

    # ------------------------------------------------------- refinement

    def _seg_arrays(self):
        segs = sorted(self.segments)
        arr = np.array(
            [[*self.verts[u], *self.verts[v]] for (u, v) in segs], dtype=float
        )
        return segs, arr

    def _encroached_by_point(self, p, segs, arr, exclude=()):
        """Segments whose diametral circle strictly contains p."""
        if len(segs) == 0:
            return []
        dax = arr[:, 0] - p[0]
        day = arr[:, 1] - p[1]
        dbx = arr[:, 2] - p[0]
        dby = arr[:, 3] - p[1]
        dots = dax * dbx + day * dby
        out = []
        for i in np.where(dots < 0)[0]:
            s = segs[i]
            if s not in exclude and p not in (self.verts[s[0]], self.verts[s[1]]):
                out.append(s)
        return out

    def _seg_encroached(self, seg) -> bool:
        u, v = seg
        pu, pv = self.verts[u], self.verts[v]
        for tid in self.edge_map.get(seg, ()):
            w = next(x for x in self.tris[tid] if x not in (u, v))
            if w in self.super_ids:
                continue
            pw = self.verts[w]
            if (pu[0] - pw[0]) * (pv[0] - pw[0]) + (pu[1] - pw[1]) * (pv[1] - pw[1]) < 0:
                return True
        return False

    def _split_segment(self, seg):
        """Insert the segment midpoint; returns (new vertex, new tris,
        new subsegments) or None when the segment is too short to split."""
        u, v = seg
        pu, pv = self.verts[u], self.verts[v]
        if math.hypot(pv[0] - pu[0], pv[1] - pu[1]) < 2.0 * MIN_SPLIT_LEN:
            return None
        pair = list(self.edge_map.get(seg, ()))
        if len(pair) != 2:
            return None
        # interior flag per side of the segment line, read off the apexes
        # of the two old triangles before they are deleted
        side_flags = {}
        for tid in pair:
            w = next(x for x in self.tris[tid] if x not in (u, v))
            pw = self.verts[w]
            s = orient2d(pu[0], pu[1], pv[0], pv[1], pw[0], pw[1])
            if s != 0:
                side_flags[s > 0] = self.interior[tid]
        mid = ((pu[0] + pv[0]) / 2.0, (pu[1] + pv[1]) / 2.0)
        self.segments.discard(seg)
        vid, new_tris = self.insert_point(mid, seeds=pair)
        s1 = self._edge_key(u, vid)
        s2 = self._edge_key(vid, v)
        self.segments.add(s1)
        self.segments.add(s2)
        # the cavity straddles the old segment, but flags are constant on
        # each side (it cannot cross any other constrained edge)
        for t in new_tris:
            a, b, c = self.tris[t]
            cen = np.mean([self.verts[a], self.verts[b], self.verts[c]], axis=0)
            s = orient2d(pu[0], pu[1], pv[0], pv[1], cen[0], cen[1])
            if (s > 0) in side_flags:
                self.interior[t] = side_flags[s > 0]
        return vid, new_tris, (s1, s2)

    def refine(self, max_area, min_angle_deg, domain_area=None) -> None:
        """Ruppert-style refinement loop: split encroached segments
        first, then fix skinny or oversized interior triangles by
        circumcenter insertion (diverted to segment splits whenever the
        center would encroach)."""
        seg_queue = deque(s for s in sorted(self.segments) if self._seg_encroached(s))
        tri_queue = deque(
            t for t, tri in enumerate(self.tris) if tri is not None and self.interior[t]
        )
        queued = set(seg_queue)
        unsplittable = set()  # below the split length floor; left as is
        # segments a prospective circumcenter encroached on: these must be
        # split even though no existing vertex lies in their diametral circle
        force = set()
        min_angle_rad = math.radians(min_angle_deg)

        def tri_bad(t):
            a, b, c = self.tris[t]
            pa, pb, pc = (np.asarray(self.verts[i]) for i in (a, b, c))
            area = 0.5 * abs(
                (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1])
            )
            if max_area is not None and area > max_area:
                return True
            if min_angle_deg <= 0:
                return False
            la = np.linalg.norm(pb - pc)
            lb = np.linalg.norm(pa - pc)
            lc = np.linalg.norm(pa - pb)
            lens = sorted(((la, 0), (lb, 1), (lc, 2)))
            smin = 2.0 * area * lens[0][0] / (la * lb * lc)
            if math.asin(min(1.0, smin)) >= min_angle_rad:
                return False
            # exemption: the two edges meeting at the sharpest corner are
            # both constrained (input angle cannot be improved)
            vsmall = (a, b, c)[lens[0][1]]
            others = [v for v in (a, b, c) if v != vsmall]
            e1 = self._edge_key(vsmall, others[0])
            e2 = self._edge_key(vsmall, others[1])
            if e1 in self.segments and e2 in self.segments:
                return False
            return True

        guard = 0
        while seg_queue or tri_queue:
            guard += 1
            if guard > 40 * self.max_vertices:
                raise ResourceError("refinement failed to terminate")
            if seg_queue:
                seg = seg_queue.popleft()
                queued.discard(seg)
                forced = seg in force
                force.discard(seg)
                if seg not in self.segments or seg in unsplittable:
                    continue
                if not forced and not self._seg_encroached(seg):
                    continue
                res = self._split_segment(seg)
                if res is None:
                    unsplittable.add(seg)
                    continue
                vid, new_tris, subsegs = res
                for s in subsegs:
                    if s not in queued and self._seg_encroached(s):
                        seg_queue.append(s)
                        queued.add(s)
                segs, arr = self._seg_arrays()
                for s in self._encroached_by_point(self.verts[vid], segs, arr):
                    if s not in queued:
                        seg_queue.append(s)
                        queued.add(s)
                for t in new_tris:
                    if self.tris[t] is not None and self.interior[t]:
                        tri_queue.append(t)
                continue

            t = tri_queue.popleft()
            if self.tris[t] is None or not self.interior[t]:
                continue
            if not tri_bad(t):
                continue
            a, b, c = self.tris[t]
            try:
                cen = _circumcenter(self.verts[a], self.verts[b], self.verts[c])
            except GeometryError:
                continue
            segs, arr = self._seg_arrays()
            hit = self._encroached_by_point(cen, segs, arr)
            if hit:
                pending = [
                    s for s in hit if s in self.segments and s not in unsplittable
                ]
                for s in pending:
                    force.add(s)
                    if s not in queued:
                        seg_queue.append(s)
                        queued.add(s)
                if pending:
                    tri_queue.append(t)
                continue
            tid, kind, detail = self.walk(cen, hint=t, stop_at_segment=True)
            if kind == "segment":
                if detail in self.segments and detail not in unsplittable:
                    force.add(detail)
                    if detail not in queued:
                        seg_queue.append(detail)
                        queued.add(detail)
                    tri_queue.append(t)
                continue
            if kind == "vertex":
                continue  # circumcenter coincides with an existing vertex
            if not self.interior[tid]:
                continue  # center fell outside the domain; leave the triangle
            seeds = [tid]
            if kind == "edge":
                other = self.neighbor(tid, *detail)
                if other != -1:
                    seeds.append(other)
            vid, new_tris = self.insert_point(cen, seeds=seeds)
            for nt in new_tris:
                if self.tris[nt] is not None and self.interior[nt]:
                    tri_queue.append(nt)

    # -------------------------------------------------------- extraction

    def extract(self) -> TriangleMesh:
        live = [
            t
            for t, tri in enumerate(self.tris)
            if tri is not None and self.interior[t]
        ]
        if not live:
            raise GeometryError("no interior triangles after triangulation")
        used = sorted({v for t in live for v in self.tris[t]})
        remap = {old: new for new, old in enumerate(used)}
        verts = np.array([self.verts[v] for v in used], dtype=float)
        tris = np.array(
            [[remap[v] for v in self.tris[t]] for t in live], dtype=np.int64
        )
        on_boundary = set()
        for (u, v) in self.segments:
            on_boundary.add(u)
            on_boundary.add(v)
        flags = np.array([v in on_boundary for v in used], dtype=bool)
        mesh = TriangleMesh(verts, tris, flags)
        mesh.validate()
        return mesh


# ------------------------------------------------------------- public API

def triangulate(
    domain: DomainPolygon,
    max_area: float,
    min_angle: float = DEFAULT_MIN_ANGLE,
    max_vertices: int = MAX_VERTICES,
) -> TriangleMesh:
    """Mesh a polygonal domain.

    Constrained Delaunay triangulation of the domain rings followed by
    Ruppert-style refinement until every interior triangle has area <=
    max_area and minimum angle >= min_angle. Skinny triangles forced by
    small input angles between constrained boundary segments are left in
    place and counted in ``mesh.info['exempt_skinny']``; constrained
    segments shorter than 1e-6 m are never split.

    Parameters
    ----------
    domain : DomainPolygon
    max_area : float
        Upper bound on triangle area (m^2).
    min_angle : float
        Lower bound on triangle angles, degrees; must be <= 33 for the
        refinement termination guarantee.
    max_vertices : int
        Hard vertex budget; exceeding it raises ResourceError.
    """
    if max_area is None or not (max_area > 0):
        raise InputError("max_area must be positive")
    if min_angle < 0 or min_angle > 33.0:
        raise InputError("min_angle must be in [0, 33] degrees")
    domain.validate()
    tr = _Triangulator(max_vertices=max_vertices)
    tr.build(domain)
    tr.refine(max_area, min_angle)
    mesh = tr.extract()

    angles = mesh.min_angles_deg()
    exempt = int((angles < min_angle - 1e-9).sum()) if min_angle > 0 else 0
    mesh.info["exempt_skinny"] = exempt
    mesh.info["min_angle"] = float(angles.min())
    mesh.info["max_area"] = float(np.abs(mesh.signed_areas()).max())
    return mesh


def max_area_for_vertex_target(domain_area: float, target_vertices: int) -> float:
    """Area bound that lands the refined mesh near a vertex-count target
    (approximate: triangle count ~ 2x vertices, mean area ~ half the
    bound)."""
    if target_vertices < 4:
        target_vertices = 4
    return domain_area / float(target_vertices)
