"""Compact connected metric graphs: construction, metric queries, surgery.

Every edge is identified with the interval [0, length]; coordinate 0 sits at
the edge's ``src`` vertex and ``length`` at ``dst``.  Graphs are immutable:
surgery operations (splitting an edge at an interior point, attaching a
pendant edge) return new graphs.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import (
    DanglingEndpoint,
    Disconnected,
    NonPositiveLength,
    NotATree,
    NotDisconnecting,
    PointAtVertex,
    UnknownEdge,
    UnknownVertex,
)

_COORD_TOL = 1e-12


@dataclass(frozen=True)
class Edge:
    """An edge of a metric graph, oriented from ``src`` (coord 0) to ``dst``."""

    id: str
    src: str
    dst: str
    length: float


@dataclass(frozen=True)
class VertexCondition:
    """Vertex coupling: ``standard`` (Kirchhoff), ``delta`` with strength
    ``alpha``, or ``dirichlet``.  Standard is delta with alpha = 0."""

    kind: str = "standard"
    alpha: float = 0.0

    @classmethod
    def standard(cls) -> "VertexCondition":
        return cls("standard", 0.0)

    @classmethod
    def delta(cls, alpha: float) -> "VertexCondition":
        return cls("delta", float(alpha))

    @classmethod
    def dirichlet(cls) -> "VertexCondition":
        return cls("dirichlet", 0.0)

    @property
    def is_dirichlet(self) -> bool:
        return self.kind == "dirichlet"

    def coupling(self) -> float:
        """Quadratic-form coefficient alpha (0 for standard)."""
        return self.alpha if self.kind == "delta" else 0.0

    def to_dict(self) -> dict:
        if self.kind == "delta":
            return {"type": "delta", "alpha": self.alpha}
        return {"type": self.kind}

    @classmethod
    def from_dict(cls, data: Mapping) -> "VertexCondition":
        kind = data.get("type", "standard")
        if kind == "standard":
            return cls.standard()
        if kind == "delta":
            return cls.delta(float(data.get("alpha", 0.0)))
        if kind == "dirichlet":
            return cls.dirichlet()
        raise ValueError(f"unknown vertex condition type {kind!r}")


@dataclass(frozen=True)
class PointOnGraph:
    """A point given by an edge id and a coordinate s in [0, length]."""

    edge: str
    s: float


@dataclass(frozen=True)
class PathSegment:
    """One edge traversal inside a path.

    ``direction`` is +1 when the edge is walked src -> dst, -1 otherwise.
    ``s0``/``s1`` are edge coordinates of the segment ends in walking order,
    and ``t0``/``t1`` the corresponding arclength coordinates along the path.
    """

    edge: str
    direction: int
    s0: float
    s1: float
    t0: float
    t1: float

    @property
    def length(self) -> float:
        return self.t1 - self.t0

    def edge_coord(self, t: float) -> float:
        """Edge coordinate of the path point at arclength t."""
        frac = 0.0 if self.length == 0 else (t - self.t0) / self.length
        return self.s0 + (self.s1 - self.s0) * frac


@dataclass(frozen=True)
class Path:
    """A path through the graph: consecutive segments sharing vertices.

    Injective except that the first and last point may coincide (closed
    path).  Most paths used here are leaf-to-leaf paths on trees, which
    traverse whole edges.
    """

    segments: tuple[PathSegment, ...]

    @property
    def length(self) -> float:
        return self.segments[-1].t1 if self.segments else 0.0

    def point_at(self, t: float) -> PointOnGraph:
        """Point on the graph at arclength t along the path."""
        t = min(max(t, 0.0), self.length)
        for seg in self.segments:
            if t <= seg.t1 + _COORD_TOL:
                return PointOnGraph(seg.edge, seg.edge_coord(t))
        last = self.segments[-1]
        return PointOnGraph(last.edge, last.s1)


def _path_from_edge_walk(
    graph: "MetricGraph", walk: Sequence[tuple[str, int]],
    s_entry: float | None = None, s_exit: float | None = None,
) -> Path:
    """Build a Path from (edge id, direction) pairs with optional partial
    first/last edges."""
    segments = []
    t = 0.0
    n = len(walk)
    for i, (eid, direction) in enumerate(walk):
        e = graph.edge(eid)
        a, b = (0.0, e.length) if direction > 0 else (e.length, 0.0)
        if i == 0 and s_entry is not None:
            a = s_entry
        if i == n - 1 and s_exit is not None:
            b = s_exit
        seg_len = abs(b - a)
        segments.append(PathSegment(eid, direction, a, b, t, t + seg_len))
        t += seg_len
    return Path(tuple(segments))


@dataclass(frozen=True)
class SplitResult:
    graph: "MetricGraph"
    vertex: str
    edge_src_side: str
    edge_dst_side: str


@dataclass(frozen=True)
class PendantResult:
    graph: "MetricGraph"
    vertex: str
    edge: str


@dataclass(frozen=True)
class MetricGraph:
    """A compact connected metric graph with per-vertex coupling conditions."""

    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    conditions: Mapping[str, VertexCondition] = field(default_factory=dict)

    # -- construction -----------------------------------------------------

    def __post_init__(self):
        vset = set(self.vertices)
        if len(vset) != len(self.vertices):
            raise ValueError("duplicate vertex ids")
        eids = [e.id for e in self.edges]
        if len(set(eids)) != len(eids):
            raise ValueError("duplicate edge ids")
        for e in self.edges:
            if not (e.length > 0.0) or not (e.length < float("inf")):
                raise NonPositiveLength(f"edge {e.id!r} has length {e.length}")
            if e.src not in vset or e.dst not in vset:
                raise DanglingEndpoint(f"edge {e.id!r} references unknown vertex")
        for v in self.conditions:
            if v not in vset:
                raise UnknownVertex(f"condition given for unknown vertex {v!r}")
        adj: dict[str, list[tuple[Edge, str]]] = {v: [] for v in self.vertices}
        for e in self.edges:
            adj[e.src].append((e, e.dst))
            adj[e.dst].append((e, e.src))
        object.__setattr__(self, "_adj", adj)
        object.__setattr__(self, "_edge_map", {e.id: e for e in self.edges})
        if self.vertices and not self._is_connected():
            raise Disconnected("graph is not connected")
        object.__setattr__(self, "_vdist_cache", {})

    def _is_connected(self) -> bool:
        seen = {self.vertices[0]}
        stack = [self.vertices[0]]
        while stack:
            v = stack.pop()
            for _, u in self._adj[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return len(seen) == len(self.vertices)

    @classmethod
    def from_spec(cls, spec: Mapping) -> "MetricGraph":
        """Build and validate a graph from the JSON GraphSpec format."""
        vertices = tuple(str(v) for v in spec.get("vertices", []))
        edges = tuple(
            Edge(str(e["id"]), str(e["from"]), str(e["to"]), float(e["length"]))
            for e in spec.get("edges", [])
        )
        conditions = {
            str(v): VertexCondition.from_dict(c)
            for v, c in spec.get("conditions", {}).items()
        }
        return cls(vertices, edges, conditions)

    def to_spec(self) -> dict:
        """Canonical GraphSpec dict (all conditions explicit, sorted)."""
        return {
            "vertices": sorted(self.vertices),
            "edges": [
                {"id": e.id, "from": e.src, "to": e.dst, "length": e.length}
                for e in sorted(self.edges, key=lambda e: e.id)
            ],
            "conditions": {
                v: self.condition(v).to_dict() for v in sorted(self.vertices)
            },
        }

    # -- basic queries -----------------------------------------------------

    def edge(self, eid: str) -> Edge:
        try:
            return self._edge_map[eid]
        except KeyError:
            raise UnknownEdge(f"unknown edge {eid!r}") from None

    def has_vertex(self, v: str) -> bool:
        return v in self._adj

    def condition(self, v: str) -> VertexCondition:
        if v not in self._adj:
            raise UnknownVertex(f"unknown vertex {v!r}")
        return self.conditions.get(v, VertexCondition.standard())

    def degree(self, v: str) -> int:
        return len(self._adj[v])

    def incident(self, v: str) -> list[Edge]:
        return [e for e, _ in self._adj[v]]

    @property
    def total_length(self) -> float:
        return sum(e.length for e in self.edges)

    def leaves(self) -> list[str]:
        return [v for v in self.vertices if self.degree(v) == 1]

    def has_loops(self) -> bool:
        return any(e.src == e.dst for e in self.edges)

    def is_tree(self) -> bool:
        return (not self.has_loops()) and len(self.edges) == len(self.vertices) - 1

    def as_point(self, x) -> PointOnGraph:
        """Coerce a vertex id or PointOnGraph into a PointOnGraph."""
        if isinstance(x, PointOnGraph):
            e = self.edge(x.edge)
            if not (-_COORD_TOL <= x.s <= e.length + _COORD_TOL):
                raise ValueError(f"coordinate {x.s} outside edge {x.edge!r}")
            return x
        if x in self._adj:
            for e, _ in self._adj[x]:
                s = 0.0 if e.src == x else e.length
                return PointOnGraph(e.id, s)
        raise UnknownVertex(f"unknown vertex {x!r}")

    def vertex_at(self, p: PointOnGraph) -> str | None:
        """The vertex a point coincides with, or None if strictly interior."""
        e = self.edge(p.edge)
        if p.s <= _COORD_TOL * max(1.0, e.length):
            return e.src
        if p.s >= e.length - _COORD_TOL * max(1.0, e.length):
            return e.dst
        return None

    # -- metric -------------------------------------------------------------

    def vertex_distances(self, source: str) -> dict[str, float]:
        """Shortest-path distance from a vertex to all vertices (Dijkstra)."""
        cache = self._vdist_cache
        if source in cache:
            return cache[source]
        if source not in self._adj:
            raise UnknownVertex(f"unknown vertex {source!r}")
        dist = {source: 0.0}
        heap = [(0.0, source)]
        while heap:
            d, v = heapq.heappop(heap)
            if d > dist.get(v, float("inf")):
                continue
            for e, u in self._adj[v]:
                nd = d + e.length
                if nd < dist.get(u, float("inf")) - 1e-15:
                    dist[u] = nd
                    heapq.heappush(heap, (nd, u))
        cache[source] = dist
        return dist

    def _distance_without_edge(self, eid: str, a: str, b: str) -> float:
        """Shortest a-b distance not using the interior of edge ``eid``."""
        dist = {a: 0.0}
        heap = [(0.0, a)]
        while heap:
            d, v = heapq.heappop(heap)
            if d > dist.get(v, float("inf")):
                continue
            for e, u in self._adj[v]:
                if e.id == eid:
                    continue
                nd = d + e.length
                if nd < dist.get(u, float("inf")) - 1e-15:
                    dist[u] = nd
                    heapq.heappush(heap, (nd, u))
        return dist.get(b, float("inf"))

    def distance(self, x, y) -> float:
        """Shortest-path distance between two points (or vertices)."""
        px, py = self.as_point(x), self.as_point(y)
        ex, ey = self.edge(px.edge), self.edge(py.edge)
        best = float("inf")
        if px.edge == py.edge:
            best = abs(px.s - py.s)
            around = self._distance_without_edge(px.edge, ex.src, ex.dst)
            if around < float("inf"):
                best = min(best, px.s + around + (ey.length - py.s),
                           (ex.length - px.s) + around + py.s)
            return best
        dsrc = self.vertex_distances(ex.src)
        ddst = self.vertex_distances(ex.dst)
        for da, sa in ((dsrc, px.s), (ddst, ex.length - px.s)):
            for b, sb in ((ey.src, py.s), (ey.dst, ey.length - py.s)):
                d = da.get(b, float("inf"))
                best = min(best, sa + d + sb)
        return best

    def diameter(self) -> tuple[float, PointOnGraph, PointOnGraph]:
        """Metric diameter and a pair of points attaining it.

        All-pairs vertex distances plus, for each (ordered) edge pair, the
        exact interior maximum of the piecewise-affine distance function.
        """
        best = 0.0
        pair = None
        for e, f in itertools.combinations_with_replacement(self.edges, 2):
            if e.id == f.id:
                around = self._distance_without_edge(e.id, e.src, e.dst)
                val, xy = _same_edge_max(e.length, around)
            else:
                dsrc = self.vertex_distances(e.src)
                ddst = self.vertex_distances(e.dst)
                dmat = (
                    dsrc.get(f.src, float("inf")), dsrc.get(f.dst, float("inf")),
                    ddst.get(f.src, float("inf")), ddst.get(f.dst, float("inf")),
                )
                val, xy = _edge_pair_max(e.length, f.length, dmat)
            if val > best:
                best = val
                pair = (PointOnGraph(e.id, xy[0]), PointOnGraph(f.id, xy[1]))
        if pair is None:
            # single-vertex graph (no edges)
            p = PointOnGraph("", 0.0)
            return 0.0, p, p
        return best, pair[0], pair[1]

    # -- boundary and paths --------------------------------------------------

    def tree_path_vertices(self, a: str, b: str) -> list[str]:
        """Vertex sequence of the unique a-b path on a tree."""
        if not self.is_tree():
            raise NotATree("paths between vertices are unique only on trees")
        parent: dict[str, tuple[str, Edge] | None] = {a: None}
        stack = [a]
        while stack:
            v = stack.pop()
            if v == b:
                break
            for e, u in self._adj[v]:
                if u not in parent:
                    parent[u] = (v, e)
                    stack.append(u)
        if b not in parent:
            raise Disconnected(f"no path from {a!r} to {b!r}")
        out = [b]
        while parent[out[-1]] is not None:
            out.append(parent[out[-1]][0])
        return list(reversed(out))

    def tree_path(self, a: str, b: str) -> Path:
        """The unique a-b path on a tree, as a Path of whole edges."""
        verts = self.tree_path_vertices(a, b)
        walk = []
        for v, u in zip(verts, verts[1:]):
            e = self._edge_between(v, u)
            walk.append((e.id, +1 if e.src == v else -1))
        return _path_from_edge_walk(self, walk)

    def _edge_between(self, v: str, u: str) -> Edge:
        cands = [e for e, w in self._adj[v] if w == u]
        if not cands:
            raise UnknownEdge(f"no edge between {v!r} and {u!r}")
        return min(cands, key=lambda e: (e.length, e.id))

    def boundary_and_paths(self) -> tuple[list[str], list[Path]]:
        """Leaves, and for trees all leaf-to-leaf paths (unordered pairs)."""
        leaves = self.leaves()
        if not self.is_tree():
            raise NotATree("leaf paths are defined on trees only")
        paths = [self.tree_path(a, b) for a, b in itertools.combinations(leaves, 2)]
        return leaves, paths

    def leaf_paths_through(self, v: str) -> list[Path]:
        """All leaf-to-leaf tree paths passing through vertex v."""
        out = []
        for p in self.boundary_and_paths()[1]:
            verts = set()
            for seg in p.segments:
                e = self.edge(seg.edge)
                verts.update((e.src, e.dst))
            if v in verts:
                out.append(p)
        return out

    # -- surgery -------------------------------------------------------------

    def _fresh_vertex(self, stem: str = "w") -> str:
        i = 0
        while f"{stem}{i}" in self._adj:
            i += 1
        return f"{stem}{i}"

    def _fresh_edge(self, stem: str) -> str:
        if stem not in self._edge_map:
            return stem
        i = 0
        while f"{stem}{i}" in self._edge_map:
            i += 1
        return f"{stem}{i}"

    def insert_point_vertex(self, x: PointOnGraph) -> SplitResult:
        """Split an edge at a strictly interior point.

        The new degree-2 vertex carries the standard condition, so the
        operator is unchanged (dummy vertex).
        """
        e = self.edge(x.edge)
        tol = _COORD_TOL * max(1.0, e.length)
        if x.s <= tol or x.s >= e.length - tol:
            raise PointAtVertex(f"split point {x.s} is at a vertex of edge {e.id!r}")
        w = self._fresh_vertex()
        ea = self._fresh_edge(f"{e.id}a")
        eb = self._fresh_edge(f"{e.id}b")
        new_edges = tuple(
            f for f in self.edges if f.id != e.id
        ) + (Edge(ea, e.src, w, x.s), Edge(eb, w, e.dst, e.length - x.s))
        g = MetricGraph(self.vertices + (w,), new_edges, dict(self.conditions))
        return SplitResult(g, w, ea, eb)

    def attach_pendant_edge(self, v: str, eps: float) -> PendantResult:
        """Attach a pendant edge of length eps at vertex v (standard ends)."""
        if not (eps > 0.0):
            raise NonPositiveLength(f"pendant length must be positive, got {eps}")
        if v not in self._adj:
            raise UnknownVertex(f"unknown vertex {v!r}")
        w = self._fresh_vertex("p")
        eid = self._fresh_edge(f"pend_{v}")
        g = MetricGraph(
            self.vertices + (w,),
            self.edges + (Edge(eid, v, w, eps),),
            dict(self.conditions),
        )
        return PendantResult(g, w, eid)

    def components_after_removal(self, x0) -> list[dict]:
        """Connected components of the graph minus a point.

        Each component is reported as ``{"vertices": set, "edges": set,
        "partial": {edge_id: (s0, s1)}}`` where ``partial`` lists the halves
        of a split edge.  Components are ordered deterministically (by their
        smallest vertex id, half-edges attached to their side).  Raises
        NotDisconnecting when the point does not cut the graph.
        """
        p = self.as_point(x0)
        v_at = self.vertex_at(p)
        if v_at is not None:
            work = self
            cut_vertex = v_at
            halves: dict[str, tuple[str, float, float]] = {}
        else:
            split = self.insert_point_vertex(p)
            work = split.graph
            cut_vertex = split.vertex
            e = self.edge(p.edge)
            halves = {
                split.edge_src_side: (p.edge, 0.0, p.s),
                split.edge_dst_side: (p.edge, p.s, e.length),
            }
        if v_at is not None and any(wv == cut_vertex for _, wv in work._adj[cut_vertex]):
            raise NotDisconnecting("removal at a vertex carrying a loop is unsupported")
        comp_of: dict[str, int] = {}
        comps: list[dict] = []
        for v in work.vertices:
            if v == cut_vertex or v in comp_of:
                continue
            comp = {"vertices": set(), "edges": set(), "partial": {}}
            stack = [v]
            comp_of[v] = len(comps)
            comp["vertices"].add(v)
            while stack:
                u = stack.pop()
                for e, wv in work._adj[u]:
                    if e.id in halves:
                        orig, s0, s1 = halves[e.id]
                        comp["partial"][orig] = (s0, s1)
                    else:
                        comp["edges"].add(e.id)
                    if wv != cut_vertex and wv not in comp_of:
                        comp_of[wv] = len(comps)
                        comp["vertices"].add(wv)
                        stack.append(wv)
            comps.append(comp)
        if len(comps) < 2:
            raise NotDisconnecting("removing the point leaves the graph connected")
        comps.sort(key=lambda c: min(c["vertices"]) if c["vertices"] else "")
        return comps


# -- diameter helpers: exact max of min of affine route lengths ----------------


def _edge_pair_max(le: float, lf: float, d: tuple) -> tuple[float, tuple]:
    """Max over (x, y) in [0,le]x[0,lf] of the point-to-point distance
    min(x+d11+y, x+d12+lf-y, le-x+d21+y, le-x+d22+lf-y)."""
    d11, d12, d21, d22 = d

    def routes(x, y):
        return min(x + d11 + y, x + d12 + (lf - y),
                   (le - x) + d21 + y, (le - x) + d22 + (lf - y))

    # min of affine functions is concave: its max over the box is attained at
    # a corner, at a pairwise balance line hitting the boundary, or where two
    # balance lines cross.
    cands = {(0.0, 0.0), (0.0, lf), (le, 0.0), (le, lf)}
    # f1..f4 coefficients (a, b, c): a*x + b*y + c
    funcs = [
        (1.0, 1.0, d11), (1.0, -1.0, d12 + lf),
        (-1.0, 1.0, d21 + le), (-1.0, -1.0, d22 + le + lf),
    ]
    lines = []
    for (a1, b1, c1), (a2, b2, c2) in itertools.combinations(funcs, 2):
        lines.append((a1 - a2, b1 - b2, c2 - c1))  # (A, B, C): Ax + By = C
    for A, B, C in lines:
        for x in (0.0, le):
            if abs(B) > 1e-15:
                y = (C - A * x) / B
                if -1e-12 <= y <= lf + 1e-12:
                    cands.add((x, min(max(y, 0.0), lf)))
        for y in (0.0, lf):
            if abs(A) > 1e-15:
                x = (C - B * y) / A
                if -1e-12 <= x <= le + 1e-12:
                    cands.add((min(max(x, 0.0), le), y))
    for (A1, B1, C1), (A2, B2, C2) in itertools.combinations(lines, 2):
        det = A1 * B2 - A2 * B1
        if abs(det) > 1e-15:
            x = (C1 * B2 - C2 * B1) / det
            y = (A1 * C2 - A2 * C1) / det
            if -1e-12 <= x <= le + 1e-12 and -1e-12 <= y <= lf + 1e-12:
                cands.add((min(max(x, 0.0), le), min(max(y, 0.0), lf)))
    best, arg = -1.0, (0.0, 0.0)
    for x, y in cands:
        v = routes(x, y)
        if v > best:
            best, arg = v, (x, y)
    return best, arg


def _same_edge_max(le: float, around: float) -> tuple[float, tuple]:
    """Max over x <= y on one edge of min(y - x, x + around + le - y)."""
    if around == float("inf"):
        return le, (0.0, le)
    # balance: y - x = x + around + le - y  ->  y - x = (around + le) / 2
    gap = min(le, (around + le) / 2.0)
    return gap, (0.0, gap)


# -- convenience builders -------------------------------------------------------


def build_graph(spec: Mapping) -> MetricGraph:
    """Validated MetricGraph from a GraphSpec mapping (see from_spec)."""
    return MetricGraph.from_spec(spec)


def interval_graph(length: float = 1.0, left: str = "v0", right: str = "v1",
                   conditions: Mapping[str, VertexCondition] | None = None) -> MetricGraph:
    """A single edge: the interval [0, length]."""
    return MetricGraph(
        (left, right), (Edge("e0", left, right, float(length)),),
        dict(conditions or {}),
    )


def star_graph(lengths: Sequence[float], center: str = "v0",
               conditions: Mapping[str, VertexCondition] | None = None) -> MetricGraph:
    """A star with the given arm lengths; arm i is edge ``e{i+1}`` from the
    center to leaf ``v{i+1}``."""
    vertices = [center] + [f"v{i + 1}" for i in range(len(lengths))]
    edges = tuple(
        Edge(f"e{i + 1}", center, f"v{i + 1}", float(l))
        for i, l in enumerate(lengths)
    )
    return MetricGraph(tuple(vertices), edges, dict(conditions or {}))


def path_graph(lengths: Sequence[float],
               conditions: Mapping[str, VertexCondition] | None = None) -> MetricGraph:
    """A path graph with consecutive edge lengths."""
    vertices = tuple(f"v{i}" for i in range(len(lengths) + 1))
    edges = tuple(
        Edge(f"e{i + 1}", f"v{i}", f"v{i + 1}", float(l))
        for i, l in enumerate(lengths)
    )
    return MetricGraph(vertices, edges, dict(conditions or {}))
