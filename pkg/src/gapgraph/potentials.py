"""Per-edge piecewise-linear potentials, potential classes, perturbations.

A potential assigns to each edge a piecewise-linear profile with finitely
many pieces; interior breakpoints may carry jumps (left/right values), so
step potentials are included.  Evaluation is right-continuous at jumps.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import (
    DegenerateRange,
    MeshMisaligned,
    NotATree,
    NotInClass,
)
from .graphs import MetricGraph, Path, PointOnGraph, SplitResult

_TOL = 1e-12


def _merge_knots(length: float, knots: Iterable[float]) -> list[float]:
    """Sorted knots in [0, length] with endpoints forced and near-duplicates
    (within 1e-12 * scale) collapsed."""
    scale = max(1.0, length)
    pts = sorted({0.0, float(length)} | {float(k) for k in knots
                                         if -_TOL * scale < k < length + _TOL * scale})
    out = [0.0]
    for p in pts[1:]:
        if p - out[-1] > _TOL * scale:
            out.append(min(p, length))
    out[-1] = float(length)
    return out


@dataclass(frozen=True)
class EdgeProfile:
    """Piecewise-linear function on [0, length] with possible jumps.

    ``breaks`` are 0 = b0 < ... < bk = length; piece i is the straight line
    from (b[i], outgoing[i]) to (b[i+1], incoming[i+1]).  ``incoming[j]`` is
    the left limit at b[j], ``outgoing[j]`` the right limit; they differ only
    at jump breakpoints.
    """

    breaks: tuple[float, ...]
    incoming: tuple[float, ...]
    outgoing: tuple[float, ...]

    def __post_init__(self):
        k = len(self.breaks)
        if k < 2 or len(self.incoming) != k or len(self.outgoing) != k:
            raise ValueError("profile arrays must share length >= 2")
        for a, b in zip(self.breaks, self.breaks[1:]):
            if not b > a:
                raise ValueError("breakpoints must increase strictly")

    # -- constructors ------------------------------------------------------

    @classmethod
    def const(cls, length: float, value: float = 0.0) -> "EdgeProfile":
        return cls((0.0, float(length)), (value, value), (value, value))

    @classmethod
    def linear(cls, length: float, v0: float, v1: float) -> "EdgeProfile":
        return cls((0.0, float(length)), (v0, v1), (v0, v1))

    @classmethod
    def continuous(cls, breaks: Sequence[float], values: Sequence[float]) -> "EdgeProfile":
        b = tuple(float(x) for x in breaks)
        v = tuple(float(x) for x in values)
        if len(b) != len(v):
            raise ValueError("breaks and values must have equal length")
        return cls(b, v, v)

    @classmethod
    def step(cls, length: float, cuts: Sequence[float], levels: Sequence[float]) -> "EdgeProfile":
        """Piecewise-constant profile: levels[i] on (cuts[i-1], cuts[i])."""
        if len(levels) != len(cuts) + 1:
            raise ValueError("need len(levels) == len(cuts) + 1")
        knots = _merge_knots(length, cuts)
        # re-derive levels per retained piece (duplicated cuts may collapse)
        lv = []
        for i in range(len(knots) - 1):
            mid = 0.5 * (knots[i] + knots[i + 1])
            j = 0
            for c in cuts:
                if c <= mid:
                    j += 1
            lv.append(float(levels[j]))
        inc, out = [lv[0]], [lv[0]]
        for i in range(1, len(knots) - 1):
            inc.append(lv[i - 1])
            out.append(lv[i])
        inc.append(lv[-1])
        out.append(lv[-1])
        return cls(tuple(knots), tuple(inc), tuple(out))

    # -- basic queries -------------------------------------------------------

    @property
    def length(self) -> float:
        return self.breaks[-1]

    def piece_count(self) -> int:
        return len(self.breaks) - 1

    def _piece_index(self, s: float) -> int:
        """Index of the piece whose half-open interval [b_i, b_{i+1}) holds s."""
        if s >= self.breaks[-1]:
            return len(self.breaks) - 2
        lo, hi = 0, len(self.breaks) - 2
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.breaks[mid] <= s:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def eval(self, s: float) -> float:
        """Value at s; the right limit at interior jumps, left limit at the end."""
        s = min(max(s, 0.0), self.length)
        if s >= self.length:
            return self.incoming[-1]
        i = self._piece_index(s)
        a, b = self.breaks[i], self.breaks[i + 1]
        va, vb = self.outgoing[i], self.incoming[i + 1]
        return va + (vb - va) * (s - a) / (b - a)

    def eval_left(self, s: float) -> float:
        """Left limit at s (equals eval away from jump breakpoints)."""
        s = min(max(s, 0.0), self.length)
        if s <= 0.0:
            return self.outgoing[0]
        scale = max(1.0, self.length)
        i = self._piece_index(min(s - _TOL * scale, self.length - _TOL * scale))
        a, b = self.breaks[i], self.breaks[i + 1]
        va, vb = self.outgoing[i], self.incoming[i + 1]
        return va + (vb - va) * (s - a) / (b - a)

    def values_within(self, a: float, b: float) -> tuple[float, float]:
        """(value at a+, value at b-) when [a, b] lies inside one piece."""
        scale = max(1.0, self.length)
        i = self._piece_index(min(a + _TOL * scale, self.length - _TOL * scale))
        pa, pb = self.breaks[i], self.breaks[i + 1]
        if a < pa - _TOL * scale or b > pb + _TOL * scale:
            raise MeshMisaligned(
                f"interval [{a}, {b}] crosses the breakpoint grid {self.breaks}")
        va, vb = self.outgoing[i], self.incoming[i + 1]
        slope = (vb - va) / (pb - pa)
        return va + slope * (a - pa), va + slope * (b - pa)

    def piece_overlaps(self, a: float, b: float):
        """Yield (c0, c1, value at c0+, value at c1-) for every nonempty
        intersection of [a, b] with a linear piece."""
        scale = max(1.0, self.length)
        a = max(a, 0.0)
        b = min(b, self.length)
        for i in range(len(self.breaks) - 1):
            pa, pb = self.breaks[i], self.breaks[i + 1]
            c0, c1 = max(a, pa), min(b, pb)
            if c1 - c0 <= _TOL * scale:
                continue
            va, vb = self.outgoing[i], self.incoming[i + 1]
            slope = (vb - va) / (pb - pa)
            yield (c0, c1, va + slope * (c0 - pa), va + slope * (c1 - pa))

    def min_max(self) -> tuple[float, float]:
        vals = self.incoming + self.outgoing
        return min(vals), max(vals)

    def sup_norm(self) -> float:
        lo, hi = self.min_max()
        return max(abs(lo), abs(hi))

    def is_continuous(self, tol: float = 1e-12) -> bool:
        return all(abs(i - o) <= tol for i, o in zip(self.incoming, self.outgoing))

    def jump_points(self, tol: float) -> list[tuple[float, float, float]]:
        """Interior breakpoints with |right - left| > tol, as (s, left, right)."""
        out = []
        for j in range(1, len(self.breaks) - 1):
            if abs(self.outgoing[j] - self.incoming[j]) > tol:
                out.append((self.breaks[j], self.incoming[j], self.outgoing[j]))
        return out

    # -- transforms ------------------------------------------------------------

    def map_values(self, f) -> "EdgeProfile":
        return EdgeProfile(self.breaks,
                           tuple(f(v) for v in self.incoming),
                           tuple(f(v) for v in self.outgoing))

    def scale(self, c: float) -> "EdgeProfile":
        return self.map_values(lambda v: c * v)

    def shift(self, c: float) -> "EdgeProfile":
        return self.map_values(lambda v: v + c)

    def reverse(self) -> "EdgeProfile":
        L = self.length
        rb = tuple(L - b for b in reversed(self.breaks))
        return EdgeProfile(rb, tuple(reversed(self.outgoing)),
                           tuple(reversed(self.incoming)))

    def restrict(self, a: float, b: float) -> "EdgeProfile":
        """The profile on [a, b], re-parameterized to [0, b - a]."""
        scale = max(1.0, self.length)
        if b - a <= _TOL * scale:
            v = self.eval(a)
            return EdgeProfile.const(max(b - a, _TOL), v)
        inner = [s for s in self.breaks if a + _TOL * scale < s < b - _TOL * scale]
        knots = [a] + inner + [b]
        inc, out = [], []
        for j, s in enumerate(knots):
            if j == 0:
                v = self.eval(a)  # right limit
                inc.append(v)
                out.append(v)
            elif j == len(knots) - 1:
                i = self._piece_index(min(s - _TOL * scale, self.length - _TOL * scale))
                pa, pb = self.breaks[i], self.breaks[i + 1]
                va, vb = self.outgoing[i], self.incoming[i + 1]
                v = va + (vb - va) * (s - pa) / (pb - pa)  # left limit
                inc.append(v)
                out.append(v)
            else:
                idx = min(range(len(self.breaks)), key=lambda t: abs(self.breaks[t] - s))
                inc.append(self.incoming[idx])
                out.append(self.outgoing[idx])
        return EdgeProfile(tuple(k - a for k in knots), tuple(inc), tuple(out))

    def split(self, s: float) -> tuple["EdgeProfile", "EdgeProfile"]:
        return self.restrict(0.0, s), self.restrict(s, self.length)

    def concat(self, other: "EdgeProfile") -> "EdgeProfile":
        """Profiles glued end to start (jump allowed at the junction)."""
        knots = list(self.breaks) + [self.length + b for b in other.breaks[1:]]
        inc = list(self.incoming) + list(other.incoming[1:])
        out = list(self.outgoing[:-1]) + list(other.outgoing)
        return EdgeProfile(tuple(knots), tuple(inc), tuple(out))

    def combine(self, other: "EdgeProfile", f) -> "EdgeProfile":
        """Pointwise combination f(self, other) on the merged breakpoint grid."""
        if abs(self.length - other.length) > _TOL * max(1.0, self.length):
            raise ValueError("profiles live on intervals of different length")
        knots = _merge_knots(self.length, set(self.breaks) | set(other.breaks))
        scale = max(1.0, self.length)
        inc, out = [], []
        for s in knots:
            sl = max(s - _TOL * scale, 0.0)

            def left(p: EdgeProfile) -> float:
                if s <= _TOL * scale:
                    return p.eval(0.0)
                i = p._piece_index(min(sl, p.length - _TOL * scale))
                pa, pb = p.breaks[i], p.breaks[i + 1]
                va, vb = p.outgoing[i], p.incoming[i + 1]
                return va + (vb - va) * (min(s, p.length) - pa) / (pb - pa)

            inc.append(f(left(self), left(other)))
            out.append(f(self.eval(s), other.eval(s)))
        inc[0] = out[0]
        out[-1] = inc[-1]
        return EdgeProfile(tuple(knots), tuple(inc), tuple(out))

    def __add__(self, other: "EdgeProfile") -> "EdgeProfile":
        return self.combine(other, lambda a, b: a + b)

    # -- serialization -----------------------------------------------------------

    def to_dict(self, edge_id: str) -> dict:
        d = {"edge": edge_id, "breakpoints": list(self.breaks),
             "values": list(self.outgoing[:-1]) + [self.incoming[-1]]}
        jumps = [
            {"at": self.breaks[j], "left": self.incoming[j], "right": self.outgoing[j]}
            for j in range(1, len(self.breaks) - 1)
            if abs(self.incoming[j] - self.outgoing[j]) > 0.0
        ]
        if jumps:
            d["jumps"] = jumps
        return d

    @classmethod
    def from_dict(cls, data: Mapping, length: float) -> "EdgeProfile":
        breaks = [float(b) for b in data["breakpoints"]]
        values = [float(v) for v in data["values"]]
        scale = max(1.0, length)
        if abs(breaks[0]) > _TOL * scale or abs(breaks[-1] - length) > 1e-9 * scale:
            raise ValueError("breakpoints must span [0, edge length]")
        breaks[0], breaks[-1] = 0.0, length
        inc = list(values)
        out = list(values)
        for j in data.get("jumps", ()):
            at = float(j["at"])
            idx = min(range(len(breaks)), key=lambda t: abs(breaks[t] - at))
            if abs(breaks[idx] - at) > 1e-9 * scale:
                raise ValueError(f"jump at {at} is not a breakpoint")
            inc[idx] = float(j["left"])
            out[idx] = float(j["right"])
        return cls(tuple(breaks), tuple(inc), tuple(out))


@dataclass(frozen=True)
class Potential:
    """A potential on a metric graph; edges without an entry are zero."""

    graph: MetricGraph
    profiles: Mapping[str, EdgeProfile] = field(default_factory=dict)

    def __post_init__(self):
        for eid, prof in self.profiles.items():
            e = self.graph.edge(eid)
            if abs(prof.length - e.length) > 1e-9 * max(1.0, e.length):
                raise ValueError(f"profile on {eid!r} does not span the edge")

    # -- constructors --------------------------------------------------------

    @classmethod
    def zero(cls, graph: MetricGraph) -> "Potential":
        return cls(graph, {})

    @classmethod
    def constant(cls, graph: MetricGraph, value: float) -> "Potential":
        return cls(graph, {e.id: EdgeProfile.const(e.length, value)
                           for e in graph.edges})

    @classmethod
    def from_edge_profiles(cls, graph: MetricGraph,
                           profiles: Mapping[str, EdgeProfile]) -> "Potential":
        return cls(graph, dict(profiles))

    @classmethod
    def from_spec(cls, graph: MetricGraph, blocks: Sequence[Mapping]) -> "Potential":
        profs = {}
        for blk in blocks:
            eid = str(blk["edge"])
            profs[eid] = EdgeProfile.from_dict(blk, graph.edge(eid).length)
        return cls(graph, profs)

    def to_spec(self) -> list[dict]:
        return [self.profile(eid).to_dict(eid)
                for eid in sorted(e.id for e in self.graph.edges)
                if eid in self.profiles]

    # -- queries ------------------------------------------------------------

    def profile(self, eid: str) -> EdgeProfile:
        e = self.graph.edge(eid)
        return self.profiles.get(eid, EdgeProfile.const(e.length, 0.0))

    def eval(self, x: PointOnGraph) -> float:
        return self.profile(x.edge).eval(x.s)

    def sup_norm(self) -> float:
        if not self.graph.edges:
            return 0.0
        return max(self.profile(e.id).sup_norm() for e in self.graph.edges)

    def min_max(self, edge_ids: Iterable[str] | None = None) -> tuple[float, float]:
        ids = list(edge_ids) if edge_ids is not None else [e.id for e in self.graph.edges]
        los, his = zip(*(self.profile(eid).min_max() for eid in ids))
        return min(los), max(his)

    def breakpoints(self, eid: str) -> tuple[float, ...]:
        return self.profile(eid).breaks

    def integral(self) -> float:
        """Exact integral over the graph (trapezoid per linear piece)."""
        total = 0.0
        for e in self.graph.edges:
            p = self.profile(e.id)
            for i in range(len(p.breaks) - 1):
                h = p.breaks[i + 1] - p.breaks[i]
                total += 0.5 * h * (p.outgoing[i] + p.incoming[i + 1])
        return total

    # -- algebra ----------------------------------------------------------------

    def _binary(self, other: "Potential", f) -> "Potential":
        if other.graph is not self.graph and other.graph.to_spec() != self.graph.to_spec():
            raise ValueError("potentials live on different graphs")
        profs = {}
        for e in self.graph.edges:
            if e.id in self.profiles or e.id in other.profiles:
                profs[e.id] = self.profile(e.id).combine(other.profile(e.id), f)
        return Potential(self.graph, profs)

    def __add__(self, other: "Potential") -> "Potential":
        return self._binary(other, lambda a, b: a + b)

    def __sub__(self, other: "Potential") -> "Potential":
        return self._binary(other, lambda a, b: a - b)

    def scale(self, c: float) -> "Potential":
        return Potential(self.graph,
                         {eid: p.scale(c) for eid, p in self.profiles.items()})

    def shift(self, c: float) -> "Potential":
        if c == 0.0:
            return self
        return Potential(self.graph, {e.id: self.profile(e.id).shift(c)
                                      for e in self.graph.edges})

    def plus_scaled(self, other: "Potential", t: float) -> "Potential":
        return self._binary(other, lambda a, b: a + t * b)

    # -- restriction along a path ------------------------------------------------

    def restrict_to_path(self, path: Path) -> EdgeProfile:
        """The potential traced along a path, as a profile over [0, path length].

        Vertex crossings become breakpoints; a discontinuity across a vertex
        shows up as a jump there.
        """
        subs = []
        for seg in path.segments:
            a, b = min(seg.s0, seg.s1), max(seg.s0, seg.s1)
            sub = self.profile(seg.edge).restrict(a, b)
            if seg.direction < 0:
                sub = sub.reverse()
            subs.append((seg.t0, sub))
        if not subs:
            raise ValueError("cannot restrict to an empty path")
        knots: list[float] = [0.0]
        inc: list[float] = [subs[0][1].outgoing[0]]
        out: list[float] = [subs[0][1].outgoing[0]]
        prev_end = None
        for t0, sub in subs:
            if prev_end is not None:
                knots.append(t0)
                inc.append(prev_end)
                out.append(sub.outgoing[0])
            for j in range(1, len(sub.breaks) - 1):
                knots.append(t0 + sub.breaks[j])
                inc.append(sub.incoming[j])
                out.append(sub.outgoing[j])
            prev_end = sub.incoming[-1]
        knots.append(path.length)
        inc.append(prev_end)
        out.append(prev_end)
        # collapse numerically coincident knots (zero-length segments)
        kb, ki, ko = [knots[0]], [inc[0]], [out[0]]
        scale = max(1.0, path.length)
        for j in range(1, len(knots)):
            if knots[j] - kb[-1] <= _TOL * scale:
                ko[-1] = out[j]
            else:
                kb.append(knots[j])
                ki.append(inc[j])
                ko.append(out[j])
        kb[-1] = path.length
        return EdgeProfile(tuple(kb), tuple(ki), tuple(ko))

    # -- transfer across surgery ---------------------------------------------------

    def map_split(self, split: SplitResult, original_edge: str) -> "Potential":
        """The same potential on the graph returned by insert_point_vertex."""
        g2 = split.graph
        cut = g2.edge(split.edge_src_side).length
        profs = {}
        for eid, p in self.profiles.items():
            if eid == original_edge:
                left, right = p.split(cut)
                profs[split.edge_src_side] = left
                profs[split.edge_dst_side] = right
            else:
                profs[eid] = p
        return Potential(g2, profs)

    def extended(self, g2: MetricGraph, fill: float = 0.0) -> "Potential":
        """The potential on a supergraph, with new edges set to ``fill``."""
        profs = dict(self.profiles)
        if fill != 0.0:
            for e in g2.edges:
                if e.id not in profs:
                    profs[e.id] = EdgeProfile.const(e.length, fill)
        return Potential(g2, profs)


# -- signed distance -----------------------------------------------------------


@dataclass(frozen=True)
class SignedDistance:
    potential: "Potential"
    components: tuple
    minus_indices: tuple[int, ...]
    convex_on_leaf_paths: bool | None


def signed_distance(g: MetricGraph, x0, minus) -> SignedDistance:
    """The signed distance function from x0, negative on the selected side.

    ``minus`` selects the negative part: either component indices (ints, in
    the deterministic order of components_after_removal) or vertex ids whose
    components become negative.  The result is affine along any path through
    x0 and is reported convex on leaf paths exactly when the negative part is
    an interval hanging at x0.
    """
    p0 = g.as_point(x0)
    comps = g.components_after_removal(p0)
    minus_idx = set()
    for m in minus:
        if isinstance(m, int):
            if not 0 <= m < len(comps):
                raise ValueError(f"component index {m} out of range")
            minus_idx.add(m)
        else:
            hits = [i for i, c in enumerate(comps) if m in c["vertices"]]
            if not hits:
                raise ValueError(f"vertex {m!r} not found in any component")
            minus_idx.add(hits[0])
    if not minus_idx or len(minus_idx) == len(comps):
        raise ValueError("the negative part must be a proper nonempty selection")

    dist = distance_potential(g, p0)
    v_at = g.vertex_at(p0)
    profs: dict[str, EdgeProfile] = dict(dist.profiles)
    partial_signs: dict[str, dict[str, float]] = {}
    for i, c in enumerate(comps):
        s = -1.0 if i in minus_idx else 1.0
        for eid in c["edges"]:
            profs[eid] = profs[eid].scale(s)
        for eid, (s0, _s1) in c["partial"].items():
            side = "src" if abs(s0) < _TOL else "dst"
            partial_signs.setdefault(eid, {})[side] = s
    for eid, sides in partial_signs.items():
        pa, pb = profs[eid].split(p0.s)
        profs[eid] = pa.scale(sides.get("src", 1.0)).concat(
            pb.scale(sides.get("dst", 1.0)))
    sigma = Potential(g, profs)
    convex = _minus_is_interval(g, comps, minus_idx, v_at)
    return SignedDistance(sigma, tuple(range(len(comps))), tuple(sorted(minus_idx)),
                          convex)


def _minus_is_interval(g: MetricGraph, comps, minus_idx, cut_vertex) -> bool:
    """True when the union of the negative components, closed up with x0,
    forms a path graph with x0 at one end."""
    if len(minus_idx) != 1:
        return False
    c = comps[next(iter(minus_idx))]
    # degree within the closed component; the removal point adds one end
    deg: dict[str, int] = {}
    n_edges = len(c["edges"]) + len(c["partial"])
    x0_degree = 0
    for eid in c["edges"]:
        e = g.edge(eid)
        for v in (e.src, e.dst):
            if v == cut_vertex:
                x0_degree += 1
            else:
                deg[v] = deg.get(v, 0) + 1
    for eid, (s0, s1) in c["partial"].items():
        e = g.edge(eid)
        v = e.src if abs(s0) < _TOL else e.dst
        x0_degree += 1
        deg[v] = deg.get(v, 0) + 1
    if x0_degree != 1:
        return False
    if any(d > 2 for d in deg.values()):
        return False
    n_vertices = len(deg) + 1  # interior component vertices + x0
    return n_edges == n_vertices - 1


def distance_potential(g: MetricGraph, x0) -> Potential:
    """The distance-to-a-point function as a piecewise-linear potential.

    Convex along every path (V-shaped in any path coordinate) and
    single-well with well point x0 on trees, so scaled copies are handy
    class members.
    """
    p0 = g.as_point(x0)
    v_at = g.vertex_at(p0)
    if v_at is not None:
        work, x0_vertex = g, v_at
        half_of = {}
    else:
        split = g.insert_point_vertex(p0)
        work, x0_vertex = split.graph, split.vertex
        half_of = {p0.edge: (split.edge_src_side, split.edge_dst_side)}
    dv = work.vertex_distances(x0_vertex)
    profs: dict[str, EdgeProfile] = {}
    for e in work.edges:
        ds, dd = dv[e.src], dv[e.dst]
        kink = 0.5 * (dd - ds + e.length)
        if _TOL * max(1.0, e.length) < kink < e.length * (1 - _TOL):
            profs[e.id] = EdgeProfile.continuous((0.0, kink, e.length),
                                                 (ds, ds + kink, dd))
        else:
            profs[e.id] = EdgeProfile.linear(e.length, ds, dd)
    if half_of:
        orig = p0.edge
        ea, eb = half_of[orig]
        profs[orig] = profs.pop(ea).concat(profs.pop(eb))
    return Potential(g, profs)


# -- potential classes -------------------------------------------------------------


@dataclass(frozen=True)
class ConvexOnPaths:
    """Potentials convex along each distinguished path, valued in [0, M]."""

    paths: tuple[Path, ...]
    bound: float

    def __post_init__(self):
        if not self.paths:
            raise ValueError("need at least one path")
        if not self.bound > 0:
            raise ValueError("the class bound must be positive")

    def covered_edges(self, g: MetricGraph) -> set[str]:
        return {seg.edge for p in self.paths for seg in p.segments}


@dataclass(frozen=True)
class SingleWell:
    """Potentials nonincreasing from every leaf of the tree toward some well
    point, valued in [0, M]."""

    tree: MetricGraph
    bound: float

    def __post_init__(self):
        if not self.tree.is_tree():
            raise NotATree("single-well classes require a tree")
        if not self.bound > 0:
            raise ValueError("the class bound must be positive")


PotentialClass = ConvexOnPaths | SingleWell


def convex_class(g: MetricGraph, bound: float,
                 paths: Sequence[Path] | None = None) -> ConvexOnPaths:
    """Convex class over the given paths (default: all leaf paths of a tree)."""
    if paths is None:
        _, paths = g.boundary_and_paths()
    return ConvexOnPaths(tuple(paths), float(bound))


def single_well_class(g: MetricGraph, bound: float,
                      tree: MetricGraph | None = None) -> SingleWell:
    return SingleWell(tree if tree is not None else g, float(bound))


@dataclass(frozen=True)
class WellPoint:
    point: PointOnGraph
    vertex: str | None = None


@dataclass(frozen=True)
class CheckResult:
    accepted: bool
    message: str = ""
    witness: tuple[PointOnGraph, PointOnGraph, PointOnGraph] | None = None
    well_point: WellPoint | None = None


def default_tol(q: Potential) -> float:
    return 1e-10 * (1.0 + q.sup_norm())


def check_convex_on_paths(q: Potential, cls: ConvexOnPaths,
                          tol: float | None = None) -> CheckResult:
    """Accept iff q is convex along every class path and 0 <= q <= M there.

    Rejections carry a witness triple (x, z, y) with z between x and y
    violating the chord inequality (or a bounds violation message).
    """
    if tol is None:
        tol = default_tol(q)
    M = cls.bound
    for path in cls.paths:
        prof = q.restrict_to_path(path)
        lo, hi = prof.min_max()
        if lo < -tol or hi > M + tol:
            return CheckResult(False, f"range [{lo:.6g}, {hi:.6g}] leaves [0, {M}]")
        for s, left, right in prof.jump_points(tol):
            d = min(s - 0.0, prof.length - s, 1e-3 * prof.length)
            witness = (path.point_at(s - 0.5 * d), path.point_at(s),
                       path.point_at(s + 0.5 * d))
            return CheckResult(False, f"discontinuity at path coordinate {s:.6g}",
                               witness)
        b, vi, vo = prof.breaks, prof.incoming, prof.outgoing
        for j in range(1, len(b) - 1):
            t0, t1, t2 = b[j - 1], b[j], b[j + 1]
            v0, v1, v2 = vo[j - 1], vi[j], vi[j + 1]
            chord = ((t2 - t1) * v0 + (t1 - t0) * v2) / (t2 - t0)
            if v1 > chord + tol:
                witness = (path.point_at(t0), path.point_at(t1), path.point_at(t2))
                return CheckResult(
                    False,
                    f"concave kink at path coordinate {t1:.6g} "
                    f"(excess {v1 - chord:.3g})",
                    witness)
    return CheckResult(True, "convex on all class paths")


def _nonincreasing(prof: EdgeProfile, tol: float) -> bool:
    seq = []
    for j in range(len(prof.breaks)):
        seq.append(prof.incoming[j])
        seq.append(prof.outgoing[j])
    return all(b <= a + tol for a, b in zip(seq, seq[1:]))


def _tree_with_point(tree: MetricGraph, q: Potential, a):
    """(tree', q', target vertex) with the candidate point realized as a vertex."""
    p = tree.as_point(a)
    v = tree.vertex_at(p)
    if v is not None:
        return tree, q, v
    split = tree.insert_point_vertex(p)
    return split.graph, q.map_split(split, p.edge), split.vertex


def is_valid_well_point(q: Potential, tree: MetricGraph, a,
                        tol: float | None = None) -> bool:
    """Direct verification that q is nonincreasing along every leaf-to-a path."""
    if tol is None:
        tol = default_tol(q)
    if tree is not q.graph:
        tree_ids = {e.id for e in tree.edges}
        q = Potential(tree, {eid: p for eid, p in q.profiles.items() if eid in tree_ids})
    T2, q2, target = _tree_with_point(tree, q, a)
    for leaf in tree.leaves():
        if leaf == target:
            continue
        prof = q2.restrict_to_path(T2.tree_path(leaf, target))
        if not _nonincreasing(prof, tol):
            return False
    return True


def check_single_well(q: Potential, cls: SingleWell,
                      tol: float | None = None) -> CheckResult:
    """Accept iff some well point makes q nonincreasing along every
    leaf-to-well path of the tree and 0 <= q <= M on the tree."""
    if tol is None:
        tol = default_tol(q)
    T = cls.tree
    M = cls.bound
    if T is not q.graph:
        tree_ids = {e.id for e in T.edges}
        q = Potential(T, {eid: p for eid, p in q.profiles.items() if eid in tree_ids})
    lo, hi = q.min_max([e.id for e in T.edges])
    if lo < -tol or hi > M + tol:
        return CheckResult(False, f"range [{lo:.6g}, {hi:.6g}] leaves [0, {M}]")
    candidates: list = list(T.vertices)
    for e in T.edges:
        for s in q.profile(e.id).breaks[1:-1]:
            candidates.append(PointOnGraph(e.id, s))
    leaves = T.leaves()
    for a in candidates:
        T2, q2, target = _tree_with_point(T, q, a)
        ok = True
        for leaf in leaves:
            if leaf == target:
                continue
            prof = q2.restrict_to_path(T2.tree_path(leaf, target))
            if not _nonincreasing(prof, tol):
                ok = False
                break
        if ok:
            p = T.as_point(a)
            vertex = a if isinstance(a, str) else None
            return CheckResult(True, "single-well", well_point=WellPoint(p, vertex))
    return CheckResult(False, "no admissible well point found")


def check_class(q: Potential, cls: PotentialClass, tol: float | None = None) -> CheckResult:
    if isinstance(cls, ConvexOnPaths):
        return check_convex_on_paths(q, cls, tol)
    return check_single_well(q, cls, tol)


def class_member_up_to_shift(q: Potential, cls: PotentialClass,
                             tol: float | None = None) -> bool:
    """Class membership after the gap-preserving vertical shift that places
    the minimum (over the constrained set) at zero."""
    if isinstance(cls, ConvexOnPaths):
        lo = min(q.restrict_to_path(p).min_max()[0] for p in cls.paths)
    else:
        lo = q.min_max([e.id for e in cls.tree.edges])[0]
    return check_class(q.shift(-lo), cls, tol).accepted


# -- perturbation directions -----------------------------------------------------


def indicator(g: MetricGraph, region, height: float = 1.0) -> Potential:
    """Indicator of a union of edge segments, scaled by ``height``.

    ``region`` is one (edge, s0, s1) triple or an iterable of them.
    """
    if region and isinstance(region[0], str):
        region = [region]
    profs: dict[str, EdgeProfile] = {}
    for eid, s0, s1 in region:
        e = g.edge(eid)
        s0, s1 = max(0.0, min(s0, s1)), min(e.length, max(s0, s1))
        base = profs.get(eid, EdgeProfile.const(e.length, 0.0))
        bump = EdgeProfile.step(e.length, [c for c in (s0, s1)
                                           if _TOL < c < e.length * (1 - _TOL)],
                                _step_levels(e.length, s0, s1, height))
        profs[eid] = base + bump
    return Potential(g, profs)


def _step_levels(length: float, s0: float, s1: float, height: float) -> list[float]:
    cuts = [c for c in (s0, s1) if _TOL < c < length * (1 - _TOL)]
    n_pieces = len(cuts) + 1
    levels = []
    edges_pts = [0.0] + cuts + [length]
    for i in range(n_pieces):
        mid = 0.5 * (edges_pts[i] + edges_pts[i + 1])
        levels.append(height if s0 <= mid <= s1 else 0.0)
    return levels


def tent(g: MetricGraph, center: PointOnGraph, halfwidth: float,
         height: float = 1.0) -> Potential:
    """Tent bump on one edge: height at the center, zero beyond +-halfwidth
    (clipped at the edge ends)."""
    e = g.edge(center.edge)
    a, b = max(0.0, center.s - halfwidth), min(e.length, center.s + halfwidth)
    knots = _merge_knots(e.length, [a, center.s, b])
    vals = [height * max(0.0, 1.0 - abs(s - center.s) / halfwidth) for s in knots]
    return Potential(g, {e.id: EdgeProfile.continuous(knots, vals)})


def ramp(g: MetricGraph, edge: str, s0: float, s1: float,
         v0: float, v1: float) -> Potential:
    """Linear on [s0, s1] from v0 to v1, zero outside (jumping if needed)."""
    e = g.edge(edge)
    knots = _merge_knots(e.length, [s0, s1])
    inc, out = [], []
    for s in knots:
        if s0 - _TOL <= s <= s1 + _TOL:
            v = v0 + (v1 - v0) * (s - s0) / max(s1 - s0, _TOL)
        else:
            v = 0.0
        inc.append(v)
        out.append(v)
    for j, s in enumerate(knots):
        if abs(s - s0) <= _TOL and s0 > _TOL:
            inc[j] = 0.0
        if abs(s - s1) <= _TOL and s1 < e.length * (1 - _TOL):
            out[j] = 0.0
    inc[0] = out[0]
    out[-1] = inc[-1]
    return Potential(g, {edge: EdgeProfile(tuple(knots), tuple(inc), tuple(out))})


def make_perturbation(g: MetricGraph, kind: str, *, q: Potential | None = None,
                      **params) -> Potential:
    """Named perturbation directions used by the certification machinery."""
    if kind == "indicator":
        return indicator(g, params["region"], params.get("height", 1.0))
    if kind == "tent":
        return tent(g, params["center"], params["halfwidth"], params.get("height", 1.0))
    if kind == "ramp":
        return ramp(g, params["edge"], params["s0"], params["s1"],
                    params.get("v0", 0.0), params["v1"])
    if kind == "sigma":
        return signed_distance(g, params["x0"], params["minus"]).potential
    if kind == "linear_blend":
        if q is None:
            raise ValueError("linear_blend needs the base potential q")
        return params["target"] - q
    raise ValueError(f"unknown perturbation kind {kind!r}")


@dataclass(frozen=True)
class AdmissibleRange:
    t_min: float
    t_max: float
    capped_low: bool = False
    capped_high: bool = False

    @property
    def positively_admissible(self) -> bool:
        return self.t_max > 0.0

    @property
    def admissible(self) -> bool:
        return self.t_min < 0.0 < self.t_max


def admissible_range(q: Potential, P: Potential, cls: PotentialClass,
                     t_cap: float | None = None,
                     up_to_shift: bool = True, bisect_iters: int = 60) -> AdmissibleRange:
    """Maximal interval of amplitudes t keeping q + t P inside the class.

    Membership is tested up to an additive constant by default: vertical
    shifts preserve the gap, so a direction only infeasible through the
    [0, M] window (like the signed distance) still counts as admissible.

    Endpoints whose displacement t * sup|P| stays below the class checker's
    own tolerance are snapped to zero: feasibility that small is a
    tolerance artifact, not an admissible direction.  Raises
    DegenerateRange when no meaningful amplitude survives.
    """

    def member(t: float) -> bool:
        cand = q.plus_scaled(P, t)
        if up_to_shift:
            return class_member_up_to_shift(cand, cls)
        return check_class(cand, cls).accepted

    if not member(0.0):
        raise NotInClass("the base potential is not in the class")
    if t_cap is None:
        m = cls.bound
        osc_p = max(_oscillation(P, cls), 1e-9)
        t_cap = max(4.0 * (m + _oscillation(q, cls)) / osc_p, 1.0)

    def endpoint(sign: float) -> tuple[float, bool]:
        hi = sign * t_cap
        if member(hi):
            return hi, True
        lo = 0.0
        for _ in range(bisect_iters):
            mid = 0.5 * (lo + hi)
            if member(mid):
                lo = mid
            else:
                hi = mid
        return lo, False

    t_max, capped_high = endpoint(+1.0)
    t_min, capped_low = endpoint(-1.0)
    tol_t = 1e3 * default_tol(q) / max(P.sup_norm(), 1e-12)
    if t_max < tol_t:
        t_max, capped_high = 0.0, False
    if t_min > -tol_t:
        t_min, capped_low = 0.0, False
    rng = AdmissibleRange(t_min, t_max, capped_low, capped_high)
    if t_max == 0.0 and t_min == 0.0:
        raise DegenerateRange("no nonzero amplitude keeps the potential in class")
    return rng


def _oscillation(p: Potential, cls: PotentialClass) -> float:
    if isinstance(cls, ConvexOnPaths):
        los, his = zip(*(p.restrict_to_path(path).min_max() for path in cls.paths))
        return max(his) - min(los)
    lo, hi = p.min_max([e.id for e in cls.tree.edges])
    return hi - lo
