"""Shared fixtures and random-instance generators for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from gapgraph.graphs import Edge, MetricGraph, PointOnGraph
from gapgraph.potentials import (
    EdgeProfile,
    Potential,
    distance_potential,
)


def star124() -> MetricGraph:
    """The long-edge three-star with arm lengths 1, 2, 4."""
    return MetricGraph(
        ("v0", "v1", "v2", "v4"),
        (Edge("e1", "v0", "v1", 1.0),
         Edge("e2", "v0", "v2", 2.0),
         Edge("e4", "v0", "v4", 4.0)),
    )


def random_tree(rng: np.random.Generator, max_edges: int = 8,
                min_len: float = 0.4, max_len: float = 2.0) -> MetricGraph:
    """Random tree by sequential attachment; between 1 and max_edges edges."""
    n_edges = int(rng.integers(1, max_edges + 1))
    vertices = ["v0"]
    edges = []
    for i in range(n_edges):
        parent = vertices[int(rng.integers(len(vertices)))]
        child = f"v{i + 1}"
        vertices.append(child)
        edges.append(Edge(f"e{i + 1}", parent, child,
                          float(rng.uniform(min_len, max_len))))
    return MetricGraph(tuple(vertices), tuple(edges))


def random_point(rng: np.random.Generator, g: MetricGraph,
                 margin: float = 0.1) -> PointOnGraph:
    e = g.edges[int(rng.integers(len(g.edges)))]
    s = float(rng.uniform(margin, 1.0 - margin)) * e.length
    return PointOnGraph(e.id, s)


def random_convex_potential(rng: np.random.Generator, g: MetricGraph,
                            bound: float) -> Potential:
    """Nonnegative combination of distance cones, scaled into [0, bound]:
    convex along every path by construction."""
    n_cones = int(rng.integers(1, 4))
    q = Potential.zero(g)
    for _ in range(n_cones):
        p = random_point(rng, g, margin=0.05)
        q = q.plus_scaled(distance_potential(g, p), float(rng.uniform(0.2, 1.0)))
    lo, hi = q.min_max()
    target_max = float(rng.uniform(0.3, 0.95)) * bound
    scale = target_max / max(hi - lo, 1e-12)
    return q.shift(-lo).scale(scale)


def random_single_well_potential(rng: np.random.Generator, g: MetricGraph,
                                 bound: float) -> Potential:
    """Nondecreasing function of the distance to a random well point;
    either a linear cone or a two-threshold step in the distance."""
    well = random_point(rng, g, margin=0.05)
    d = distance_potential(g, well)
    if rng.uniform() < 0.5:
        lo, hi = d.min_max()
        target_max = float(rng.uniform(0.3, 0.95)) * bound
        return d.scale(target_max / max(hi, 1e-12))
    dmax = d.min_max()[1]
    radii = np.sort(rng.uniform(0.15, 0.85, size=2)) * dmax
    levels = np.sort(rng.uniform(0.0, bound, size=3))
    return threshold_step(d, list(radii), list(levels))


def threshold_step(d: Potential, radii: list[float],
                   levels: list[float]) -> Potential:
    """Step function of a piecewise-linear 'distance' potential: value
    levels[i] where radii[i-1] <= d < radii[i]."""
    assert len(levels) == len(radii) + 1

    def level_of(val: float) -> float:
        i = 0
        for r in radii:
            if val >= r:
                i += 1
        return levels[i]

    profs = {}
    for e in d.graph.edges:
        prof = d.profile(e.id)
        cuts = set()
        for i in range(len(prof.breaks) - 1):
            a, b = prof.breaks[i], prof.breaks[i + 1]
            va, vb = prof.outgoing[i], prof.incoming[i + 1]
            for r in radii:
                if (va - r) * (vb - r) < 0:
                    cuts.add(a + (b - a) * (r - va) / (vb - va))
        cuts |= {b for b in prof.breaks[1:-1]}
        knots = sorted(cuts)
        pieces = [0.0] + knots + [e.length]
        lv = []
        for i in range(len(pieces) - 1):
            mid = 0.5 * (pieces[i] + pieces[i + 1])
            lv.append(level_of(prof.eval(mid)))
        profs[e.id] = EdgeProfile.step(e.length, knots, lv)
    return Potential(d.graph, profs)


def random_class_valid_potential(rng: np.random.Generator, g: MetricGraph,
                                 bound: float) -> Potential:
    if rng.uniform() < 0.5:
        return random_convex_potential(rng, g, bound)
    return random_single_well_potential(rng, g, bound)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
