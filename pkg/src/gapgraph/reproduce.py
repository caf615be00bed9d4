"""Scripted scenarios that regenerate the reference quantitative example and
the three asymptotic families, each checked against stated tolerances.

Asymptotic claims are verified as monotone trends plus desk-scale threshold
proxies, never as literal limits.  Every compared value carries a source
tag: ``analytic`` (exact by construction), ``reference`` (an external
reference number), ``derived`` (computed here by an independent oracle), or
``stated-threshold`` (a fixed desk-scale proxy).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .graphs import Edge, MetricGraph, PointOnGraph
from .perturbation import certify_non_optimal, fh_integral
from .potentials import (
    EdgeProfile,
    Potential,
    check_convex_on_paths,
    check_single_well,
    convex_class,
    is_valid_well_point,
    signed_distance,
    single_well_class,
)
from .solver import Mesh, lowest_eigenvalues, solve_spectrum, star_secular_root

PI2 = math.pi ** 2

# Reference values for the long-edge star example: smallest secular root of
# tan(k) + tan(2k) + tan(4k) = 0 and the signed-distance first-order integral
# in the A4 = 1 normalization.
REF_SECULAR_K = 0.502642
REF_FH_INTEGRAL = -1.46034


@dataclass
class CheckRow:
    name: str
    computed: float
    expected: float | None
    tolerance: float | None
    passed: bool
    source: str
    kind: str = "abs"    # abs | rel | bool | less | greater

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "computed": self.computed,
            "expected": self.expected,
            "tolerance": self.tolerance,
            "passed": bool(self.passed),
            "source": self.source,
            "kind": self.kind,
        }


def row_abs(name, computed, expected, tol, source) -> CheckRow:
    return CheckRow(name, float(computed), float(expected), float(tol),
                    abs(computed - expected) <= tol, source, "abs")


def row_rel(name, computed, expected, rtol, source) -> CheckRow:
    ok = abs(computed - expected) <= rtol * abs(expected)
    return CheckRow(name, float(computed), float(expected), float(rtol), ok,
                    source, "rel")


def row_bool(name, flag, source) -> CheckRow:
    return CheckRow(name, float(bool(flag)), 1.0, None, bool(flag), source, "bool")


def row_less(name, computed, bound, source) -> CheckRow:
    return CheckRow(name, float(computed), float(bound), None,
                    computed < bound, source, "less")


@dataclass
class ScenarioReport:
    name: str
    rows: list[CheckRow]
    data: dict[str, list] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    runtime_s: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "runtime_s": self.runtime_s,
            "rows": [r.to_dict() for r in self.rows],
            "data": self.data,
            "notes": self.notes,
        }

    def summary_lines(self) -> list[str]:
        out = []
        for r in self.rows:
            status = "PASS" if r.passed else "FAIL"
            if r.kind == "bool":
                out.append(f"[{status}] {r.name}")
            elif r.kind in ("less", "greater"):
                out.append(f"[{status}] {r.name}: {r.computed:.6g} "
                           f"{'<' if r.kind == 'less' else '>'} {r.expected:.6g}")
            else:
                out.append(f"[{status}] {r.name}: {r.computed:.8g} vs "
                           f"{r.expected:.8g} ({r.kind} tol {r.tolerance:.1e})")
        return out


# -- scenario 1: the long-edge three-star ---------------------------------------------


def long_edge_star() -> MetricGraph:
    """Three-star with arm lengths 1, 2, 4 and the conventional names."""
    return MetricGraph(
        ("v0", "v1", "v2", "v4"),
        (Edge("e1", "v0", "v1", 1.0),
         Edge("e2", "v0", "v2", 2.0),
         Edge("e4", "v0", "v4", 4.0)),
    )


def balanced_split_point(g: MetricGraph, edge: str, minus_vertex: str) -> float:
    """Coordinate s on the edge where the signed distance (negative toward
    ``minus_vertex``) integrates to zero over the graph."""
    L = g.edge(edge).length

    def total(s: float) -> float:
        sd = signed_distance(g, PointOnGraph(edge, s), minus=[minus_vertex])
        return sd.potential.integral()

    return brentq(total, 1e-6 * L, L * (1 - 1e-6), xtol=1e-14)


def _fh_quadrature_oracle(k: float, x0: float) -> float:
    """Independent quadrature of the first-order integral for the (1, 2, 4)
    star in the A4 = 1 normalization: cosine eigenfunction on each arm
    (coordinate from the leaf), signed distance about the balance point x0
    (distance from the center on the long arm)."""
    a1 = math.cos(4 * k) / math.cos(k)
    a2 = math.cos(4 * k) / math.cos(2 * k)
    i1 = quad(lambda x: (1.0 + x0 - x) * math.cos(k * x) ** 2, 0.0, 1.0,
              epsabs=1e-12)[0]
    i2 = quad(lambda x: (2.0 + x0 - x) * math.cos(k * x) ** 2, 0.0, 2.0,
              epsabs=1e-12)[0]
    i4 = quad(lambda x: (x - (4.0 - x0)) * math.cos(k * x) ** 2, 0.0, 4.0,
              epsabs=1e-12)[0]
    return a1 * a1 * i1 + a2 * a2 * i2 + i4


def repro_sigma_star(bound: float = 10.0) -> ScenarioReport:
    """The quantitative long-edge star example: balance point 11/14, secular
    root, first-order integral, and the not-minimal certificate for q = 0."""
    t0 = time.time()
    g = long_edge_star()
    rows = []

    x0 = balanced_split_point(g, "e4", "v4")
    x0_exact = float(Fraction(11, 14))
    rows.append(row_abs("balance point x0 on the long arm", x0, x0_exact,
                        1e-10, "analytic"))

    root = star_secular_root([1.0, 2.0, 4.0])
    rows.append(row_abs("secular root k", root.k, REF_SECULAR_K, 1e-5,
                        "reference"))

    res = solve_spectrum(g, None, k=3, base=96)
    rows.append(row_rel("finite-element lambda_2 vs k^2", res.eigenvalues[1],
                        root.eigenvalue, 1e-5, "derived"))

    sd = signed_distance(g, PointOnGraph("e4", x0), minus=["v4"])
    rows.append(row_bool("signed distance convex on leaf paths",
                         sd.convex_on_leaf_paths, "derived"))
    rows.append(row_abs("integral of the signed distance",
                        sd.potential.integral(), 0.0, 1e-10, "analytic"))

    scale = res.vertex_value(1, "v4")
    fh_unit = fh_integral(res, sd.potential)
    fh_ref_norm = fh_unit / (scale * scale)
    rows.append(row_abs("first-order integral (A4=1 normalization)",
                        fh_ref_norm, REF_FH_INTEGRAL, 1e-3, "reference"))

    oracle = _fh_quadrature_oracle(root.k, x0)
    rows.append(row_abs("first-order integral vs quadrature oracle",
                        fh_ref_norm, oracle, 1e-5, "derived"))

    cls = convex_class(g, bound)
    rep = certify_non_optimal(g, Potential.zero(g), cls, sd.potential, "min")
    rows.append(row_bool("verdict NotMinimal for q = 0",
                         rep.verdict == "NotMinimal", "derived"))

    report = ScenarioReport("sigma-star", rows, data={
        "eigenvalues": [float(v) for v in res.eigenvalues],
        "x0": [x0],
        "fh_unit_normalization": [fh_unit],
        "fh_reference_normalization": [fh_ref_norm],
        "certificate": [rep.verdict],
    })
    report.runtime_s = time.time() - t0
    return report


# -- scenario 2: fixed star, growing convex (linear) potential --------------------------


def pendant_star(eps: float) -> MetricGraph:
    """Two half-unit arms plus one short pendant at a common center: the
    fixed-diameter carrier for the vanishing-gap families."""
    return MetricGraph(
        ("v0", "vp", "vm", "ve"),
        (Edge("ep", "v0", "vp", 0.5),
         Edge("em", "v0", "vm", 0.5),
         Edge("ee", "v0", "ve", eps)),
    )


def repro_gap_to_zero_convex(eps: float = 0.05,
                             t_list: tuple = (0.0, 1e1, 1e2, 1e3, 1e4),
                             shrink_threshold: float = 0.15) -> ScenarioReport:
    """Linear-potential sweep on the pendant edge: the second eigenvalue is
    pinned while the first climbs toward it, so the gap shrinks.

    The arm lengths are 1/2 each, which makes the diameter 1 and pins the
    second eigenvalue at pi^2 (the stated unit arm lengths are inconsistent
    with that pinning; the half-length convention of the companion step
    construction is used instead, and noted).
    """
    t0 = time.time()
    g = pendant_star(eps)
    rows = []
    lam1s, lam2s, gaps = [], [], []
    convex_ok = True
    for t in t_list:
        q = Potential(g, {"ee": EdgeProfile.linear(eps, 0.0, t * eps)})
        cls = convex_class(g, max(1.0, 1.01 * t * eps))
        convex_ok = convex_ok and check_convex_on_paths(q, cls).accepted
        mesh = Mesh.build(g, q, base=96, floor=48, cap=512)
        w = lowest_eigenvalues(g, q, k=2, mesh=mesh, richardson=True)
        lam1s.append(float(w[0]))
        lam2s.append(float(w[1]))
        gaps.append(float(w[1] - w[0]))
    rows.append(row_bool("ramp family passes the convexity check", convex_ok,
                         "derived"))
    for t, l2 in zip(t_list, lam2s):
        rows.append(row_rel(f"lambda_2 pinned at pi^2 (t={t:g})", l2, PI2,
                            1e-6, "derived"))
    rows.append(row_bool("lambda_1 increasing in t",
                         all(b > a - 1e-10 for a, b in zip(lam1s, lam1s[1:])),
                         "derived"))
    rows.append(row_bool("gap decreasing in t",
                         all(b < a + 1e-10 for a, b in zip(gaps, gaps[1:])),
                         "derived"))
    # trend proxy: fitted power of the tail must point to a vanishing gap
    ts = [t for t in t_list if t > 0]
    tail = np.polyfit(np.log(ts[-2:]), np.log(gaps[-2:]), 1)[0]
    rows.append(row_less("fitted tail exponent of gap(t)", tail, 0.0, "derived"))
    rows.append(row_less(f"gap(t={t_list[-1]:g}) / gap(0)",
                         gaps[-1] / gaps[0], shrink_threshold,
                         "stated-threshold"))
    report = ScenarioReport(
        "gap-to-zero-convex", rows,
        data={"t": list(t_list), "lambda1": lam1s, "lambda2": lam2s,
              "gamma": gaps},
        notes=[
            "arm lengths are 1/2 each so that the diameter is 1 and the "
            "pinned eigenvalue is pi^2",
            "the final threshold row is a desk-scale proxy for the t -> "
            "infinity limit",
        ])
    report.runtime_s = time.time() - t0
    return report


# -- scenario 3: growing star, bounded single-well potential ---------------------------


def multi_pendant_star(eps: float, n: int) -> MetricGraph:
    vertices = ["v0", "vp", "vm"] + [f"s{i}" for i in range(n)]
    edges = [Edge("ep", "v0", "vp", 0.5), Edge("em", "v0", "vm", 0.5)]
    edges += [Edge(f"de{i}", "v0", f"s{i}", eps) for i in range(n)]
    return MetricGraph(tuple(vertices), tuple(edges))


def repro_gap_to_zero_singlewell(bound: float = 20.0, eps: float = 0.05,
                                 n_list: tuple = (2, 4, 8, 16, 32)) -> ScenarioReport:
    """Step-potential sweep over stars with ever more short edges: the
    second eigenvalue stays pinned while the first climbs, within a fixed
    single-well class (bounded potentials)."""
    t0 = time.time()
    rows = []
    lam1s, lam2s, gaps = [], [], []
    sw_ok = True
    well_ok = True
    for n in n_list:
        g = multi_pendant_star(eps, n)
        q = Potential(g, {f"de{i}": EdgeProfile.const(eps, bound)
                          for i in range(n)})
        mesh = Mesh.build(g, q, base=24, floor=12, cap=96)
        w = lowest_eigenvalues(g, q, k=2, mesh=mesh, richardson=True)
        lam1s.append(float(w[0]))
        lam2s.append(float(w[1]))
        gaps.append(float(w[1] - w[0]))
        chk = check_single_well(q, single_well_class(g, bound))
        sw_ok = sw_ok and chk.accepted
        well_ok = well_ok and is_valid_well_point(q, g, "v0")
    for n, l2 in zip(n_list, lam2s):
        rows.append(row_rel(f"lambda_2 pinned at pi^2 (n={n})", l2, PI2,
                            1e-6, "derived"))
    rows.append(row_bool("lambda_1 increasing toward pi^2",
                         all(b > a + 1e-9 for a, b in zip(lam1s, lam1s[1:]))
                         and lam1s[-1] < PI2, "derived"))
    rows.append(row_bool("gap decreasing in n",
                         all(b < a - 1e-9 for a, b in zip(gaps, gaps[1:])),
                         "derived"))
    rows.append(row_bool("step potential passes the single-well check", sw_ok,
                         "derived"))
    rows.append(row_bool("center vertex is a valid well point", well_ok,
                         "derived"))
    report = ScenarioReport(
        "gap-to-zero-single-well", rows,
        data={"n": list(n_list), "lambda1": lam1s, "lambda2": lam2s,
              "gamma": gaps})
    report.runtime_s = time.time() - t0
    return report


# -- scenario 4: decorated interval with diverging gap ----------------------------------


def decorated_interval(n: int, m: int, delta: float) -> MetricGraph:
    """Unit interval with n small m-edge stars at 1/(2n) + k/n, half spacing
    at the ends."""
    vertices = [f"t{k}" for k in range(n + 2)]
    edges = []
    pos = [0.0] + [1.0 / (2 * n) + k / n for k in range(n)] + [1.0]
    for k in range(n + 1):
        edges.append(Edge(f"i{k}", f"t{k}", f"t{k + 1}", pos[k + 1] - pos[k]))
    for k in range(1, n + 1):
        for j in range(m):
            leaf = f"d{k}_{j}"
            vertices.append(leaf)
            edges.append(Edge(f"de{k}_{j}", f"t{k}", leaf, delta))
    return MetricGraph(tuple(vertices), tuple(edges))


def repro_gap_divergent(n_list: tuple = (2, 3, 4), m: int = 20,
                        delta: float = 1e-3, big: float = 1e5) -> ScenarioReport:
    """Decorated-interval sweep: hardened decorations emulate interior
    Dirichlet points, so the spectrum develops an (n+1)-fold cluster at the
    first Dirichlet level pi^2 n^2 with the next level near 4 pi^2 n^2.

    The level ratio and the distance between levels are measured
    cluster-aware: ``lambda_above`` is the first eigenvalue above the bottom
    cluster, the feature the Dirichlet-interval oracle predicts at
    4 pi^2 n^2.  The raw second eigenvalue (a cluster member) is recorded in
    the data for transparency; the hardening limit leaves the whole cluster
    within a fraction of a percent of pi^2 n^2.
    """
    t0 = time.time()
    rows = []
    lam1s, raw2, above, cluster_sizes = [], [], [], []
    raw_gaps, oracle_gaps = [], []
    exact_member_err = []
    sw_ok = True
    for n in n_list:
        g = decorated_interval(n, m, delta)
        q = Potential(g, {e.id: EdgeProfile.const(delta, big)
                          for e in g.edges if e.id.startswith("de")})
        if n == n_list[0]:
            sw_ok = sw_ok and check_single_well(
                q, single_well_class(g, 1.01 * big)).accepted
        sw_ok = sw_ok and is_valid_well_point(q, g, "t1")
        nodes = {}
        for e in g.edges:
            count = 8 if e.id.startswith("de") else 96
            nodes[e.id] = np.linspace(0.0, e.length, count + 1)
        mesh = Mesh(nodes)
        w = lowest_eigenvalues(g, q, k=n + 4, mesh=mesh, richardson=True)
        lam1 = float(w[0])
        cluster = [float(x) for x in w if x <= 2.0 * lam1]
        rest = [float(x) for x in w if x > 2.0 * lam1]
        lam1s.append(lam1)
        raw2.append(float(w[1]))
        cluster_sizes.append(len(cluster))
        above.append(rest[0] if rest else float("nan"))
        raw_gaps.append(float(w[1] - w[0]))
        oracle_gaps.append((rest[0] if rest else float("nan")) - lam1)
        target = PI2 * n * n
        exact_member_err.append(min(abs(x - target) / target for x in cluster))
    for n, lam1, sz, up, err in zip(n_list, lam1s, cluster_sizes, above,
                                    exact_member_err):
        target = PI2 * n * n
        rows.append(row_rel(f"lambda_1 vs first Dirichlet level (n={n})",
                            lam1, target, 0.1, "derived"))
        rows.append(CheckRow(f"bottom cluster size (n={n})", float(sz),
                             float(n + 1), 0.0, sz == n + 1, "derived", "abs"))
        rows.append(row_rel(f"exact cluster member at pi^2 n^2 (n={n})",
                            1.0 + err, 1.0, 1e-6, "derived"))
        rows.append(row_rel(f"lambda_above vs second Dirichlet level (n={n})",
                            up, 4.0 * target, 0.1, "derived"))
        rows.append(row_rel(f"level ratio lambda_above/lambda_1 (n={n})",
                            up / lam1, 4.0, 0.1, "derived"))
    rows.append(row_bool("raw gap increasing in n",
                         all(b > a for a, b in zip(raw_gaps, raw_gaps[1:])),
                         "derived"))
    rows.append(row_bool("distance to the level above increasing in n",
                         all(b > a for a, b in zip(oracle_gaps, oracle_gaps[1:])),
                         "derived"))
    rows.append(row_bool("decoration potential is single-well about the "
                         "first decoration point", sw_ok, "derived"))
    report = ScenarioReport(
        "gap-divergent", rows,
        data={"n": list(n_list), "lambda1": lam1s, "raw_lambda2": raw2,
              "lambda_above_cluster": above, "cluster_size": cluster_sizes,
              "raw_gamma": raw_gaps, "gamma_above": oracle_gaps},
        notes=[
            "the bottom level is an (n+1)-fold near-degenerate cluster: "
            "n states just below pi^2 n^2 plus one exactly there, so the "
            "raw second eigenvalue is a cluster member; the ratio-4 feature "
            "is carried by the first eigenvalue above the cluster",
        ])
    report.runtime_s = time.time() - t0
    return report


SCENARIOS = {
    "sigma-star": repro_sigma_star,
    "gap-to-zero-convex": repro_gap_to_zero_convex,
    "gap-to-zero-single-well": repro_gap_to_zero_singlewell,
    "gap-divergent": repro_gap_divergent,
}


def run_scenario(name: str, **kwargs) -> ScenarioReport:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; "
                       f"choose from {sorted(SCENARIOS)}")
    return SCENARIOS[name](**kwargs)
