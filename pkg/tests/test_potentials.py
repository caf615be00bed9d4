"""Potential profiles, class membership checks, perturbation directions."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gapgraph.errors import DegenerateRange, NotInClass
from gapgraph.graphs import PointOnGraph, interval_graph, path_graph, star_graph
from gapgraph.potentials import (
    EdgeProfile,
    Potential,
    admissible_range,
    check_convex_on_paths,
    check_single_well,
    convex_class,
    indicator,
    is_valid_well_point,
    make_perturbation,
    ramp,
    signed_distance,
    single_well_class,
    tent,
)

from conftest import (
    random_convex_potential,
    random_single_well_potential,
    random_tree,
    star124,
)


class TestEvaluation:
    def test_constant(self):
        g = star124()
        q = Potential.constant(g, 3.5)
        for eid, s in (("e1", 0.3), ("e2", 1.7), ("e4", 4.0)):
            assert q.eval(PointOnGraph(eid, s)) == 3.5

    def test_linear_ramp_midpoint(self):
        # slope-t ramp on [0, eps]: value at eps/2 is t*eps/2
        eps, t = 0.05, 100.0
        g = interval_graph(eps)
        q = Potential(g, {"e0": EdgeProfile.linear(eps, 0.0, t * eps)})
        assert q.eval(PointOnGraph("e0", eps / 2)) == pytest.approx(t * eps / 2)

    def test_step_right_limit_convention(self):
        g = interval_graph(1.0)
        M = 5.0
        q = Potential(g, {"e0": EdgeProfile.step(1.0, [0.5], [0.0, M])})
        assert q.eval(PointOnGraph("e0", 0.5)) == M
        assert q.profile("e0").eval_left(0.5) == 0.0

    def test_integral_exact(self):
        g = interval_graph(2.0)
        q = Potential(g, {"e0": EdgeProfile.continuous((0, 1, 2), (0, 1, 0))})
        assert q.integral() == pytest.approx(1.0)

    def test_profile_reverse_and_restrict(self):
        p = EdgeProfile.step(1.0, [0.25], [1.0, 2.0])
        r = p.reverse()
        assert r.eval(0.1) == 2.0
        assert r.eval(0.9) == 1.0
        sub = p.restrict(0.5, 1.0)
        assert sub.eval(0.2) == 2.0

    def test_path_trace_detects_vertex_jump(self):
        g = path_graph([1.0, 1.0])
        q = Potential(g, {"e1": EdgeProfile.const(1.0, 0.0),
                          "e2": EdgeProfile.const(1.0, 1.0)})
        _, paths = g.boundary_and_paths()
        prof = q.restrict_to_path(paths[0])
        assert len(prof.jump_points(1e-12)) == 1


class TestConvexCheck:
    def test_zero_accepted(self):
        g = star124()
        cls = convex_class(g, 10.0)
        assert check_convex_on_paths(Potential.zero(g), cls).accepted

    def test_shifted_sigma_accepted(self):
        g = star124()
        sd = signed_distance(g, PointOnGraph("e4", 11 / 14), minus=["v4"])
        q = sd.potential
        lo = min(q.restrict_to_path(p).min_max()[0]
                 for p in convex_class(g, 10.0).paths)
        assert check_convex_on_paths(q.shift(-lo), convex_class(g, 10.0)).accepted

    def test_tent_rejected_with_witness(self):
        g = interval_graph(1.0)
        cls = convex_class(g, 10.0)
        bump = tent(g, PointOnGraph("e0", 0.5), 0.2, height=1.0)
        chk = check_convex_on_paths(bump, cls)
        assert not chk.accepted
        assert chk.witness is not None
        x, z, y = chk.witness
        # the witness violates the chord inequality
        q_at = lambda p: bump.eval(p)
        dxz = g.distance(x, z)
        dxy = g.distance(x, y)
        chord = q_at(x) + (q_at(y) - q_at(x)) * dxz / dxy
        assert q_at(z) > chord

    def test_bound_violation_rejected(self):
        g = interval_graph(1.0)
        cls = convex_class(g, 1.0)
        assert not check_convex_on_paths(Potential.constant(g, 2.0), cls).accepted

    def test_vertex_discontinuity_rejected(self):
        g = path_graph([1.0, 1.0])
        q = Potential(g, {"e1": EdgeProfile.const(1.0, 0.0),
                          "e2": EdgeProfile.const(1.0, 1.0)})
        assert not check_convex_on_paths(q, convex_class(g, 10.0)).accepted

    def test_accepted_implies_random_chord_inequality(self, rng):
        # acceptance implies the chord inequality on 1000 random triples
        g = random_tree(rng, max_edges=5)
        q = random_convex_potential(rng, g, 10.0)
        cls = convex_class(g, 10.0)
        assert check_convex_on_paths(q, cls).accepted
        paths = cls.paths
        tol = 1e-9 * (1 + q.sup_norm())
        for _ in range(1000):
            path = paths[int(rng.integers(len(paths)))]
            t = np.sort(rng.uniform(0, path.length, size=3))
            x, z, y = (path.point_at(v) for v in t)
            if t[2] - t[0] < 1e-9:
                continue
            lam = (t[1] - t[0]) / (t[2] - t[0])
            chord = (1 - lam) * q.eval(x) + lam * q.eval(y)
            assert q.eval(z) <= chord + tol


class TestSingleWellCheck:
    def test_constant_accepted_any_witness(self):
        g = star124()
        cls = single_well_class(g, 10.0)
        chk = check_single_well(Potential.constant(g, 4.0), cls)
        assert chk.accepted
        assert chk.well_point is not None

    def test_step_well_at_center(self):
        g = star_graph([1.0, 1.0, 1.0])
        M = 8.0
        q = Potential(g, {e.id: EdgeProfile.step(1.0, [0.4], [0.0, M])
                          for e in g.edges})
        chk = check_single_well(q, single_well_class(g, M))
        assert chk.accepted
        assert is_valid_well_point(q, g, "v0")

    def test_w_shape_rejected_and_brute_force_agrees(self):
        # two wells with a strict interior bump between them
        g = interval_graph(1.0)
        prof = EdgeProfile.continuous((0, 0.25, 0.5, 0.75, 1.0),
                                      (2.0, 0.0, 2.0, 0.0, 2.0))
        q = Potential(g, {"e0": prof})
        cls = single_well_class(g, 10.0)
        assert not check_single_well(q, cls).accepted
        # independent brute force over a dense grid of candidate wells
        for a in np.linspace(0.0, 1.0, 101):
            left = [q.eval(PointOnGraph("e0", s))
                    for s in np.linspace(0, max(a, 1e-9), 50)]
            right = [q.eval(PointOnGraph("e0", s))
                     for s in np.linspace(min(a, 1 - 1e-9), 1.0, 50)]
            nonincreasing = all(b <= x + 1e-12 for x, b in zip(left, left[1:]))
            nondecreasing = all(b >= x - 1e-12 for x, b in zip(right, right[1:]))
            assert not (nonincreasing and nondecreasing)

    def test_convex_subset_of_single_well_on_trees(self, rng):
        for _ in range(15):
            g = random_tree(rng, max_edges=5)
            q = random_convex_potential(rng, g, 10.0)
            assert check_convex_on_paths(q, convex_class(g, 10.0)).accepted
            assert check_single_well(q, single_well_class(g, 10.0)).accepted

    def test_accepted_witness_passes_direct_scan(self, rng):
        for _ in range(15):
            g = random_tree(rng, max_edges=5)
            q = random_single_well_potential(rng, g, 10.0)
            chk = check_single_well(q, single_well_class(g, 10.0))
            assert chk.accepted
            a = chk.well_point.vertex or chk.well_point.point
            assert is_valid_well_point(q, g, a)


class TestAffine:
    def test_affine_on_non_path_tree_is_constant(self, rng):
        # a function affine along every leaf path of a genuine star must be
        # constant: accepted with both signs implies zero oscillation
        g = star_graph([1.0, 0.7, 1.3])
        cls = convex_class(g, 100.0)
        for _ in range(40):
            q = random_convex_potential(rng, g, 10.0)
            neg = q.scale(-1.0)
            lo = min(neg.restrict_to_path(p).min_max()[0] for p in cls.paths)
            both = (check_convex_on_paths(q, cls).accepted
                    and check_convex_on_paths(neg.shift(-lo), cls).accepted)
            if both:
                lo_, hi_ = q.min_max()
                assert hi_ - lo_ <= 1e-8 * (1 + q.sup_norm())
        # sanity: constants do pass both ways
        c = Potential.constant(g, 3.0)
        assert check_convex_on_paths(c, cls).accepted
        assert check_convex_on_paths(c.scale(-1.0).shift(6.0), cls).accepted


class TestPerturbations:
    def test_indicator_step_down_admissible_range(self):
        g = interval_graph(1.0)
        M = 6.0
        cls = single_well_class(g, M)
        q = Potential.constant(g, M / 2)
        P = indicator(g, ("e0", 0.3, 0.7), height=-1.0)
        rng_t = admissible_range(q, P, cls)
        assert rng_t.t_max >= M / 2 - 1e-6

    def test_tent_degenerate_range(self):
        g = interval_graph(1.0)
        cls = convex_class(g, 10.0)
        P = tent(g, PointOnGraph("e0", 0.5), 0.2)
        with pytest.raises(DegenerateRange):
            admissible_range(Potential.zero(g), P, cls)

    def test_sigma_positively_admissible(self):
        g = star124()
        cls = convex_class(g, 10.0)
        sd = signed_distance(g, PointOnGraph("e4", 11 / 14), minus=["v4"])
        rng_t = admissible_range(Potential.zero(g), sd.potential, cls)
        assert rng_t.t_max > 0.5
        # oscillation of sigma is 6, so the shifted window gives M / 6
        assert rng_t.t_max == pytest.approx(10.0 / 6.0, rel=1e-6)

    def test_bisection_certificate(self):
        g = interval_graph(1.0)
        M = 6.0
        cls = single_well_class(g, M)
        q = Potential.constant(g, M / 2)
        P = indicator(g, ("e0", 0.2, 0.5), height=-1.0)
        rng_t = admissible_range(q, P, cls, up_to_shift=False)
        from gapgraph.potentials import check_class
        assert check_class(q.plus_scaled(P, 0.99 * rng_t.t_max), cls).accepted
        assert not check_class(q.plus_scaled(P, 1.01 * rng_t.t_max), cls).accepted

    def test_base_not_in_class_raises(self):
        g = interval_graph(1.0)
        cls = convex_class(g, 10.0)
        P = indicator(g, ("e0", 0.2, 0.5))
        bump = tent(g, PointOnGraph("e0", 0.5), 0.2, height=1.0)
        with pytest.raises(NotInClass):
            admissible_range(bump, P, cls)

    def test_make_perturbation_kinds(self):
        g = star124()
        q0 = Potential.zero(g)
        P1 = make_perturbation(g, "indicator", region=("e1", 0.2, 0.6))
        assert P1.eval(PointOnGraph("e1", 0.4)) == 1.0
        P2 = make_perturbation(g, "tent", center=PointOnGraph("e2", 1.0),
                               halfwidth=0.5)
        assert P2.eval(PointOnGraph("e2", 1.0)) == 1.0
        assert P2.eval(PointOnGraph("e2", 0.4)) == 0.0
        P3 = make_perturbation(g, "ramp", edge="e4", s0=1.0, s1=2.0, v1=3.0)
        assert P3.eval(PointOnGraph("e4", 1.5)) == pytest.approx(1.5)
        P4 = make_perturbation(g, "sigma", x0=PointOnGraph("e4", 11 / 14),
                               minus=["v4"])
        assert P4.eval(PointOnGraph("e4", 4.0)) == pytest.approx(-(4 - 11 / 14))
        P5 = make_perturbation(g, "linear_blend", q=q0,
                               target=Potential.constant(g, 2.0))
        assert P5.eval(PointOnGraph("e1", 0.5)) == pytest.approx(2.0)


class TestSpecBlocks:
    def test_jump_block_round_trip(self):
        g = interval_graph(1.0)
        blocks = [{"edge": "e0", "breakpoints": [0.0, 0.5, 1.0],
                   "values": [0.0, 0.0, 5.0],
                   "jumps": [{"at": 0.5, "left": 0.0, "right": 5.0}]}]
        q = Potential.from_spec(g, blocks)
        assert q.eval(PointOnGraph("e0", 0.5)) == 5.0
        assert q.profile("e0").eval_left(0.5) == 0.0
        out = q.to_spec()
        q2 = Potential.from_spec(g, out)
        for s in np.linspace(0, 1, 41):
            assert q2.eval(PointOnGraph("e0", float(s))) == \
                q.eval(PointOnGraph("e0", float(s)))


@settings(max_examples=60, deadline=None)
@given(cut=st.floats(0.05, 0.95), lo=st.floats(0.0, 5.0), hi=st.floats(0.0, 5.0))
def test_step_profile_eval_matches_levels(cut, lo, hi):
    prof = EdgeProfile.step(1.0, [cut], [lo, hi])
    assert prof.eval(cut / 2) == lo
    assert prof.eval(cut + (1 - cut) / 2) == hi
    assert prof.eval(cut) == hi  # right-continuous


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.1, 0.9), b=st.floats(0.1, 0.9), c=st.floats(-2.0, 2.0))
def test_profile_algebra_pointwise(a, b, c):
    p = EdgeProfile.continuous((0.0, a, 1.0), (0.0, 1.0, 0.5))
    q = EdgeProfile.step(1.0, [b], [c, -c])
    s = p + q
    for x in np.linspace(0.0, 1.0, 37):
        assert s.eval(x) == pytest.approx(p.eval(x) + q.eval(x), abs=1e-12)
