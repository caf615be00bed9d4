"""First-order gap derivatives and non-optimality certificates."""
import math

import numpy as np
import pytest

from gapgraph.errors import DegenerateSecond
from gapgraph.graphs import PointOnGraph, interval_graph, star_graph
from gapgraph.perturbation import (
    certify_non_optimal,
    fh_integral,
    fh_matrix,
)
from gapgraph.potentials import (
    Potential,
    convex_class,
    indicator,
    signed_distance,
    single_well_class,
    tent,
)
from gapgraph.solver import Mesh, fundamental_gap, solve_spectrum

from conftest import random_class_valid_potential, random_tree, star124

PI2 = math.pi ** 2


class TestIntegral:
    def test_constant_direction_vanishes(self):
        # normalization identity: int u2^2 = int u1^2 = 1
        res = solve_spectrum(star124(), k=2)
        one = Potential.constant(star124(), 1.0)
        assert abs(fh_integral(res, one)) < 1e-9

    def test_middle_third_closed_form(self):
        # q = 0 on the unit interval: u1 = 1, u2 = sqrt(2) cos(pi x), and the
        # indicator of [1/3, 2/3] integrates cos(2 pi x): -sqrt(3)/(2 pi)
        g = interval_graph(1.0)
        P = indicator(g, ("e0", 1 / 3, 2 / 3))
        mesh = Mesh.build(g, None, extra={"e0": [1 / 3, 2 / 3]})
        res = solve_spectrum(g, k=2, mesh=mesh)
        expected = -math.sqrt(3.0) / (2 * math.pi)
        assert expected == pytest.approx(-0.27566, abs=1e-4)
        assert fh_integral(res, P) == pytest.approx(expected, abs=1e-7)

    def test_sigma_star_reference_value(self):
        g = star124()
        res = solve_spectrum(g, k=2, base=96)
        sd = signed_distance(g, PointOnGraph("e4", 11 / 14), minus=["v4"])
        scale = res.vertex_value(1, "v4")
        val = fh_integral(res, sd.potential) / scale ** 2
        assert val == pytest.approx(-1.46034, abs=1e-3)

    def test_degenerate_second_raises(self):
        res = solve_spectrum(star_graph([1.0, 1.0, 1.0]), k=3)
        with pytest.raises(DegenerateSecond):
            fh_integral(res, Potential.constant(res.graph, 1.0))


class TestMatrix:
    def test_simple_case_reduces_to_scalar(self):
        res = solve_spectrum(star124(), k=3)
        P = indicator(star124(), ("e4", 0.5, 2.5))
        mesh_res = solve_spectrum(star124(), k=3,
                                  mesh=Mesh.build(star124(), None,
                                                  extra={"e4": [0.5, 2.5]}))
        M, cl = fh_matrix(mesh_res, P)
        assert M.shape == (1, 1)
        assert M[0, 0] == pytest.approx(fh_integral(mesh_res, P), rel=1e-12)

    def test_constant_direction_zero_matrix(self):
        g = star_graph([1.0, 1.0, 1.0])
        res = solve_spectrum(g, k=3)
        M, cl = fh_matrix(res, Potential.constant(g, 1.0))
        assert M.shape == (2, 2)
        assert np.max(np.abs(M)) < 1e-8

    def test_single_edge_direction_has_nonzero_eigenvalue(self):
        g = star_graph([1.0, 1.0, 1.0])
        P = indicator(g, ("e1", 0.0, 1.0))
        mesh = Mesh.build(g, None)
        res = solve_spectrum(g, k=3, mesh=mesh)
        M, cl = fh_matrix(res, P)
        assert len(cl) == 2
        eigs = np.linalg.eigvalsh(M)
        assert np.max(np.abs(eigs)) > 0.05
        assert np.allclose(M, M.T)

    def test_eigenvalues_invariant_under_cluster_rebasing(self):
        # rotating the degenerate eigenspace conjugates the matrix by an
        # orthogonal matrix: eigenvalues must not move
        g = star_graph([1.0, 1.0, 1.0])
        P = indicator(g, ("e2", 0.2, 0.8))
        mesh = Mesh.build(g, None, extra={"e2": [0.2, 0.8]})
        res = solve_spectrum(g, k=3, mesh=mesh)
        M, cl = fh_matrix(res, P)
        eigs0 = np.sort(np.linalg.eigvalsh(M))
        theta = 0.77
        R = np.array([[math.cos(theta), -math.sin(theta)],
                      [math.sin(theta), math.cos(theta)]])
        i, j = cl
        for eid in res.funcs:
            ui = res.funcs[eid][i].copy()
            uj = res.funcs[eid][j].copy()
            res.funcs[eid][i] = R[0, 0] * ui + R[0, 1] * uj
            res.funcs[eid][j] = R[1, 0] * ui + R[1, 1] * uj
        M2, _ = fh_matrix(res, P)
        eigs1 = np.sort(np.linalg.eigvalsh(M2))
        assert np.allclose(eigs0, eigs1, atol=1e-10)


class TestDegenerateBranchDerivative:
    def test_cluster_matrix_predicts_min_branch(self):
        # on the equilateral star the second level is double; along an
        # edge-supported direction the smallest matrix eigenvalue is the
        # one-sided derivative of the gap (the minimum branch wins)
        g = star_graph([1.0, 1.0, 1.0])
        P = indicator(g, ("e1", 0.0, 1.0))
        mesh = Mesh.build(g, None, base=48)
        res = solve_spectrum(g, k=4, mesh=mesh, richardson=False)
        M, cl = fh_matrix(res, P)
        assert len(cl) == 2
        lo = float(np.min(np.linalg.eigvalsh(M)))
        g0 = fundamental_gap(g, None, mesh=mesh, richardson=False)
        slope = {}
        for t in (1e-3, 1e-4):
            gt = fundamental_gap(g, Potential.zero(g).plus_scaled(P, t),
                                 mesh=mesh, richardson=False)
            slope[t] = (gt - g0) / t
        extrap = (10 * slope[1e-4] - slope[1e-3]) / 9
        assert extrap == pytest.approx(lo, rel=1e-3)


class TestFiniteDifferenceConsistency:
    def test_matched_mesh_slope(self, rng):
        for _ in range(3):
            g = random_tree(rng, max_edges=4)
            q = random_class_valid_potential(rng, g, 8.0)
            e = g.edges[int(rng.integers(len(g.edges)))]
            s0, s1 = np.sort(rng.uniform(0.1, 0.9, size=2) * e.length)
            P = indicator(g, (e.id, float(s0), float(s1)))
            mesh = Mesh.build(g, q, base=48, extra={e.id: [s0, s1]})
            res = solve_spectrum(g, q, k=3, mesh=mesh, richardson=False)
            if res.multiplicity(1) != 1:
                continue
            fh = fh_integral(res, P)
            if abs(fh) < 1e-3:
                continue
            g0 = fundamental_gap(g, q, mesh=mesh, richardson=False)
            s = {}
            for t in (1e-3, 1e-4):
                gt = fundamental_gap(g, q.plus_scaled(P, t), mesh=mesh,
                                     richardson=False)
                s[t] = (gt - g0) / t
            extrap = (10 * s[1e-4] - s[1e-3]) / 9
            assert extrap == pytest.approx(fh, rel=5e-2)


class TestCertify:
    def test_sigma_star_not_minimal(self):
        g = star124()
        cls = convex_class(g, 10.0)
        sd = signed_distance(g, PointOnGraph("e4", 11 / 14), minus=["v4"])
        rep = certify_non_optimal(g, Potential.zero(g), cls, sd.potential, "min")
        assert rep.verdict == "NotMinimal"
        assert rep.integral == pytest.approx(-0.5312, abs=1e-3)
        assert abs(rep.integral) > rep.margin

    def test_constant_single_well_not_minimal(self):
        # lowering the potential where u2^2 - u1^2 > 0 descends the gap
        g = interval_graph(1.0)
        M = 6.0
        cls = single_well_class(g, M)
        q = Potential.constant(g, M / 2)
        P = indicator(g, ("e0", 0.0, 0.2), height=-1.0)
        rep = certify_non_optimal(g, q, cls, P, "min")
        assert rep.verdict == "NotMinimal"
        # constructive confirmation: a feasible step along P lowers the gap
        t = min(1.0, rep.admissible.t_max)
        mesh = Mesh.build(g, q.plus_scaled(P, t))
        g_base = fundamental_gap(g, q, mesh=mesh, richardson=False)
        g_pert = fundamental_gap(g, q.plus_scaled(P, t), mesh=mesh,
                                 richardson=False)
        assert g_pert < g_base

    def test_tent_on_interval_inconclusive(self):
        g = interval_graph(1.0)
        cls = convex_class(g, 10.0)
        P = tent(g, PointOnGraph("e0", 0.5), 0.2)
        rep = certify_non_optimal(g, Potential.zero(g), cls, P, "min")
        assert rep.verdict == "Inconclusive"
        assert rep.admissible is None

    def test_not_in_class_raises(self):
        from gapgraph.errors import NotInClass
        g = interval_graph(1.0)
        cls = convex_class(g, 1.0)
        P = indicator(g, ("e0", 0.2, 0.4))
        with pytest.raises(NotInClass):
            certify_non_optimal(g, Potential.constant(g, 3.0), cls, P, "min")

    def test_maximality_direction(self):
        # digging a well in the middle is positively admissible and raises
        # the gap to first order, so the constant cannot be a maximizer
        g = interval_graph(1.0)
        M = 6.0
        cls = single_well_class(g, M)
        q = Potential.constant(g, M / 2)
        P = indicator(g, ("e0", 0.4, 0.6), height=-1.0)
        rep = certify_non_optimal(g, q, cls, P, "max")
        assert rep.admissible.positively_admissible
        # u2^2 - u1^2 < 0 in the middle: the 1x1 matrix is strictly positive
        assert rep.matrix_eigenvalues[0] > 0
        assert rep.verdict == "NotMaximal"
