"""Finite-element assembly, eigenvalue solves, oracles, diagnostics."""
import math

import numpy as np
import pytest

from gapgraph.errors import MeshMisaligned
from gapgraph.graphs import (
    PointOnGraph,
    VertexCondition,
    interval_graph,
    star_graph,
)
from gapgraph.potentials import EdgeProfile, Potential, indicator
from gapgraph.solver import (
    Mesh,
    assemble,
    eigen_diagnostics,
    fundamental_gap,
    lowest_eigenvalues,
    solve_spectrum,
    star_secular_root,
)

from conftest import random_class_valid_potential, random_tree, star124

PI2 = math.pi ** 2


class TestAssembly:
    def test_interval_matrices_hand_checked(self):
        # 4 elements of h = 1/4: the classical P1 stiffness and mass matrices
        g = interval_graph(1.0)
        mesh = Mesh({"e0": np.linspace(0, 1, 5)})
        A, B, dm = assemble(g, None, mesh)
        A = A.toarray()
        B = B.toarray()
        assert A.shape == (5, 5)
        h = 0.25
        # dof order: v0, v1 (vertices), then the three interior nodes
        order = [dm.vertex_dof["v0"], 2, 3, 4, dm.vertex_dof["v1"]]
        A = A[np.ix_(order, order)]
        B = B[np.ix_(order, order)]
        expA = (1 / h) * (np.diag([1, 2, 2, 2, 1.0]) + np.diag([-1.0] * 4, 1)
                          + np.diag([-1.0] * 4, -1))
        expB = (h / 6) * (np.diag([2, 4, 4, 4, 2.0]) + np.diag([1.0] * 4, 1)
                          + np.diag([1.0] * 4, -1))
        assert np.allclose(A, expA)
        assert np.allclose(B, expB)

    def test_star_center_shared_by_three_blocks(self):
        g = star_graph([1.0, 1.0, 1.0])
        mesh = Mesh({e.id: np.linspace(0, 1, 4) for e in g.edges})
        A, B, dm = assemble(g, None, mesh)
        c = dm.vertex_dof["v0"]
        row = A.toarray()[c]
        # Kirchhoff weak form: the center row couples to one interior node
        # per incident edge
        assert np.sum(np.abs(row) > 1e-14) == 4  # diagonal + 3 neighbors

    def test_potential_term_constant_equals_mass(self):
        g = interval_graph(1.0)
        mesh = Mesh({"e0": np.linspace(0, 1, 9)})
        A0, B, _ = assemble(g, None, mesh)
        c = 3.7
        Ac, _, _ = assemble(g, Potential.constant(g, c), mesh)
        assert np.allclose(Ac.toarray(), A0.toarray() + c * B.toarray())

    def test_misaligned_breakpoint_raises(self):
        g = interval_graph(1.0)
        q = Potential(g, {"e0": EdgeProfile.step(1.0, [1 / 3], [0.0, 1.0])})
        mesh = Mesh({"e0": np.linspace(0, 1, 5)})  # 1/3 is not a node
        with pytest.raises(MeshMisaligned):
            assemble(g, q, mesh, require_aligned=True)

    def test_unaligned_integration_still_exact(self):
        # the potential term stays exact when a jump sits inside an element:
        # for the all-ones FE function, u'(A - A0)u = integral of q
        g = interval_graph(1.0)
        q = Potential(g, {"e0": EdgeProfile.step(1.0, [1 / 3], [0.0, 1.0])})
        mesh = Mesh({"e0": np.linspace(0, 1, 5)})  # 1/3 not a node
        A, _, _ = assemble(g, q, mesh)
        A0, _, _ = assemble(g, None, mesh)
        ones = np.ones(A.shape[0])
        assert ones @ ((A - A0).toarray() @ ones) == pytest.approx(2 / 3,
                                                                   rel=1e-13)

    def test_dirichlet_eliminates_dof(self):
        g = interval_graph(1.0, conditions={"v1": VertexCondition.dirichlet()})
        mesh = Mesh({"e0": np.linspace(0, 1, 5)})
        A, _, dm = assemble(g, None, mesh)
        assert dm.vertex_dof["v1"] == -1
        assert A.shape == (4, 4)

    def test_delta_coupling_adds_to_diagonal(self):
        alpha = 2.5
        g = interval_graph(1.0, conditions={"v0": VertexCondition.delta(alpha)})
        mesh = Mesh({"e0": np.linspace(0, 1, 5)})
        A, _, dm = assemble(g, None, mesh)
        A0, _, _ = assemble(interval_graph(1.0), None, mesh)
        d = dm.vertex_dof["v0"]
        assert A.toarray()[d, d] == pytest.approx(A0.toarray()[d, d] + alpha)


class TestAnalyticCases:
    def test_neumann_interval(self):
        g = interval_graph(1.0)
        res = solve_spectrum(g, k=3)
        assert abs(res.eigenvalues[0]) < 1e-9
        assert res.eigenvalues[1] == pytest.approx(PI2, rel=1e-8)
        assert res.eigenvalues[2] == pytest.approx(4 * PI2, rel=1e-7)

    def test_mixed_dirichlet_interval(self):
        g = interval_graph(1.0, conditions={"v1": VertexCondition.dirichlet()})
        res = solve_spectrum(g, k=2)
        assert res.eigenvalues[0] == pytest.approx(PI2 / 4, rel=1e-8)
        assert res.eigenvalues[1] == pytest.approx(9 * PI2 / 4, rel=1e-7)

    def test_sparse_path_matches_dense(self):
        # above the dense cutoff the solver switches to shift-invert Lanczos
        g = interval_graph(1.0)
        mesh = Mesh({"e0": np.linspace(0.0, 1.0, 4001)})
        w = lowest_eigenvalues(g, k=3, mesh=mesh, richardson=False)
        assert w[1] == pytest.approx(PI2, rel=1e-6)
        assert w[2] == pytest.approx(4 * PI2, rel=1e-6)

    def test_convergence_order_two(self):
        g = interval_graph(1.0)
        errs = []
        for n in (16, 32):
            mesh = Mesh({"e0": np.linspace(0, 1, n + 1)})
            w = lowest_eigenvalues(g, k=2, mesh=mesh, richardson=False)
            errs.append(abs(w[1] - PI2))
        order = math.log2(errs[0] / errs[1])
        assert order == pytest.approx(2.0, abs=0.2)

    def test_star124_second_eigenvalue(self):
        g = star124()
        root = star_secular_root([1.0, 2.0, 4.0])
        res = solve_spectrum(g, k=2)
        assert res.eigenvalues[1] == pytest.approx(root.eigenvalue, rel=1e-8)

    def test_equilateral_star_multiplicity_two(self):
        g = star_graph([1.0, 1.0, 1.0])
        res = solve_spectrum(g, k=4)
        assert res.eigenvalues[1] == pytest.approx(PI2 / 4, rel=1e-7)
        assert res.eigenvalues[2] == pytest.approx(PI2 / 4, rel=1e-7)
        assert res.multiplicity(1) == 2
        # both cluster eigenfunctions vanish at the center
        for n in (1, 2):
            assert abs(res.vertex_value(n, "v0")) < 1e-6


class TestSecularOracle:
    def test_long_edge_star(self):
        root = star_secular_root([1.0, 2.0, 4.0])
        assert root.k == pytest.approx(0.502642, abs=1e-5)
        assert not root.degenerate
        f = math.tan(root.k) + math.tan(2 * root.k) + math.tan(4 * root.k)
        assert abs(f) < 1e-10

    def test_two_arms_is_interval(self):
        root = star_secular_root([1.0, 1.0])
        assert root.k == pytest.approx(math.pi / 2, rel=1e-12)
        assert root.degenerate
        assert root.eigenvalue == pytest.approx(PI2 / 4)

    def test_equilateral_degenerate_branch(self):
        root = star_secular_root([1.0, 1.0, 1.0])
        assert root.k == pytest.approx(math.pi / 2, rel=1e-12)
        assert root.degenerate
        assert root.multiplicity == 2

    def test_against_fem_on_random_stars(self, rng):
        for _ in range(5):
            lengths = [float(x) for x in rng.uniform(0.5, 2.5, size=3)]
            root = star_secular_root(lengths)
            g = star_graph(lengths)
            w = lowest_eigenvalues(g, k=2, richardson=True)
            assert w[1] == pytest.approx(root.eigenvalue, rel=1e-7)


class TestGap:
    def test_interval_gap(self):
        g = interval_graph(1.0)
        assert fundamental_gap(g) == pytest.approx(PI2, rel=1e-8)

    def test_shift_invariance(self):
        g = star124()
        q = Potential.constant(g, 0.0)
        mesh = Mesh.build(g, q)
        for c in (-3.0, 1.5, 10.0):
            g1 = fundamental_gap(g, q, mesh=mesh, richardson=False)
            g2 = fundamental_gap(g, q.shift(c), mesh=mesh, richardson=False)
            assert abs(g1 - g2) <= 1e-10 * (1 + abs(c))

    def test_monotonicity_and_lipschitz(self, rng):
        g = star124()
        q = Potential.zero(g)
        P = indicator(g, ("e4", 1.0, 3.0), height=1.0)
        mesh = Mesh.build(g, q, extra={"e4": [1.0, 3.0]})
        w0 = lowest_eigenvalues(g, q, k=2, mesh=mesh)
        for h in (0.5, 2.0):
            wh = lowest_eigenvalues(g, q.plus_scaled(P, h), k=2, mesh=mesh)
            assert np.all(wh >= w0 - 1e-10)
            assert np.all(np.abs(wh - w0) <= h + 1e-9)

    def test_dummy_vertex_invariance(self):
        g = star124()
        w0 = lowest_eigenvalues(g, k=3, richardson=True)
        split = g.insert_point_vertex(PointOnGraph("e4", 1.3))
        w1 = lowest_eigenvalues(split.graph, k=3, richardson=True)
        assert np.allclose(w0, w1, rtol=1e-7, atol=1e-9)

    def test_orthonormality_residual(self):
        g = star124()
        res = solve_spectrum(g, k=4)
        assert res.orthonormality_residual <= 1e-8

    def test_sign_conventions_deterministic(self):
        g = star124()
        res = solve_spectrum(g, k=2)
        # u1 positive, u2 nonnegative at the lowest-indexed leaf (v1)
        assert res.vertex_value(0, "v0") > 0
        assert res.vertex_value(1, "v1") >= 0

    def test_ground_state_positive(self, rng):
        for _ in range(5):
            g = random_tree(rng, max_edges=5)
            q = random_class_valid_potential(rng, g, 10.0)
            res = solve_spectrum(g, q, k=2, richardson=False)
            mins = min(np.min(res.funcs[e.id][0]) for e in g.edges)
            maxs = max(np.max(res.funcs[e.id][0]) for e in g.edges)
            assert mins > -1e-8 * maxs
            assert res.multiplicity(0) == 1


class TestDiagnostics:
    def test_interval_exactly_two_zeros(self):
        g = interval_graph(1.0)
        res = solve_spectrum(g, k=2)
        diag = eigen_diagnostics(res)
        ed = diag.edges[0]
        assert ed.zero_count == 2
        assert ed.u2_sign_changes == 1
        assert ed.zeros_per_component == (1, 1)
        assert ed.within_bound

    def test_star124_within_bound(self):
        res = solve_spectrum(star124(), k=2)
        diag = eigen_diagnostics(res)
        assert diag.all_within_bound
        assert diag.max_zeros_per_edge <= 2

    def test_random_single_well_trees_within_bound(self, rng):
        from conftest import random_single_well_potential
        for _ in range(10):
            g = random_tree(rng, max_edges=5)
            q = random_single_well_potential(rng, g, 10.0)
            res = solve_spectrum(g, q, k=2, richardson=False)
            diag = eigen_diagnostics(res)
            assert diag.all_within_bound

    def test_wronskian_monotone_on_interval(self):
        res = solve_spectrum(interval_graph(1.0), k=2)
        diag = eigen_diagnostics(res)
        assert diag.edges[0].wronskian_violations == 0.0


class TestSerialization:
    def test_result_dict_round_trippable(self):
        res = solve_spectrum(interval_graph(1.0), k=2, base=8, floor=8)
        d = res.to_dict()
        assert len(d["eigenvalues"]) == 2
        assert "e0" in d["functions"]
        assert d["mesh_sizes"]["e0"] == len(res.mesh.nodes["e0"])
