"""P1 finite elements for -u'' + q u on metric graphs.

Continuous piecewise-linear elements on each edge share their unknowns at
non-Dirichlet vertices, so Kirchhoff coupling comes out of the weak form;
a delta coupling adds alpha * u(v)^2 to the quadratic form and Dirichlet
vertices are eliminated.  The potential term is integrated exactly for
piecewise-linear q, and reported eigenvalues are Richardson-extrapolated
from one mesh halving by default.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.optimize import brentq

from .errors import BracketingFailure, MeshMisaligned, SolverFailure
from .graphs import MetricGraph
from .potentials import Potential, _merge_knots

DEFAULT_MULTIPLICITY_RTOL = 1e-6
_DENSE_LIMIT = 3200


@dataclass(frozen=True)
class Mesh:
    """Per-edge node coordinates.

    Built meshes place nodes on potential breakpoints whenever that does not
    create elements much thinner than the local target width; near-coincident
    forced points are merged to keep the mesh quasi-uniform, which keeps the
    generalized eigensolve well conditioned (assembly stays exact either
    way, see ``assemble``).
    """

    nodes: Mapping[str, np.ndarray]

    @classmethod
    def build(cls, g: MetricGraph, q: Potential | None = None, base: int = 64,
              floor: int = 32, cap: int | None = None,
              extra: Mapping[str, Iterable[float]] | None = None,
              min_frac: float = 0.2) -> "Mesh":
        """Default mesh: about ``base`` elements per shortest-edge length,
        at least ``floor`` per edge, optionally capped, with nodes at
        potential breakpoints and extra points (merged when closer than
        ``min_frac`` of the local element width)."""
        min_len = min(e.length for e in g.edges)
        nodes = {}
        for e in g.edges:
            target = max(floor, math.ceil(base * e.length / min_len))
            if cap is not None:
                target = min(target, cap)
            forced = list((extra or {}).get(e.id, ()))
            if q is not None:
                forced.extend(q.profile(e.id).breaks)
            h_target = e.length / target
            knots = _thin_knots(_merge_knots(e.length, forced),
                                min_frac * h_target)
            xs = [0.0]
            for a, b in zip(knots, knots[1:]):
                m = max(1, round((b - a) / h_target) or 1)
                xs.extend(np.linspace(a, b, m + 1)[1:])
            nodes[e.id] = np.asarray(xs)
        return cls(nodes)

    def check_alignment(self, q: Potential, rtol: float = 1e-9) -> None:
        """Raise MeshMisaligned when a potential breakpoint misses every
        node of a caller-supplied mesh."""
        for eid, xs in self.nodes.items():
            prof = q.profile(eid)
            tol = rtol * max(1.0, prof.length)
            for b in prof.breaks:
                i = int(np.searchsorted(xs, b))
                near = min(abs(xs[min(i, len(xs) - 1)] - b),
                           abs(xs[max(i - 1, 0)] - b))
                if near > tol:
                    raise MeshMisaligned(
                        f"breakpoint {b} of edge {eid!r} is not a mesh node")

    def refined(self, factor: int = 2) -> "Mesh":
        """Subdivide every element ``factor`` times (nested refinement)."""
        out = {}
        for eid, xs in self.nodes.items():
            new = [xs[0]]
            for a, b in zip(xs, xs[1:]):
                new.extend(np.linspace(a, b, factor + 1)[1:])
            out[eid] = np.asarray(new)
        return Mesh(out)

    def size(self) -> int:
        return sum(len(xs) for xs in self.nodes.values())


def _thin_knots(knots: list[float], min_gap: float) -> list[float]:
    """Drop interior knots closer than min_gap to the previous kept one or
    to the final endpoint (endpoints always kept)."""
    if len(knots) <= 2:
        return knots
    out = [knots[0]]
    for k in knots[1:-1]:
        if k - out[-1] >= min_gap and knots[-1] - k >= min_gap:
            out.append(k)
    out.append(knots[-1])
    return out


@dataclass(frozen=True)
class DofMap:
    vertex_dof: Mapping[str, int]          # -1 for Dirichlet vertices
    edge_dofs: Mapping[str, np.ndarray]    # global dof per mesh node, -1 = eliminated
    size: int


def _build_dofmap(g: MetricGraph, mesh: Mesh) -> DofMap:
    vertex_dof = {}
    n = 0
    for v in g.vertices:
        if g.condition(v).is_dirichlet:
            vertex_dof[v] = -1
        else:
            vertex_dof[v] = n
            n += 1
    edge_dofs = {}
    for e in g.edges:
        xs = mesh.nodes[e.id]
        dofs = np.empty(len(xs), dtype=int)
        dofs[0] = vertex_dof[e.src]
        dofs[-1] = vertex_dof[e.dst]
        m = len(xs) - 2
        dofs[1:-1] = np.arange(n, n + m)
        n += m
        edge_dofs[e.id] = dofs
    return DofMap(vertex_dof, edge_dofs, n)


_GAUSS2 = (-1.0 / math.sqrt(3.0), 1.0 / math.sqrt(3.0))


def _element_potential(prof, a: float, b: float):
    """Exact integrals of q * phi_i * phi_j over the element [a, b] for the
    linear hat functions on [a, b].

    q is piecewise linear, so the integrand is cubic on every piece overlap
    and two-point Gauss per overlap integrates it exactly; breakpoints
    strictly inside the element cost no accuracy.
    """
    h = b - a
    v00 = v01 = v11 = 0.0
    for c0, c1, q0, q1 in prof.piece_overlaps(a, b):
        half = 0.5 * (c1 - c0)
        mid = 0.5 * (c0 + c1)
        for t in _GAUSS2:
            x = mid + half * t
            qx = q0 + (q1 - q0) * (x - c0) / (c1 - c0)
            pl = (b - x) / h
            pr = (x - a) / h
            w = half  # Gauss weight 1 on [-1, 1], scaled by half-length
            v00 += w * qx * pl * pl
            v01 += w * qx * pl * pr
            v11 += w * qx * pr * pr
    return v00, v01, v11


def assemble(g: MetricGraph, q: Potential | None, mesh: Mesh,
             require_aligned: bool = False):
    """Stiffness-plus-potential matrix A and mass matrix B (CSR), with the
    dof map.  The potential term is integrated exactly for piecewise-linear
    q whether or not its breakpoints coincide with mesh nodes; pass
    ``require_aligned`` to insist on the node-per-breakpoint contract
    (raises MeshMisaligned)."""
    q = q if q is not None else Potential.zero(g)
    if require_aligned:
        mesh.check_alignment(q)
    dm = _build_dofmap(g, mesh)
    rows, cols, a_vals, b_vals = [], [], [], []

    def scatter(i, j, a, b):
        if i < 0 or j < 0:
            return
        rows.append(i)
        cols.append(j)
        a_vals.append(a)
        b_vals.append(b)

    for e in g.edges:
        xs = mesh.nodes[e.id]
        dofs = dm.edge_dofs[e.id]
        prof = q.profile(e.id)
        trivial = (len(prof.breaks) == 2 and prof.incoming[0] == 0.0
                   and prof.incoming[1] == 0.0 and prof.outgoing[0] == 0.0)
        for i in range(len(xs) - 1):
            h = xs[i + 1] - xs[i]
            k = 1.0 / h
            m = h / 6.0
            if trivial:
                v00 = v01 = v11 = 0.0
            else:
                v00, v01, v11 = _element_potential(prof, xs[i], xs[i + 1])
            loc_a = ((k + v00, -k + v01), (-k + v01, k + v11))
            loc_b = ((2 * m, m), (m, 2 * m))
            for p in range(2):
                for r in range(2):
                    scatter(dofs[i + p], dofs[i + r], loc_a[p][r], loc_b[p][r])
    for v in g.vertices:
        cond = g.condition(v)
        alpha = cond.coupling()
        if alpha != 0.0 and dm.vertex_dof[v] >= 0:
            i = dm.vertex_dof[v]
            rows.append(i)
            cols.append(i)
            a_vals.append(alpha)
            b_vals.append(0.0)
    shape = (dm.size, dm.size)
    A = scipy.sparse.coo_matrix((a_vals, (rows, cols)), shape=shape).tocsr()
    B = scipy.sparse.coo_matrix((b_vals, (rows, cols)), shape=shape).tocsr()
    return A, B, dm


def _lowest_pairs(A, B, k: int, q_min: float, want_vectors: bool):
    n = A.shape[0]
    k = min(k, n)
    try:
        if n <= _DENSE_LIMIT:
            Ad = A.toarray()
            Bd = B.toarray()
            if want_vectors:
                w, V = scipy.linalg.eigh(Ad, Bd, subset_by_index=[0, k - 1])
                return w, V
            w = scipy.linalg.eigh(Ad, Bd, eigvals_only=True,
                                  subset_by_index=[0, k - 1])
            return w, None
        sigma = min(0.0, q_min) - 1.0
        w, V = scipy.sparse.linalg.eigsh(A, k=k, M=B, sigma=sigma, which="LM")
        order = np.argsort(w)
        return w[order], (V[:, order] if want_vectors else None)
    except (scipy.linalg.LinAlgError,
            scipy.sparse.linalg.ArpackNoConvergence) as exc:
        residual = getattr(exc, "eigenvalues", None)
        raise SolverFailure(f"eigenvalue solve failed: {exc}", residual) from exc


@dataclass
class SpectrumResult:
    """Lowest eigenpairs of -u'' + q u on a metric graph.

    ``eigenvalues`` are Richardson-extrapolated when available; the nodal
    eigenfunction data lives on the finest mesh solved.  Functions are
    B-orthonormal, the ground state is sign-fixed positive and the higher
    states are fixed by their value at the lowest-indexed leaf.
    """

    graph: MetricGraph
    q: Potential
    eigenvalues: np.ndarray
    err_est: np.ndarray
    mesh: Mesh
    funcs: Mapping[str, np.ndarray]        # edge id -> (k, n_nodes) nodal values
    multiplicity_tol: float = DEFAULT_MULTIPLICITY_RTOL
    raw_coarse: np.ndarray | None = None
    raw_fine: np.ndarray | None = None
    orthonormality_residual: float = 0.0

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    def gap(self) -> float:
        return float(self.eigenvalues[1] - self.eigenvalues[0])

    def edge_values(self, n: int, eid: str) -> tuple[np.ndarray, np.ndarray]:
        return self.mesh.nodes[eid], self.funcs[eid][n]

    def vertex_value(self, n: int, v: str) -> float:
        for e in self.graph.edges:
            if e.src == v:
                return float(self.funcs[e.id][n][0])
            if e.dst == v:
                return float(self.funcs[e.id][n][-1])
        raise ValueError(f"vertex {v!r} not found")

    def cluster(self, index: int) -> list[int]:
        """Indices of eigenvalues in the multiplicity cluster containing
        ``index`` (chained relative closeness)."""
        lam = self.eigenvalues
        tol = self.multiplicity_tol
        lo = index
        while lo > 0 and abs(lam[lo] - lam[lo - 1]) <= tol * (1.0 + abs(lam[lo])):
            lo -= 1
        hi = index
        while hi + 1 < len(lam) and abs(lam[hi + 1] - lam[hi]) <= tol * (1.0 + abs(lam[hi])):
            hi += 1
        return list(range(lo, hi + 1))

    def multiplicity(self, index: int) -> int:
        return len(self.cluster(index))

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "error_estimates": [float(x) for x in self.err_est],
            "multiplicity_tol": self.multiplicity_tol,
            "mesh_sizes": {eid: len(xs) for eid, xs in self.mesh.nodes.items()},
            "orthonormality_residual": self.orthonormality_residual,
            "functions": {
                eid: {"x": [float(v) for v in self.mesh.nodes[eid]],
                      "values": [[float(v) for v in row] for row in self.funcs[eid]]}
                for eid in sorted(self.funcs)
            },
        }


def _extract_funcs(g, mesh, dm, V):
    funcs = {}
    kcount = V.shape[1]
    for e in g.edges:
        dofs = dm.edge_dofs[e.id]
        vals = np.zeros((kcount, len(dofs)))
        mask = dofs >= 0
        vals[:, mask] = V[dofs[mask], :].T
        funcs[e.id] = vals
    return funcs


def _fix_signs(g: MetricGraph, funcs: Mapping[str, np.ndarray], mesh: Mesh) -> None:
    kcount = next(iter(funcs.values())).shape[0]
    # ground state: positive total mass
    mass = 0.0
    for eid, vals in funcs.items():
        xs = mesh.nodes[eid]
        mass += 0.5 * float(np.sum((vals[0][:-1] + vals[0][1:]) * np.diff(xs)))
    if mass < 0:
        for vals in funcs.values():
            vals[0] *= -1.0
    leaves = sorted(g.leaves())
    sup = {n: max(np.max(np.abs(vals[n])) for vals in funcs.values())
           for n in range(1, kcount)}
    for n in range(1, kcount):
        flip = None
        for leaf in leaves:
            for e in g.edges:
                if e.src == leaf or e.dst == leaf:
                    v = funcs[e.id][n][0 if e.src == leaf else -1]
                    if abs(v) > 1e-8 * (sup[n] or 1.0):
                        flip = v < 0
                    break
            if flip is not None:
                break
        if flip is None:
            for eid in sorted(funcs):
                row = funcs[eid][n]
                idx = np.argmax(np.abs(row))
                if abs(row[idx]) > 0:
                    flip = row[idx] < 0
                    break
        if flip:
            for vals in funcs.values():
                vals[n] *= -1.0


def solve_spectrum(g: MetricGraph, q: Potential | None = None, k: int = 6,
                   mesh: Mesh | None = None, richardson: bool = True,
                   base: int = 64, floor: int = 32, cap: int | None = None,
                   multiplicity_tol: float = DEFAULT_MULTIPLICITY_RTOL) -> SpectrumResult:
    """Lowest k eigenpairs of the operator on g with potential q."""
    q = q if q is not None else Potential.zero(g)
    if mesh is None:
        mesh = Mesh.build(g, q, base=base, floor=floor, cap=cap)
    q_min = q.min_max()[0]
    A1, B1, dm1 = assemble(g, q, mesh)
    if richardson:
        w1 = _lowest_pairs(A1, B1, k, q_min, want_vectors=False)[0]
        fine = mesh.refined()
        A2, B2, dm2 = assemble(g, q, fine)
        w2, V2 = _lowest_pairs(A2, B2, k, q_min, want_vectors=True)
        kk = min(len(w1), len(w2))
        lam = (4.0 * w2[:kk] - w1[:kk]) / 3.0
        err = np.abs(w2[:kk] - w1[:kk]) / 3.0
        order = np.argsort(lam)
        lam, err = lam[order], err[order]
        V2 = V2[:, order]
        funcs = _extract_funcs(g, fine, dm2, V2)
        resid = _orthonormality_residual(B2, V2)
        _fix_signs(g, funcs, fine)
        return SpectrumResult(g, q, lam, err, fine, funcs, multiplicity_tol,
                              raw_coarse=w1[:kk], raw_fine=w2[:kk],
                              orthonormality_residual=resid)
    w1, V1 = _lowest_pairs(A1, B1, k, q_min, want_vectors=True)
    funcs = _extract_funcs(g, mesh, dm1, V1)
    resid = _orthonormality_residual(B1, V1)
    _fix_signs(g, funcs, mesh)
    err = np.full(len(w1), np.nan)
    return SpectrumResult(g, q, w1, err, mesh, funcs, multiplicity_tol,
                          raw_fine=w1, orthonormality_residual=resid)


def _orthonormality_residual(B, V) -> float:
    GTV = V.T @ (B @ V)
    return float(np.max(np.abs(GTV - np.eye(V.shape[1]))))


def lowest_eigenvalues(g: MetricGraph, q: Potential | None = None, k: int = 3,
                       mesh: Mesh | None = None, richardson: bool = False,
                       base: int = 64, floor: int = 32,
                       cap: int | None = None) -> np.ndarray:
    """Eigenvalues only; the cheap path for sweeps and optimization."""
    q = q if q is not None else Potential.zero(g)
    if mesh is None:
        mesh = Mesh.build(g, q, base=base, floor=floor, cap=cap)
    q_min = q.min_max()[0]
    A, B, _ = assemble(g, q, mesh)
    w = _lowest_pairs(A, B, k, q_min, want_vectors=False)[0]
    if not richardson:
        return w
    A2, B2, _ = assemble(g, q, mesh.refined())
    w2 = _lowest_pairs(A2, B2, k, q_min, want_vectors=False)[0]
    kk = min(len(w), len(w2))
    return np.sort((4.0 * w2[:kk] - w[:kk]) / 3.0)


def fundamental_gap(g: MetricGraph, q: Potential | None = None,
                    mesh: Mesh | None = None, richardson: bool = True,
                    **mesh_opts) -> float:
    """The fundamental gap lambda_2 - lambda_1."""
    w = lowest_eigenvalues(g, q, k=2, mesh=mesh, richardson=richardson, **mesh_opts)
    return float(w[1] - w[0])


# -- secular oracle for free star graphs ------------------------------------------


@dataclass(frozen=True)
class SecularRoot:
    k: float
    degenerate: bool        # True when found on a shared tangent pole
    multiplicity: int

    @property
    def eigenvalue(self) -> float:
        return self.k * self.k


def star_secular_root(lengths: Sequence[float], pole_rtol: float = 1e-11) -> SecularRoot:
    """Smallest positive k solving the free star's vertex-determinant
    condition: either sum_i tan(k l_i) = 0 between tangent poles, or a pole
    shared by at least two arms (center-zero modes).  lambda_2 = k^2."""
    ls = [float(l) for l in lengths]
    if not ls or any(l <= 0 for l in ls):
        raise ValueError("need positive arm lengths")

    def poles_upto(kmax: float) -> list[float]:
        out = []
        for l in ls:
            j = 0
            while True:
                p = (math.pi / 2 + j * math.pi) / l
                if p > kmax:
                    break
                out.append(p)
                j += 1
        return sorted(out)

    def f(k: float) -> float:
        return sum(math.tan(k * l) for l in ls)

    kmax = 2.0 * math.pi / min(ls)
    for _ in range(40):
        poles = poles_upto(kmax)
        if len(poles) >= 2:
            # shared pole = degenerate center-zero branch
            scale = poles[0]
            shared = None
            i = 0
            while i < len(poles):
                j = i
                while j + 1 < len(poles) and poles[j + 1] - poles[i] <= pole_rtol * scale:
                    j += 1
                if j > i:
                    shared = (poles[i], j - i + 1)
                    break
                i = j + 1
            merged = [poles[0]]
            for p in poles[1:]:
                if p - merged[-1] > pole_rtol * scale:
                    merged.append(p)
            for a, b in zip(merged, merged[1:]):
                if shared is not None and shared[0] < a:
                    break
                eps = 1e-9 * (b - a)
                lo, hi = a + eps, b - eps
                flo, fhi = f(lo), f(hi)
                tries = 0
                while flo > 0 and tries < 30:
                    lo = a + (lo - a) / 8.0
                    flo = f(lo)
                    tries += 1
                while fhi < 0 and tries < 60:
                    hi = b - (b - hi) / 8.0
                    fhi = f(hi)
                    tries += 1
                if flo < 0 < fhi:
                    root = brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)
                    if shared is not None and shared[0] <= root:
                        return SecularRoot(shared[0], True, shared[1] - 1)
                    return SecularRoot(root, False, 1)
            if shared is not None:
                return SecularRoot(shared[0], True, shared[1] - 1)
        kmax *= 2.0
    raise BracketingFailure("no secular root found in the scanned range")


# -- eigenfunction diagnostics ------------------------------------------------------


@dataclass(frozen=True)
class EdgeDiagnostics:
    edge: str
    zero_count: int                       # sign changes of u2^2 - u1^2 on the edge
    zeros_per_component: tuple[int, ...]  # same, split by sign-components of u2
    u2_sign_changes: int
    wronskian_violations: float           # fraction of non-monotone steps
    within_bound: bool                    # every component has <= 2 zeros


@dataclass(frozen=True)
class DiagnosticsReport:
    edges: tuple[EdgeDiagnostics, ...]

    @property
    def all_within_bound(self) -> bool:
        return all(e.within_bound for e in self.edges)

    @property
    def max_zeros_per_edge(self) -> int:
        return max((e.zero_count for e in self.edges), default=0)


def eigen_diagnostics(res: SpectrumResult, n: int = 1,
                      zero_rtol: float = 1e-7) -> DiagnosticsReport:
    """Nodal-count diagnostics for u_{n+1}^2 - u_1^2 (default: the second
    eigenfunction), per edge and per sign-component of u_{n+1}."""
    g = res.graph
    out = []
    sup = max(np.max(np.abs(vals[n])) for vals in res.funcs.values())
    ztol = zero_rtol * (sup or 1.0)
    for e in g.edges:
        u1 = res.funcs[e.id][0]
        u2 = res.funcs[e.id][n]
        d = u2 * u2 - u1 * u1
        signs = np.where(np.abs(u2) <= ztol, 0, np.sign(u2)).astype(int)
        zero_count = int(np.sum(d[:-1] * d[1:] < 0))
        comps = []
        start = None
        cur = 0
        for i, s in enumerate(list(signs) + [0]):
            if start is None:
                if s != 0:
                    start, cur = i, s
            elif s != cur:
                comps.append((start, i - 1))
                start, cur = (i, s) if s != 0 else (None, 0)
        zpc = []
        viol = 0
        steps = 0
        lam1, lam2 = res.eigenvalues[0], res.eigenvalues[n]
        xs = res.mesh.nodes[e.id]
        for a, b in comps:
            seg = slice(a, b + 1)
            dd = d[seg]
            zpc.append(int(np.sum(dd[:-1] * dd[1:] < 0)))
            if b > a:
                h = np.diff(xs[seg])
                du1 = np.diff(u1[seg]) / h
                du2 = np.diff(u2[seg]) / h
                m1 = 0.5 * (u1[seg][:-1] + u1[seg][1:])
                m2 = 0.5 * (u2[seg][:-1] + u2[seg][1:])
                W = m1 * du2 - m2 * du1
                expected = -np.sign(m2)  # W' = (lam1-lam2) u1 u2
                dw = np.diff(W)
                steps += len(dw)
                wt = 1e-9 * (np.max(np.abs(W)) + 1.0)
                viol += int(np.sum(dw * expected[:-1] < -wt))
        nz = signs[signs != 0]
        sign_changes = int(np.sum(nz[:-1] != nz[1:])) if len(nz) else 0
        out.append(EdgeDiagnostics(
            e.id, zero_count, tuple(zpc), sign_changes,
            (viol / steps) if steps else 0.0,
            all(z <= 2 for z in zpc),
        ))
    return DiagnosticsReport(tuple(out))
