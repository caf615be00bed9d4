"""First-order gap derivatives under potential perturbations, including the
degenerate form, and non-optimality certificates built on them.

For a simple second eigenvalue the gap derivative along q + t P is the
integral of P (u_2^2 - u_1^2); for a degenerate second eigenvalue the right
object is the matrix of P (u_2^j u_2^k - u_1^2) integrals over the cluster,
whose eigenvalues are the one-sided derivatives of the competing branches.
Certificates never fire inside the numerical noise floor: a verdict needs
the value to clear a margin of ten times the estimated combined eigenpair
and quadrature error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRange, DegenerateSecond, NotInClass
from .graphs import MetricGraph
from .potentials import (
    AdmissibleRange,
    Potential,
    PotentialClass,
    admissible_range,
    check_class,
)
from .solver import Mesh, SpectrumResult, solve_spectrum

VERDICT_NOT_MINIMAL = "NotMinimal"
VERDICT_NOT_MAXIMAL = "NotMaximal"
VERDICT_INCONCLUSIVE = "Inconclusive"


def pair_integral(res: SpectrumResult, P: Potential, i: int, j: int) -> float:
    """Integral of P * u_i * u_j over the graph (Simpson per element; exact
    when P is linear inside every mesh element)."""
    total = 0.0
    for e in res.graph.edges:
        xs = res.mesh.nodes[e.id]
        ui = res.funcs[e.id][i]
        uj = res.funcs[e.id][j]
        prof = P.profile(e.id)
        a = xs[:-1]
        b = xs[1:]
        h = b - a
        mid = 0.5 * (a + b)
        pa = np.array([prof.eval(x) for x in a])
        pb = np.array([prof.eval_left(x) for x in b])
        pm = 0.5 * (pa + pb)
        fa = pa * ui[:-1] * uj[:-1]
        fb = pb * ui[1:] * uj[1:]
        um_i = 0.5 * (ui[:-1] + ui[1:])
        um_j = 0.5 * (uj[:-1] + uj[1:])
        fm = pm * um_i * um_j
        total += float(np.sum(h / 6.0 * (fa + 4.0 * fm + fb)))
    return total


def fh_integral(res: SpectrumResult, P: Potential) -> float:
    """First-order gap derivative along P for a simple second eigenvalue:
    the integral of P (u_2^2 - u_1^2).  Raises DegenerateSecond when the
    second eigenvalue sits in a multiplicity cluster."""
    if len(res.cluster(1)) > 1:
        raise DegenerateSecond(
            "second eigenvalue is degenerate; use fh_matrix instead")
    return pair_integral(res, P, 1, 1) - pair_integral(res, P, 0, 0)


def fh_matrix(res: SpectrumResult, P: Potential) -> tuple[np.ndarray, list[int]]:
    """First-order gap matrix over the second-eigenvalue cluster.

    The branch derivatives of the gap along q + t P are the eigenvalues of
    [int P u_2^j u_2^k] - (int P u_1^2) I: the ground-state term enters on
    the diagonal only (for a constant P both terms cancel and the matrix is
    zero, matching the gap's shift invariance).  Reduces to the scalar
    integral when the second eigenvalue is simple.
    """
    cl = res.cluster(1)
    base = pair_integral(res, P, 0, 0)
    n = len(cl)
    M = np.empty((n, n))
    for a in range(n):
        for b in range(a, n):
            val = pair_integral(res, P, cl[a], cl[b])
            M[a, b] = val - (base if a == b else 0.0)
            M[b, a] = M[a, b]
    return M, cl


@dataclass
class FHReport:
    """Outcome of a first-order optimality test for one direction P."""

    verdict: str
    integral: float | None            # scalar form when the cluster is simple
    matrix: np.ndarray
    matrix_eigenvalues: np.ndarray
    multiplicity: int
    admissible: AdmissibleRange | None
    margin: float
    error_estimate: float
    normalization: str = "unit-l2"
    direction: str = "min"
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "direction": self.direction,
            "integral": None if self.integral is None else float(self.integral),
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "matrix_eigenvalues": [float(v) for v in self.matrix_eigenvalues],
            "multiplicity": self.multiplicity,
            "admissible_range": None if self.admissible is None else
                [self.admissible.t_min, self.admissible.t_max],
            "margin": float(self.margin),
            "error_estimate": float(self.error_estimate),
            "normalization": self.normalization,
            "detail": self.detail,
        }


def _matrix_and_eigs(res: SpectrumResult, P: Potential):
    M, cl = fh_matrix(res, P)
    return M, np.sort(np.linalg.eigvalsh(0.5 * (M + M.T))), cl


def certify_non_optimal(g: MetricGraph, q: Potential, cls: PotentialClass,
                        P: Potential, direction: str = "min", k: int = 8,
                        mesh: Mesh | None = None, base: int = 64,
                        floor: int = 32, cap: int | None = None,
                        margin_factor: float = 10.0) -> FHReport:
    """First-order certificate that q is not a minimizer (or maximizer) of
    the gap in its class, using the direction P.

    The verdict is NotMinimal / NotMaximal only when the relevant matrix
    eigenvalue clears margin_factor times the estimated numerical error;
    anything smaller is Inconclusive, as is a direction with no admissible
    amplitude.
    """
    if not check_class(q, cls).accepted:
        raise NotInClass("candidate potential fails its class membership check")
    try:
        rng = admissible_range(q, P, cls)
    except DegenerateRange:
        empty = np.zeros((1, 1))
        return FHReport(VERDICT_INCONCLUSIVE, None, empty, np.zeros(1), 1, None,
                        margin=0.0, error_estimate=0.0, direction=direction,
                        detail="no admissible amplitude for this direction")
    extra = {e.id: P.profile(e.id).breaks for e in g.edges if e.id in P.profiles}
    if mesh is None:
        mesh = Mesh.build(g, q, base=base, floor=floor, cap=cap, extra=extra)
    res_c = solve_spectrum(g, q, k=k, mesh=mesh, richardson=False)
    res_f = solve_spectrum(g, q, k=k, mesh=mesh.refined(), richardson=False)
    M_c, eigs_c, _ = _matrix_and_eigs(res_c, P)
    M_f, eigs_f, cl = _matrix_and_eigs(res_f, P)
    if len(eigs_c) == len(eigs_f):
        err = float(np.max(np.abs(eigs_f - eigs_c)))
    else:
        err = float(np.max(np.abs(eigs_f)) + np.max(np.abs(eigs_c)))
    scale = 1.0 + float(np.max(np.abs(eigs_f)))
    margin = margin_factor * max(err, 1e-13 * scale)

    pos_adm = rng.t_max > 0.0
    neg_adm = rng.t_min < 0.0
    lo, hi = float(eigs_f[0]), float(eigs_f[-1])
    verdict = VERDICT_INCONCLUSIVE
    detail = ""
    if direction == "min":
        if pos_adm and lo < -margin:
            verdict = VERDICT_NOT_MINIMAL
            detail = "positively admissible direction with negative derivative"
        elif neg_adm and hi > margin:
            # -P is positively admissible and carries derivative -hi < 0
            verdict = VERDICT_NOT_MINIMAL
            detail = "reversed direction admissible with negative derivative"
    elif direction == "max":
        if pos_adm and lo > margin:
            verdict = VERDICT_NOT_MAXIMAL
            detail = "positively admissible direction with strictly positive matrix"
        elif neg_adm and hi < -margin:
            verdict = VERDICT_NOT_MAXIMAL
            detail = "reversed direction admissible with strictly positive matrix"
    else:
        raise ValueError("direction must be 'min' or 'max'")
    integral = float(M_f[0, 0]) if len(cl) == 1 else None
    return FHReport(verdict, integral, M_f, eigs_f, len(cl), rng, margin, err,
                    direction=direction, detail=detail)
