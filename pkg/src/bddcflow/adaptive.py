"""Adaptive flux constraints from pair generalized eigenproblems.

For each adjacent subdomain pair the jump-energy quadratic form is
compared against the pair Schur energy on the subspace satisfying the
current constraints; eigenvectors above the target condition number tau
are turned into new constraint rows.  A multiscale baseline derives face
rows from pair-local Darcy solves instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (InternalConsistencyError, InvalidArgumentError,
                     NumericalFailureError)
from .grid import flux_matrix

_DEFLATION_TOL = 1e-12
_ZERO_ROW_TOL = 1e-10


@dataclass
class PairProblem:
    i: int
    j: int
    dofs_i: np.ndarray
    dofs_j: np.ndarray
    shared: np.ndarray       # global dofs of the shared face, sorted
    pos_i: np.ndarray        # pair-vector slots of shared dofs (i block)
    pos_j: np.ndarray
    S: np.ndarray
    E: np.ndarray
    Pi: np.ndarray

    @property
    def size(self):
        return len(self.dofs_i) + len(self.dofs_j)


@dataclass
class PairEigenReport:
    i: int
    j: int
    eigenvalues: np.ndarray   # descending, clipped at 0
    eigenvectors: np.ndarray  # pair coordinates, one column per eigenvalue
    jump_form: np.ndarray = field(repr=False, default=None)
    problem: PairProblem = field(repr=False, default=None)
    selected: int = 0

    def omega(self, tau):
        """lambda_{k+1} for the minimal k with lambda_{k+1} <= tau."""
        lam = self.eigenvalues
        below = lam[lam <= tau]
        return float(max(below[0], 1.0)) if len(below) else 1.0


def build_pair(setup, i, j):
    """Assemble the dense pair problem for adjacent subdomains i < j."""
    dec = setup.dec
    key = (min(i, j), max(i, j))
    if key not in dec.faces:
        raise InvalidArgumentError(f"subdomains {i} and {j} share no face")
    i, j = key
    di, dj = dec.gamma_dofs[i], dec.gamma_dofs[j]
    shared = np.intersect1d(di, dj, assume_unique=True)
    ni = len(di)
    pos_i = dec.gamma_index(i, shared)
    pos_j = ni + dec.gamma_index(j, shared)
    n = ni + len(dj)

    S = np.zeros((n, n))
    S[:ni, :ni] = setup.subs[i].schur_dense()
    S[ni:, ni:] = setup.subs[j].schur_dense()

    E = np.eye(n)
    wi = setup.weights.weight(i, shared)
    wj = setup.weights.weight(j, shared)
    for a, b, d_i, d_j in zip(pos_i, pos_j, wi, wj):
        row = np.zeros(n)
        row[a], row[b] = d_i, d_j
        E[a] = row
        E[b] = row

    # one row per coarse dof: the signed rows of both sides combine into
    # the continuity functional the pair must satisfy
    by_dof = {}
    for s, row in setup.cset.rows_for_face(i, j):
        emb = by_dof.setdefault(row.coarse_dof, np.zeros(n))
        block = slice(0, ni) if s == i else slice(ni, n)
        emb[block] += row.values
    C = (np.array([by_dof[g] for g in sorted(by_dof)])
         if by_dof else np.zeros((0, n)))
    Pi = _null_projector(C)
    return PairProblem(i, j, di, dj, shared, pos_i, pos_j, S, E, Pi)


def _null_projector(C):
    n = C.shape[1]
    if C.shape[0] == 0:
        return np.eye(n)
    q, r, _ = sla.qr(C.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int((diag > _ZERO_ROW_TOL * max(diag[0], 1e-300)).sum())
    Q = q[:, :rank]
    return np.eye(n) - Q @ Q.T


def pair_eig(problem, deflation_tol=_DEFLATION_TOL):
    """Solve Pi (I-E)^T S (I-E) Pi w = lambda Pi S Pi w densely."""
    IE = np.eye(problem.size) - problem.E
    Pi, S = problem.Pi, problem.S
    L = Pi @ IE.T @ S @ IE @ Pi
    R = Pi @ S @ Pi
    L = 0.5 * (L + L.T)
    R = 0.5 * (R + R.T)
    try:
        sig, V = sla.eigh(R)
    except sla.LinAlgError as exc:
        raise NumericalFailureError(
            f"pair eigensolver failed on ({problem.i},{problem.j}): {exc}",
            where=(problem.i, problem.j)) from exc
    keep = sig > deflation_tol * max(sig[-1], 0.0)
    if not keep.any():
        return PairEigenReport(problem.i, problem.j, np.zeros(0),
                               np.zeros((problem.size, 0)), L, problem)
    X = V[:, keep] / np.sqrt(sig[keep])
    T = X.T @ L @ X
    lam, Y = sla.eigh(0.5 * (T + T.T))
    order = np.argsort(lam)[::-1]
    lam = np.clip(lam[order], 0.0, None)
    W = X @ Y[:, order]
    return PairEigenReport(problem.i, problem.j, lam, W, L, problem)


def select_constraints(setup, report, tau):
    """Harvest rows for eigenvalues above tau and append them paired.

    Rows are split into their +-halves on the shared face, normalized to
    unit max entry, and dropped when linearly dependent on existing rows.
    """
    if not tau > 1.0:
        raise InvalidArgumentError("tau must exceed 1")
    prob = report.problem
    lam = report.eigenvalues
    k = int((lam > tau).sum())
    report.selected = k
    added = 0
    for ell in range(k):
        c = report.jump_form @ report.eigenvectors[:, ell]
        scale = np.abs(c).max()
        if scale == 0.0:
            continue
        mask = np.ones(len(c), dtype=bool)
        mask[prob.pos_i] = False
        mask[prob.pos_j] = False
        if np.abs(c[mask]).max(initial=0.0) > _ZERO_ROW_TOL * scale:
            raise InternalConsistencyError(
                f"pair ({prob.i},{prob.j}) row {ell} has support off the "
                "shared face")
        ci, cj = c[prob.pos_i], c[prob.pos_j]
        if np.abs(ci + cj).max() > 1e-8 * scale:
            raise InternalConsistencyError(
                f"pair ({prob.i},{prob.j}) row {ell} is not antisymmetric")
        ci = ci / np.abs(ci).max()
        if setup.cset.add_pair(prob.i, prob.j, prob.shared, ci, "adaptive"):
            added += 1
    return added


def solve_all_pairs(setup):
    """Eigensolve every adjacent pair against the current constraints."""
    reports = {}
    for (i, j) in setup.dec.adjacent_pairs():
        reports[(i, j)] = pair_eig(build_pair(setup, i, j))
    return reports


def select_all(setup, tau):
    total = 0
    for key in sorted(setup.pair_reports):
        total += select_constraints(setup, setup.pair_reports[key], tau)
    return total


def indicator(reports, tau):
    """Heuristic condition number indicator over all pairs, floored at 1."""
    if not reports:
        return 1.0
    return max(r.omega(tau) for r in reports.values())


def verify_pair_bound(setup, i, j):
    """Largest eigenvalue of the pair problem with the current constraints.

    Re-solves the eigenproblem after augmentation; used to verify that the
    selection drove the pair bound below tau.
    """
    rep = pair_eig(build_pair(setup, i, j))
    return float(rep.eigenvalues[0]) if len(rep.eigenvalues) else 0.0


def multiscale_constraints(setup, i, j):
    """Face rows from a pair-local Darcy solve with unit source transfer.

    The source puts +1 total on subdomain i and -1 on subdomain j
    (distributed uniformly, or following the well distribution in well
    subdomains); the flux trace on the shared face becomes one row per
    face component, oriented outward from i.
    """
    dec = setup.dec
    system = setup.system
    grid = system.grid
    i, j = min(i, j), max(i, j)
    cells = np.concatenate([dec.cells[i], dec.cells[j]])
    cell_pos = {c: n for n, c in enumerate(cells)}

    # pair-interior dofs: faces whose two neighbor cells both lie in the pair
    fc = grid.face_cells[grid.dof_face]
    inside = np.isin(fc[:, 0], cells) & np.isin(fc[:, 1], cells)
    dofs = np.flatnonzero(inside)
    dof_pos = {d: n for n, d in enumerate(dofs)}

    A = flux_matrix(grid, system.perm, cells, dofs=dofs,
                    lumped=system.lumped)
    B = system.B[cells][:, dofs].tocsr()

    f_loc = np.zeros(len(cells))
    for sub_id, sign in ((i, -1.0), (j, 1.0)):
        # f_cell = -integral of the source density over the cell
        sub_cells = dec.cells[sub_id]
        well = system.f[sub_cells]
        if abs(well.sum()) > 1e-14:
            dist = well / well.sum()
        else:
            dist = np.full(len(sub_cells), 1.0 / len(sub_cells))
        for c, v in zip(sub_cells, dist):
            f_loc[cell_pos[c]] = sign * v
    if abs(f_loc.sum()) > 1e-12:
        raise InternalConsistencyError("pair-local source is incompatible")

    d = A.diagonal().mean()
    K = sp.bmat([[A, d * B.T], [d * B, None]], format="csc")
    n_u = len(dofs)
    keep = np.ones(K.shape[0], dtype=bool)
    keep[n_u] = False   # pin one pressure
    rhs = np.concatenate([np.zeros(n_u), d * f_loc])
    sol = np.zeros(K.shape[0])
    sol[keep] = spla.spsolve(K[keep][:, keep].tocsc(), rhs[keep])
    u = sol[:n_u]

    added = 0
    for comp in dec.faces[(i, j)]:
        vals = comp.sign_i * u[[dof_pos[d_] for d_ in comp.dofs]]
        if setup.cset.add_pair(i, j, comp.dofs, vals, "multiscale"):
            added += 1
    return added


def add_multiscale_constraints(setup):
    total = 0
    for (i, j) in setup.dec.adjacent_pairs():
        total += multiscale_constraints(setup, i, j)
    return total
