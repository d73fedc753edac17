"""Constraint matrices, coarse basis functions, and the coarse problem.

Flux coarse dofs pair one constraint row on subdomain i with its negative
on the adjacent subdomain j; the i-side (lower id) carries the +1
incidence.  The coarse saddle problem couples the Galerkin flux stiffness
with one pressure unknown per subdomain; the global pressure constant is
removed by pinning subdomain 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (ConfigurationError, ConstraintRankError,
                     NumericalFailureError)

_RANK_TOL = 1e-10


@dataclass
class ConstraintRow:
    subdomain: int
    values: np.ndarray        # dense over gamma_dofs[subdomain]
    face: tuple               # (i, j) pair the row lives on
    component: int
    origin: str               # initial | adaptive | multiscale
    coarse_dof: int = -1
    sign: float = 1.0


class ConstraintSet:
    """Per-subdomain flux constraint rows with global coarse-dof pairing."""

    def __init__(self, dec):
        self.dec = dec
        self.rows = [[] for _ in range(dec.n_subdomains)]
        self._basis = [None] * dec.n_subdomains   # orthonormal row spans
        self.n_flux_coarse = 0

    @property
    def n_coarse(self):
        """Flux coarse dofs plus one pressure constraint per subdomain."""
        return self.n_flux_coarse + self.dec.n_subdomains

    def matrix(self, i):
        rows = self.rows[i]
        n = len(self.dec.gamma_dofs[i])
        if not rows:
            return np.zeros((0, n))
        return np.array([r.values for r in rows])

    def rows_for_face(self, i, j):
        key = (min(i, j), max(i, j))
        return [(s, r) for s in (i, j) for r in self.rows[s] if r.face == key]

    def _independent(self, i, values):
        basis = self._basis[i]
        if basis is None or basis.shape[0] == 0:
            return np.linalg.norm(values) > 0
        resid = values - basis.T @ (basis @ values)
        return np.linalg.norm(resid) > _RANK_TOL * max(
            np.linalg.norm(values), 1.0)

    def _extend_basis(self, i, values):
        basis = self._basis[i]
        v = values.copy()
        if basis is not None and basis.shape[0]:
            v -= basis.T @ (basis @ v)
            v -= basis.T @ (basis @ v)   # second pass for orthogonality
        v /= np.linalg.norm(v)
        self._basis[i] = v[None, :] if basis is None else np.vstack([basis, v])

    def add_pair(self, i, j, dofs, values, origin, component=0):
        """Append a row +c to subdomain i and -c to j on shared dofs.

        Returns True if the pair was added, False if it was dropped as
        linearly dependent on existing rows.
        """
        lo, hi = min(i, j), max(i, j)
        full = {}
        for s in (i, j):
            v = np.zeros(len(self.dec.gamma_dofs[s]))
            v[self.dec.gamma_index(s, dofs)] = values if s == i else -values
            full[s] = v
        if not (self._independent(i, full[i])
                and self._independent(j, full[j])):
            return False
        g = self.n_flux_coarse
        self.n_flux_coarse += 1
        for s in (i, j):
            row = ConstraintRow(s, full[s], (lo, hi), component, origin,
                                coarse_dof=g, sign=1.0 if s == i else -1.0)
            self.rows[s].append(row)
            self._extend_basis(s, full[s])
        return True

    def check_rank(self):
        for i in range(self.dec.n_subdomains):
            C = self.matrix(i)
            if C.shape[0] and np.linalg.matrix_rank(C, tol=_RANK_TOL) < len(C):
                raise ConstraintRankError(
                    f"dependent constraint rows on subdomain {i}",
                    rows=self.rows[i])


def initial_constraints(dec):
    """Zero-net-flux rows, one per face component per side."""
    cset = ConstraintSet(dec)
    for (i, j) in dec.adjacent_pairs():
        for c, comp in enumerate(dec.faces[(i, j)]):
            cset.add_pair(i, j, comp.dofs, comp.sign_i, "initial",
                          component=c)
    return cset


class CoarseSpace:
    """Coarse basis functions and the factored coarse saddle problem."""

    def __init__(self, subdomains, cset):
        self.subs = subdomains
        self.cset = cset
        self.dec = cset.dec
        self._build()

    def _build(self):
        dec = self.dec
        n_flux = self.cset.n_flux_coarse
        N = dec.n_subdomains
        self.psi = []          # full local flux vectors, one column per row
        self._delta_lu = []    # constrained KKT factorizations
        S_pi = np.zeros((n_flux, n_flux))
        B0 = np.zeros((N, n_flux))
        for i, sub in enumerate(self.subs):
            C = self.cset.matrix(i)
            nc = C.shape[0]
            # constraint columns act on the interface slots of local dofs
            C_full = np.zeros((nc, sub.n_int + sub.n_gamma))
            C_full[:, sub.n_int:] = C
            if nc:
                K = sp.bmat([
                    [sub.A_loc, sub.B_loc.T,
                     sp.csr_matrix(C_full.T), None],
                    [sub.B_loc, None, None, sub.V.T],
                    [sp.csr_matrix(C_full), None, None, None],
                    [None, sub.V, None, None],
                ], format="csc")
            else:
                K = sp.bmat([
                    [sub.A_loc, sub.B_loc.T, None],
                    [sub.B_loc, None, sub.V.T],
                    [None, sub.V, None],
                ], format="csc")
            try:
                lu = spla.splu(K)
            except RuntimeError as exc:
                raise ConstraintRankError(
                    f"constrained KKT singular on subdomain {i}; "
                    f"check constraint rank: {exc}") from exc
            self._delta_lu.append(lu)
            n_u, n_p = sub.n_int + sub.n_gamma, sub.n_p
            psi = np.zeros((n_u, nc))
            for c in range(nc):
                rhs = np.zeros(K.shape[0])
                rhs[n_u + n_p + c] = 1.0
                sol = lu.solve(rhs)
                psi[:, c] = sol[:n_u]
            if nc and not np.allclose(C_full @ psi, np.eye(nc), atol=1e-9):
                raise NumericalFailureError(
                    f"coarse basis constraint residual on subdomain {i}",
                    where=i)
            self.psi.append(psi)
            if nc == 0:
                continue
            S_loc = psi.T @ (sub.A_loc @ psi)
            gdofs = np.array([r.coarse_dof for r in self.cset.rows[i]])
            signs = np.array([r.sign for r in self.cset.rows[i]])
            S_pi[np.ix_(gdofs, gdofs)] += (signs[:, None] * S_loc
                                           * signs[None, :])
            bloc = np.asarray((sub.B_loc @ psi).sum(axis=0)).ravel()
            B0[i, gdofs] += signs * bloc
        self.S_pi = S_pi
        self.B0 = B0
        K0 = np.zeros((n_flux + N, n_flux + N))
        K0[:n_flux, :n_flux] = S_pi
        K0[n_flux:, :n_flux] = B0
        K0[:n_flux, n_flux:] = B0.T
        keep = np.ones(n_flux + N, dtype=bool)
        keep[n_flux] = False        # pin subdomain 0 coarse pressure
        self._keep = keep
        try:
            self._lu = sla.lu_factor(K0[np.ix_(keep, keep)])
        except sla.LinAlgError as exc:
            raise ConfigurationError(
                f"coarse problem singular: {exc}") from exc
        piv_diag = np.abs(np.diag(self._lu[0]))
        if (not np.all(np.isfinite(piv_diag))
                or (len(piv_diag)
                    and piv_diag.min() < 1e-14 * max(piv_diag.max(), 1.0))):
            raise ConfigurationError(
                "coarse problem singular; initial constraints do not cover "
                "all faces")

    def solve(self, r_flux, r_q):
        """Solve [[S_pi, B0^T],[B0, 0]] (w, p0) = (r_flux, r_q)."""
        n_flux = self.cset.n_flux_coarse
        rhs = np.concatenate([r_flux, r_q])[self._keep]
        sol = sla.lu_solve(self._lu, rhs)
        full = np.zeros(n_flux + self.dec.n_subdomains)
        full[self._keep] = sol
        return full[:n_flux], full[n_flux:]

    def local_combination(self, i, x):
        """Local flux field of subdomain i for coarse coefficients x."""
        rows = self.cset.rows[i]
        if not rows:
            return np.zeros(self.subs[i].n_int + self.subs[i].n_gamma)
        coef = np.array([r.sign * x[r.coarse_dof] for r in rows])
        return self.psi[i] @ coef

    def weighted_restriction(self, i, t_gamma):
        """Coarse rhs contribution <t, z_c> from subdomain i interface."""
        rows = self.cset.rows[i]
        out = np.zeros(self.cset.n_flux_coarse)
        if not rows:
            return out
        sub = self.subs[i]
        vals = self.psi[i][sub.n_int:, :].T @ t_gamma
        for r, row in enumerate(rows):
            out[row.coarse_dof] += row.sign * vals[r]
        return out

    def delta_solve(self, i, load):
        """Substructure correction: constrained solve with interface load."""
        sub = self.subs[i]
        n_u, n_p = sub.n_int + sub.n_gamma, sub.n_p
        nc = len(self.cset.rows[i])
        rhs = np.zeros(n_u + n_p + nc + sub.n_mult)
        rhs[:n_u] = load
        sol = self._delta_lu[i].solve(rhs)
        return sol[:n_u]
