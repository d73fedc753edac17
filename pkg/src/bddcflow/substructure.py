"""Per-subdomain local operators.

Each subdomain owns local flux dofs split into interior ones and interface
ones, local pressures, and one volume-mean Lagrange multiplier per
connected component.  A single factorization of the interior KKT matrix

    [[A_II, B_I^T, 0], [B_I, 0, V^T], [0, V, 0]]

is reused for static condensation, Stokes-harmonic extension, Schur
complement applications, and interior recovery.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .decomposition import connected_component_cells
from .errors import NumericalFailureError
from .grid import flux_matrix, subdomain_flux_dofs


class SubdomainOperator:
    def __init__(self, system, dec, i):
        self.index = i
        self.system = system
        self.dec = dec
        grid = system.grid
        self.cells = dec.cells[i]
        self.gamma = dec.gamma_dofs[i]
        all_dofs = subdomain_flux_dofs(grid, self.cells)
        self.interior = np.setdiff1d(all_dofs, self.gamma, assume_unique=True)
        self.dofs = np.concatenate([self.interior, self.gamma])
        self.n_int = len(self.interior)
        self.n_gamma = len(self.gamma)
        self.n_p = len(self.cells)

        self.A_loc = flux_matrix(grid, system.perm, self.cells,
                                 dofs=self.dofs, lumped=system.lumped)
        self.B_loc = system.Bs[self.cells][:, self.dofs].tocsr()
        nI = self.n_int
        self.A_II = self.A_loc[:nI, :nI]
        self.A_IG = self.A_loc[:nI, nI:]
        self.A_GG = self.A_loc[nI:, nI:]
        self.B_I = self.B_loc[:, :nI]
        self.B_G = self.B_loc[:, nI:]

        # one volume row per connected component; a single row when the
        # subdomain is connected
        comps = connected_component_cells(grid, self.cells)
        local = {c: n for n, c in enumerate(self.cells)}
        V = np.zeros((len(comps), self.n_p))
        for r, comp in enumerate(comps):
            for c in comp:
                V[r, local[c]] = grid.cell_volume
        self.V = sp.csr_matrix(V)
        self.n_mult = len(comps)

        K = sp.bmat([
            [self.A_II, self.B_I.T, None],
            [self.B_I, None, self.V.T],
            [None, self.V, None],
        ], format="csc")
        try:
            self.kkt = spla.splu(K)
        except RuntimeError as exc:
            raise NumericalFailureError(
                f"interior KKT factorization failed on subdomain {i}: {exc}",
                where=i) from exc

    def _kkt_solve(self, r_flux, r_p, r_mult=None):
        rhs = np.concatenate([
            r_flux, r_p,
            np.zeros(self.n_mult) if r_mult is None else r_mult])
        sol = self.kkt.solve(rhs)
        nI, nP = self.n_int, self.n_p
        return sol[:nI], sol[nI:nI + nP], sol[nI + nP:]

    def harmonic_extend(self, x):
        """Stokes-harmonic extension of interface values to all local dofs."""
        u_I, _, _ = self._kkt_solve(-(self.A_IG @ x), -(self.B_G @ x))
        return np.concatenate([u_I, x])

    def schur_apply(self, x):
        """y = S^i x via one interior KKT solve."""
        u_I, p, _ = self._kkt_solve(-(self.A_IG @ x), -(self.B_G @ x))
        return self.A_GG @ x + self.A_IG.T @ u_I + self.B_G.T @ p

    def schur_dense(self):
        if not hasattr(self, "_schur"):
            S = np.empty((self.n_gamma, self.n_gamma))
            e = np.zeros(self.n_gamma)
            for c in range(self.n_gamma):
                e[c] = 1.0
                S[:, c] = self.schur_apply(e)
                e[c] = 0.0
            self._schur = 0.5 * (S + S.T)
        return self._schur

    def trace_solve(self, g, f_cells):
        """Interior solve given an interface trace and local sources.

        Returns (u_I, p, mult) with b(u_trace + u_I, q) = <f, q> for all
        local zero-mean pressures q.
        """
        return self._kkt_solve(-(self.A_IG @ g), f_cells - self.B_G @ g)

    def condense(self, r_flux_int, r_p):
        """Eliminate interiors of a residual; returns ((u_I, p), r_gamma).

        r_gamma is the subdomain's contribution to the reduced interface
        residual (to be subtracted from the interface part).
        """
        u_I, p, _ = self._kkt_solve(r_flux_int, r_p)
        return (u_I, p), self.A_IG.T @ u_I + self.B_G.T @ p

    def energy(self, u_loc):
        return float(u_loc @ (self.A_loc @ u_loc))


def build_subdomain(system, dec, i):
    return SubdomainOperator(system, dec, i)


def build_all_subdomains(system, dec):
    return [SubdomainOperator(system, dec, i)
            for i in range(dec.n_subdomains)]
