"""Reference solutions by sparse direct factorization.

The assembly here is written independently of the main assembly path,
straight from the lowest-order mixed discretization on a tensor grid:
face dofs carry the total flux oriented along the positive axis, cell
dofs carry the mean pressure.  It exists to cross-check the fast path
and the preconditioned solver, so it favors clarity over speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgumentError

DENSE_LIMIT = 60_000


@dataclass
class DenseSolution:
    u: np.ndarray
    p: np.ndarray


def direct_solve(grid, perm, wells, dense_limit=DENSE_LIMIT):
    """Solve the mixed system exactly; refuses oversized problems."""
    dim = grid.dim
    counts = [int(c) for c in grid.counts]
    sizes = [float(s) for s in grid.sizes]
    vol = 1.0
    for s in sizes:
        vol *= s

    def cell_id(coords):
        idx = 0
        for a in reversed(range(dim)):
            idx = idx * counts[a] + coords[a]
        return idx

    n_cells = 1
    for c in counts:
        n_cells *= c

    # enumerate interior faces axis by axis, x-fastest within each axis
    faces = []          # (axis, low cell, high cell)
    for axis in range(dim):
        shape = list(counts)
        shape[axis] -= 1
        for flat in range(int(np.prod(shape))):
            rem, coords = flat, []
            for a in range(dim):
                coords.append(rem % shape[a])
                rem //= shape[a]
            lo = cell_id(coords)
            hi_coords = list(coords)
            hi_coords[axis] += 1
            faces.append((axis, lo, cell_id(hi_coords)))
    n_u = len(faces)
    if n_u + n_cells > dense_limit:
        raise InvalidArgumentError(
            f"reference solve limited to {dense_limit} unknowns, "
            f"got {n_u + n_cells}")

    # per-cell lists of (face, side) with side 0 = low face of the cell
    cell_faces = [[] for _ in range(n_cells)]
    for fidx, (axis, lo, hi) in enumerate(faces):
        cell_faces[hi].append((fidx, axis, 0))
        cell_faces[lo].append((fidx, axis, 1))

    rows, cols, vals = [], [], []
    for cell in range(n_cells):
        by_axis = {}
        for fidx, axis, side in cell_faces[cell]:
            by_axis.setdefault(axis, [None, None])[side] = fidx
        for axis, pair in by_axis.items():
            coef = sizes[axis] ** 2 / (6.0 * vol * perm.k[cell, axis])
            for a, fa in enumerate(pair):
                for b, fb in enumerate(pair):
                    if fa is None or fb is None:
                        continue
                    rows.append(fa)
                    cols.append(fb)
                    vals.append(coef * (2.0 if a == b else 1.0))
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n_u, n_u)).tocsr()

    rows, cols, vals = [], [], []
    for fidx, (axis, lo, hi) in enumerate(faces):
        rows.extend([lo, hi])
        cols.extend([fidx, fidx])
        vals.extend([-1.0, 1.0])
    B = sp.coo_matrix((vals, (rows, cols)), shape=(n_cells, n_u)).tocsr()

    f = np.zeros(n_cells)
    f[wells.src_cell] = -wells.strength
    f[wells.sink_cell] = wells.strength

    K = sp.bmat([[A, B.T], [B, None]], format="csc")
    keep = np.ones(n_u + n_cells, dtype=bool)
    keep[n_u] = False   # pin the first pressure
    rhs = np.concatenate([np.zeros(n_u), f])
    sol = np.zeros(n_u + n_cells)
    sol[keep] = spla.spsolve(K[keep][:, keep].tocsc(), rhs[keep])
    u = sol[:n_u]
    p = sol[n_u:]
    p -= p.mean()
    return DenseSolution(u=u, p=p)


def preconditioned_spectrum(setup):
    """Eigenvalues of the preconditioned interface operator, densely.

    Both the assembled interface Schur operator and the preconditioner
    are materialized column by column and restricted to the balanced
    subspace (zero net flux across every subdomain) before the
    eigensolve.  Returns the real parts in ascending order.
    """
    n = len(setup.dec.gamma)
    S = np.zeros((n, n))
    M = np.zeros((n, n))
    e = np.zeros(n)
    for c in range(n):
        e[c] = 1.0
        S[:, c] = setup.schur_matvec(e)
        M[:, c] = setup.precondition(e)
        e[c] = 0.0
    Phi = setup.net_flux_matrix().toarray()
    Z = sla.null_space(Phi)
    Sb = Z.T @ S @ Z
    Mb = Z.T @ M @ Z
    Sb = 0.5 * (Sb + Sb.T)
    Mb = 0.5 * (Mb + Mb.T)
    # eig(Mb @ Sb) via the similar symmetric form Mb^{1/2} Sb Mb^{1/2}
    w, V = sla.eigh(Mb)
    W = (V * np.sqrt(np.maximum(w, 0.0))) @ V.T
    lam = sla.eigh(W @ Sb @ W, eigvals_only=True)
    return np.sort(lam)
