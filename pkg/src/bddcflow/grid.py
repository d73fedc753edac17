"""Cartesian grids, RT0 flux / P0 pressure enumeration, and assembly.

Flux degrees of freedom sit on grid faces and carry the total flux through
the face oriented along the positive coordinate axis, so each interior face
dof is shared (single-valued) by the two neighboring cells.  Boundary faces
carry zero flux and are eliminated at assembly.  Dof order: x-faces first,
then y-faces (then z-faces), each family x-fastest.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import CompatibilityError, InvalidArgumentError


@dataclass(frozen=True)
class Grid:
    dim: int
    counts: tuple
    sizes: tuple

    @property
    def n_cells(self):
        return int(np.prod(self.counts))

    @property
    def cell_volume(self):
        return float(np.prod(self.sizes))

    def face_family_extents(self, axis):
        e = list(self.counts)
        e[axis] += 1
        return tuple(e)

    @cached_property
    def face_offsets(self):
        offs = [0]
        for a in range(self.dim):
            offs.append(offs[-1] + int(np.prod(self.face_family_extents(a))))
        return tuple(offs)

    @property
    def n_faces(self):
        return self.face_offsets[-1]

    @property
    def total_dofs(self):
        """All face dofs (including boundary) plus cell pressures."""
        return self.n_faces + self.n_cells

    @cached_property
    def cell_coords(self):
        """(n_cells, dim) integer coordinates, cell ids x-fastest."""
        idx = np.arange(self.n_cells)
        coords = np.empty((self.n_cells, self.dim), dtype=np.int64)
        rem = idx
        for a in range(self.dim):
            coords[:, a] = rem % self.counts[a]
            rem = rem // self.counts[a]
        return coords

    def face_id(self, axis, coords):
        """Face ids of family `axis` from (n, dim) integer coordinates."""
        e = self.face_family_extents(axis)
        fid = np.zeros(len(coords), dtype=np.int64)
        stride = 1
        for a in range(self.dim):
            fid += coords[:, a] * stride
            stride *= e[a]
        return self.face_offsets[axis] + fid

    def cell_faces(self, axis):
        """(low_ids, high_ids) of the two `axis`-faces of every cell."""
        lo = self.cell_coords.copy()
        hi = self.cell_coords.copy()
        hi[:, axis] += 1
        return self.face_id(axis, lo), self.face_id(axis, hi)

    @cached_property
    def face_cells(self):
        """(n_faces, 2) low/high neighbor cell of each face, -1 outside."""
        fc = np.full((self.n_faces, 2), -1, dtype=np.int64)
        for a in range(self.dim):
            lo, hi = self.cell_faces(a)
            cells = np.arange(self.n_cells)
            fc[lo, 1] = cells  # cell sits on the high side of its low face
            fc[hi, 0] = cells
        return fc

    @cached_property
    def face_axis(self):
        ax = np.empty(self.n_faces, dtype=np.int64)
        for a in range(self.dim):
            ax[self.face_offsets[a]:self.face_offsets[a + 1]] = a
        return ax

    @cached_property
    def face_dof(self):
        """Interior-face dof numbering; -1 for (eliminated) boundary faces."""
        interior = (self.face_cells[:, 0] >= 0) & (self.face_cells[:, 1] >= 0)
        dof = np.full(self.n_faces, -1, dtype=np.int64)
        dof[interior] = np.arange(int(interior.sum()))
        return dof

    @cached_property
    def dof_face(self):
        return np.flatnonzero(self.face_dof >= 0)

    @property
    def n_flux_dofs(self):
        return len(self.dof_face)

    def face_coords(self, face_ids):
        """(n, dim) integer coordinates of faces within their family."""
        axes = self.face_axis[face_ids]
        coords = np.empty((len(face_ids), self.dim), dtype=np.int64)
        for a in range(self.dim):
            m = axes == a
            if not m.any():
                continue
            rem = face_ids[m] - self.face_offsets[a]
            e = self.face_family_extents(a)
            for d in range(self.dim):
                coords[m, d] = rem % e[d]
                rem = rem // e[d]
        return coords

    def face_hinges(self, face_ids):
        """Hinge keys per face: vertices in 2D, edges in 3D.

        Two faces touching a common hinge are treated as connected when
        splitting interface faces into components.
        """
        face_ids = np.asarray(face_ids)
        coords = self.face_coords(face_ids)
        axes = self.face_axis[face_ids]
        hinges = []
        for n in range(len(face_ids)):
            a = int(axes[n])
            c = coords[n]
            if self.dim == 2:
                t = 1 - a  # in-plane axis
                lo = tuple(c)
                hi = tuple(c + np.eye(self.dim, dtype=np.int64)[t])
                hinges.append([("v", lo), ("v", hi)])
            else:
                t1, t2 = [d for d in range(3) if d != a]
                ks = []
                for edge_axis, shift_axis in ((t1, t2), (t2, t1)):
                    for s in (0, 1):
                        p = c.copy()
                        p[shift_axis] += s
                        ks.append((edge_axis, tuple(p)))
                hinges.append(ks)
        return hinges


def build_grid(dim, counts, sizes):
    """Validate arguments and construct a Grid."""
    counts = tuple(int(c) for c in counts)
    sizes = tuple(float(s) for s in sizes)
    if dim not in (2, 3):
        raise InvalidArgumentError(f"dim must be 2 or 3, got {dim}")
    if len(counts) != dim or len(sizes) != dim:
        raise InvalidArgumentError("counts/sizes length must equal dim")
    if any(c < 1 for c in counts):
        raise InvalidArgumentError(f"cell counts must be >= 1, got {counts}")
    if any(not np.isfinite(s) or s <= 0 for s in sizes):
        raise InvalidArgumentError(f"cell sizes must be > 0, got {sizes}")
    return Grid(dim, counts, sizes)


@dataclass(frozen=True)
class Permeability:
    """Per-cell permeability, one value per axis (viscosity folded in)."""

    k: np.ndarray  # (n_cells, dim)

    def __post_init__(self):
        k = np.asarray(self.k, dtype=np.float64)
        if not np.all(np.isfinite(k)) or np.any(k <= 0):
            raise InvalidArgumentError("permeability must be positive finite")
        object.__setattr__(self, "k", k)

    @classmethod
    def isotropic(cls, grid, values):
        values = np.broadcast_to(np.asarray(values, dtype=np.float64),
                                 (grid.n_cells,))
        return cls(np.repeat(values[:, None], grid.dim, axis=1))


@dataclass(frozen=True)
class Wells:
    src_cell: int
    sink_cell: int
    strength: float = 1.0


def element_mass_matrix(sizes, kcell, lumped=False):
    """RT0 element flux mass matrix, (2*dim) x (2*dim).

    Dofs ordered (x-low, x-high, y-low, y-high[, z-low, z-high]).  Blocks
    for different axes decouple; the axis-`a` pair block is
    k_a^{-1} * h_a / (6 * prod_other_h) * [[2, 1], [1, 2]].
    """
    sizes = np.asarray(sizes, dtype=np.float64)
    kcell = np.asarray(kcell, dtype=np.float64)
    if np.any(sizes <= 0):
        raise InvalidArgumentError("cell sizes must be positive")
    if np.any(kcell <= 0):
        raise InvalidArgumentError("permeability must be positive")
    dim = len(sizes)
    M = np.zeros((2 * dim, 2 * dim))
    vol = np.prod(sizes)
    for a in range(dim):
        c = (sizes[a] ** 2 / (6.0 * vol)) / kcell[a]
        if lumped:
            block = np.diag([3.0 * c, 3.0 * c])
        else:
            block = c * np.array([[2.0, 1.0], [1.0, 2.0]])
        M[2 * a:2 * a + 2, 2 * a:2 * a + 2] = block
    return M


class SaddleSystem:
    """Assembled mixed system [[A, B^T],[B, 0]] (u, p) = (0, f).

    After `rescale` the stored divergence block and right-hand side are the
    scaled `Bs = D B`, `fs = D f`; the unscaling map is p = D * p_bar.
    """

    def __init__(self, grid, perm, A, B, f, wells, D=None, lumped=False):
        self.grid = grid
        self.perm = perm
        self.A = A.tocsr()
        self.B = B.tocsr()
        self.f = f
        self.wells = wells
        self.lumped = lumped
        self.D = D
        if D is None:
            self.Bs = self.B
            self.fs = f
        else:
            self.Bs = (sp.diags(D) @ self.B).tocsr()
            self.fs = D * f
        self.diagA = self.A.diagonal()

    @property
    def n_flux(self):
        return self.A.shape[0]

    @property
    def n_pressure(self):
        return self.grid.n_cells

    def unscale_pressure(self, p_bar):
        return p_bar if self.D is None else self.D * p_bar

    def with_rescaling(self, D):
        return SaddleSystem(self.grid, self.perm, self.A, self.B, self.f,
                            self.wells, D=D, lumped=self.lumped)


def _flux_entries(grid, perm, cells, lumped):
    """COO triplets of the flux block from element matrices of `cells`."""
    rows, cols, vals = [], [], []
    k = perm.k
    vol = grid.cell_volume
    for a in range(grid.dim):
        lo, hi = grid.cell_faces(a)
        dl = grid.face_dof[lo[cells]]
        dh = grid.face_dof[hi[cells]]
        c = (grid.sizes[a] ** 2 / (6.0 * vol)) / k[cells, a]
        for d, other in ((dl, dh), (dh, dl)):
            m = d >= 0
            diag = 3.0 * c if lumped else 2.0 * c
            rows.append(d[m])
            cols.append(d[m])
            vals.append(diag[m])
            if not lumped:
                mo = m & (other >= 0)
                rows.append(d[mo])
                cols.append(other[mo])
                vals.append(c[mo])
    return (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def flux_matrix(grid, perm, cells=None, dofs=None, lumped=False):
    """Flux block assembled from the element matrices of `cells` only.

    With `dofs` given, the result is restricted to (and indexed by) that
    dof subset; used for subdomain-local blocks A^i.
    """
    if cells is None:
        cells = np.arange(grid.n_cells)
    rows, cols, vals = _flux_entries(grid, perm, cells, lumped)
    n = grid.n_flux_dofs
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    if dofs is not None:
        A = A[dofs][:, dofs]
    return A


def divergence_matrix(grid):
    """B with B[cell, dof] = +1 on the cell's low faces, -1 on high faces."""
    rows, cols, vals = [], [], []
    cells = np.arange(grid.n_cells)
    for a in range(grid.dim):
        lo, hi = grid.cell_faces(a)
        for ids, s in ((lo, 1.0), (hi, -1.0)):
            d = grid.face_dof[ids]
            m = d >= 0
            rows.append(cells[m])
            cols.append(d[m])
            vals.append(np.full(int(m.sum()), s))
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_cells, grid.n_flux_dofs)).tocsr()


def assemble_system(grid, perm, wells, lumped=False):
    """Assemble the global saddle-point system with well sources."""
    if perm.k.shape != (grid.n_cells, grid.dim):
        raise InvalidArgumentError("permeability shape mismatch")
    for c in (wells.src_cell, wells.sink_cell):
        if not 0 <= c < grid.n_cells:
            raise InvalidArgumentError(f"well cell {c} outside grid")
    A = flux_matrix(grid, perm, lumped=lumped)
    B = divergence_matrix(grid)
    f = np.zeros(grid.n_cells)
    f[wells.src_cell] -= wells.strength
    f[wells.sink_cell] += wells.strength
    if abs(f.sum()) > 1e-12 * max(np.abs(f).sum(), 1.0):
        raise CompatibilityError("source terms must sum to zero")
    return SaddleSystem(grid, perm, A, B, f, wells, lumped=lumped)


def rescale(system, decomposition):
    """Fill the per-subdomain diagonal rescaling D of the pressure block.

    Each subdomain's value is the mean of diag(A) over the flux dofs
    touching that subdomain.
    """
    grid = system.grid
    diag = system.diagA
    d_sub = np.empty(decomposition.n_subdomains)
    for i, cells in enumerate(decomposition.cells):
        dofs = subdomain_flux_dofs(grid, cells)
        d_sub[i] = diag[dofs].mean()
    D = d_sub[decomposition.part]
    return system.with_rescaling(D)


def subdomain_flux_dofs(grid, cells):
    """Sorted global flux dofs on faces of the given cells."""
    ids = []
    for a in range(grid.dim):
        lo, hi = grid.cell_faces(a)
        ids.append(lo[cells])
        ids.append(hi[cells])
    dofs = grid.face_dof[np.unique(np.concatenate(ids))]
    return dofs[dofs >= 0]
