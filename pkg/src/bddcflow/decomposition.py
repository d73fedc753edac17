"""Nonoverlapping partitions, interface topology, and interface averaging.

Every interface flux dof is shared by exactly two subdomains (RT0 has
faces only, no corners or edges).  A face between two subdomains is split
into hinge-connected components; each component carries one initial
constraint.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import FormatError, InvalidArgumentError
from .grid import subdomain_flux_dofs


@dataclass(frozen=True)
class FaceComponent:
    """One connected component of the interface between subdomains i < j."""

    i: int
    j: int
    dofs: np.ndarray       # global flux dof ids, sorted
    sign_i: np.ndarray     # +-1 per dof: orientation wrt outward normal of i


class Decomposition:
    """Subdomain-to-cell map plus interface faces and their components."""

    def __init__(self, grid, part):
        part = np.asarray(part, dtype=np.int64)
        if part.shape != (grid.n_cells,):
            raise InvalidArgumentError("partition length must equal n_cells")
        self.grid = grid
        self.part = part
        self.n_subdomains = int(part.max()) + 1
        self.cells = [np.flatnonzero(part == i)
                      for i in range(self.n_subdomains)]
        if any(len(c) == 0 for c in self.cells):
            raise InvalidArgumentError("every subdomain must be nonempty")
        self._build_interface()

    def _build_interface(self):
        grid, part = self.grid, self.part
        fc = grid.face_cells[grid.dof_face]
        p_lo, p_hi = part[fc[:, 0]], part[fc[:, 1]]
        on_gamma = p_lo != p_hi
        self.gamma = np.flatnonzero(on_gamma)  # global dof ids on interface
        self.dof_sub_low = np.where(on_gamma, p_lo, -1)
        self.dof_sub_high = np.where(on_gamma, p_hi, -1)

        # group interface dofs by unordered subdomain pair and split into
        # hinge-connected components
        pairs = {}
        for d in self.gamma:
            key = (min(p_lo[d], p_hi[d]), max(p_lo[d], p_hi[d]))
            pairs.setdefault(key, []).append(d)
        self.faces = {}
        for (i, j), dlist in sorted(pairs.items()):
            dofs = np.array(sorted(dlist))
            self.faces[(i, j)] = [
                FaceComponent(i, j, comp, self._sign(comp, i))
                for comp in self._split_components(dofs)]

        self.gamma_dofs = [np.array([], dtype=np.int64)
                           for _ in range(self.n_subdomains)]
        for i in range(self.n_subdomains):
            mine = [d for d in self.gamma
                    if i in (p_lo[d], p_hi[d])]
            self.gamma_dofs[i] = np.array(sorted(mine), dtype=np.int64)

        self.n_faces = sum(len(c) for c in self.faces.values())
        per_sub = np.zeros(self.n_subdomains, dtype=np.int64)
        for (i, j), comps in self.faces.items():
            per_sub[i] += len(comps)
            per_sub[j] += len(comps)
        self.max_faces_per_subdomain = int(per_sub.max()) if len(per_sub) else 0

    def _split_components(self, dofs):
        grid = self.grid
        face_ids = grid.dof_face[dofs]
        hinges = grid.face_hinges(face_ids)
        key_to_faces = {}
        for n, ks in enumerate(hinges):
            for k in ks:
                key_to_faces.setdefault(k, []).append(n)
        rows, cols = [], []
        for members in key_to_faces.values():
            for m in members[1:]:
                rows.append(members[0])
                cols.append(m)
        adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)),
                            shape=(len(dofs), len(dofs)))
        ncomp, labels = connected_components(adj, directed=False)
        return [dofs[labels == c] for c in range(ncomp)]

    def _sign(self, dofs, i):
        """+1 where the positive axis points out of subdomain i."""
        fc = self.grid.face_cells[self.grid.dof_face[dofs]]
        return np.where(self.part[fc[:, 0]] == i, 1.0, -1.0)

    def sign_for(self, i, dofs):
        return self._sign(np.asarray(dofs), i)

    def gamma_index(self, i, dofs):
        """Positions of global dofs within gamma_dofs[i]."""
        pos = np.searchsorted(self.gamma_dofs[i], dofs)
        if not np.array_equal(self.gamma_dofs[i][pos], dofs):
            raise InvalidArgumentError("dofs not on this subdomain interface")
        return pos

    def interior_flux_dofs(self, i):
        all_dofs = subdomain_flux_dofs(self.grid, self.cells[i])
        return np.setdiff1d(all_dofs, self.gamma_dofs[i], assume_unique=True)

    def pair_subdomains(self, dof):
        return (int(self.dof_sub_low[dof]), int(self.dof_sub_high[dof]))

    def adjacent_pairs(self):
        return sorted(self.faces.keys())


def _near_equal_splits(n, s):
    base, extra = divmod(n, s)
    return [base + 1 if k < extra else base for k in range(s)]


def regular_partition(grid, splits):
    """Tensor-product partition with near-equal strips per axis."""
    splits = tuple(int(s) for s in splits)
    if len(splits) != grid.dim or any(s < 1 for s in splits):
        raise InvalidArgumentError("need one split >= 1 per axis")
    if any(s > c for s, c in zip(splits, grid.counts)):
        raise InvalidArgumentError("splits exceed cell counts")
    strip = []
    for a in range(grid.dim):
        bounds = np.cumsum(_near_equal_splits(grid.counts[a], splits[a]))
        strip.append(np.searchsorted(bounds, np.arange(grid.counts[a]),
                                     side="right"))
    coords = grid.cell_coords
    part = strip[0][coords[:, 0]]
    stride = splits[0]
    for a in range(1, grid.dim):
        part = part + stride * strip[a][coords[:, a]]
        stride *= splits[a]
    return Decomposition(grid, part)


def import_partition(path, grid):
    """Read a PART file (one 0-based subdomain id per cell, x-fastest)."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 3 or header[0] != "PART":
            raise FormatError("expected header 'PART <N> <ncells>'")
        n_declared, ncells = int(header[1]), int(header[2])
        ids = np.array([int(line) for line in fh if line.strip()])
    if len(ids) != ncells or ncells != grid.n_cells:
        raise FormatError(
            f"expected {grid.n_cells} ids, file declares {ncells}, "
            f"found {len(ids)}")
    if ids.min() < 0:
        raise FormatError("subdomain ids must be non-negative")
    uniq, compact = np.unique(ids, return_inverse=True)
    if len(uniq) != n_declared:
        warnings.warn(f"header declares {n_declared} subdomains, "
                      f"file uses {len(uniq)}")
    dec = Decomposition(grid, compact)
    for i, cells in enumerate(dec.cells):
        if not _is_connected(grid, cells):
            warnings.warn(f"subdomain {i} is disconnected")
    return dec


def _is_connected(grid, cells):
    return len(connected_component_cells(grid, cells)) == 1


def connected_component_cells(grid, cells):
    """Split a cell set into components connected through shared faces."""
    local = {c: n for n, c in enumerate(cells)}
    rows, cols = [], []
    fc = grid.face_cells
    interior = (fc[:, 0] >= 0) & (fc[:, 1] >= 0)
    for lo, hi in fc[interior]:
        if lo in local and hi in local:
            rows.append(local[lo])
            cols.append(local[hi])
    adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)),
                        shape=(len(cells), len(cells)))
    ncomp, labels = connected_components(adj, directed=False)
    return [cells[labels == c] for c in range(ncomp)]


@dataclass
class WeightOperator:
    """Interface averaging weights; delta[i] aligns with gamma_dofs[i]."""

    dec: Decomposition
    kind: str
    delta: list = field(repr=False, default=None)

    def weight(self, i, dofs=None):
        d = self.delta[i]
        return d if dofs is None else d[self.dec.gamma_index(i, dofs)]


def build_weights(dec, system, kind="multiplicity"):
    """Multiplicity (1/2 each) or stiffness weights.

    Stiffness weights use the subdomain-local diagonal of A: the side with
    the larger local diagonal (the low-permeability, high-resistance side)
    receives the larger weight, matching rho-scaling for RT0.
    """
    if kind not in ("multiplicity", "stiffness"):
        raise InvalidArgumentError(f"unknown scaling kind {kind!r}")
    grid = dec.grid
    delta = [np.full(len(g), 0.5) for g in dec.gamma_dofs]
    if kind == "stiffness":
        # local diagonal at an interface dof = element contribution of the
        # one neighboring cell on that side
        fcells = grid.face_cells[grid.dof_face]
        axes = grid.face_axis[grid.dof_face]
        vol = grid.cell_volume
        for i in range(dec.n_subdomains):
            dofs = dec.gamma_dofs[i]
            lo, hi = fcells[dofs, 0], fcells[dofs, 1]
            own = np.where(dec.part[lo] == i, lo, hi)
            other = np.where(dec.part[lo] == i, hi, lo)
            a = axes[dofs]
            h = np.array(grid.sizes)[a]
            d_own = (h ** 2 / (3.0 * vol)) / system.perm.k[own, a]
            d_other = (h ** 2 / (3.0 * vol)) / system.perm.k[other, a]
            delta[i] = d_own / (d_own + d_other)
    return WeightOperator(dec, kind, delta)


class BrokenInterface:
    """Concatenated per-subdomain interface vectors and the projection E."""

    def __init__(self, weights):
        self.dec = weights.dec
        self.weights = weights
        sizes = [len(g) for g in self.dec.gamma_dofs]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.size = int(self.offsets[-1])
        # scatter map: position of each broken slot's global interface dof
        gamma_sorted = self.dec.gamma
        self._global_pos = [np.searchsorted(gamma_sorted, g)
                            for g in self.dec.gamma_dofs]
        self.n_gamma = len(gamma_sorted)

    def local(self, w, i):
        return w[self.offsets[i]:self.offsets[i + 1]]

    def expand(self, x):
        """Duplicate a continuous interface vector (indexed by dec.gamma)."""
        w = np.empty(self.size)
        for i in range(self.dec.n_subdomains):
            self.local(w, i)[:] = x[self._global_pos[i]]
        return w

    def average(self, w):
        """Weighted average -> continuous vector indexed by dec.gamma."""
        x = np.zeros(self.n_gamma)
        for i in range(self.dec.n_subdomains):
            x[self._global_pos[i]] += (self.weights.delta[i]
                                       * self.local(w, i))
        return x

    def apply_E(self, w):
        return self.expand(self.average(w))

    def apply_I_minus_E(self, w):
        return w - self.apply_E(w)
