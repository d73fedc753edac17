import numpy as np
import pytest

from bddcflow.errors import InvalidArgumentError
from bddcflow.grid import (Permeability, Wells, assemble_system, build_grid,
                           element_mass_matrix, flux_matrix, rescale)
from bddcflow.decomposition import regular_partition


def test_dof_counts_2d():
    g = build_grid(2, (60, 220), (1.0, 1.0))
    assert g.n_cells == 13200
    # 61*220 x-faces + 60*221 y-faces
    assert g.n_faces == 61 * 220 + 60 * 221 == 26680
    assert g.total_dofs == 39880
    assert g.n_flux_dofs == 26120


def test_dof_counts_3d():
    g = build_grid(3, (30, 30, 30), (1.0, 1.0, 1.0))
    assert g.n_faces == 3 * 31 * 30 * 30
    assert g.total_dofs == 110700


def test_two_cell_assembly():
    # two unit cells sharing one interior face: A = [2/3], B = [[-1],[1]]
    g = build_grid(2, (2, 1), (1.0, 1.0))
    perm = Permeability.isotropic(g, 1.0)
    system = assemble_system(g, perm, Wells(0, 1))
    assert g.n_flux_dofs == 1
    np.testing.assert_allclose(system.A.toarray(), [[2.0 / 3.0]])
    np.testing.assert_allclose(system.B.toarray(), [[-1.0], [1.0]])
    np.testing.assert_allclose(system.f, [-1.0, 1.0])


def test_element_mass_matrix_blocks():
    # axis blocks are k_a^{-1} (h_a^2/(6 vol)) [[2,1],[1,2]],
    # checked against direct integration of the RT0 basis
    h = (2.0, 3.0)
    k = (4.0, 5.0)
    M = element_mass_matrix(h, k)
    vol = 6.0
    for a in range(2):
        c = h[a] ** 2 / (6.0 * vol) / k[a]
        np.testing.assert_allclose(M[2 * a:2 * a + 2, 2 * a:2 * a + 2],
                                   c * np.array([[2.0, 1.0], [1.0, 2.0]]))
    # axes decouple
    assert np.all(M[:2, 2:] == 0.0)


def test_element_mass_matrix_lumped():
    M = element_mass_matrix((1.0, 1.0), (1.0, 1.0), lumped=True)
    assert np.count_nonzero(M - np.diag(np.diag(M))) == 0
    # row sums match the consistent matrix (mass conservation of lumping)
    Mc = element_mass_matrix((1.0, 1.0), (1.0, 1.0))
    np.testing.assert_allclose(M.sum(axis=1), Mc.sum(axis=1))


def test_flux_matrix_spd():
    g = build_grid(2, (5, 4), (1.0, 2.0))
    rng = np.random.default_rng(3)
    perm = Permeability.isotropic(g, 10.0 ** rng.uniform(-2, 2, g.n_cells))
    A = flux_matrix(g, perm).toarray()
    np.testing.assert_allclose(A, A.T)
    assert np.linalg.eigvalsh(A).min() > 0


def test_divergence_signs():
    # each interior face contributes -1 to its low cell, +1 to its high cell
    g = build_grid(2, (3, 3), (1.0, 1.0))
    perm = Permeability.isotropic(g, 1.0)
    system = assemble_system(g, perm, Wells(0, 8))
    B = system.B.toarray()
    assert np.all(np.abs(B).sum(axis=0) == 2)   # every dof touches 2 cells
    assert np.all(B.sum(axis=0) == 0)
    fc = g.face_cells[g.dof_face]
    for d in range(g.n_flux_dofs):
        assert B[fc[d, 0], d] == -1.0
        assert B[fc[d, 1], d] == 1.0


def test_well_cell_out_of_range_rejected():
    g = build_grid(2, (2, 2), (1.0, 1.0))
    perm = Permeability.isotropic(g, 1.0)
    with pytest.raises(InvalidArgumentError):
        assemble_system(g, perm, Wells(0, 4))


def test_invalid_grid_args():
    with pytest.raises(InvalidArgumentError):
        build_grid(4, (2, 2, 2, 2), (1.0,) * 4)
    with pytest.raises(InvalidArgumentError):
        build_grid(2, (0, 2), (1.0, 1.0))
    with pytest.raises(InvalidArgumentError):
        build_grid(2, (2, 2), (1.0, -1.0))
    with pytest.raises(InvalidArgumentError):
        Permeability(np.array([[1.0, -2.0]]))


def test_rescaling_block_constant():
    g = build_grid(2, (8, 8), (1.0, 1.0))
    rng = np.random.default_rng(0)
    perm = Permeability.isotropic(g, 10.0 ** rng.uniform(-3, 3, g.n_cells))
    system = assemble_system(g, perm, Wells(0, g.n_cells - 1))
    dec = regular_partition(g, (2, 2))
    scaled = rescale(system, dec)
    # D constant within each subdomain
    for cells in dec.cells:
        assert np.ptp(scaled.D[cells]) == 0.0
    # scaled blocks really are D B and D f
    np.testing.assert_allclose(scaled.Bs.toarray(),
                               scaled.D[:, None] * system.B.toarray())
    np.testing.assert_allclose(scaled.fs, scaled.D * system.f)
    # unscaling maps p_bar back: p = D p_bar
    p_bar = rng.standard_normal(g.n_cells)
    np.testing.assert_allclose(scaled.unscale_pressure(p_bar),
                               scaled.D * p_bar)
