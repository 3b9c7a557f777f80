import numpy as np
import pytest
import scipy.sparse as sp

from mscontact.assemble import assemble_fine, patch_matrices
from mscontact.field import PermField, generate_inclusions
from mscontact.grid import CONTACT, DIRICHLET, build_grids, contact_trace, local_domain
from mscontact.msbasis import (BasisCache, build_space, coarse_operators,
                               dump_eigen_table, extension_basis,
                               local_spectral, pou_values)
from mscontact.pdas import fine_hybrid, pdas_solve


def setup(Nc=4, nf=4, seed=3, contrast=1e4):
    g = build_grids(Nc, nf)
    kappa = generate_inclusions(g, seed=seed, contrast=contrast)
    return g, kappa, assemble_fine(g, kappa)


def eigh_oracle(A, S, k):
    """Independent generalized eigensolve: explicit Cholesky reduction of S
    followed by a plain symmetric solve."""
    Lc = np.linalg.cholesky(S)
    Y = np.linalg.solve(Lc, A)
    C = np.linalg.solve(Lc, Y.T).T
    C = 0.5 * (C + C.T)
    w, Q = np.linalg.eigh(C)
    V = np.linalg.solve(Lc.T, Q)
    return w[:k], V[:, :k]


def test_eigenpairs_match_independent_oracle():
    g, kappa, sys = setup(4, 4, seed=0, contrast=1.0)
    dom = local_domain(g, g.coarse_index(2, 2))
    basis = local_spectral(sys, dom, 4)
    A, S, nodes = patch_matrices(g, kappa, dom)
    w_ref, _ = eigh_oracle(A, S, basis.eigenvalues.size)
    scale = np.maximum(1.0, np.abs(w_ref))
    assert np.all(np.abs(basis.eigenvalues - w_ref) <= 1e-9 * scale)


def test_eigen_residuals_and_orthonormality():
    g, kappa, sys = setup(4, 4)
    dom = local_domain(g, g.coarse_index(2, 2))
    basis = local_spectral(sys, dom, 5)
    A, S, nodes = patch_matrices(g, kappa, dom)
    V = basis.vectors
    gram = V.T @ (S @ V)
    assert np.abs(gram - np.eye(V.shape[1])).max() <= 1e-10
    assert np.all(np.diff(basis.eigenvalues) >= -1e-12)
    for r in range(V.shape[1]):
        res = A @ V[:, r] - basis.eigenvalues[r] * (S @ V[:, r])
        den = np.linalg.norm(A @ V[:, r])
        if basis.eigenvalues[r] > 1e-8:
            assert np.linalg.norm(res) <= 1e-8 * den
        else:
            # kernel mode of a patch clear of the clamped edge
            assert np.linalg.norm(A @ V[:, r]) <= 1e-8 * np.linalg.norm(S @ V[:, r]) * max(
                1.0, basis.eigenvalues.max())


def test_eigenvalues_invariant_under_field_scaling():
    g, kappa, sys = setup(3, 3, seed=5, contrast=1e2)
    scaled = PermField(kappa.values * 7.5, 7.5, 750.0, "scaled")
    sys2 = assemble_fine(g, scaled)
    dom = local_domain(g, g.coarse_index(1, 1))
    a = local_spectral(sys, dom, 3)
    b = local_spectral(sys2, dom, 3)
    scale = np.maximum(1.0, np.abs(a.eigenvalues))
    assert np.all(np.abs(a.eigenvalues - b.eigenvalues) <= 1e-11 * scale)


def test_local_spectral_validates_input():
    g, kappa, sys = setup(2, 2)
    dom = local_domain(g, g.coarse_index(1, 1))
    with pytest.raises(ValueError):
        local_spectral(sys, dom, 0)
    with pytest.raises(ValueError):
        local_spectral(sys, dom, dom.snapshot_nodes.size + 1)


def test_extension_requires_contact_center():
    g, kappa, sys = setup(3, 2)
    dom = local_domain(g, g.coarse_index(1, 1))
    with pytest.raises(ValueError):
        extension_basis(sys, dom)


def test_extension_max_principle_and_nodal_values():
    g, kappa, sys = setup(4, 4, seed=9, contrast=1e4)
    for cx in range(g.Nc + 1):
        node = g.coarse_index(cx, 0)
        ext = extension_basis(sys, local_domain(g, node))
        col = ext.column.toarray().ravel()
        assert col.min() >= -1e-12 and col.max() <= 1.0 + 1e-12
        center_free = sys.free_of_node[g.coarse_to_fine[node]]
        assert col[center_free] == 1.0
        # zero at every other coarse node
        others = np.setdiff1d(g.coarse_to_fine, [g.coarse_to_fine[node]])
        free = sys.free_of_node[others]
        assert np.abs(col[free[free >= 0]]).max() == 0.0


def test_extension_trace_is_coarse_hat():
    g, kappa, sys = setup(3, 4, seed=2, contrast=1e4)
    space = build_space(sys, g, 1)
    tr = contact_trace(g)
    bfree = sys.free_of_node[tr.fine_nodes]
    GH = space.G_H.toarray()
    for j, (node, kind, rank) in enumerate(space.provenance):
        if kind != "extension":
            continue
        col = space.R_off[:, [j]].toarray().ravel()
        pos = np.flatnonzero(tr.coarse_nodes == node % (g.Nc + 1))[0]
        assert np.array_equal(col[bfree], GH[:, pos])


def test_eigen_columns_vanish_on_contact_and_patch_boundary():
    g, kappa, sys = setup(3, 3, seed=4, contrast=1e2)
    space = build_space(sys, g, 2)
    tr = contact_trace(g)
    bfree = sys.free_of_node[tr.fine_nodes]
    for j, (node, kind, rank) in enumerate(space.provenance):
        if kind != "eigen":
            continue
        col = space.R_off[:, [j]].toarray().ravel()
        assert np.abs(col[bfree]).max() == 0.0
        dom = local_domain(g, node)
        outside = np.setdiff1d(np.arange(sys.n_free),
                               sys.free_of_node[dom.member_nodes])
        assert np.abs(col[outside]).max() == 0.0
        # conformity: zero on the part of the patch perimeter interior to
        # the domain (perimeter nodes on the zero-flux edges stay free)
        from mscontact.grid import INTERIOR as IN_TAG
        inner = dom.boundary_nodes[g.fine_tag[dom.boundary_nodes] == IN_TAG]
        bnd_free = sys.free_of_node[inner]
        if bnd_free.size:
            assert np.abs(col[bnd_free]).max() == 0.0


def test_dof_counts_small_grid():
    g, kappa, sys = setup(4, 4, seed=3, contrast=1e4)
    cache = BasisCache(sys, k_hint=4)
    interior = (g.Nc - 1) ** 2
    boundary = g.n_coarse - interior - (g.Nc + 1)
    for l in (1, 2, 3):
        space = build_space(sys, g, l, cache=cache)
        assert space.m_off == interior * l + boundary + (g.Nc + 1)
        assert len(space.provenance) == space.m_off


def test_gram_matrix_positive_definite():
    g, kappa, sys = setup(3, 3, seed=6, contrast=1e4)
    space = build_space(sys, g, 2)
    gram = (space.R_off.T @ (sys.M @ space.R_off)).toarray()
    assert np.linalg.eigvalsh(gram).min() > 0.0


def test_nested_spans_and_lambda_monotonicity():
    g, kappa, sys = setup(3, 3, seed=8, contrast=1e4)
    cache = BasisCache(sys, k_hint=5)
    spaces = [build_space(sys, g, l, cache=cache) for l in (1, 2, 3, 4)]
    lams = [s.Lambda for s in spaces]
    assert np.all(np.diff(lams) >= -1e-12)
    lams_all = [s.Lambda_all for s in spaces]
    assert np.all(np.diff(lams_all) >= -1e-12)
    # columns of l are a sub-collection of columns of l+1, node by node
    for a, b in zip(spaces, spaces[1:]):
        prov_b = {(n, k, r): j for j, (n, k, r) in enumerate(b.provenance)}
        for j, key in enumerate(a.provenance):
            jb = prov_b[key]
            assert abs(a.R_off[:, [j]] - b.R_off[:, [jb]]).max() == 0.0


def test_prolongation_structure():
    g, kappa, sys = setup(3, 4)
    space = build_space(sys, g, 1)
    GH = space.G_H.toarray()
    assert GH.shape == (g.nx + 1, g.Nc + 1)
    assert GH.min() >= 0.0
    assert np.allclose(GH.sum(axis=1), 1.0, atol=1e-15)
    for j in range(g.Nc + 1):
        assert GH[j * g.nf, j] == 1.0


def test_coarse_operator_shapes_and_symmetry():
    g, kappa, sys = setup(3, 3, seed=1, contrast=1e4)
    space = build_space(sys, g, 2)
    Mc, Bc, Lc = coarse_operators(space, sys)
    m = space.m_off
    assert Mc.shape == (m, m)
    assert Bc.shape == (g.Nc + 1, m)
    assert Lc.shape == (m,)
    assert abs(Mc - Mc.T).max() <= 1e-12 * abs(Mc).max()


def test_coarse_constraint_rows_by_hand():
    g, kappa, sys = setup(2, 2, seed=4, contrast=1e2)
    space = build_space(sys, g, 1)
    Mc, Bc, Lc = coarse_operators(space, sys)
    GH = space.G_H.toarray()
    BR = (sys.B @ space.R_off).toarray()
    hand = np.zeros_like(Bc.toarray())
    for j in range(GH.shape[1]):
        for t in range(GH.shape[0]):
            if GH[t, j] != 0.0:
                hand[j, :] += GH[t, j] * BR[t, :]
    assert np.allclose(Bc.toarray(), hand, rtol=1e-13, atol=1e-15)


def test_identity_projection_when_coarse_equals_fine():
    g = build_grids(1, 1)
    kappa = generate_inclusions(g, seed=0, contrast=1.0, n_inclusions=0, n_channels=0)
    sys = assemble_fine(g, kappa)
    space = build_space(sys, g, 1)
    R = space.R_off.toarray()
    assert np.array_equal(np.sort(np.abs(R), axis=0)[-1], np.ones(R.shape[1]))
    assert np.array_equal(R @ R.T, np.eye(sys.n_free))
    Mc, Bc, Lc = coarse_operators(space, sys)
    assert np.array_equal(Mc.toarray(), sys.M.toarray())
    assert np.array_equal(Lc, sys.L)


def test_shortfall_recorded_for_degenerate_domains():
    g = build_grids(1, 1)
    kappa = generate_inclusions(g, seed=0, contrast=1.0, n_inclusions=0, n_channels=0)
    sys = assemble_fine(g, kappa)
    space = build_space(sys, g, 1)
    # the clamped-corner domains cannot contribute: hat weight vanishes there
    assert len(space.shortfalls) == 2
    assert all(v == 0 for v in space.shortfalls.values())


def test_eigen_table_dump(tmp_path):
    g, kappa, sys = setup(2, 2)
    space = build_space(sys, g, 2)
    p = tmp_path / "eig.csv"
    dump_eigen_table(space, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "node,rank,eigenvalue"
    assert len(lines) > 1
    node, rank, lam = lines[1].split(",")
    assert int(rank) == 1
    float(lam)
