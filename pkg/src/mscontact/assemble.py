"""Fine-scale operators of the hybrid contact formulation.

Assembles, with bilinear (Q1) elements on the fine grid:

  * ``M``  - conductivity-weighted stiffness, a(u,v) = int kappa grad u . grad v;
  * ``S``  - conductivity-weighted mass,     s(u,v) = int kappa u v;
  * ``M0`` - unweighted mass (used by the plain L2 error norm);
  * ``B``  - contact coupling, one row per fine node on the contact boundary,
             b(xi_j, eta_i) = int_GammaC kappa xi_j eta_i with the boundary
             weight taken from the single cell adjacent to each bottom edge;
  * ``L``  - load vector, L_i = int f eta_i.

Clamped (Dirichlet) nodes are eliminated by row/column deletion, which keeps
the stiffness symmetric positive definite.  All volume integrals use tensor
Gauss quadrature (2x2 by default, exact for cellwise-constant kappa).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import DIRICHLET, contact_trace

__all__ = [
    "FineSystem", "element_stiffness", "assemble_fine",
    "default_source", "dump_coo",
]


def default_source(x, y):
    """Smooth oscillatory load used by the built-in experiments."""
    return np.sin(2.0 * np.pi * x) * np.sin(2.0 * np.pi * y)


def _gauss_1d(order):
    # Gauss-Legendre on [-1, 1]
    pts, wts = np.polynomial.legendre.leggauss(order)
    return pts, wts


def _shape(xi, eta):
    # CCW vertex order (SW, SE, NE, NW) on the reference square [-1,1]^2
    return 0.25 * np.array([(1 - xi) * (1 - eta),
                            (1 + xi) * (1 - eta),
                            (1 + xi) * (1 + eta),
                            (1 - xi) * (1 + eta)])


def _shape_grad(xi, eta):
    return 0.25 * np.array([[-(1 - eta), -(1 - xi)],
                            [+(1 - eta), -(1 + xi)],
                            [+(1 + eta), +(1 + xi)],
                            [-(1 + eta), +(1 - xi)]])


def _reference_matrices(order):
    """Reference-square stiffness (h-independent) and mass (to scale by h^2)."""
    pts, wts = _gauss_1d(order)
    K = np.zeros((4, 4))
    M = np.zeros((4, 4))
    for xi, wx in zip(pts, wts):
        for eta, wy in zip(pts, wts):
            G = _shape_grad(xi, eta)
            N = _shape(xi, eta)
            K += wx * wy * (G @ G.T)        # (2/h)^2 Jacobian cancels (h/2)^2
            M += wx * wy * np.outer(N, N)   # to be scaled by (h/2)^2
    return K, 0.25 * M


def _edge_mass(order):
    """Reference-interval P1 mass, to be scaled by (h/2)."""
    pts, wts = _gauss_1d(order)
    M = np.zeros((2, 2))
    for xi, w in zip(pts, wts):
        N = 0.5 * np.array([1 - xi, 1 + xi])
        M += w * np.outer(N, N)
    return M


def element_stiffness(vertices, kappa_cell, order=2):
    """4x4 stiffness of one axis-aligned square cell.

    Vertices must be in CCW order (SW, SE, NE, NW).  The matrix is symmetric,
    has zero row sums (constants in the kernel) and scales linearly in the
    cell conductivity; it does not depend on the cell size in 2D.
    """
    v = np.asarray(vertices, dtype=float)
    if v.shape != (4, 2):
        raise ValueError("expected 4 vertices in the plane")
    h = v[1, 0] - v[0, 0]
    expected = v[0] + np.array([[0, 0], [h, 0], [h, h], [0, h]])
    if h <= 0.0 or not np.allclose(v, expected, rtol=0.0, atol=1e-12 * max(1.0, abs(h))):
        raise ValueError("cell is not an axis-aligned square in CCW order")
    if kappa_cell <= 0.0:
        raise ValueError("cell conductivity must be positive")
    K, _ = _reference_matrices(order)
    return kappa_cell * K


@dataclass
class FineSystem:
    """Assembled fine-grid operators, restricted to the free (non-clamped)
    degrees of freedom.  ``contact_nodes`` orders the B rows left to right
    along the contact boundary."""

    g: object
    kappa: object
    M: sp.csr_matrix            # weighted stiffness (free x free)
    S: sp.csr_matrix            # weighted mass
    M0: sp.csr_matrix           # unweighted mass
    B: sp.csr_matrix            # contact rows x free dofs
    L: np.ndarray
    free_of_node: np.ndarray    # fine node -> free dof index, -1 if clamped
    node_of_free: np.ndarray
    contact_nodes: np.ndarray

    @property
    def n_free(self):
        return self.node_of_free.size


def _scatter(cells, local, cellvals=None):
    """COO triplets for sum over cells of (cellvals[c] *) local[4x4]."""
    nloc = local.shape[0]
    rows = np.repeat(cells, nloc, axis=1).ravel()
    cols = np.tile(cells, (1, nloc)).ravel()
    if cellvals is None:
        data = np.tile(local.ravel(), cells.shape[0])
    else:
        data = np.outer(cellvals, local.ravel()).ravel()
    return rows, cols, data


def assemble_fine(g, kappa, f=default_source, quad_order=2):
    """Assemble the full hybrid fine system for a grid/field pair."""
    if kappa.values.size != g.n_cells:
        raise ValueError("field has %d cells but the grid has %d"
                         % (kappa.values.size, g.n_cells))
    n = g.n_fine
    h = g.h
    kvals = kappa.values

    Kref, Mref = _reference_matrices(quad_order)
    rows, cols, data = _scatter(g.cells, Kref, kvals)
    M_full = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    rows, cols, data = _scatter(g.cells, h * h * Mref, kvals)
    S_full = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    rows, cols, data = _scatter(g.cells, h * h * Mref)
    M0_full = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()

    # load vector by the same tensor Gauss rule
    pts, wts = _gauss_1d(quad_order)
    centers = g.fine_xy[g.cells[:, 0]] + 0.5 * h
    L_full = np.zeros(n)
    for xi, wx in zip(pts, wts):
        for eta, wy in zip(pts, wts):
            N = _shape(xi, eta)
            xq = centers[:, 0] + 0.5 * h * xi
            yq = centers[:, 1] + 0.5 * h * eta
            fq = (0.25 * h * h * wx * wy) * np.asarray(f(xq, yq), dtype=float)
            for a in range(4):
                np.add.at(L_full, g.cells[:, a], fq * N[a])

    free_mask = g.fine_tag != DIRICHLET
    node_of_free = np.flatnonzero(free_mask)
    free_of_node = np.full(n, -1, dtype=np.int64)
    free_of_node[node_of_free] = np.arange(node_of_free.size)

    M = M_full[node_of_free][:, node_of_free].tocsr()
    S = S_full[node_of_free][:, node_of_free].tocsr()
    M0 = M0_full[node_of_free][:, node_of_free].tocsr()
    L = L_full[node_of_free]

    # contact rows: weighted 1D mass along the bottom edge, one row per
    # contact node; the boundary weight is the adjacent (bottom-row) cell
    tr = contact_trace(g)
    nc = tr.fine_nodes.size
    Eref = _edge_mass(quad_order)
    edge_cells = np.arange(g.nx)            # cells (cx, 0) have index cx
    ke = kvals[edge_cells] * (0.5 * h)
    br = np.concatenate([edge_cells, edge_cells, edge_cells + 1, edge_cells + 1])
    bc = np.concatenate([edge_cells, edge_cells + 1, edge_cells, edge_cells + 1])
    bv = np.concatenate([ke * Eref[0, 0], ke * Eref[0, 1],
                         ke * Eref[1, 0], ke * Eref[1, 1]])
    cols = free_of_node[tr.fine_nodes[bc]]
    if np.any(cols < 0):
        raise AssertionError("contact nodes must be free dofs")
    B = sp.coo_matrix((bv, (br, cols)), shape=(nc, node_of_free.size)).tocsr()

    return FineSystem(g, kappa, M, S, M0, B, L,
                      free_of_node, node_of_free, tr.fine_nodes.copy())


def patch_matrices(g, kappa, dom, quad_order=2):
    """Stiffness and weighted mass of one local domain, assembled from the
    patch cells only (integrals over the patch, natural everywhere else).

    Returns (A, S, nodes) with dense symmetric matrices over the domain's
    snapshot nodes; clamped nodes are excluded, so constants lie in the
    kernel of A exactly when the patch does not touch the clamped edge.
    """
    ix0, ix1, iy0, iy1 = dom.bounds
    cx, cy = np.meshgrid(np.arange(ix0, ix1), np.arange(iy0, iy1))
    cells_idx = (cy * g.nx + cx).ravel()
    cells = g.cells[cells_idx]
    kvals = kappa.values[cells_idx]

    nodes = dom.snapshot_nodes
    local_of = np.full(g.n_fine, -1, dtype=np.int64)
    local_of[nodes] = np.arange(nodes.size)
    loc = local_of[cells]

    Kref, Mref = _reference_matrices(quad_order)
    A = np.zeros((nodes.size, nodes.size))
    S = np.zeros_like(A)
    h2 = g.h * g.h
    for a in range(4):
        for b in range(4):
            la, lb = loc[:, a], loc[:, b]
            ok = (la >= 0) & (lb >= 0)
            np.add.at(A, (la[ok], lb[ok]), kvals[ok] * Kref[a, b])
            np.add.at(S, (la[ok], lb[ok]), kvals[ok] * (h2 * Mref[a, b]))
    return A, S, nodes


def dump_coo(matrix, path):
    """Write a sparse matrix in coordinate text format: row col value."""
    coo = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write("%d %d %.17g\n" % (r, c, v))
