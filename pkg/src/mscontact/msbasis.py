"""Construction of the generalized multiscale space.

Every coarse node contributes columns supported on its local domain (the
patch of coarse cells around it):

  * interior nodes: the first l eigenfunctions of the generalized problem
    a_i(v, w) = lambda s_i(v, w) posed on the patch, where a_i is the
    weighted stiffness and s_i the weighted mass assembled from the patch
    cells alone.  No essential condition is imposed on the patch perimeter,
    so constants lie in the kernel whenever the patch stays clear of the
    clamped edge and the leading eigenvalue is zero; eigenvalues near zero
    flag high-contrast components that the coarse space must resolve.  If
    the cutoff falls inside a repeated eigenvalue, the whole eigengroup is
    kept.  Each eigenfunction is multiplied (nodally) by the coarse hat of
    its node before entering the basis, which confines the column to the
    patch and makes it vanish on the patch perimeter and on the contact
    edge; the leading column of a kernel-bearing patch is then exactly the
    coarse hat.
  * boundary nodes off the contact edge: one column of the same kind from
    their (smaller) patch.
  * contact-edge nodes: one conductivity-harmonic lift of the node's coarse
    hat, with the hat data prescribed on the coarse mesh lines of the patch
    and the lift solved inside the coarse cells.  Its trace on the contact
    boundary is exactly the coarse hat, which is what lets the coarse
    multiplier act through the prolongation G_H; eigen columns have zero
    contact trace, so the trace space is carried by the extensions alone.

The spectral quantity Lambda is the smallest first-excluded eigenvalue over
the interior domains; the variant over all eigen-carrying domains is kept
alongside it for reporting.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .assemble import patch_matrices
from .grid import CONTACT, INTERIOR, contact_trace, local_domain

__all__ = [
    "LocalEigenBasis", "ExtensionBasis", "MultiscaleSpace", "BasisCache",
    "local_spectral", "extension_basis", "build_space", "coarse_operators",
    "dump_eigen_table",
]

# eigenvalues closer than this (relative) are treated as one group
TIE_RTOL = 1e-10


@dataclass
class LocalEigenBasis:
    """Retained eigenpairs of one local spectral problem.

    Vectors are s-orthonormal and stored densely over the patch's snapshot
    nodes (``nodes``); ``next_eigenvalue`` is the first excluded one (or the
    largest available when the whole local space is retained).
    """

    center: int
    eigenvalues: np.ndarray      # ascending, length = number retained
    vectors: np.ndarray          # (len(nodes), retained)
    nodes: np.ndarray            # fine node ids of the rows
    next_eigenvalue: float


@dataclass
class ExtensionBasis:
    """Conductivity-harmonic extension column for one contact node."""

    center: int
    column: sp.csr_matrix        # (n_free, 1)
    delta_nodes: np.ndarray      # perimeter fine nodes with nonzero data
    delta_values: np.ndarray


@dataclass
class MultiscaleSpace:
    """All basis columns plus the contact prolongation.

    ``provenance[k]`` is (coarse node, kind, eigen rank) for column k, with
    kind in {"eigen", "extension"}; columns are ordered by coarse node index
    and eigen rank, so spans are nested across basis counts.
    """

    R_off: sp.csr_matrix         # free fine dofs x M_off
    provenance: list
    G_H: sp.csr_matrix           # fine contact nodes x coarse contact nodes
    Lambda: float                # min over interior domains of the first excluded eigenvalue
    Lambda_all: float            # same minimum over every eigen-carrying domain
    eigen_tables: dict = field(default_factory=dict)   # node -> (retained, next)
    shortfalls: dict = field(default_factory=dict)     # node -> columns when < requested

    @property
    def m_off(self):
        return self.R_off.shape[1]


def _domain_eigh(sys, dom, k):
    """First k eigenpairs of the local problem, dense symmetric-definite."""
    A, S, nodes = patch_matrices(sys.g, sys.kappa, dom)
    try:
        w, V = scipy.linalg.eigh(A, S, subset_by_index=(0, k - 1))
    except scipy.linalg.LinAlgError as exc:
        raise ValueError("local weighted mass matrix is not positive "
                         "definite; assembly is inconsistent") from exc
    return w, V, nodes


def _tie_extended(w, l, rtol=TIE_RTOL):
    """Extend the cutoff l past any eigenvalues tied with the l-th."""
    cut = w[l - 1]
    li = l
    while li < w.size and (w[li] - cut) <= rtol * max(1.0, abs(cut)):
        li += 1
    return li


def pou_values(g, center, nodes):
    """Coarse hat of a coarse node sampled at fine nodes.

    Computed from integer grid offsets so the weights vanish exactly on the
    patch perimeter and match the contact prolongation bitwise.
    """
    ccx, ccy = g.coarse_coords(center)
    nodes = np.asarray(nodes)
    ix = nodes % (g.nx + 1)
    iy = nodes // (g.nx + 1)
    dx = np.abs(ix - ccx * g.nf)
    dy = np.abs(iy - ccy * g.nf)
    hx = np.where(dx < g.nf, (g.nf - dx) / g.nf, 0.0)
    hy = np.where(dy < g.nf, (g.nf - dy) / g.nf, 0.0)
    return hx * hy


def local_spectral(sys, dom, l):
    """Solve the local generalized eigenproblem and keep the l smallest
    modes (extended through a tied eigengroup at the cutoff)."""
    if l < 1:
        raise ValueError("l must be at least 1")
    snapdim = dom.snapshot_nodes.size
    if snapdim == 0:
        raise ValueError("local domain has no snapshot nodes")
    if l > snapdim:
        raise ValueError("l = %d exceeds the snapshot dimension %d" % (l, snapdim))

    k = min(snapdim, l + 4)
    while True:
        w, V, nodes = _domain_eigh(sys, dom, k)
        li = _tie_extended(w, l)
        if li >= k and k < snapdim:
            k = min(snapdim, max(li + 4, 2 * k))
            continue
        break
    next_ev = w[li] if li < w.size else w[li - 1]
    return LocalEigenBasis(dom.center, w[:li].copy(), V[:, :li].copy(),
                           nodes, float(next_ev))


def extension_basis(sys, dom):
    """Conductivity-harmonic lift of the coarse hat of a contact node.

    The hat data (1 at the node, 0 at the other coarse nodes, linear along
    edges) is prescribed on every coarse mesh line of the patch, perimeter
    and interior alike, and the lift is solved cell by cell inside the
    coarse cells.  For constant conductivity this reproduces the bilinear
    hat up to discretization; for rough conductivity the interior adapts
    while the contact-boundary trace stays exactly the coarse hat.
    """
    g = sys.g
    if g.coarse_tag[dom.center] != CONTACT:
        raise ValueError("extension basis requires a contact-boundary center")
    nf = g.nf
    nxp = g.nx + 1

    member = dom.member_nodes
    mx = member % nxp
    my = member // nxp
    skeleton = (mx % nf == 0) | (my % nf == 0)
    data_nodes = member[skeleton]
    delta = pou_values(g, dom.center, data_nodes)

    keep = delta > 0.0
    dnodes = data_nodes[keep]
    dvals = delta[keep]
    dfree = sys.free_of_node[dnodes]
    if np.any(dfree < 0):
        raise AssertionError("nonzero extension data on a clamped node")

    cell_interior = member[~skeleton]
    int_free = sys.free_of_node[cell_interior]
    if np.any(int_free < 0):
        raise AssertionError("cell-interior patch nodes must never be clamped")
    rows = [dfree]
    vals = [dvals]
    if int_free.size:
        A_ii = sp.csc_matrix(sys.M[int_free][:, int_free])
        A_ib = sys.M[int_free][:, dfree]
        u_int = spsolve(A_ii, -A_ib @ dvals)
        rows.append(int_free)
        vals.append(np.atleast_1d(u_int))
    rows = np.concatenate(rows)
    vals = np.concatenate(vals)
    col = sp.csr_matrix((vals, (rows, np.zeros_like(rows))),
                        shape=(sys.n_free, 1))
    return ExtensionBasis(dom.center, col, dnodes, dvals)


class BasisCache:
    """Memoizes local domains, eigensolves, and extension columns so the
    space can be rebuilt for several basis counts without re-solving."""

    def __init__(self, sys, k_hint=None):
        self.sys = sys
        self.k_hint = k_hint
        self._domains = {}
        self._eigs = {}
        self._exts = {}

    def domain(self, i):
        if i not in self._domains:
            self._domains[i] = local_domain(self.sys.g, i)
        return self._domains[i]

    def extension(self, i):
        if i not in self._exts:
            self._exts[i] = extension_basis(self.sys, self.domain(i))
        return self._exts[i]

    def spectral(self, i, l):
        """Same contract as local_spectral, served from the cache.

        The eigen window is sized once at first touch (from the hint) so a
        later rebuild with a different basis count slices the same arrays:
        columns are then bitwise-identical prefixes across counts.
        """
        dom = self.domain(i)
        snapdim = dom.snapshot_nodes.size
        if l < 1 or l > snapdim:
            raise ValueError("basis count %d out of range for domain %d" % (l, i))
        cached = self._eigs.get(i)
        if cached is None:
            k = min(snapdim, max(l, self.k_hint or 0) + 4)
            self._eigs[i] = _domain_eigh(self.sys, dom, k)
            cached = self._eigs[i]
        elif cached[0].size < min(snapdim, l + 1):
            k = min(snapdim, max(l + 4, 2 * cached[0].size))
            self._eigs[i] = _domain_eigh(self.sys, dom, k)
            cached = self._eigs[i]
        w, V, nodes = cached
        li = _tie_extended(w, l)
        if li >= w.size and w.size < snapdim:
            k = min(snapdim, max(li + 4, 2 * w.size))
            self._eigs[i] = _domain_eigh(self.sys, dom, k)
            w, V, nodes = self._eigs[i]
            li = _tie_extended(w, l)
        next_ev = w[li] if li < w.size else w[li - 1]
        return LocalEigenBasis(dom.center, w[:li].copy(), V[:, :li].copy(),
                               nodes, float(next_ev))


def _prolongation(g):
    """Linear interpolation from coarse to fine contact-node values."""
    tr = contact_trace(g)
    t = np.arange(tr.fine_nodes.size)
    j0 = t // g.nf
    r = t % g.nf
    on = r > 0
    rows = np.concatenate([t, t[on]])
    cols = np.concatenate([j0, j0[on] + 1])
    vals = np.concatenate([(g.nf - r) / g.nf, r[on] / g.nf])
    return sp.csr_matrix((vals, (rows, cols)),
                         shape=(tr.fine_nodes.size, tr.coarse_nodes.size))


def build_space(sys, g, l, cache=None):
    """Assemble R_off, G_H and the spectral indicator for basis count l."""
    if l < 1:
        raise ValueError("l must be at least 1")
    if cache is None:
        cache = BasisCache(sys, k_hint=l + 1)

    col_rows = []
    col_vals = []
    col_ids = []
    provenance = []
    eigen_tables = {}
    shortfalls = {}
    lam_interior = []
    lam_every = []
    ncols = 0

    for i in range(g.n_coarse):
        tag = g.coarse_tag[i]
        if tag == CONTACT:
            ext = cache.extension(i)
            coo = ext.column.tocoo()
            col_rows.append(coo.row)
            col_vals.append(coo.data)
            col_ids.append(np.full(coo.row.size, ncols))
            provenance.append((i, "extension", 0))
            ncols += 1
            continue
        dom = cache.domain(i)
        want = l if tag == INTERIOR else 1
        avail = min(want, dom.snapshot_nodes.size)
        if avail == 0:
            shortfalls[i] = 0
            continue
        eb = cache.spectral(i, avail)
        chi = pou_values(g, i, eb.nodes)
        rows = sys.free_of_node[eb.nodes]
        added = 0
        for r in range(eb.eigenvalues.size):
            vals = chi * eb.vectors[:, r]
            nz = vals != 0.0
            if not np.any(nz):
                continue
            col_rows.append(rows[nz])
            col_vals.append(vals[nz])
            col_ids.append(np.full(int(nz.sum()), ncols))
            provenance.append((i, "eigen", r))
            ncols += 1
            added += 1
        if added < want:
            shortfalls[i] = added
        eigen_tables[i] = (eb.eigenvalues.copy(), eb.next_eigenvalue)
        lam_every.append(eb.next_eigenvalue)
        if tag == INTERIOR:
            lam_interior.append(eb.next_eigenvalue)

    R_off = sp.csr_matrix(
        (np.concatenate(col_vals), (np.concatenate(col_rows), np.concatenate(col_ids))),
        shape=(sys.n_free, ncols))
    lam = min(lam_interior) if lam_interior else float("nan")
    lam_all = min(lam_every) if lam_every else float("nan")
    return MultiscaleSpace(R_off, provenance, _prolongation(g),
                           float(lam), float(lam_all), eigen_tables, shortfalls)


def coarse_operators(space, sys):
    """Project the fine operators onto the multiscale space."""
    R = space.R_off
    if R.shape[0] != sys.n_free:
        raise ValueError("space and system dimensions do not match")
    if space.G_H.shape[0] != sys.B.shape[0]:
        raise ValueError("prolongation does not match the contact rows")
    M_coarse = (R.T @ (sys.M @ R)).tocsr()
    B_coarse = (space.G_H.T @ (sys.B @ R)).tocsr()
    L_coarse = R.T @ sys.L
    return M_coarse, B_coarse, L_coarse


def dump_eigen_table(space, path):
    """CSV of local spectra: node index, 1-based rank, eigenvalue.  The row
    after the retained ones carries the first excluded eigenvalue."""
    with open(path, "w") as fh:
        fh.write("node,rank,eigenvalue\n")
        for node in sorted(space.eigen_tables):
            retained, nxt = space.eigen_tables[node]
            for r, lam in enumerate(retained, start=1):
                fh.write("%d,%d,%.17g\n" % (node, r, lam))
            fh.write("%d,%d,%.17g\n" % (node, retained.size + 1, nxt))
