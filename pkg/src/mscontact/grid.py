"""Structured coarse/fine grid pair on the unit square.

The computational domain is (0,1)^2, partitioned into Nc x Nc square coarse
cells, each refined into nf x nf square fine cells.  The bottom edge carries
the unilateral (contact) condition, the top edge is clamped to zero, and the
two side edges are zero-flux.

Indexing conventions used throughout the package:
  * fine nodes:  (Nc*nf+1)^2 nodes, index = iy*(nx+1) + ix with nx = Nc*nf,
    bottom row (iy=0) first, left-to-right;
  * fine cells:  nx^2 cells, index = cy*nx + cx;
  * cell -> node incidence is counterclockwise (SW, SE, NE, NW);
  * coarse nodes and cells follow the same scheme with Nc in place of nx.

All objects are immutable after construction (arrays are marked read-only),
so they can be shared freely across workers.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "INTERIOR", "DIRICHLET", "NEUMANN", "CONTACT",
    "GridPair", "LocalDomain", "ContactTrace",
    "build_grids", "local_domain", "contact_trace",
]

# boundary tags; every node carries exactly one
INTERIOR = 0
DIRICHLET = 1   # top edge, u = 0 (dominates the side edges at the top corners)
NEUMANN = 2     # left/right edges, zero flux
CONTACT = 3     # bottom edge, unilateral condition (owns both bottom corners)


def _freeze(*arrays):
    for a in arrays:
        a.flags.writeable = False


@dataclass
class GridPair:
    """Matched coarse and fine quadrilateral meshes of the unit square.

    Every coarse node coincides with one fine node (``coarse_to_fine``), and
    a coarse node inherits the tag of its coincident fine node.
    """

    Nc: int                     # coarse cells per side
    nf: int                     # fine cells per coarse cell, per side
    fine_xy: np.ndarray         # (n_fine, 2) node coordinates
    coarse_xy: np.ndarray       # (n_coarse, 2)
    cells: np.ndarray           # (nx*nx, 4) fine cell -> node, CCW (SW,SE,NE,NW)
    coarse_to_fine: np.ndarray  # (n_coarse,) fine node index of each coarse node
    fine_tag: np.ndarray        # (n_fine,) one of the tags above
    coarse_tag: np.ndarray      # (n_coarse,)

    @property
    def nx(self):
        """Fine cells per side."""
        return self.Nc * self.nf

    @property
    def h(self):
        return 1.0 / self.nx

    @property
    def H(self):
        return 1.0 / self.Nc

    @property
    def n_fine(self):
        return (self.nx + 1) ** 2

    @property
    def n_coarse(self):
        return (self.Nc + 1) ** 2

    @property
    def n_cells(self):
        return self.nx ** 2

    def fine_index(self, ix, iy):
        """Fine node index from integer grid coordinates."""
        return iy * (self.nx + 1) + ix

    def coarse_index(self, cx, cy):
        return cy * (self.Nc + 1) + cx

    def coarse_coords(self, i):
        """Integer grid coordinates (cx, cy) of coarse node i."""
        return i % (self.Nc + 1), i // (self.Nc + 1)


@dataclass
class LocalDomain:
    """Patch of coarse cells around one coarse node.

    ``snapshot_nodes`` carry the local spectral problems: every unclamped
    node of the closed patch, so the local space holds the restriction of
    any admissible fine function (constants included whenever the patch
    stays clear of the clamped edge).  ``interior_nodes`` (strictly inside
    the patch) are the unknowns of the local Dirichlet extension problems,
    whose data lives on the full perimeter ``boundary_nodes``.
    """

    center: int                  # coarse node index
    coarse_cells: np.ndarray     # coarse cell indices forming the patch
    member_nodes: np.ndarray     # all fine nodes of the closed patch
    snapshot_nodes: np.ndarray   # spectral dofs: member nodes minus clamped ones
    interior_nodes: np.ndarray   # fine nodes strictly interior to the patch
    boundary_nodes: np.ndarray   # fine nodes on the patch perimeter
    bounds: tuple                # (ix0, ix1, iy0, iy1) fine-node index bounds


@dataclass
class ContactTrace:
    """Orderings of the contact-boundary nodes, left to right."""

    fine_nodes: np.ndarray     # fine node indices along the bottom edge
    coarse_nodes: np.ndarray   # coarse node indices along the bottom edge
    edge_lengths: np.ndarray   # length of each fine boundary segment


def build_grids(Nc, nf):
    """Build the coarse grid and its fine refinement on the unit square.

    Tags: bottom edge Contact (including both bottom corners), top edge
    Dirichlet (including both top corners), the rest of the two side edges
    Neumann.
    """
    if Nc < 1:
        raise ValueError("Nc must be a positive integer, got %r" % (Nc,))
    if nf < 1:
        raise ValueError("nf must be a positive integer, got %r" % (nf,))
    nx = Nc * nf

    ticks = np.linspace(0.0, 1.0, nx + 1)
    X, Y = np.meshgrid(ticks, ticks)            # Y[iy], X[ix]
    fine_xy = np.column_stack([X.ravel(), Y.ravel()])

    cticks = np.linspace(0.0, 1.0, Nc + 1)
    CX, CY = np.meshgrid(cticks, cticks)
    coarse_xy = np.column_stack([CX.ravel(), CY.ravel()])

    # fine cell -> node incidence, CCW from the SW corner
    cx, cy = np.meshgrid(np.arange(nx), np.arange(nx))
    sw = (cy * (nx + 1) + cx).ravel()
    cells = np.column_stack([sw, sw + 1, sw + nx + 2, sw + nx + 1])

    gx, gy = np.meshgrid(np.arange(Nc + 1) * nf, np.arange(Nc + 1) * nf)
    coarse_to_fine = (gy * (nx + 1) + gx).ravel()

    ix = np.arange(nx + 1)
    iy = ix[:, None]
    tag = np.full((nx + 1, nx + 1), INTERIOR, dtype=np.int8)
    tag[(iy > 0) & (iy < nx) & ((ix == 0) | (ix == nx))] = NEUMANN
    tag[nx, :] = DIRICHLET
    tag[0, :] = CONTACT
    fine_tag = tag.ravel()
    coarse_tag = fine_tag[coarse_to_fine]

    g = GridPair(int(Nc), int(nf), fine_xy, coarse_xy, cells,
                 coarse_to_fine, fine_tag, coarse_tag)
    _freeze(fine_xy, coarse_xy, cells, coarse_to_fine, fine_tag, coarse_tag)
    return g


def local_domain(g, i):
    """Union of the coarse cells touching coarse node i, with node sets."""
    if not 0 <= i < g.n_coarse:
        raise IndexError("coarse node index %r out of range" % (i,))
    cx, cy = g.coarse_coords(i)

    ccells = []
    for CY in range(max(cy - 1, 0), min(cy, g.Nc - 1) + 1):
        for CX in range(max(cx - 1, 0), min(cx, g.Nc - 1) + 1):
            ccells.append(CY * g.Nc + CX)
    ccells = np.asarray(ccells, dtype=np.int64)

    # the patch is a rectangle in fine-node index space
    ix0 = max(cx - 1, 0) * g.nf
    ix1 = min(cx + 1, g.Nc) * g.nf
    iy0 = max(cy - 1, 0) * g.nf
    iy1 = min(cy + 1, g.Nc) * g.nf

    xs = np.arange(ix0, ix1 + 1)
    ys = np.arange(iy0, iy1 + 1)
    IX, IY = np.meshgrid(xs, ys)
    member = (IY * (g.nx + 1) + IX).ravel()

    strict = (IX > ix0) & (IX < ix1) & (IY > iy0) & (IY < iy1)
    interior = (IY[strict] * (g.nx + 1) + IX[strict]).ravel()
    boundary = np.setdiff1d(member, interior, assume_unique=True)

    snap = IY < g.nx              # drop the clamped top row, keep the rest
    snapshot = (IY[snap] * (g.nx + 1) + IX[snap]).ravel()

    dom = LocalDomain(int(i), ccells, member, snapshot, interior, boundary,
                      (ix0, ix1, iy0, iy1))
    _freeze(ccells, member, snapshot, interior, boundary)
    return dom


def contact_trace(g):
    """Ordered fine and coarse node indices along the contact boundary."""
    fine = np.arange(g.nx + 1, dtype=np.int64)       # iy = 0 row
    coarse = np.arange(g.Nc + 1, dtype=np.int64)     # cy = 0 row
    lengths = np.full(g.nx, g.h)
    tr = ContactTrace(fine, coarse, lengths)
    _freeze(fine, coarse, lengths)
    return tr
