"""Piecewise-constant high-contrast coefficient fields on the fine grid.

A field assigns one strictly positive value to every fine cell.  Two
generators are provided: a field of small blocky inclusions plus short
channel segments, and a channelized field whose strips cross several coarse
cells.  Both keep the clamped (top) edge clear of contrast and are pure
functions of (grid, seed, parameters).

Rasters are persisted as CSV with one row of cells per line, bottom row
first, full double precision.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PermField", "generate_inclusions", "generate_channels",
    "save_raster", "load_raster",
]


@dataclass
class PermField:
    """One positive conductivity value per fine cell (cell-major, bottom row
    of cells first, matching the grid's cell indexing)."""

    values: np.ndarray
    background: float
    contrast: float
    descriptor: str
    seed: int | None = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("field values must be a flat cell vector")
        if not np.all(self.values > 0.0):
            raise ValueError("field values must be strictly positive")
        self.values.flags.writeable = False

    def raster(self, g):
        """(nx, nx) view, row index = cell row from the bottom."""
        if self.values.size != g.n_cells:
            raise ValueError("field has %d cells, grid has %d"
                             % (self.values.size, g.n_cells))
        return self.values.reshape(g.nx, g.nx)


def _check_contrast(contrast):
    if contrast < 1.0:
        raise ValueError("contrast must be >= 1, got %r" % (contrast,))


def _interior_span(nx, nf):
    # preferred margin: one coarse layer; fall back on tiny grids
    for lo in (nf, 1, 0):
        if nx - 2 * lo >= 1:
            return lo, nx - lo
    return 0, nx


def _interior_box(g):
    """Fine-cell index box that keeps contrast clear of the domain boundary.

    High-contrast subregions are kept strictly inside the domain (one coarse
    layer of background where the grid allows it): contrast touching the
    contact boundary would put fine-scale structure into the boundary trace
    that the coarse trace space cannot carry, and the clamped edge must stay
    clear for the same reason the interior-inclusion structure assumes.
    """
    x_lo, x_hi = _interior_span(g.nx, g.nf)
    y_lo, y_hi = _interior_span(g.nx, g.nf)
    return x_lo, x_hi, y_lo, y_hi


def _paint_rect(raster, cx0, cy0, w, h, value):
    raster[cy0:cy0 + h, cx0:cx0 + w] = value


def generate_inclusions(g, seed, contrast, n_inclusions=None, n_channels=6):
    """Blocky inclusions and short channel segments at the contrast value.

    Background is 1.  Inclusions are scattered by cycling through the coarse
    cells below the clamped layer in a shuffled order, one inclusion per
    visit at a random offset and size inside its cell: the speckle then
    reaches every local domain, which keeps the local spectra free of the
    exact degeneracies a uniform (hence symmetric) patch would have.  The
    short segments are one-to-two cells thick and at most two coarse cells
    long.  Deterministic for a fixed seed.
    """
    _check_contrast(contrast)
    rng = np.random.default_rng(seed)
    nx, nf, Nc = g.nx, g.nf, g.Nc
    if n_inclusions is None:
        n_inclusions = max(Nc - 2, 1) ** 2
    x_lo, x_hi, y_lo, y_hi = _interior_box(g)
    raster = np.ones((nx, nx))

    # host coarse cells inside the margin, visited in a shuffled cycle so the
    # speckle reaches every local domain (uniform patches would otherwise
    # create symmetric, spectrally degenerate local problems)
    cl_x = range(max(x_lo // nf, 0), max((x_hi - 1) // nf + 1, 1))
    cl_y = range(max(y_lo // nf, 0), max((y_hi - 1) // nf + 1, 1))
    host = [(cx, cy) for cy in cl_y for cx in cl_x]
    order = rng.permutation(len(host))
    smax = max(2, nf // 2)
    smin = min(max(1, nf // 4), smax)
    for i in range(int(n_inclusions)):
        cx, cy = host[order[i % len(host)]]
        w = min(int(rng.integers(smin, smax + 1)), nf)
        h = min(int(rng.integers(smin, smax + 1)), nf)
        ox = int(rng.integers(0, nf - w + 1))
        oy = int(rng.integers(0, nf - h + 1))
        x0 = min(max(cx * nf + ox, x_lo), x_hi - w)
        y0 = min(max(cy * nf + oy, y_lo), y_hi - h)
        _paint_rect(raster, max(x0, 0), max(y0, 0), w, h, contrast)

    tmax = max(1, nf // 8)
    for _ in range(int(n_channels)):
        t = int(rng.integers(1, tmax + 1))
        length = int(rng.integers(nf, 2 * nf + 1))
        horizontal = bool(rng.integers(0, 2))
        if horizontal:
            w, h = min(length, x_hi - x_lo), min(t, y_hi - y_lo)
        else:
            w, h = min(t, x_hi - x_lo), min(length, y_hi - y_lo)
        cx0 = int(rng.integers(x_lo, x_hi - w + 1))
        cy0 = int(rng.integers(y_lo, y_hi - h + 1))
        _paint_rect(raster, cx0, cy0, w, h, contrast)

    desc = ("inclusions(n_inclusions=%d,n_channels=%d,contrast=%.17g)"
            % (n_inclusions, n_channels, contrast))
    return PermField(raster.ravel(), 1.0, float(contrast), desc, int(seed))


def generate_channels(g, seed, contrast, n_channels=8):
    """Long horizontal/vertical strips crossing at least two coarse cells."""
    _check_contrast(contrast)
    rng = np.random.default_rng(seed)
    nx = g.nx
    x_lo, x_hi, y_lo, y_hi = _interior_box(g)
    raster = np.ones((nx, nx))

    tmax = max(1, g.nf // 6)
    lmin = min(2 * g.nf, x_hi - x_lo)
    for _ in range(int(n_channels)):
        t = int(rng.integers(1, tmax + 1))
        horizontal = bool(rng.integers(0, 2))
        span = (x_hi - x_lo) if horizontal else (y_hi - y_lo)
        length = int(rng.integers(min(lmin, span), span + 1))
        if horizontal:
            w, h = length, min(t, y_hi - y_lo)
        else:
            w, h = min(t, x_hi - x_lo), length
        cx0 = int(rng.integers(x_lo, x_hi - w + 1))
        cy0 = int(rng.integers(y_lo, y_hi - h + 1))
        _paint_rect(raster, cx0, cy0, w, h, contrast)

    desc = "channels(n_channels=%d,contrast=%.17g)" % (n_channels, contrast)
    return PermField(raster.ravel(), 1.0, float(contrast), desc, int(seed))


def save_raster(field, g, path):
    """Write the field as CSV, one cell row per line, bottom row first."""
    raster = field.raster(g)
    with open(path, "w") as fh:
        for row in raster:
            fh.write(",".join("%.17g" % v for v in row))
            fh.write("\n")


def load_raster(path, g):
    """Read a CSV raster back; dimensions must match the grid exactly."""
    raster = np.loadtxt(path, delimiter=",", ndmin=2)
    if raster.shape != (g.nx, g.nx):
        raise ValueError("raster shape %s does not match the %dx%d fine grid"
                         % (raster.shape, g.nx, g.nx))
    if not np.all(raster > 0.0):
        raise ValueError("raster contains non-positive entries")
    return PermField(raster.ravel(), float(raster.min()), float(raster.max()),
                     "raster(%s)" % (path,), None)
