"""Multiscale finite element solvers for unilateral contact problems with
high-contrast heterogeneous coefficients.

The package provides a fine-grid hybrid reference solver (bilinear elements,
Lagrange multiplier on the contact boundary, primal-dual active set
iteration) and a spectral coarse solver whose basis combines local
eigenfunctions with conductivity-harmonic extensions along the contact
boundary.
"""

from .grid import (CONTACT, DIRICHLET, INTERIOR, NEUMANN, GridPair,
                   LocalDomain, ContactTrace, build_grids, contact_trace,
                   local_domain)
from .field import (PermField, generate_channels, generate_inclusions,
                    load_raster, save_raster)
from .assemble import FineSystem, assemble_fine, default_source, element_stiffness
from .msbasis import (BasisCache, ExtensionBasis, LocalEigenBasis,
                      MultiscaleSpace, build_space, coarse_operators,
                      extension_basis, local_spectral)
from .pdas import (HybridSolution, HybridSystem, coarse_hybrid, fine_hybrid,
                   ncp_residual, pdas_solve, saddle_solve)
from .verify import (ErrorReport, StudyResult, complementarity_report,
                     convergence_study, energy_distance, enumerate_active_sets,
                     errors, oracle_pgs, stationarity_residual, study_csv)

__version__ = "0.1.0"
