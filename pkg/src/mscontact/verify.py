"""Error metrics, complementarity reports, and independent small-scale oracles.

The oracles deliberately avoid the hybrid machinery: projected Gauss-Seidel
minimizes the constrained energy directly on the displacement unknowns, and
the exhaustive routine tries every active-set candidate of the saddle system
and keeps the feasible, complementary ones.  Both exist to cross-check
``pdas_solve`` on problems small enough to brute-force.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .assemble import assemble_fine, default_source
from .msbasis import BasisCache, build_space, coarse_operators
from .pdas import _SaddleContext, coarse_hybrid, fine_hybrid, ncp_residual, pdas_solve

__all__ = [
    "ErrorReport", "StudyResult", "errors", "complementarity_report",
    "stationarity_residual", "energy_distance", "oracle_pgs",
    "enumerate_active_sets", "convergence_study", "study_csv",
]

STUDY_COLUMNS = ("l", "coarse_dof", "e_a", "e_L2", "Lambda",
                 "fine_iters", "coarse_iters", "Lambda_all")


@dataclass
class ErrorReport:
    """One row of a basis-count convergence study."""

    l: int
    coarse_dof: int
    e_a: float
    e_L2: float
    lam: float
    fine_iters: int
    coarse_iters: int
    lam_all: float

    def row(self):
        return (self.l, self.coarse_dof, self.e_a, self.e_L2, self.lam,
                self.fine_iters, self.coarse_iters, self.lam_all)


@dataclass
class StudyResult:
    system: object
    fine: object                   # HybridSolution of the reference solve
    reports: list
    coarse: list                   # (space, HybridSystem, HybridSolution) per l


def _quad(A, v):
    return float(v @ (A @ v))


def errors(u_ref, u_ms_fine, sys):
    """Relative plain-L2 and weighted-H1 errors of a prolongated coarse
    solution against the fine reference, as quadratic-form square roots."""
    u_ref = np.asarray(u_ref, dtype=float)
    d = u_ref - np.asarray(u_ms_fine, dtype=float)
    if d.shape != u_ref.shape or u_ref.shape != (sys.n_free,):
        raise ValueError("coefficient vectors do not match the fine system")
    num_l2 = max(_quad(sys.M0, d), 0.0)
    den_l2 = max(_quad(sys.M0, u_ref), 0.0)
    num_a = max(_quad(sys.M, d) + _quad(sys.S, d), 0.0)
    den_a = max(_quad(sys.M, u_ref) + _quad(sys.S, u_ref), 0.0)
    e_l2 = np.sqrt(num_l2 / den_l2) if den_l2 > 0.0 else (0.0 if num_l2 == 0.0 else np.inf)
    e_a = np.sqrt(num_a / den_a) if den_a > 0.0 else (0.0 if num_a == 0.0 else np.inf)
    return float(e_l2), float(e_a)


def complementarity_report(sol, system):
    """(min B U, min Phi, |Phi' B U|, complementarity residual)."""
    bu = system.B @ sol.U
    comp = abs(float(sol.Phi @ bu))
    return (float(bu.min()), float(sol.Phi.min()), comp,
            ncp_residual(system, sol.U, sol.Phi, 1.0))


def stationarity_residual(sol, system):
    """|M U - B' Phi - L| relative to |L|."""
    r = system.M @ sol.U - system.B.T @ sol.Phi - system.L
    den = np.linalg.norm(system.L)
    return float(np.linalg.norm(r) / den) if den > 0.0 else float(np.linalg.norm(r))


def energy_distance(system, u, v):
    """Stiffness-induced distance |u - v|_M relative to |u|_M."""
    d = np.asarray(u) - np.asarray(v)
    num = max(_quad(system.M, d), 0.0)
    den = max(_quad(system.M, np.asarray(u, dtype=float)), 0.0)
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return float(np.sqrt(num / den))


def oracle_pgs(system, tol=1e-14, rtol_residual=1e-10, max_sweeps=200_000):
    """Projected Gauss-Seidel on the constrained energy minimization.

    Minimizes 1/2 U'MU - L'U subject to pointwise nonnegativity at every dof
    coupled to a constraint row.  Sweeps until both the energy decrease per
    sweep drops below tol (GS energy decay is monotone for SPD M) and the
    projected residual (clamped to >= 0 at binding dofs) falls below
    rtol_residual relative to |L|.  Meant for small systems only: cost is
    O(nnz) per sweep, many sweeps.
    """
    M = system.M.tocsr()
    L = system.L
    n = L.size
    constrained = np.zeros(n, dtype=bool)
    constrained[np.unique(system.B.tocsr().indices)] = True

    indptr, indices, data = M.indptr, M.indices, M.data
    diag = M.diagonal()
    if np.any(diag <= 0.0):
        raise ValueError("stiffness diagonal must be positive")
    U = np.zeros(n)
    energy = 0.0
    rtarget = rtol_residual * max(np.linalg.norm(L), 1e-300)
    prev_res = np.inf
    for _ in range(max_sweeps):
        for i in range(n):
            row = slice(indptr[i], indptr[i + 1])
            s = L[i] - data[row] @ U[indices[row]] + diag[i] * U[i]
            ui = s / diag[i]
            if constrained[i] and ui < 0.0:
                ui = 0.0
            U[i] = ui
        new_energy = 0.5 * float(U @ (M @ U)) - float(L @ U)
        settled = abs(energy - new_energy) <= tol * max(1.0, abs(new_energy))
        energy = new_energy
        if settled:
            r = L - M @ U
            binding = constrained & (U == 0.0)
            r[binding] = np.maximum(r[binding], 0.0)
            res = np.linalg.norm(r)
            if res <= rtarget or res >= 0.99999 * prev_res:
                break
            prev_res = res
    return U


def enumerate_active_sets(system, feas_tol=1e-9, strict_tol=1e-10):
    """Try every subset of constraint rows as the active set.

    Solves the equality-constrained saddle system per subset and keeps the
    candidates that are feasible (B U >= 0, Phi >= 0 up to feas_tol); they
    must all encode the same unique solution.  Returns (U, Phi, active)
    where active holds the rows with strictly positive multiplier.
    """
    m = system.B.shape[0]
    if m > 12:
        raise ValueError("enumeration is limited to 12 constraint rows")
    ctx = _SaddleContext(system.M, system.B)
    candidates = []
    for bits in itertools.product((0, 1), repeat=m):
        active = np.flatnonzero(np.asarray(bits, dtype=bool))
        try:
            U, Phi_a = ctx.solve(active, system.L)
        except ValueError:
            continue
        Phi = np.zeros(m)
        Phi[active] = Phi_a
        bu = system.B @ U
        ok_primal = bu.min() >= -feas_tol * max(1.0, np.abs(bu).max())
        ok_dual = Phi.min() >= -feas_tol * max(1.0, np.abs(Phi).max())
        if ok_primal and ok_dual:
            candidates.append((U, Phi))
    if not candidates:
        raise RuntimeError("no feasible active-set candidate found")
    U0, Phi0 = candidates[0]
    for U, _ in candidates[1:]:
        if energy_distance(system, U0, U) > 1e-8:
            raise RuntimeError("enumeration found distinct KKT points")
    active = np.flatnonzero(Phi0 > strict_tol * max(1.0, np.abs(Phi0).max()))
    return U0, Phi0, active


def convergence_study(g, kappa, f=default_source, l_range=(1, 2, 3, 4, 5),
                      c=1.0, tol=1e-10, maxiter=12):
    """One fine reference solve, then a coarse solve per basis count.

    The local eigendecompositions are shared across basis counts through a
    cache; the reported errors compare the prolongated coarse solution with
    the fine one.
    """
    l_range = [int(l) for l in l_range]
    if not l_range:
        raise ValueError("l_range must be nonempty")
    sys_f = assemble_fine(g, kappa, f)
    fine_sol = pdas_solve(fine_hybrid(sys_f), c=c, tol=tol, maxiter=maxiter)

    cache = BasisCache(sys_f, k_hint=max(l_range) + 1)
    reports = []
    coarse = []
    for l in l_range:
        space = build_space(sys_f, g, l, cache=cache)
        Mc, Bc, Lc = coarse_operators(space, sys_f)
        hyb = coarse_hybrid(Mc, Bc, Lc)
        sol = pdas_solve(hyb, c=c, tol=tol, maxiter=maxiter)
        u_ms = space.R_off @ sol.U
        e_l2, e_a = errors(fine_sol.U, u_ms, sys_f)
        reports.append(ErrorReport(l, space.m_off, e_a, e_l2, space.Lambda,
                                   fine_sol.iterations, sol.iterations,
                                   space.Lambda_all))
        coarse.append((space, hyb, sol))
    return StudyResult(sys_f, fine_sol, reports, coarse)


def study_csv(reports):
    """Render study rows as CSV text with a fixed column layout."""
    lines = [",".join(STUDY_COLUMNS)]
    for rep in reports:
        lines.append("%d,%d,%.17g,%.17g,%.17g,%d,%d,%.17g" % rep.row())
    return "\n".join(lines) + "\n"
