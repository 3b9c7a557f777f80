"""Primal-dual active set solver for the hybrid complementarity system

    M U - B^T Phi = L,    B U >= 0,    Phi >= 0,    Phi^T B U = 0,

with M symmetric positive definite.  The same loop serves the fine scale
(B = contact rows against fine dofs) and the coarse scale (operators
projected onto the multiscale basis).

Each iteration guesses the binding constraint rows from the sign of
Phi - c * (B U), zeroes the inactive multipliers, and solves the
equality-constrained saddle system

    [[ M, -B(a,:)^T ], [ -B(a,:), 0 ]] [U; Phi(a)] = [L; 0]

by a Schur complement on the (small, dense) active block.  M is factorized
once per solve and reused; one step of iterative refinement on the block
system keeps its residual at machine scale.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import cho_factor, cho_solve, LinAlgError

__all__ = [
    "HybridSystem", "HybridSolution",
    "pdas_solve", "saddle_solve", "ncp_residual",
    "fine_hybrid", "coarse_hybrid",
]


@dataclass
class HybridSystem:
    """Operators of one complementarity solve.  B must have no zero row: a
    constraint row with no coupling indicates a grid or assembly bug."""

    M: sp.spmatrix
    B: sp.spmatrix
    L: np.ndarray
    scale: str = "fine"

    def __post_init__(self):
        self.M = sp.csr_matrix(self.M)
        self.B = sp.csr_matrix(self.B)
        self.L = np.asarray(self.L, dtype=float)
        n = self.M.shape[0]
        if self.M.shape[1] != n:
            raise ValueError("M must be square")
        if self.B.shape[1] != n or self.L.shape != (n,):
            raise ValueError("inconsistent operator dimensions")
        if np.any(np.diff(self.B.indptr) == 0):
            raise ValueError("constraint matrix has a zero row")


@dataclass
class HybridSolution:
    """Converged (or last) iterate of the active-set loop.

    ``trace`` has one row per saddle solve: (k, active count, |dPhi|,
    complementarity residual).  ``energies`` records 1/2 U'MU - L'U per
    iteration as a soft diagnostic.
    """

    U: np.ndarray
    Phi: np.ndarray
    active: np.ndarray
    iterations: int
    converged: bool
    trace: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    energies: np.ndarray = field(default_factory=lambda: np.zeros(0))


class _SaddleContext:
    """Factorization of M plus cached M^{-1} B^T columns, shared by all
    active-set solves against a fixed constraint matrix."""

    def __init__(self, M, B):
        self.lu = spla.splu(sp.csc_matrix(M))
        self.M = sp.csr_matrix(M)
        self.B = sp.csr_matrix(B)
        if B.shape[0] > 0:
            self.Y = self.lu.solve(self.B.T.toarray())
            self.S = self.B @ self.Y
        else:
            self.Y = np.zeros((M.shape[0], 0))
            self.S = np.zeros((0, 0))

    def solve(self, active, r1, r2=None, refine=1):
        """Solve the block system for the given active rows.

        Returns (U, Phi_active).  Raises ValueError if the active Schur
        complement is not positive definite (rank-deficient constraints).
        """
        a = np.asarray(active, dtype=np.int64)
        if r2 is None:
            r2 = np.zeros(a.size)
        if a.size == 0:
            u = self.lu.solve(r1)
            for _ in range(refine):
                u += self.lu.solve(r1 - self.M @ u)
            return u, np.zeros(0)
        Ba = self.B[a]
        Ya = self.Y[:, a]
        try:
            cho = cho_factor(self.S[np.ix_(a, a)])
        except LinAlgError as exc:
            raise ValueError(
                "singular saddle system: active constraint block is rank "
                "deficient") from exc
        u, p = self._schur(Ba, Ya, cho, r1, r2)
        for _ in range(refine):
            res1 = r1 - (self.M @ u - Ba.T @ p)
            res2 = r2 - (-(Ba @ u))
            du, dp = self._schur(Ba, Ya, cho, res1, res2)
            u += du
            p += dp
        return u, p

    def _schur(self, Ba, Ya, cho, r1, r2):
        w = self.lu.solve(r1)
        p = cho_solve(cho, -(r2 + Ba @ w))
        return w + Ya @ p, p


def saddle_solve(M, B_active, rhs):
    """One-shot solve of [[M, -B^T], [-B, 0]] [U; Phi] = [rhs; 0]."""
    ctx = _SaddleContext(M, B_active)
    return ctx.solve(np.arange(B_active.shape[0]), np.asarray(rhs, dtype=float))


def ncp_residual(system, U, Phi, c):
    """Max-norm of Phi - max(0, Phi - c * B U); zero iff the unilateral
    conditions hold exactly."""
    if c <= 0.0:
        raise ValueError("c must be positive")
    r = Phi - np.maximum(0.0, Phi - c * (system.B @ U))
    return float(np.max(np.abs(r))) if r.size else 0.0


def pdas_solve(system, c=1.0, tol=1e-10, maxiter=12):
    """Run the active-set iteration until the multiplier settles.

    Stops when |Phi^k - Phi^(k-1)| <= tol, when the active set repeats (the
    re-solve would reproduce the same iterate), or after maxiter saddle
    solves; the last case is reported as unconverged, not raised.
    """
    if c <= 0.0:
        raise ValueError("c must be positive")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if maxiter < 1:
        raise ValueError("maxiter must be at least 1")

    ctx = _SaddleContext(system.M, system.B)
    m = system.B.shape[0]
    U, _ = ctx.solve(np.empty(0, dtype=np.int64), system.L)
    Phi = np.zeros(m)

    trace = []
    energies = []
    prev = None
    converged = False
    k = 0
    while k < maxiter:
        s = Phi - c * (system.B @ U)
        active = np.flatnonzero(s > 0.0)
        if prev is not None and np.array_equal(active, prev):
            converged = True
            break
        U_new, Phi_a = ctx.solve(active, system.L)
        Phi_new = np.zeros(m)
        Phi_new[active] = Phi_a
        dphi = float(np.linalg.norm(Phi_new - Phi))
        k += 1
        U, Phi, prev = U_new, Phi_new, active
        energies.append(0.5 * float(U @ (system.M @ U)) - float(system.L @ U))
        trace.append((k, active.size, dphi, ncp_residual(system, U, Phi, c)))
        if dphi <= tol:
            converged = True
            break

    return HybridSolution(U, Phi, prev if prev is not None else np.empty(0, dtype=np.int64),
                          k, converged, np.asarray(trace, dtype=float),
                          np.asarray(energies, dtype=float))


def fine_hybrid(fs):
    """Wrap an assembled fine system for the active-set solver."""
    return HybridSystem(fs.M, fs.B, fs.L, "fine")


def coarse_hybrid(M_coarse, B_coarse, L_coarse):
    return HybridSystem(M_coarse, B_coarse, L_coarse, "coarse")
