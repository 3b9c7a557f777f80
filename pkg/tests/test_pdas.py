import inspect

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from mscontact.assemble import assemble_fine
from mscontact.field import generate_inclusions
from mscontact.grid import build_grids
from mscontact.pdas import (HybridSystem, fine_hybrid, ncp_residual,
                            pdas_solve, saddle_solve)


def make_system(Nc=2, nf=2, seed=1, contrast=1e2, f=None):
    g = build_grids(Nc, nf)
    kappa = generate_inclusions(g, seed=seed, contrast=contrast)
    kwargs = {} if f is None else {"f": f}
    return fine_hybrid(assemble_fine(g, kappa, **kwargs))


def test_paper_defaults():
    sig = inspect.signature(pdas_solve)
    assert sig.parameters["c"].default == 1.0
    assert sig.parameters["maxiter"].default == 12


def test_rejects_bad_parameters():
    sys = make_system()
    with pytest.raises(ValueError):
        pdas_solve(sys, c=0.0)
    with pytest.raises(ValueError):
        pdas_solve(sys, tol=-1.0)
    with pytest.raises(ValueError):
        pdas_solve(sys, maxiter=0)


def test_zero_constraint_row_rejected():
    sys = make_system()
    B = sys.B.tolil()
    B[1, :] = 0.0
    with pytest.raises(ValueError):
        HybridSystem(sys.M, B.tocsr(), sys.L)


def test_dimension_mismatch_rejected():
    sys = make_system()
    with pytest.raises(ValueError):
        HybridSystem(sys.M, sys.B[:, :-1], sys.L)
    with pytest.raises(ValueError):
        HybridSystem(sys.M, sys.B, sys.L[:-1])


def test_inactive_constraint_reduces_to_plain_solve():
    # f >= 0 gives a nonnegative unconstrained solution (M is an M-matrix),
    # so the constraint never activates
    sys = make_system(f=lambda x, y: np.ones_like(x))
    sol = pdas_solve(sys)
    assert sol.converged
    assert sol.active.size == 0
    assert np.all(sol.Phi == 0.0)
    plain = spla.spsolve(sys.M.tocsc(), sys.L)
    assert np.abs(sol.U - plain).max() <= 1e-12 * max(1.0, np.abs(plain).max())


def test_contact_activates_and_satisfies_kkt():
    sys = make_system(Nc=3, nf=2, seed=3, contrast=1e4)
    sol = pdas_solve(sys)
    assert sol.converged
    assert sol.active.size > 0
    bu = sys.B @ sol.U
    assert bu.min() >= -1e-8
    assert sol.Phi.min() >= -1e-12
    assert abs(sol.Phi @ bu) <= 1e-8 * (1.0 + np.linalg.norm(sol.Phi) * np.linalg.norm(bu))
    assert ncp_residual(sys, sol.U, sol.Phi, 1.0) <= 1e-9
    r = sys.M @ sol.U - sys.B.T @ sol.Phi - sys.L
    assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(sys.L)
    # active rows are pinned to zero, inactive multipliers vanish
    assert np.abs(bu[sol.active]).max() <= 1e-12 * max(1.0, np.abs(bu).max())
    inactive = np.setdiff1d(np.arange(sys.B.shape[0]), sol.active)
    assert np.all(sol.Phi[inactive] == 0.0)


def test_iteration_trace_and_energy_log():
    sys = make_system(Nc=3, nf=2, seed=3, contrast=1e4)
    sol = pdas_solve(sys)
    assert sol.trace.shape == (sol.iterations, 4)
    assert np.array_equal(sol.trace[:, 0], np.arange(1, sol.iterations + 1))
    assert sol.energies.shape == (sol.iterations,)


def test_maxiter_reports_unconverged():
    sys = make_system(Nc=3, nf=2, seed=3, contrast=1e4)
    sol = pdas_solve(sys, maxiter=1)
    assert sol.iterations == 1
    assert not sol.converged


def test_saddle_empty_active_is_plain_solve():
    sys = make_system()
    U, phi = saddle_solve(sys.M, sys.B[:0, :], sys.L)
    assert phi.size == 0
    plain = spla.spsolve(sys.M.tocsc(), sys.L)
    assert np.allclose(U, plain, atol=1e-14)


def test_saddle_single_row_closed_form():
    sys = make_system(seed=5)
    b = sys.B[1:2, :]
    U, phi = saddle_solve(sys.M, b, sys.L)
    Minv = np.linalg.inv(sys.M.toarray())
    brow = b.toarray().ravel()
    s = brow @ Minv @ brow
    phi_hand = -(brow @ (Minv @ sys.L)) / s
    u_hand = Minv @ (sys.L + brow * phi_hand)
    assert np.isclose(phi[0], phi_hand, rtol=1e-14, atol=1e-16)
    assert np.allclose(U, u_hand, rtol=1e-12, atol=1e-15)


def test_saddle_block_residual_random_spd():
    rng = np.random.default_rng(0)
    n, m = 30, 4
    Q = rng.standard_normal((n, n))
    M = sp.csr_matrix(Q @ Q.T + n * np.eye(n))
    B = sp.csr_matrix(rng.standard_normal((m, n)))
    rhs = rng.standard_normal(n)
    U, phi = saddle_solve(M, B, rhs)
    r1 = M @ U - B.T @ phi - rhs
    r2 = -(B @ U)
    res = np.sqrt(np.linalg.norm(r1) ** 2 + np.linalg.norm(r2) ** 2)
    assert res <= 1e-10 * np.linalg.norm(rhs)


def test_saddle_rank_deficient_active_block():
    sys = make_system()
    row = sys.B[1:2, :]
    B = sp.vstack([row, row]).tocsr()
    with pytest.raises(ValueError):
        saddle_solve(sys.M, B, sys.L)


def test_ncp_residual_properties():
    sys = make_system()
    m = sys.B.shape[0]
    U = spla.spsolve(sys.M.tocsc(), np.abs(sys.L) + 1.0)
    assert ncp_residual(sys, U, np.zeros(m), 1.0) == 0.0
    phi = np.zeros(m)
    phi[2] = -0.3
    assert ncp_residual(sys, U, phi, 1.0) >= 0.3
    with pytest.raises(ValueError):
        ncp_residual(sys, U, phi, 0.0)


def test_same_loop_handles_both_scales():
    # the coarse wrapper only retags the operators
    sys = make_system()
    from mscontact.pdas import coarse_hybrid
    again = coarse_hybrid(sys.M, sys.B, sys.L)
    assert again.scale == "coarse"
    a = pdas_solve(sys)
    b = pdas_solve(again)
    assert np.array_equal(a.U, b.U)
    assert np.array_equal(a.Phi, b.Phi)
