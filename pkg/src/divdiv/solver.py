"""Saddle-point solves and the discrete inf-sup constant.

The system is ``[[M, B^T], [B, 0]] [sigma; u] = [0; load]``. The direct
path factorizes the full KKT matrix with SuperLU and polishes the result
by iterative refinement; the Krylov path runs MINRES with the block
diagonal preconditioner ``diag(M, B diag(M)^-1 B^T)``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    """Factorization breakdown or non-convergence; carries the residual history."""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history or [])


class InfSupError(RuntimeError):
    """Raised when the inf-sup eigenproblem detects a rank defect."""


@dataclass
class SaddleSolution:
    sigma: np.ndarray
    u: np.ndarray
    residual: float
    history: list = field(default_factory=list)
    method: str = "direct"
    stats: dict = field(default_factory=dict)


def _blocks(system):
    return system.M.tocsr(), system.B.tocsr(), np.asarray(system.load, dtype=float)


def kkt_matrix(M, B) -> sp.csc_matrix:
    return sp.bmat([[M, B.T], [B, None]], format="csc")


def relative_residual(M, B, load, sigma, u) -> float:
    r1 = M @ sigma + B.T @ u
    r2 = B @ sigma - load
    scale = max(np.linalg.norm(load), 1e-300)
    return float(np.sqrt(r1 @ r1 + r2 @ r2) / scale)


def _direct(M, B, load, tol, max_refine=5):
    n = M.shape[0]
    K = kkt_matrix(M, B)
    rhs = np.concatenate([np.zeros(n), load])
    t0 = time.perf_counter()
    try:
        lu = spla.splu(K, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverError(f"KKT factorization failed ({exc}); B may be rank deficient") from exc
    x = lu.solve(rhs)
    history = []
    for _ in range(max_refine + 1):
        if not np.all(np.isfinite(x)):
            raise SolverError("factorization produced non-finite values", history)
        res = relative_residual(M, B, load, x[:n], x[n:])
        history.append(res)
        if res <= tol:
            break
        x = x + lu.solve(rhs - K @ x)
    else:
        raise SolverError(f"direct solve residual {history[-1]:.3e} above tolerance {tol:.1e}", history)
    stats = {"factor_nnz": int(lu.L.nnz + lu.U.nnz), "seconds": time.perf_counter() - t0, "refinements": len(history) - 1}
    return x[:n], x[n:], history, stats


def _krylov(M, B, load, tol, maxiter=None, max_cycles=8):
    n, m = M.shape[0], B.shape[0]
    K = kkt_matrix(M, B).tocsr()
    rhs = np.concatenate([np.zeros(n), load])
    t0 = time.perf_counter()
    Mlu = spla.splu(M.tocsc())
    S = (B @ sp.diags(1.0 / M.diagonal()) @ B.T).tocsc()
    try:
        Slu = spla.splu(S)
    except RuntimeError as exc:
        raise SolverError(f"Schur approximation is singular ({exc}); B may be rank deficient") from exc

    def apply(v):
        return np.concatenate([Mlu.solve(v[:n]), Slu.solve(v[n:])])

    P = spla.LinearOperator((n + m, n + m), matvec=apply, dtype=float)
    history = []

    def record(xk):
        history.append(relative_residual(M, B, load, xk[:n], xk[n:]) if len(history) % 25 == 0 else np.nan)

    x = np.zeros(n + m)
    res = np.inf
    # correction cycles: MINRES stops on the preconditioned norm, so re-solve for the true residual
    for _cycle in range(max_cycles):
        r = rhs - K @ x
        d, info = spla.minres(K, r, M=P, rtol=tol * 1e-2, maxiter=maxiter or 20 * (n + m), callback=record)
        x = x + d
        res = relative_residual(M, B, load, x[:n], x[n:])
        if res <= tol:
            break
    else:
        hist = [h for h in history if np.isfinite(h)] + [res]
        raise SolverError(f"MINRES stalled at relative residual {res:.3e} (info={info})", hist)
    total = len(history)
    stats = {"iterations": total, "seconds": time.perf_counter() - t0}
    hist = [h for h in history if np.isfinite(h)] + [res]
    return x[:n], x[n:], hist, stats


def solve(system, method: str = "direct", tol: float = DEFAULT_TOL) -> SaddleSolution:
    """Solve the KKT system of ``system`` (anything with ``M``, ``B``, ``load``).

    A zero load returns the zero solution without factorizing.
    """
    M, B, load = _blocks(system)
    if not np.all(np.isfinite(load)):
        raise SolverError("load vector contains non-finite values")
    n, m = M.shape[0], B.shape[0]
    if not np.any(load):
        return SaddleSolution(np.zeros(n), np.zeros(m), 0.0, [0.0], method, {})
    if method == "direct":
        sigma, u, hist, stats = _direct(M, B, load, tol)
    elif method == "krylov":
        sigma, u, hist, stats = _krylov(M, B, load, tol)
    else:
        raise ValueError(f"unknown solver method {method!r}")
    return SaddleSolution(sigma, u, hist[-1], hist, method, stats)


@dataclass
class _Raw:
    M: sp.csr_matrix
    B: sp.csr_matrix
    load: np.ndarray


def solve_saddle(M, B, load, method: str = "direct", tol: float = DEFAULT_TOL) -> SaddleSolution:
    """Convenience wrapper for raw matrices."""
    return solve(_Raw(sp.csr_matrix(M), sp.csr_matrix(B), np.asarray(load, dtype=float)), method, tol)


def estimate_infsup(system, max_dofs: int = 4000, rank_tol: float = 1e-10) -> float:
    """Discrete inf-sup constant in the H(div div) x L2 norms.

    Smallest eigenvalue of ``B A^-1 B^T x = lam M_u x`` with ``A = M +
    B^T M_u^-1 B``; returns ``sqrt(lam_min)``. Dense, so only for small meshes.
    """
    M = system.M.toarray()
    B = system.B.toarray()
    Mu = system.M_u.toarray()
    if M.shape[0] > max_dofs:
        raise ValueError(f"{M.shape[0]} stress unknowns exceed the dense limit {max_dofs}")
    A = M + B.T @ la.solve(Mu, B, assume_a="pos")
    cA = la.cho_factor(A)
    S = B @ la.cho_solve(cA, B.T)
    S = 0.5 * (S + S.T)
    try:
        lam = la.eigh(S, Mu, eigvals_only=True)
    except la.LinAlgError as exc:
        raise InfSupError(f"generalized eigensolve failed: {exc}") from exc
    if lam[0] <= rank_tol * max(lam[-1], 1e-300):
        raise InfSupError(f"smallest eigenvalue {lam[0]:.3e} indicates a rank-deficient B")
    return float(np.sqrt(lam[0]))
