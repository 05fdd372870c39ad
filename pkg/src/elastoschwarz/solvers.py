"""Sparse direct factorization and right-preconditioned GMRES."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FactorizationError, UsageError
from .history import ConvergenceHistory

PIVOT_RTOL = 1e-14


def as_complex_csr(matrix):
    """CSR copy with complex values, summed duplicates and sorted indices."""
    A = sp.csr_matrix(matrix, dtype=complex, copy=True)
    A.sum_duplicates()
    A.sort_indices()
    if not np.all(np.isfinite(A.data)):
        raise UsageError("matrix has non-finite entries")
    return A


class SparseFactorization:
    """LU factors of a square sparse matrix (partial pivoting, COLAMD ordering)."""

    def __init__(self, lu, n):
        self._lu = lu
        self.n = n

    def solve(self, b):
        b = np.asarray(b)
        if b.shape[0] != self.n:
            raise UsageError(f"right-hand side has length {b.shape[0]}, expected {self.n}")
        return self._lu.solve(np.asarray(b, dtype=complex))


def factorize(matrix, subdomain=None):
    """Factorize ``matrix``; numerically singular pivots raise :class:`FactorizationError`."""
    A = sp.csc_matrix(matrix, dtype=complex)
    if A.shape[0] != A.shape[1]:
        raise UsageError(f"matrix must be square, got {A.shape}")
    where = "" if subdomain is None else f" (subdomain {subdomain})"
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise FactorizationError(f"singular matrix{where}: {exc}", subdomain) from None
    d = np.abs(lu.U.diagonal())
    if d.size and d.min() <= PIVOT_RTOL * d.max():
        raise FactorizationError(f"numerically singular pivot{where}", subdomain)
    return SparseFactorization(lu, A.shape[0])


@dataclass
class KrylovConfig:
    """GMRES settings.  ``restart=None`` runs full (unrestarted) GMRES."""

    tol: float = 1e-6
    max_iters: int = 500
    restart: Optional[int] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise UsageError("tol must be positive")
        if self.max_iters < 0:
            raise UsageError("max_iters must be nonnegative")
        if self.restart is not None and self.restart < 1:
            raise UsageError("restart must be a positive integer or None")


def _as_operator(op, n):
    if op is None:
        return lambda v: v
    if callable(op) and not hasattr(op, "shape"):
        return op
    if hasattr(op, "solve"):
        return op.solve
    return lambda v: op @ v


def gmres(A, M, b, config=None, x0=None, exact=None, norm=None, stop_on="residual"):
    """Right-preconditioned GMRES for ``A M^{-1} y = b``, ``x = x0 + M^{-1} y``.

    Parameters
    ----------
    A : sparse matrix, LinearOperator or callable
    M : callable, object with ``solve``, matrix, or None
        Action of the preconditioner inverse; None means identity.
    b : ndarray
    config : KrylovConfig, optional
    x0 : ndarray, optional
        Initial guess (zero by default).
    exact : ndarray, optional
        Reference solution; enables the ``rel_error`` column.
    norm : callable, optional
        Norm for the error column (Euclidean by default).
    stop_on : {"residual", "error"}
        Quantity compared against ``config.tol``.

    Returns
    -------
    x : ndarray
    history : ConvergenceHistory
        ``rel_residual`` holds the Arnoldi residual estimate, which equals the
        true residual of ``A x_k = b`` in exact arithmetic for right
        preconditioning.  ``metadata["true_rel_residual"]`` is recomputed
        explicitly at exit.
    """
    config = config or KrylovConfig()
    if stop_on not in ("residual", "error"):
        raise UsageError("stop_on must be 'residual' or 'error'")
    if stop_on == "error" and exact is None:
        raise UsageError("error-based stopping needs an exact solution")
    b = np.asarray(b, dtype=complex)
    n = b.shape[0]
    matvec = _as_operator(A, n)
    prec = _as_operator(M, n)
    norm = norm or np.linalg.norm
    x = np.zeros(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    bnorm = np.linalg.norm(b) or 1.0
    e0 = norm(exact - x) if exact is not None else None
    if e0 == 0:
        e0 = 1.0

    hist = ConvergenceHistory(label="gmres", metadata={"preconditioning": "right"})
    r = b - matvec(x)
    beta = np.linalg.norm(r)
    hist.append(None if exact is None else norm(exact - x) / e0, beta / bnorm)

    def done():
        val = hist.rel_error[-1] if stop_on == "error" else hist.rel_residual[-1]
        return val <= config.tol

    if done():
        hist.status = "converged"
    m = config.restart or config.max_iters
    total = 0
    while hist.status == "running" and total < config.max_iters:
        if beta == 0:
            hist.status = "converged"
            break
        V = np.zeros((n, m + 1), dtype=complex)
        Z = np.zeros((n, m), dtype=complex)
        H = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m, dtype=complex)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        g[0] = beta
        V[:, 0] = r / beta
        j_done = 0
        breakdown = False
        for j in range(m):
            if total >= config.max_iters:
                break
            Z[:, j] = prec(V[:, j])
            w = matvec(Z[:, j])
            for i in range(j + 1):  # modified Gram-Schmidt
                H[i, j] = np.vdot(V[:, i], w)
                w = w - H[i, j] * V[:, i]
            H[j + 1, j] = np.linalg.norm(w)
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -np.conj(sn[i]) * H[i, j] + np.conj(cs[i]) * H[i + 1, j]
                H[i, j] = t
            a, c = H[j, j], H[j + 1, j]
            denom = np.hypot(abs(a), abs(c))
            if a == 0:  # includes a zero column: no residual reduction possible
                cs[j], sn[j] = 0.0, 1.0
            else:
                cs[j] = abs(a) / denom
                sn[j] = (a / abs(a)) * np.conj(c) / denom
            H[j, j] = cs[j] * a + sn[j] * c
            H[j + 1, j] = 0.0
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j_done = j + 1
            res = abs(g[j + 1]) / bnorm
            err = None
            if exact is not None:
                y = _upper_solve(H[:j_done, :j_done], g[:j_done])
                err = norm(exact - (x + Z[:, :j_done] @ y)) / e0
            hist.append(err, res)
            if done():
                hist.status = "converged"
                break
            if abs(c) <= 1e-14 * max(abs(a), 1e-300):
                breakdown = True
                break
            V[:, j + 1] = w / c
        if j_done:
            y = _upper_solve(H[:j_done, :j_done], g[:j_done])
            x = x + Z[:, :j_done] @ y
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        if breakdown and hist.status == "running":
            hist.status = "stagnated"
        if j_done == 0:
            break
    if hist.status == "running":
        hist.status = "max_iters"
    hist.metadata["true_rel_residual"] = float(np.linalg.norm(b - matvec(x)) / bnorm)
    return x, hist


def _upper_solve(R, g):
    d = np.abs(np.diag(R))
    if d.size and d.min() <= 1e-14 * d.max():
        # singular after a breakdown on a singular operator: minimum-norm least squares
        return sla.lstsq(R, g, check_finite=False)[0]
    return sla.solve_triangular(R, g, lower=False, check_finite=False)
