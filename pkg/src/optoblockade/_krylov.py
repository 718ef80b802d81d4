"""Iterative kernels for Lindblad generators of the form

    L(rho) = -i (K rho - rho K^dagger) + sum_k c_k rho c_k^dagger

with a non-Hermitian effective Hamiltonian K. The no-jump part is a Sylvester
operator that is inverted exactly in the eigenbasis of K, which makes it a
cheap, very effective preconditioner for both the steady-state problem and
the shifted systems (I - gamma L) used by the rational Krylov exponential.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

EIGVEC_COND_LIMIT = 1e8


class SylvesterPreconditioner:
    """Applies (shift * I - S)^-1 with S(rho) = -i (K rho - rho K^dagger)."""

    def __init__(self, heff):
        self.K = np.asarray(heff.toarray() if hasattr(heff, "toarray") else heff, dtype=complex)
        self.dim = self.K.shape[0]
        lam, V = la.eig(self.K)
        cond = np.linalg.cond(V)
        self.use_eig = bool(np.isfinite(cond) and cond < EIGVEC_COND_LIMIT)
        if self.use_eig:
            self.V = V
            self.Vi = la.inv(V)
            self.s = -1j * (lam[:, None] - lam[None, :].conj())
        else:
            log.debug("effective Hamiltonian eigenbasis ill-conditioned (%.1e); using Schur", cond)
            self.T, self.Q = la.schur(self.K, output="complex")

    def operator(self, shift: float = 0.0, scale: float = -1.0):
        """LinearOperator for (shift + scale * S)^-1.

        ``scale=-1, shift=0`` inverts -S (steady state); ``shift=1,
        scale=-gamma`` inverts I - gamma S.
        """
        d = self.dim
        if self.use_eig:
            den = shift + scale * self.s
            floor = 1e-12 * np.abs(den).max()
            small = np.abs(den) < floor
            if small.any():
                den = np.where(small, floor, den)
            V, Vi = self.V, self.Vi
            ViH, VH = Vi.conj().T, V.conj().T

            def apply(x):
                X = x.reshape(d, d)
                return (V @ ((Vi @ X @ ViH) / den) @ VH).ravel()
        else:
            # With K = Q T Q^H and X = Q Y Q^H the equation
            # shift X - i scale (K X - X K^H) = B becomes a Y + Y a^H = Q^H B Q
            # with a = shift/2 - i scale T upper triangular.
            a = 0.5 * shift * np.eye(d) - 1j * scale * self.T
            Q, QH = self.Q, self.Q.conj().T
            trsyl = la.get_lapack_funcs("trsyl", (a,))

            def apply(x):
                C = QH @ x.reshape(d, d) @ Q
                Y, factor, info = trsyl(a, a, C, trana="N", tranb="C", isgn=1)
                if info < 0:
                    raise la.LinAlgError(f"trsyl failed (info={info})")
                return (Q @ (Y / factor) @ QH).ravel()

        n = d * d
        return spla.LinearOperator((n, n), matvec=apply, dtype=complex)


def gmres_solve(A, b, M, x0=None, rtol=1e-13, restart=100, maxiter=30):
    """Right-hand-side solve; returns (x, info, iterations)."""
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.gmres(A, b, x0=x0, M=M, rtol=rtol, atol=0.0, restart=restart,
                         maxiter=maxiter, callback=cb, callback_type="pr_norm")
    return x, info, count[0]


def shift_invert_expm(solve, v, t, gamma, m_max=40, tol=1e-10, trace=None):
    """exp(t L) v from a Krylov space of (I - gamma L)^-1.

    ``solve(w)`` must return (I - gamma L)^-1 w. Returns (y, converged, m).
    ``trace``, if given, is a functional the exact flow conserves; it is
    used as an extra acceptance check.
    With A = (I - gamma L)^-1 projected onto the Krylov space as H, the
    exponential becomes exp((t / gamma) (I - H^-1)).
    """
    beta = np.linalg.norm(v)
    if beta == 0:
        return np.zeros_like(v), True, 0
    basis = [v / beta]
    H = np.zeros((m_max + 1, m_max), dtype=complex)
    prev = None
    y = v
    for j in range(m_max):
        w = solve(basis[j])
        for _ in range(2):  # classical Gram-Schmidt with one reorthogonalization
            for i in range(j + 1):
                c = np.vdot(basis[i], w)
                H[i, j] += c
                w = w - c * basis[i]
        h = np.linalg.norm(w)
        H[j + 1, j] = h
        Hj = H[: j + 1, : j + 1]
        try:
            F = la.expm((t / gamma) * (np.eye(j + 1) - la.inv(Hj)))
        except (la.LinAlgError, ValueError):
            return y, False, j + 1
        y = beta * (np.column_stack(basis) @ F[:, 0])
        if prev is not None and j >= 2:
            err = np.abs(y - prev).max()
            drift = abs(trace(y) - trace(v)) if trace is not None else 0.0
            if err <= tol * max(1.0, np.abs(y).max()) and drift <= 10 * tol * max(1.0, abs(trace(v))):
                return y, True, j + 1
        if h <= 1e-14 * beta:  # invariant subspace: exact
            return y, True, j + 1
        prev = y
        basis.append(w / h)
    return y, False, m_max
