"""Equality-constrained least squares via the sparse KKT system.

Minimizes (alpha ||B c - g||^2 + beta ||H c||^2) / 2 subject to K c = b and,
optionally, mean_row . c = mean_target.  When the KKT factorization is
unusable (singular or numerically bad), falls back to a weighted formulation
||A c - b||^2 + (alpha/lam) ||B c - g||^2 + (beta/lam) ||H c||^2, lam = 1e8.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class InfeasibleError(RuntimeError):
    pass


_LAMBDA = 1e8


@dataclass
class SolveReport:
    coeffs: np.ndarray
    constraint_residual: float
    objective: float
    iterations: int
    conditioning_flag: str


class ConstrainedLS:
    """Factors the system once; solve() accepts many right-hand sides."""

    def __init__(self, K, B=None, H=None, mean_row=None, alpha: float = 1.0,
                 beta: float = 100.0, eps1=None):
        if alpha <= 0 or beta <= 0:
            raise ValueError("alpha and beta must be positive")
        self.N = K.shape[1] if K is not None else (B.shape[1] if B is not None else None)
        if self.N is None:
            raise ValueError("need at least one of K, B")
        self.K = K.tocsr() if K is not None and K.shape[0] else None
        self.B = B.tocsr() if B is not None and B.shape[0] else None
        self.H = H.tocsr() if H is not None and H.shape[0] else None
        self.mean_row = None if mean_row is None else np.asarray(mean_row, float)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.eps1 = eps1
        self._lu = None
        self._lu_w = None
        self._flag = "ok"

        blocks = []
        if self.K is not None:
            blocks.append(self.K)
        if self.mean_row is not None:
            blocks.append(sp.csr_matrix(self.mean_row[None, :]))
        self.A = sp.vstack(blocks).tocsr() if blocks else None
        self.nc = self.A.shape[0] if self.A is not None else 0

        G = sp.csr_matrix((self.N, self.N))
        if self.B is not None:
            G = G + self.alpha * (self.B.T @ self.B)
        if self.H is not None:
            G = G + self.beta * (self.H.T @ self.H)
        self.G = G.tocsr()

        if self.A is None:
            # unconstrained least squares
            self._lu_w = spla.splu(self.G.tocsc())
            self._flag = "ok"
            return
        kkt = sp.bmat(
            [[self.G, self.A.T], [self.A, None]], format="csc"
        )
        try:
            self._lu = spla.splu(kkt)
        except RuntimeError:
            self._lu = None
        self._kkt = kkt

    def _weighted(self):
        if self._lu_w is None:
            M = (self.A.T @ self.A).tocsr()
            if self.B is not None:
                M = M + (self.alpha / _LAMBDA) * (self.B.T @ self.B)
            if self.H is not None:
                M = M + (self.beta / _LAMBDA) * (self.H.T @ self.H)
            try:
                self._lu_w = spla.splu(M.tocsc())
                self._flag = "regularized"
            except RuntimeError:
                ridge = 1e-10 * (M.diagonal().mean() + 1.0)
                M = M + ridge * sp.eye(self.N)
                self._lu_w = spla.splu(M.tocsc())
                self._flag = "rank_deficient"
        return self._lu_w

    def solve(self, b=None, g=None, mean_target: float = 0.0) -> SolveReport:
        b = np.zeros(0) if b is None else np.asarray(b, float).ravel()
        if self.K is not None and b.size != self.K.shape[0]:
            raise ValueError(f"rhs b has length {b.size}, expected {self.K.shape[0]}")
        if g is None:
            g = np.zeros(self.B.shape[0]) if self.B is not None else np.zeros(0)
        g = np.asarray(g, float).ravel()
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(g))):
            raise ValueError("non-finite entries in right-hand side")

        bhat = b
        if self.mean_row is not None:
            bhat = np.concatenate([b, [mean_target]])
        eps1 = self.eps1
        if eps1 is None:
            eps1 = 1e-8 * np.linalg.norm(b) + 1e-12

        c = None
        flag = "ok"
        if self.A is None:
            rhs = np.zeros(self.N)
            if self.B is not None:
                rhs += self.alpha * (self.B.T @ g)
            c = self._lu_w.solve(rhs)
        else:
            if self._lu is not None:
                rhs = np.zeros(self.N + self.nc)
                if self.B is not None:
                    rhs[: self.N] = self.alpha * (self.B.T @ g)
                rhs[self.N:] = bhat
                sol = self._lu.solve(rhs)
                kkt_res = np.linalg.norm(self._kkt @ sol - rhs) / (1.0 + np.linalg.norm(rhs))
                if np.all(np.isfinite(sol)) and kkt_res <= 1e-8:
                    c = sol[: self.N]
            if c is None:
                lu = self._weighted()
                rhs = self.A.T @ bhat
                if self.B is not None:
                    rhs = rhs + (self.alpha / _LAMBDA) * (self.B.T @ g)
                c = lu.solve(rhs)
                flag = self._flag

        if not np.all(np.isfinite(c)):
            raise InfeasibleError("solver produced non-finite coefficients")
        res = float(np.linalg.norm(self.K @ c - b)) if self.K is not None else 0.0
        if res > eps1:
            raise InfeasibleError(
                f"constraint residual {res:.3e} exceeds tolerance {eps1:.3e} "
                f"(mode {flag})"
            )
        obj = 0.0
        if self.B is not None:
            obj += 0.5 * self.alpha * float(np.sum((self.B @ c - g) ** 2))
        if self.H is not None:
            obj += 0.5 * self.beta * float(np.sum((self.H @ c) ** 2))
        return SolveReport(
            coeffs=c,
            constraint_residual=res,
            objective=obj,
            iterations=1,
            conditioning_flag=flag,
        )


def solve_equality_ls(K, b, B=None, g=None, H=None, mean_row=None,
                      mean_target: float = 0.0, alpha: float = 1.0,
                      beta: float = 100.0, eps1=None) -> SolveReport:
    """One-shot wrapper around ConstrainedLS."""
    solver = ConstrainedLS(K, B=B, H=H, mean_row=mean_row, alpha=alpha, beta=beta,
                           eps1=eps1)
    return solver.solve(b, g, mean_target)
