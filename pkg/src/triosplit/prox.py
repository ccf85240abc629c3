"""Closed-form proximal maps and smooth gradients shared by the solvers."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .linalg import as_matrix, truncated_svd


def soft_threshold(v, kappa):
    """Componentwise shrinkage sign(v) * max(|v| - kappa, 0)."""
    if kappa < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def rank_projection(Y, r, tol=1e-10, seed=0):
    """Nearest matrix of rank at most r: top-r SVD reconstruction."""
    t = truncated_svd(Y, r, tol=tol, seed=seed)
    return t.reconstruct()


def prox_masked_quadratic(X, obs, gamma):
    """Prox of the masked quadratic misfit 0.5 * sum_obs (X_ij - M_ij)^2.

    Observed entries are averaged toward the data, (X_ij + gamma*M_ij)/(1+gamma);
    unobserved entries pass through unchanged.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    X = as_matrix(X)
    if X.shape != obs.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {obs.shape}")
    out = X.copy()
    out[obs.rows, obs.cols] = (X[obs.rows, obs.cols] + gamma * obs.values) / (1.0 + gamma)
    return out


class GramSolver:
    """Cached solver for (A^T A + mu * I) v = rhs over many values of mu.

    Wide systems (m < n) route through the m x m matrix A A^T + mu * I; one
    refinement step keeps the normal-equation residual near machine precision
    on either path. Factorizations are cached per mu, so repeated solves at a
    fixed mu cost one triangular solve pair. A solver instance is intended to
    be private to a single run; concurrent runs should each own one.
    """

    def __init__(self, A):
        self.A = as_matrix(A)
        m, n = self.A.shape
        self.wide = m < n
        self.gram = self.A @ self.A.T if self.wide else self.A.T @ self.A
        self._factors = {}

    def _factor(self, mu):
        fac = self._factors.get(mu)
        if fac is None:
            G = self.gram + mu * np.eye(self.gram.shape[0])
            fac = cho_factor(G)
            self._factors[mu] = fac
        return fac

    def apply(self, mu, v):
        return self.A.T @ (self.A @ v) + mu * v

    def _solve_once(self, mu, rhs):
        fac = self._factor(mu)
        if self.wide:
            return (rhs - self.A.T @ cho_solve(fac, self.A @ rhs)) / mu
        return cho_solve(fac, rhs)

    def solve(self, mu, rhs):
        if mu <= 0:
            raise ValueError("mu must be positive")
        y = self._solve_once(mu, rhs)
        # one refinement pass
        y += self._solve_once(mu, rhs - self.apply(mu, y))
        return y


def prox_least_squares(A, b, x, gamma, solver=None):
    """Prox of 0.5 * ||A y - b||^2: solves (A^T A + I/gamma) y = A^T b + x/gamma.

    Pass a GramSolver to reuse the factorization across iterations with the
    same A and gamma. The system is positive definite for any gamma > 0; a
    factorization failure therefore signals corrupted input and surfaces as
    a LinAlgError.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    A = as_matrix(A)
    if solver is None:
        solver = GramSolver(A)
    return solver.solve(1.0 / gamma, A.T @ np.asarray(b, float) + np.asarray(x, float) / gamma)


def grad_frobenius_reg(X, lam):
    """Gradient of the quadratic regularizer (lam/2) * ||X||_F^2."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    return lam * np.asarray(X, dtype=float)


def grad_neg_l2(y, lam):
    """Gradient of -lam * ||y||_2 away from the origin: -lam * y / ||y||.

    Returns 0 at y = 0, a valid limiting-subgradient selection. The map is
    not Lipschitz near the origin, so solvers flag iterates with norm below
    1e-12 rather than trusting step-size theory there.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    y = np.asarray(y, dtype=float)
    n = np.linalg.norm(y)
    if n == 0.0:
        return np.zeros_like(y)
    return (-lam / n) * y
