"""Dense matrix kernels: masked projections and a truncated SVD."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class TruncatedSvdError(RuntimeError):
    """Subspace iteration failed to settle within the sweep cap.

    Carries the last observed relative change of the leading singular
    values in ``residual``.
    """

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def as_matrix(A):
    """Validate and return a 2-D float array with finite entries."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise ValueError("matrix entries must be finite")
    return A


def as_vector(v):
    """Validate and return a 1-D float array with finite entries."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D array, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise ValueError("vector entries must be finite")
    return v


@dataclass(frozen=True)
class ObservationSet:
    """Observed entries of a rows x cols matrix.

    Index pairs are stored as parallel integer arrays; they must be unique
    and in bounds, with one finite value per pair.
    """

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    shape: tuple

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.intp)
        cols = np.asarray(self.cols, dtype=np.intp)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "shape", (int(self.shape[0]), int(self.shape[1])))
        nr, nc = self.shape
        if nr < 1 or nc < 1:
            raise ValueError("shape must be positive")
        if not (rows.ndim == cols.ndim == values.ndim == 1):
            raise ValueError("indices and values must be 1-D arrays")
        if not (len(rows) == len(cols) == len(values)):
            raise ValueError("index and value arrays must have equal length")
        if len(rows):
            if rows.min() < 0 or rows.max() >= nr or cols.min() < 0 or cols.max() >= nc:
                raise ValueError("observation indices out of bounds")
            lin = rows * nc + cols
            if len(np.unique(lin)) != len(lin):
                raise ValueError("observation indices must be unique")
        if not np.isfinite(values).all():
            raise ValueError("observed values must be finite")

    def __len__(self):
        return len(self.values)

    def extract(self, X):
        """Entries of X at the observed positions, in storage order."""
        return X[self.rows, self.cols]

    def scatter(self, values=None):
        """Dense matrix holding ``values`` (default: the stored ones) at the
        observed positions and zeros elsewhere."""
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.values if values is None else values
        return out

    def with_values(self, values):
        return ObservationSet(self.rows, self.cols, values, self.shape)


@dataclass(frozen=True)
class SvdTriplet:
    """Leading singular triplet: U (m x k), S (k, nonincreasing), V (n x k)."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self):
        return (self.U * self.S) @ self.V.T


def truncated_svd(A, k, tol=1e-10, seed=0, dense_cutoff=64, max_sweeps=200):
    """Top-k singular triplet of a dense matrix.

    Matrices whose smaller dimension is at most ``dense_cutoff`` are handled
    by a full dense decomposition. Larger ones use randomized block subspace
    iteration with 8 columns of oversampling, swept until the leading k
    singular values change by less than ``tol`` relative to the largest one.

    Parameters
    ----------
    A : array, m x n
    k : int, 1 <= k <= min(m, n)
    tol : float, relative settling tolerance for the singular values
    seed : int or Generator, fixes the randomized start
    dense_cutoff : int, dimension below which the dense path is used
    max_sweeps : int, sweep cap; exceeding it raises TruncatedSvdError
    """
    A = as_matrix(A)
    m, n = A.shape
    if not 1 <= k <= min(m, n):
        raise ValueError(f"k={k} outside [1, {min(m, n)}]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if min(m, n) <= dense_cutoff:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        return SvdTriplet(U[:, :k].copy(), s[:k].copy(), Vt[:k].T.copy())

    rng = np.random.default_rng(seed)
    p = min(k + 8, min(m, n))
    Q = np.linalg.qr(A @ rng.standard_normal((n, p)))[0]
    prev = None
    change = np.inf
    for _ in range(max_sweeps):
        Q = np.linalg.qr(A.T @ Q)[0]
        Q = np.linalg.qr(A @ Q)[0]
        B = Q.T @ A
        Ub, s, Vt = np.linalg.svd(B, full_matrices=False)
        top = s[:k]
        if prev is not None:
            scale = max(top[0], np.finfo(float).tiny)
            change = np.max(np.abs(top - prev)) / scale
            if change < tol:
                return SvdTriplet(Q @ Ub[:, :k], top.copy(), Vt[:k].T.copy())
        prev = top.copy()
    raise TruncatedSvdError(
        f"singular values did not settle below {tol} in {max_sweeps} sweeps "
        f"(last change {change:.3e})",
        residual=change,
    )


def project_omega(X, obs):
    """Sample X at an observation set's positions (the masked projection)."""
    X = as_matrix(X)
    if X.shape != obs.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {obs.shape}")
    return obs.with_values(X[obs.rows, obs.cols])


def masked_relative_residual(X, obs):
    """Frobenius misfit on the observed entries, relative to their norm.

    Fails on an all-zero observation set, where the ratio is undefined.
    """
    X = as_matrix(X)
    if X.shape != obs.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {obs.shape}")
    den = np.linalg.norm(obs.values)
    if den == 0.0:
        raise ValueError("observed entries are all zero; relative residual undefined")
    num = np.linalg.norm(X[obs.rows, obs.cols] - obs.values)
    return num / den


def gram_spectral_norm(A, tol=1e-12, max_iter=10000):
    """Largest eigenvalue of A^T A by power iteration from a fixed start."""
    A = as_matrix(A)
    n = A.shape[1]
    v = np.ones(n) / np.sqrt(n)
    lam = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(nw - lam) <= tol * nw:
            return nw
        lam = nw
    return lam
