"""Synthetic instance generators and a text serialization for instances.

Every generator is a pure function of its parameters and seed; a fixed seed
reproduces the instance bit for bit. Seeds may be integers or numpy
Generators (the latter lets callers thread one stream through several
draws).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cs import SensingInstance
from .linalg import ObservationSet, as_matrix
from .matcomp import CompletionInstance


def gen_low_rank(n, r, seed):
    """Rank-r ground truth M = ML @ MR.T from two n x r Gaussian factors.

    Returns (M, (ML, MR)). The product has rank exactly r almost surely.
    """
    if not 1 <= r <= n:
        raise ValueError(f"rank {r} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    ML = rng.standard_normal((n, r))
    MR = rng.standard_normal((n, r))
    return ML @ MR.T, (ML, MR)


def sample_omega(rows, cols, m_count, seed):
    """m_count distinct positions of a rows x cols grid, uniform over all
    subsets of that size. Returns (row_indices, col_indices) sorted by
    linear position."""
    total = rows * cols
    if not 1 <= m_count <= total:
        raise ValueError(f"m_count {m_count} outside [1, {total}]")
    rng = np.random.default_rng(seed)
    lin = rng.choice(total, size=m_count, replace=False)
    lin.sort()
    return np.unravel_index(lin, (rows, cols))


def observe(M, rows_idx, cols_idx):
    """Observation set sampling a dense matrix at the given positions."""
    M = as_matrix(M)
    return ObservationSet(rows_idx, cols_idx, M[rows_idx, cols_idx], M.shape)


@dataclass(frozen=True)
class DctSpec:
    """Oversampled cosine frame parameters; xi is the shared frequency draw."""

    m: int
    n: int
    refinement: int
    xi: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.refinement < 1:
            raise ValueError("refinement must be at least 1")
        if self.m < 1 or self.n < 1:
            raise ValueError("dimensions must be positive")
        if self.xi is not None:
            xi = np.asarray(self.xi, dtype=float)
            object.__setattr__(self, "xi", xi)
            if xi.shape != (self.m,):
                raise ValueError("xi must have one entry per row")
            if xi.min() < 0.0 or xi.max() > 1.0:
                raise ValueError("xi entries must lie in [0, 1]")


def gen_dct_matrix(spec, seed=0):
    """Sensing matrix with columns cos(2*pi*i*xi/F)/sqrt(m), i = 0..n-1.

    One frequency vector xi ~ U[0,1]^m is shared by all columns; it is drawn
    from the seed unless the spec pins it. Larger refinement F makes the
    columns more coherent; zero-based column indexing keeps the leading
    columns nearly parallel, which is what pushes the mutual coherence above
    0.99 at F = 10.
    """
    xi = spec.xi
    if xi is None:
        xi = np.random.default_rng(seed).uniform(size=spec.m)
    i = np.arange(spec.n)
    return np.cos(2.0 * np.pi * np.outer(xi, i) / spec.refinement) / np.sqrt(spec.m)


def mutual_coherence(A):
    """Largest absolute cosine between distinct columns."""
    A = as_matrix(A)
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        raise ValueError("zero column; coherence undefined")
    C = np.abs(A.T @ A) / np.outer(norms, norms)
    np.fill_diagonal(C, 0.0)
    return float(C.max())


def gen_sparse_signal(n, s, min_sep, seed, max_restarts=1000):
    """Sparse vector with s Gaussian spikes whose indices are pairwise at
    least min_sep apart.

    Support indices are drawn greedily with rejection and a full restart
    when placement stalls; requires s * min_sep <= n so that separated
    supports exist with room to spare.
    """
    if s < 1 or min_sep < 1:
        raise ValueError("s and min_sep must be positive")
    if s * min_sep > n:
        raise ValueError(f"cannot place {s} spikes {min_sep} apart in length {n}")
    rng = np.random.default_rng(seed)
    budget = max(50 * s, 100)
    for _ in range(max_restarts):
        chosen = []
        for _ in range(budget):
            cand = int(rng.integers(n))
            if all(abs(cand - c) >= min_sep for c in chosen):
                chosen.append(cand)
                if len(chosen) == s:
                    break
        if len(chosen) == s:
            x = np.zeros(n)
            x[chosen] = rng.standard_normal(s)
            return x
    raise RuntimeError("support sampling failed; separation too tight for rejection")


def add_noise(b, sigma, seed):
    """b plus sigma times a standard Gaussian draw."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    b = np.asarray(b, dtype=float)
    if sigma == 0:
        return b.copy()
    return b + sigma * np.random.default_rng(seed).standard_normal(b.shape)


# ---------------------------------------------------------------------------
# text serialization (header + whitespace-separated values, round-trip exact)

_MAGIC = "triosplit-instance v1"
_OBS_MAGIC = "triosplit-observations v1"


def _fmt(x):
    return repr(float(x))


def save_observations(path, obs):
    with open(path, "w") as f:
        f.write(_OBS_MAGIC + "\n")
        f.write(f"{obs.shape[0]} {obs.shape[1]} {len(obs)}\n")
        for r, c, v in zip(obs.rows, obs.cols, obs.values):
            f.write(f"{r} {c} {_fmt(v)}\n")


def load_observations(path):
    with open(path) as f:
        if f.readline().strip() != _OBS_MAGIC:
            raise ValueError(f"{path}: not an observation file")
        rows_n, cols_n, count = (int(tok) for tok in f.readline().split())
        rows, cols, values = [], [], []
        for _ in range(count):
            r, c, v = f.readline().split()
            rows.append(int(r))
            cols.append(int(c))
            values.append(float(v))
    return ObservationSet(np.array(rows, dtype=np.intp), np.array(cols, dtype=np.intp),
                          np.array(values), (rows_n, cols_n))


def save_instance(path, inst):
    """Write a completion or sensing instance as plain text.

    Layout: a magic line, then `kind completion|sensing`, then key/value
    header lines, then whitespace-separated data. Completion instances list
    `shape R C`, `rank`, `lam`, `count`, and one `row col value` line per
    observed entry; sensing instances list `shape M N`, `lam`, `rho` (the
    literal `none` when unset), `has_truth`, then M rows of the matrix, the
    measurement line, and the ground-truth line when present. Floats are
    written with full round-trip precision.
    """
    with open(path, "w") as f:
        f.write(_MAGIC + "\n")
        if isinstance(inst, CompletionInstance):
            f.write("kind completion\n")
            f.write(f"shape {inst.shape[0]} {inst.shape[1]}\n")
            f.write(f"rank {inst.r}\n")
            f.write(f"lam {_fmt(inst.lam)}\n")
            f.write(f"count {len(inst.obs)}\n")
            for r, c, v in zip(inst.obs.rows, inst.obs.cols, inst.obs.values):
                f.write(f"{r} {c} {_fmt(v)}\n")
        elif isinstance(inst, SensingInstance):
            f.write("kind sensing\n")
            f.write(f"shape {inst.m} {inst.n}\n")
            f.write(f"lam {'none' if inst.lam is None else _fmt(inst.lam)}\n")
            f.write(f"rho {'none' if inst.rho is None else _fmt(inst.rho)}\n")
            f.write(f"has_truth {0 if inst.x_true is None else 1}\n")
            for row in inst.A:
                f.write(" ".join(_fmt(v) for v in row) + "\n")
            f.write(" ".join(_fmt(v) for v in inst.b) + "\n")
            if inst.x_true is not None:
                f.write(" ".join(_fmt(v) for v in inst.x_true) + "\n")
        else:
            raise TypeError(f"cannot serialize {type(inst).__name__}")


def load_instance(path):
    """Read back an instance written by save_instance."""
    with open(path) as f:
        if f.readline().strip() != _MAGIC:
            raise ValueError(f"{path}: not an instance file")
        kind = f.readline().split()[1]
        if kind == "completion":
            _, rows_n, cols_n = f.readline().split()
            rank = int(f.readline().split()[1])
            lam = float(f.readline().split()[1])
            count = int(f.readline().split()[1])
            rows, cols, values = [], [], []
            for _ in range(count):
                r, c, v = f.readline().split()
                rows.append(int(r))
                cols.append(int(c))
                values.append(float(v))
            obs = ObservationSet(np.array(rows, dtype=np.intp), np.array(cols, dtype=np.intp),
                                 np.array(values), (int(rows_n), int(cols_n)))
            return CompletionInstance(obs, (int(rows_n), int(cols_n)), rank, lam)
        if kind == "sensing":
            _, m, n = f.readline().split()
            m, n = int(m), int(n)
            lam_tok = f.readline().split()[1]
            rho_tok = f.readline().split()[1]
            has_truth = bool(int(f.readline().split()[1]))
            A = np.array([[float(v) for v in f.readline().split()] for _ in range(m)])
            b = np.array([float(v) for v in f.readline().split()])
            x_true = np.array([float(v) for v in f.readline().split()]) if has_truth else None
            return SensingInstance(
                A, b, x_true=x_true,
                lam=None if lam_tok == "none" else float(lam_tok),
                rho=None if rho_tok == "none" else float(rho_tok))
        raise ValueError(f"{path}: unknown instance kind {kind!r}")
