"""Sparse-recovery solvers for underdetermined linear measurements.

Three methods share one instance type. admm_lasso is the multiplier-splitting
baseline for the convex l1 model. dca_l12 minimizes the nonconvex
l1-minus-l2 model by linearizing the concave part each outer pass and
handing the convexified subproblem to the same multiplier loop. dys_l12
attacks the l1-minus-l2 model directly with the three-operator engine: a
regularized least-squares prox, a soft-threshold prox, and the gradient of
the negative l2 norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .linalg import as_matrix, as_vector, gram_spectral_norm
from .prox import GramSolver, grad_neg_l2, soft_threshold
from .splitting import (CONVERGED, DIVERGED, MAX_ITER, RunTrace, StepSizePolicy,
                        StoppingRule, ThreeTermProblem, TraceRecord, check_stop,
                        max_step_size, run)

SUCCESS_THRESHOLD = 1e-4
SPARSITY_TRUNCATION = 5e-6
ORIGIN_GUARD = 1e-12

ADMM_LAMBDA = 1e-6
L12_LAMBDA = 1e-5
ADMM_RHO = 1e-5
DCA_RHO = 1e-3
DCA_OUTER_MAX = 10
DCA_OUTER_TOL = 1e-2
DEFAULT_K = 1e6


@dataclass(frozen=True)
class SensingInstance:
    """Measurement bundle: matrix A (m x n), data b, optional ground truth."""

    A: np.ndarray
    b: np.ndarray
    x_true: Optional[np.ndarray] = None
    lam: Optional[float] = None
    rho: Optional[float] = None

    def __post_init__(self):
        A = as_matrix(self.A)
        b = as_vector(self.b)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.x_true is not None:
            object.__setattr__(self, "x_true", as_vector(self.x_true))
            if self.x_true.size != A.shape[1]:
                raise ValueError("ground truth length differs from column count")
        if b.size != A.shape[0]:
            raise ValueError("measurement length differs from row count")
        if not np.any(b):
            raise ValueError("measurement vector must be nonzero")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lam must be positive when given")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive when given")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]


class EvalMetrics(NamedTuple):
    relative_error: float
    success: bool
    sparsity: int


def truncated_sparsity(x, cutoff=SPARSITY_TRUNCATION):
    """Support size after zeroing entries below the cutoff magnitude."""
    return int(np.count_nonzero(np.abs(np.asarray(x, float)) >= cutoff))


def evaluate(x_opt, x_true):
    """Relative error, success flag, and truncated sparsity of a recovery."""
    x_opt = as_vector(x_opt)
    if x_true is None:
        raise ValueError("ground truth missing")
    x_true = as_vector(x_true)
    den = np.linalg.norm(x_true)
    if den == 0.0:
        raise ValueError("ground truth is zero; relative error undefined")
    rel = float(np.linalg.norm(x_opt - x_true) / den)
    return EvalMetrics(rel, rel < SUCCESS_THRESHOLD, truncated_sparsity(x_opt))


@dataclass
class RecoveryReport:
    x_opt: np.ndarray
    iterations: int
    status: str
    success: Optional[bool] = None
    relative_error: Optional[float] = None
    sparsity: Optional[int] = None
    min_y_norm: float = float("nan")
    origin_hits: int = 0
    beta_local: float = float("nan")
    end_state: Optional[dict] = None  # terminal solver variables, for restarts
    trace: Optional[RunTrace] = None

    def attach_metrics(self, x_true):
        if x_true is not None:
            m = evaluate(self.x_opt, x_true)
            self.relative_error, self.success, self.sparsity = m.relative_error, m.success, m.sparsity
        else:
            self.sparsity = truncated_sparsity(self.x_opt)
        return self


def _multiplier_record(t, rho, dy, r, s, x_norm, y_norm, z_norm):
    nan = float("nan")
    return TraceRecord(t=t, gamma=nan, energy=nan, dy_norm=dy, zy_gap=r,
                       r_primal=r, s_dual=s, x_norm=x_norm, y_norm=y_norm,
                       z_norm=z_norm, y_inf=nan, x_change_ratio=nan, stop_metric=nan)


def _multiplier_loop(A, b, lam, rho, rule, shift=None, z0=None, x0=None,
                     solver=None, trace=None):
    """Shared core of the multiplier methods.

    Iterates a regularized least-squares step (with an optional constant
    shift added to the right-hand side), a soft-threshold consensus step,
    and an unscaled dual update, until the paired-residual rule fires:
        y+ = solve(A^T A + rho I, A^T b + shift + rho z - x)
        z+ = soft_threshold(y+ + x/rho, lam/rho)
        x+ = x + rho (y+ - z+)
    The x feedback in the first step is unscaled; scaling it by rho would
    decouple the dual from the least-squares step and stall convergence.
    """
    n = A.shape[1]
    solver = GramSolver(A) if solver is None else solver
    trace = RunTrace() if trace is None else trace
    Atb = A.T @ b
    rhs_const = Atb if shift is None else Atb + shift
    z = np.zeros(n) if z0 is None else z0.copy()
    x = np.zeros(n) if x0 is None else x0.copy()
    y = np.zeros(n)
    status = MAX_ITER
    iterations = 0
    for k in range(1, rule.max_iter + 1):
        y_prev = y
        y = solver.solve(rho, rhs_const + rho * z - x)
        z_new = soft_threshold(y + x / rho, lam / rho)
        x = x + rho * (y - z_new)
        if not (np.isfinite(y).all() and np.isfinite(z_new).all() and np.isfinite(x).all()):
            status = DIVERGED
            iterations = k
            break
        r = float(np.linalg.norm(y - z_new))
        s = rho * float(np.linalg.norm(z_new - z))
        z = z_new
        trace.append(_multiplier_record(k, rho, float(np.linalg.norm(y - y_prev)), r, s,
                                        float(np.linalg.norm(x)), float(np.linalg.norm(y)),
                                        float(np.linalg.norm(z))))
        iterations = k
        if check_stop(rule, trace, n):
            status = CONVERGED
            break
    return y, z, x, iterations, status, trace


def admm_lasso(inst, rule=None, lam=None, rho=None):
    """Multiplier splitting for the l1-regularized least-squares model.

    Defaults: lam = 1e-6, rho = 1e-5, paired-residual tolerances
    (1e-7 absolute, 1e-5 relative), at most 50000 iterations. The reported
    solution is the thresholded consensus iterate.
    """
    if rule is None:
        rule = StoppingRule()
    lam = _pick(lam, inst.lam, ADMM_LAMBDA)
    rho = _pick(rho, inst.rho, ADMM_RHO)
    if lam < 0 or rho <= 0:
        raise ValueError("need lam >= 0 and rho > 0")
    y, z, x, iters, status, _ = _multiplier_loop(inst.A, inst.b, lam, rho, rule)
    report = RecoveryReport(x_opt=z, iterations=iters, status=status,
                            end_state=dict(y=y, z=z, x=x, lam=lam, rho=rho))
    return report.attach_metrics(inst.x_true)


def dca_l12(inst, outer_max=DCA_OUTER_MAX, inner_rule=None, lam=None, rho=None,
            outer_tol=DCA_OUTER_TOL):
    """Difference-of-convex solver for the l1-minus-l2 model.

    Each outer pass linearizes the concave -lam*||x||_2 term at the current
    solution (taking the zero vector's linearization to be zero) and solves
    the convexified subproblem with the multiplier loop, warm-started from
    the previous pass. Outer passes stop when successive solutions move by
    less than outer_tol relative to max(||previous||, 1). Defaults:
    lam = 1e-5, rho = 1e-3, at most 10 outer and 5000 inner iterations.
    """
    if inner_rule is None:
        inner_rule = StoppingRule(max_iter=5000)
    if outer_max < 1:
        raise ValueError("outer_max must be at least 1")
    lam = _pick(lam, inst.lam, L12_LAMBDA)
    rho = _pick(rho, inst.rho, DCA_RHO)
    solver = GramSolver(inst.A)
    y_outer = np.zeros(inst.n)
    z0 = x0 = None
    shift = None
    total = 0
    status = MAX_ITER  # becomes converged only when the outer test fires
    for _ in range(outer_max):
        ny = np.linalg.norm(y_outer)
        shift = (lam / ny) * y_outer if ny > 0 else None
        y, z, x, iters, inner_status, _ = _multiplier_loop(
            inst.A, inst.b, lam, rho, inner_rule, shift=shift, z0=z0, x0=x0,
            solver=solver)
        total += iters
        if inner_status == DIVERGED:
            status = DIVERGED
            break
        change = np.linalg.norm(y - y_outer) / max(ny, 1.0)
        y_outer, z0, x0 = y, z, x
        if change < outer_tol:
            status = CONVERGED
            break
    report = RecoveryReport(x_opt=y_outer, iterations=total, status=status,
                            end_state=dict(y=y_outer, z=z0, x=x0, lam=lam,
                                           rho=rho, shift=shift))
    return report.attach_metrics(inst.x_true)


def dys_l12(inst, policy=None, rule=None, gamma=None, lam=None, k=DEFAULT_K,
            with_energy=False):
    """Three-operator splitting for the l1-minus-l2 model.

    The least-squares prox is solved through a cached factorization, the l1
    prox is a soft threshold at gamma*lam, and the concave term contributes
    gamma*lam*y/||y|| inside the threshold argument. The default step-size
    policy starts at k times the descent-coefficient root computed with the
    measured top eigenvalue of A^T A (and unit smooth-term constant) and
    decays per the engine heuristic. Iterates whose norm falls below 1e-12
    are counted in the report's origin_hits, and beta_local reports
    lam / min ||y|| as the locally valid smoothness constant.
    """
    if rule is None:
        rule = StoppingRule()
    lam = _pick(lam, inst.lam, L12_LAMBDA)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    L = max(gram_spectral_norm(inst.A), np.finfo(float).tiny)
    if policy is None and gamma is None:
        policy = StepSizePolicy(gamma0=max_step_size(L, 0.0, 1.0), k=k)
    solver = GramSolver(inst.A)
    Atb = inst.A.T @ inst.b

    def prox_f(v, g):
        return solver.solve(1.0 / g, Atb + v / g)

    def prox_g(v, g):
        return soft_threshold(v, g * lam)

    def grad_h(y):
        return grad_neg_l2(y, lam)

    values = {}
    if with_energy:
        A, b = inst.A, inst.b
        values = dict(
            value_f=lambda y: 0.5 * float(np.sum((A @ y - b) ** 2)),
            value_g=lambda z: lam * float(np.sum(np.abs(z))),
            value_h=lambda y: -lam * float(np.linalg.norm(y)),
        )
    problem = ThreeTermProblem(prox_f=prox_f, prox_g=prox_g, grad_h=grad_h,
                               L=L, l=0.0, beta=1.0, **values)
    res = run(problem, np.zeros(inst.n), gamma=gamma, policy=policy, rule=rule)
    y_norms = res.trace.column("y_norm")
    min_y = float(np.min(y_norms)) if len(y_norms) else float("nan")
    final_gamma = res.trace.last.gamma if len(res.trace) else float("nan")
    report = RecoveryReport(
        x_opt=res.state.z, iterations=len(res.trace), status=res.status,
        min_y_norm=min_y,
        origin_hits=int(np.count_nonzero(y_norms < ORIGIN_GUARD)),
        beta_local=lam / max(min_y, np.finfo(float).tiny) if math.isfinite(min_y) else float("nan"),
        end_state=dict(x=res.state.x, y=res.state.y, z=res.state.z,
                       gamma=final_gamma, lam=lam),
        trace=res.trace,
    )
    return report.attach_metrics(inst.x_true)


def _pick(*candidates):
    for c in candidates:
        if c is not None:
            return c
    return None
