"""Least squares over the probability simplex, optionally restricted to a linear subspace.

Solves

    minimize (1/R) ||target - design @ theta||^2
    subject to theta >= 0, sum(theta) = 1, eq @ theta = 0

with a primal active-set method. Without ``eq`` the working set is the set of
zero coordinates and every subproblem is an ordinary least-squares fit on the
free columns (never the normal equations, which square the condition number of
the badly collinear logit designs). With ``eq`` the problem is rewritten in the
coordinates of an orthonormal basis of the null space of ``eq`` and the same
active-set iteration runs over the rows of that basis.

Every solution carries a :class:`SolveCertificate` whose KKT residual is
recomputed from the returned weights alone, so it does not trust the iteration
that produced them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import optimize

from .exceptions import DimensionError, Infeasible, NonConvergence

__all__ = [
    "SimplexLsProblem",
    "SolveCertificate",
    "solve",
    "objective",
    "gradient",
    "kkt_residual",
    "feasibility_gap",
    "project_simplex",
    "clamp_to_simplex",
]

_ZERO = 1e-12


@dataclass(frozen=True, eq=False)
class SimplexLsProblem:
    design: np.ndarray
    target: np.ndarray
    eq: np.ndarray | None = None

    def __post_init__(self):
        design = np.atleast_2d(np.asarray(self.design, dtype=float))
        target = np.asarray(self.target, dtype=float).reshape(-1)
        if design.shape[0] != target.shape[0]:
            raise DimensionError(f"design has {design.shape[0]} rows but target has {target.shape[0]} entries")
        if design.shape[0] < 1 or design.shape[1] < 1:
            raise DimensionError(f"design must be non-empty, got shape {design.shape}")
        if not (np.all(np.isfinite(design)) and np.all(np.isfinite(target))):
            raise ValueError("design and target must be finite")
        eq = self.eq
        if eq is not None:
            eq = np.atleast_2d(np.asarray(eq, dtype=float))
            if eq.shape[1] != design.shape[1]:
                raise DimensionError(f"eq has {eq.shape[1]} columns, design has {design.shape[1]}")
            if not np.all(np.isfinite(eq)):
                raise ValueError("eq must be finite")
            if eq.shape[0] == 0 or not np.any(eq):
                eq = None
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "eq", eq)

    @property
    def R(self):
        return self.design.shape[0]

    @property
    def D(self):
        return self.design.shape[1]


@dataclass(frozen=True)
class SolveCertificate:
    objective: float
    kkt_residual: float
    iterations: int
    feasible: bool
    restarts: int = 0


def objective(problem, theta):
    r = problem.target - problem.design @ theta
    return float(r @ r) / problem.R


def gradient(problem, theta):
    return (2.0 / problem.R) * (problem.design.T @ (problem.design @ theta - problem.target))


def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def clamp_to_simplex(theta, tol=1e-10):
    """Zero out entries in ``[-tol, 0)`` and renormalize; anything more negative is an error."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < -tol):
        raise ValueError(f"weights fall below -{tol}: min {theta.min():.3e}")
    theta = np.where(theta < 0, 0.0, theta)
    return theta / theta.sum()


def _null_basis(eq):
    return scipy.linalg.null_space(eq)


def kkt_residual(problem, theta, basis=None):
    """Largest violation of the KKT conditions at ``theta``.

    The returned value is the maximum of the primal infeasibility and the
    infinity norm of the reduced stationarity residual ``N'(g - lam 1 - mu)``
    for multipliers ``lam`` (free) and ``mu >= 0`` supported on the zero
    coordinates, where ``g`` is the objective gradient and ``N`` spans the null
    space of ``eq`` (the identity without ``eq``).
    """
    theta = np.asarray(theta, dtype=float)
    g = gradient(problem, theta)
    primal = max(abs(theta.sum() - 1.0), float(np.max(-theta, initial=0.0)))
    active = theta <= _ZERO
    if problem.eq is None:
        # closed form of the minimax multiplier: every support coordinate must sit at min(g)
        free = ~active
        stationarity = 0.5 * (g[free].max() - g.min()) if free.any() else 0.0
        return max(primal, float(stationarity))
    primal = max(primal, float(np.max(np.abs(problem.eq @ theta))))
    N = _null_basis(problem.eq) if basis is None else basis
    h = N.T @ g
    a = N.T @ np.ones(problem.D)
    cols = np.column_stack([a, -a, N.T[:, active]])
    coef, _ = optimize.nnls(cols, h)
    stationarity = float(np.max(np.abs(h - cols @ coef), initial=0.0))
    complementarity = float(np.max(coef[2:] * np.abs(theta[active]), initial=0.0))
    return max(primal, stationarity, complementarity)


def _best_vertex(A, b):
    col_sq = np.einsum("ij,ij->j", A, A)
    return int(np.argmin(col_sq - 2.0 * (A.T @ b)))


def _free_subproblem(A, b, free_idx):
    """Minimize ||b - A_F z|| subject to sum(z) = 1 by eliminating the last free coordinate."""
    if free_idx.size == 1:
        return np.ones(1)
    last = A[:, free_idx[-1]]
    M = A[:, free_idx[:-1]] - last[:, None]
    beta = np.linalg.lstsq(M, b - last, rcond=None)[0]
    return np.append(beta, 1.0 - beta.sum())


def _plain_active_set(A, b, dual_tol, max_iter, free=None):
    """Lawson-Hanson style iteration for the simplex. Returns (theta, iterations, converged)."""
    R, D = A.shape
    theta = np.zeros(D)
    if free is None or not free.any():
        free = np.zeros(D, dtype=bool)
        free[_best_vertex(A, b)] = True
    free = free.copy()
    idx = np.flatnonzero(free)
    theta[idx] = _free_subproblem(A, b, idx)
    if np.any(theta[idx] <= 0):
        # warm start support is not optimal on its own; fall back to a vertex
        theta[:] = 0.0
        free[:] = False
        k = _best_vertex(A, b)
        free[k] = True
        theta[k] = 1.0
    scale = 2.0 / R
    iterations = 0
    rejected = np.zeros(D, dtype=bool)
    while iterations < max_iter:
        g = scale * (A.T @ (A @ theta - b))
        lam = g[free].mean()
        w = g - lam
        w[free | rejected] = np.inf
        k = int(np.argmin(w))
        if not w[k] < -dual_tol:
            return theta, iterations, True
        free[k] = True
        first = True
        while iterations < max_iter:
            iterations += 1
            idx = np.flatnonzero(free)
            z = np.zeros(D)
            z[idx] = _free_subproblem(A, b, idx)
            if np.all(z[idx] > 0):
                theta = z
                rejected[:] = False
                break
            if first and z[k] <= 0:
                # numerically useless entering column; skip it until the iterate moves
                free[k] = False
                rejected[k] = True
                break
            first = False
            blocking = free & (z <= 0)
            alpha = np.min(theta[blocking] / (theta[blocking] - z[blocking]))
            theta = theta + alpha * (z - theta)
            free &= theta > _ZERO
            theta[~free] = 0.0
            theta /= theta.sum()
            rejected[:] = False
    return theta, iterations, False


def _phase_one(N):
    """Find beta with N beta >= 0 and sum(N beta) = 1, maximizing the smallest coordinate."""
    D, r = N.shape
    a = N.sum(axis=0)
    c = np.zeros(r + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-N, np.ones((D, 1))])
    b_ub = np.zeros(D)
    A_eq = np.append(a, 0.0)[None, :]
    bounds = [(None, None)] * r + [(None, 1.0)]
    res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0:
        return None, -np.inf
    return res.x[:r], res.x[-1]


def _subspace_active_set(B, y, N, beta, dual_tol, max_iter):
    """Primal active-set iteration over N beta >= 0, a'beta = 1 (a = N'1)."""
    R = B.shape[0]
    a = N.sum(axis=0)
    working = []
    for d in np.flatnonzero(N @ beta <= _ZERO):
        C = np.vstack([N[working + [d]], a])
        if np.linalg.matrix_rank(C) == C.shape[0]:
            working.append(int(d))
    iterations = 0
    at_minimizer = False
    while iterations < max_iter:
        iterations += 1
        C = np.vstack([N[working], a]) if working else a[None, :]
        if not at_minimizer:
            rhs = np.zeros(C.shape[0])
            rhs[-1] = 1.0
            base = np.linalg.lstsq(C, rhs, rcond=None)[0]
            Z = scipy.linalg.null_space(C)
            if Z.shape[1]:
                gamma = np.linalg.lstsq(B @ Z, y - B @ base, rcond=None)[0]
                target = base + Z @ gamma
            else:
                target = base
            step = target - beta
            slope = N @ step
            blocking = np.flatnonzero(slope < 0)
            blocking = blocking[~np.isin(blocking, working)]
            alpha, enter = 1.0, None
            if blocking.size:
                ratios = np.maximum(N[blocking] @ beta, 0.0) / -slope[blocking]
                j = int(np.argmin(ratios))
                if ratios[j] < 1.0:
                    alpha, enter = ratios[j], int(blocking[j])
            beta = beta + alpha * step
            if enter is not None:
                working.append(enter)
                continue
            at_minimizer = True
        h = (2.0 / R) * (B.T @ (B @ beta - y))
        mult = np.linalg.lstsq(C.T, h, rcond=None)[0][:-1]
        if not working or mult.min() >= -dual_tol:
            return beta, iterations, True
        working.pop(int(np.argmin(mult)))
        at_minimizer = False
    return beta, iterations, False


def feasibility_gap(eq, D):
    """Smallest ``||eq theta||_2`` over the probability simplex in ``R^D``."""
    if eq is None:
        return 0.0
    eq = np.atleast_2d(np.asarray(eq, dtype=float))
    if eq.shape[1] != D:
        raise DimensionError(f"eq has {eq.shape[1]} columns, expected {D}")
    if eq.shape[0] == 0 or not np.any(eq):
        return 0.0
    theta, _, _ = _plain_active_set(eq, np.zeros(eq.shape[0]), 1e-14, 100 * D + 100)
    return float(np.linalg.norm(eq @ theta))


def solve(problem, tol=1e-8, max_iter=None):
    """Solve a :class:`SimplexLsProblem`.

    Parameters
    ----------
    problem : SimplexLsProblem
    tol : float
        Required KKT residual of the returned weights.
    max_iter : int, optional
        Iteration budget per attempt (default ``100 * D``). One restart from the
        last support is attempted before giving up.

    Returns
    -------
    theta : numpy.ndarray
        Weights on the simplex (and in the null space of ``eq``).
    certificate : SolveCertificate

    Raises
    ------
    Infeasible
        ``eq`` has no point in common with the simplex.
    NonConvergence
        The KKT residual is still above ``tol`` after the restart.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    D = problem.D
    if max_iter is None:
        max_iter = 100 * D
    dual_tol = 0.1 * tol
    basis = None
    restarts = 0
    if problem.eq is None:
        theta, iterations, _ = _plain_active_set(problem.design, problem.target, dual_tol, max_iter)
        residual = kkt_residual(problem, theta)
        if residual > tol:
            restarts = 1
            theta, more, _ = _plain_active_set(problem.design, problem.target, dual_tol, max_iter, free=theta > 0)
            iterations += more
    else:
        basis = _null_basis(problem.eq)
        beta0, margin = _phase_one(basis) if basis.shape[1] else (None, -np.inf)
        if beta0 is None or margin < -_ZERO:
            gap = feasibility_gap(problem.eq, D)
            raise Infeasible(f"equality constraints miss the simplex (gap {gap:.3e})", gap=gap)
        B = problem.design @ basis
        beta, iterations, _ = _subspace_active_set(B, problem.target, basis, beta0, dual_tol, max_iter)
        theta = basis @ beta
        if kkt_residual(problem, clamp_to_simplex(theta), basis) > tol:
            restarts = 1
            beta, more, _ = _subspace_active_set(B, problem.target, basis, beta, dual_tol, max_iter)
            iterations += more
            theta = basis @ beta
    theta = clamp_to_simplex(theta)
    residual = kkt_residual(problem, theta, basis)
    if residual > tol:
        raise NonConvergence(f"KKT residual {residual:.3e} exceeds tolerance {tol:.1e} after {iterations} iterations", kkt_residual=residual)
    return theta, SolveCertificate(
        objective=objective(problem, theta),
        kkt_residual=residual,
        iterations=iterations,
        feasible=True,
        restarts=restarts,
    )
