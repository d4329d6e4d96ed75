"""Fixed-grid least-squares estimator of a random-coefficient distribution.

The mixing distribution is approximated by weights ``theta`` on a fixed grid of
coefficient points. Each individual contributes one regression row per inside
good ``j = 1..J`` (optionally also the outside good): the target is the choice
indicator and the regressors are the logit probabilities of ``j`` evaluated at
every grid point. The principal
component variant additionally restricts ``theta`` to the span of the leading
``p`` right singular vectors of that design matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, Infeasible
from .kernels import choice_probabilities
from .solver import SimplexLsProblem, SolveCertificate, solve

__all__ = [
    "FitResult",
    "build_design",
    "fit_fixed_grid",
    "fit_pcr",
    "cdf_at",
    "cdf_values",
    "marginal_quantile",
]


@dataclass(frozen=True, eq=False)
class FitResult:
    weights: np.ndarray
    grid: object
    residuals: np.ndarray
    certificate: SolveCertificate
    effective_p: int | None = None
    requested_p: int | None = None

    @property
    def method(self):
        return "plain" if self.effective_p is None else "pcr"

    def to_dict(self):
        return {
            "method": self.method,
            "grid": self.grid.points.tolist(),
            "bounds": [list(b) for b in self.grid.spec.bounds],
            "weights": self.weights.tolist(),
            "objective": self.certificate.objective,
            "kkt_residual": float(self.certificate.kkt_residual),
            "iterations": self.certificate.iterations,
            "requested_p": self.requested_p,
            "effective_p": self.effective_p,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def build_design(data, grid, outside_rows=False):
    """Stack the regression rows ``(i, j)``, i-major.

    By default only the inside goods ``j = 1..J`` enter, giving an ``n J x D``
    matrix of choice probabilities and the matching vector of choice
    indicators. The outside-good rows are redundant (each block of ``J + 1``
    rows sums to one in every column) but do change the weighting of the
    least-squares fit; ``outside_rows=True`` includes them, giving ``n (J+1)``
    rows.
    """
    if grid.K != data.K:
        raise DimensionError(f"grid dimension {grid.K} does not match data dimension {data.K}")
    probs = choice_probabilities(data.x, grid.points)
    target = data.onehot
    if not outside_rows:
        probs = probs[:, 1:, :]
        target = target[:, 1:]
    return probs.reshape(-1, grid.D), target.reshape(-1)


def _fit(design, target, grid, eq, tol, effective_p=None, requested_p=None):
    theta, cert = solve(SimplexLsProblem(design, target, eq), tol=tol)
    return FitResult(theta, grid, target - design @ theta, cert, effective_p, requested_p)


def fit_fixed_grid(data, grid, tol=1e-8, design=None, outside_rows=False):
    """Least-squares weights over the simplex with no further restriction.

    ``design`` may pass a precomputed ``(matrix, target)`` pair from :func:`build_design`.
    """
    if design is None:
        design = build_design(data, grid, outside_rows)
    Z, y = design
    return _fit(Z, y, grid, None, tol)


def fit_pcr(data, grid, p, tol=1e-8, design=None, outside_rows=False):
    """Principal-component-restricted weights.

    If the simplex does not meet the span of the leading ``p`` directions, ``p``
    is raised one step at a time until it does; the value used is reported as
    ``effective_p``.
    """
    if not 1 <= p <= grid.D:
        raise ValueError(f"p must lie in 1..{grid.D}, got {p}")
    if design is None:
        design = build_design(data, grid, outside_rows)
    Z, y = design
    R, D = Z.shape
    # a wide design needs the full right basis so its null directions are constrained too
    _, _, vt = np.linalg.svd(Z, full_matrices=R < D)
    for q in range(p, D + 1):
        eq = vt[q:] if q < D else None
        try:
            return _fit(Z, y, grid, eq, tol, effective_p=q, requested_p=p)
        except Infeasible:
            continue
    raise AssertionError("unreachable: p = D imposes no constraint")


def cdf_values(weights, points, at):
    """Evaluate the fitted CDF ``sum_d w_d 1(points_d <= a)`` at every row of ``at``."""
    at = np.atleast_2d(np.asarray(at, dtype=float))
    below = np.all(points[None, :, :] <= at[:, None, :], axis=2)
    return np.clip(below.astype(float) @ weights, 0.0, 1.0)


def cdf_at(fit, a):
    a = np.asarray(a, dtype=float)
    if a.shape != (fit.grid.K,):
        raise DimensionError(f"expected a {fit.grid.K}-vector, got shape {a.shape}")
    return float(cdf_values(fit.weights, fit.grid.points, a[None])[0])


def marginal_quantile(fit, coord, tau):
    """Smallest grid value on ``coord`` (1-based) where the fitted marginal CDF reaches ``tau``."""
    if not 1 <= coord <= fit.grid.K:
        raise ValueError(f"coordinate must be in 1..{fit.grid.K}, got {coord}")
    return atom_quantile(fit.weights, fit.grid.points[:, coord - 1], tau)


def atom_quantile(weights, values, tau):
    """Generalized inverse of the step CDF putting mass ``weights`` on ``values``."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {tau}")
    atoms, inverse = np.unique(values, return_inverse=True)
    cum = np.cumsum(np.bincount(inverse, weights=weights, minlength=atoms.size))
    hit = np.flatnonzero(cum >= tau)
    return float(atoms[hit[0]] if hit.size else atoms[-1])
