"""Ill-posedness diagnostics for fixed-grid sieve estimators.

For a kernel ``g(x, alpha)`` (a vector of outcome probabilities, or a density
value) and grid points ``alpha_1..alpha_D``, the Gram matrix is

    Psi[d1, d2] = E_x[ g(x, alpha_d1)' g(x, alpha_d2) ],

estimated by averaging over covariate draws. Its smallest eigenvalue
``xi_min`` governs the variance of the fitted weights, and ``tau_D =
xi_min^{-1/2}`` is the sieve measure of ill-posedness. The singular values of
the stacked, ``1/sqrt(draws)``-scaled kernel matrix are reported too; their
squares are the eigenvalues of ``Psi``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .kernels import choice_probabilities, spell_density

__all__ = [
    "LogitKernel",
    "DurationKernel",
    "KERNELS",
    "DiagnosticsReport",
    "stacked_kernel_matrix",
    "gram_matrix",
    "min_eigenvalue",
    "ill_posedness",
    "singular_spectrum",
    "log_spectrum_slope",
    "diagnose",
]


class LogitKernel:
    """Choice probabilities of all ``J + 1`` outcomes; characteristics uniform on [0, 1]."""

    tag = "logit"

    def __init__(self, J=3, K=2):
        self.J = J
        self.K = K
        self.volume = 1.0

    def sample(self, rng, size):
        return rng.uniform(0.0, 1.0, size=(size, self.J, self.K))

    def evaluate(self, draws, points):
        return choice_probabilities(draws, points)

    def describe(self):
        return {"J": self.J, "K": self.K}


class DurationKernel:
    """Two-spell inverse Gaussian density, integrated over spell pairs in ``(0, t_max]^2``.

    Spell pairs are drawn uniformly on the square and the average is scaled by its
    area, so ``Psi`` estimates the Lebesgue inner products of the densities.
    Grid points are ``(drift, barrier)`` pairs with positive barrier.
    """

    tag = "duration"

    def __init__(self, t_max=5.0):
        if t_max <= 0:
            raise ValueError(f"t_max must be positive, got {t_max}")
        self.t_max = float(t_max)
        self.volume = self.t_max**2

    def sample(self, rng, size):
        # 1 - U lies in (0, 1], keeping spells strictly positive
        return self.t_max * (1.0 - rng.uniform(size=(size, 2)))

    def evaluate(self, draws, points):
        a1 = points[None, :, 0]
        a2 = points[None, :, 1]
        dens = spell_density(draws[:, 0:1], a1, a2) * spell_density(draws[:, 1:2], a1, a2)
        return dens[:, None, :]

    def describe(self):
        return {"t_max": self.t_max}


KERNELS = {"logit": LogitKernel, "duration": DurationKernel}


def stacked_kernel_matrix(grid, kernel, draws, rng):
    """Kernel values for ``draws`` covariate draws, stacked into rows and scaled so that ``F'F`` is the Gram matrix."""
    if draws < 1:
        raise ValueError(f"need at least one draw, got {draws}")
    x = kernel.sample(rng, draws)
    values = kernel.evaluate(x, grid.points)
    return values.reshape(-1, grid.D) * math.sqrt(kernel.volume / draws)


def gram_matrix(grid, kernel, draws, rng):
    F = stacked_kernel_matrix(grid, kernel, draws, rng)
    psi = F.T @ F
    return 0.5 * (psi + psi.T)


def min_eigenvalue(psi, sym_tol=1e-10):
    """Smallest eigenvalue of a symmetric matrix; values in [-1e-12, 0) are reported as 0."""
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2 or psi.shape[0] != psi.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {psi.shape}")
    if np.max(np.abs(psi - psi.T), initial=0.0) > sym_tol * max(1.0, np.max(np.abs(psi), initial=0.0)):
        raise ValueError("matrix is not symmetric")
    xi = float(np.linalg.eigvalsh(psi)[0])
    if -1e-12 <= xi < 0:
        xi = 0.0
    return xi


def ill_posedness(psi):
    """``xi_min^{-1/2}``; ``inf`` when the smallest eigenvalue is at most 1e-300."""
    xi = min_eigenvalue(psi)
    if xi <= 1e-300:
        return math.inf
    return 1.0 / math.sqrt(xi)


def singular_spectrum(design):
    return np.linalg.svd(np.asarray(design, dtype=float), compute_uv=False)


def log_spectrum_slope(spectrum, rel_floor=1e-13):
    """Least-squares slope of ``log sigma_k`` against ``k`` over values above ``rel_floor * sigma_1``.

    A roughly constant negative slope indicates geometric decay.
    """
    s = np.asarray(spectrum, dtype=float)
    if s.size < 2 or s[0] <= 0:
        return math.nan
    keep = s > rel_floor * s[0]
    if keep.sum() < 2:
        return math.nan
    k = np.arange(1, s.size + 1)[keep]
    return float(np.polyfit(k, np.log(s[keep]), 1)[0])


@dataclass(frozen=True, eq=False)
class DiagnosticsReport:
    psi: np.ndarray
    xi_min: float
    tau_D: float
    spectrum: np.ndarray
    kernel_tag: str
    mc_draws: int
    log_slope: float
    kernel_params: dict | None = None

    @property
    def D(self):
        return self.psi.shape[0]

    @property
    def tau_infinite(self):
        return math.isinf(self.tau_D)

    def to_dict(self, include_psi=True):
        out = {
            "kernel": self.kernel_tag,
            "kernel_params": self.kernel_params or {},
            "D": self.D,
            "mc_draws": self.mc_draws,
            "xi_min": self.xi_min,
            "tau_D": None if self.tau_infinite else self.tau_D,
            "tau_infinite": self.tau_infinite,
            "log_spectrum_slope": None if math.isnan(self.log_slope) else self.log_slope,
            "spectrum": self.spectrum.tolist(),
        }
        if include_psi:
            out["psi"] = self.psi.tolist()
        return out

    def to_json(self, path, include_psi=True):
        with open(path, "w") as fh:
            json.dump(self.to_dict(include_psi), fh, indent=2)
            fh.write("\n")

    def spectrum_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["k", "sigma_k"])
            for k, s in enumerate(self.spectrum, start=1):
                writer.writerow([k, repr(float(s))])


def diagnose(grid, kernel, draws, rng):
    """Gram matrix, smallest eigenvalue, ill-posedness and spectrum from one set of draws."""
    F = stacked_kernel_matrix(grid, kernel, draws, rng)
    psi = F.T @ F
    psi = 0.5 * (psi + psi.T)
    spectrum = singular_spectrum(F)
    return DiagnosticsReport(
        psi=psi,
        xi_min=min_eigenvalue(psi),
        tau_D=ill_posedness(psi),
        spectrum=spectrum,
        kernel_tag=kernel.tag,
        mc_draws=draws,
        log_slope=log_spectrum_slope(spectrum),
        kernel_params=kernel.describe(),
    )
