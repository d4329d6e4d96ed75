"""Choice and density kernels, plus the Gaussian-mixture data generating process.

The Mixed Logit kernel gives the conditional choice probabilities of ``J`` inside
goods and one outside good (index 0, utility normalized to zero) for a draw of
the random coefficients. The data generating process is the equal-weight
mixture of two correlated bivariate normals used in the simulation study.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, optimize, special

from .exceptions import DatasetParseError, DimensionError

__all__ = [
    "logit_choice_prob",
    "choice_probabilities",
    "bvn_cdf",
    "GaussianMixtureDGP",
    "PointMass",
    "ChoiceDataset",
    "simulate_dataset",
    "spell_density",
    "duration_kernel",
]


def choice_probabilities(x, alphas, intercepts=None):
    """Logit choice probabilities for many covariate blocks and coefficient points.

    Parameters
    ----------
    x : array_like, shape (n, J, K)
        Characteristics of the inside goods. The outside good has zero characteristics.
    alphas : array_like, shape (D, K)
        Random-coefficient points.
    intercepts : array_like, shape (J,), optional
        Alternative-specific constants of the inside goods (default zero).

    Returns
    -------
    numpy.ndarray, shape (n, J + 1, D)
        Entry ``[i, j, d]`` is the probability of choosing ``j`` given ``x[i]`` and ``alphas[d]``.
    """
    x = np.asarray(x, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    if x.ndim != 3 or alphas.ndim != 2:
        raise DimensionError(f"expected x of shape (n, J, K) and alphas of shape (D, K), got {x.shape} and {alphas.shape}")
    if x.shape[2] != alphas.shape[1]:
        raise DimensionError(f"covariate dimension {x.shape[2]} does not match coefficient dimension {alphas.shape[1]}")
    n, J, _ = x.shape
    utility = np.zeros((n, J + 1, alphas.shape[0]))
    utility[:, 1:, :] = x @ alphas.T
    if intercepts is not None:
        intercepts = np.asarray(intercepts, dtype=float)
        if intercepts.shape != (J,):
            raise DimensionError(f"expected {J} intercepts, got shape {intercepts.shape}")
        utility[:, 1:, :] += intercepts[None, :, None]
    # log-sum-exp shift keeps exp() finite for arbitrarily large utilities
    utility -= utility.max(axis=1, keepdims=True)
    np.exp(utility, out=utility)
    utility /= utility.sum(axis=1, keepdims=True)
    return utility


def logit_choice_prob(x, alpha, intercepts=None):
    """Choice probabilities ``(P(0), ..., P(J))`` for one covariate block ``x`` (J x K) and one point ``alpha``."""
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if x.ndim != 2 or alpha.ndim != 1:
        raise DimensionError(f"expected x of shape (J, K) and alpha of shape (K,), got {x.shape} and {alpha.shape}")
    return choice_probabilities(x[None], alpha[None], intercepts)[0, :, 0]


def _bvn_integrand(t, h, k):
    c = math.cos(t)
    return math.exp(-(h * h + k * k - 2.0 * (h * k) * math.sin(t)) / (2.0 * c * c))


def bvn_cdf(h, k, rho):
    """Standard bivariate normal CDF ``P(X <= h, Y <= k)`` with correlation ``rho``.

    Uses the correlation-integral representation

        Phi2(h, k; rho) = Phi(h) Phi(k) + 1/(2 pi) int_0^rho exp(-(h^2 - 2 r h k + k^2) / (2 (1 - r^2))) / sqrt(1 - r^2) dr

    with the substitution ``r = sin(t)``, which removes the endpoint singularity,
    and adaptive quadrature on the resulting smooth integrand.
    """
    h = float(h)
    k = float(k)
    rho = float(rho)
    if not -1.0 < rho < 1.0:
        raise ValueError(f"correlation must lie in (-1, 1), got {rho}")
    if math.isnan(h) or math.isnan(k):
        raise ValueError("bvn_cdf is undefined for NaN limits")
    if h == -math.inf or k == -math.inf:
        return 0.0
    if h == math.inf:
        return float(special.ndtr(k))
    if k == math.inf:
        return float(special.ndtr(h))
    base = special.ndtr(h) * special.ndtr(k)
    if rho == 0.0:
        return float(base)
    upper = math.asin(rho)
    value, _ = integrate.quad(_bvn_integrand, 0.0, upper, args=(h, k), epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(min(1.0, max(0.0, base + value / (2.0 * math.pi))))


@dataclass(frozen=True)
class GaussianMixtureDGP:
    """Finite mixture of normals sharing one covariance matrix.

    Defaults reproduce the simulation design: weights (1/2, 1/2), means
    (-2.2, -2.2) and (1.3, 1.3), covariance [[0.8, 0.15], [0.15, 0.8]].
    """

    weights: tuple = (0.5, 0.5)
    means: tuple = ((-2.2, -2.2), (1.3, 1.3))
    cov: tuple = ((0.8, 0.15), (0.15, 0.8))
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if w.ndim != 1 or np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-12):
            raise ValueError(f"mixture weights must be nonnegative and sum to one, got {self.weights}")
        if mu.ndim != 2 or mu.shape[0] != w.size:
            raise DimensionError(f"expected {w.size} mean vectors, got shape {mu.shape}")
        if cov.shape != (mu.shape[1], mu.shape[1]):
            raise DimensionError(f"covariance shape {cov.shape} does not match dimension {mu.shape[1]}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-14):
            raise ValueError("covariance matrix must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance matrix must be positive definite") from None
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self):
        return len(self.means[0])

    def to_dict(self):
        return {"weights": list(self.weights), "means": [list(m) for m in self.means], "cov": [list(r) for r in self.cov]}

    def sample(self, rng, size):
        """Draw ``size`` coefficient vectors: a component per draw, then a correlated normal via Cholesky."""
        component = rng.choice(len(self.weights), size=size, p=np.asarray(self.weights, dtype=float))
        z = rng.standard_normal((size, self.dim))
        return np.asarray(self.means, dtype=float)[component] + z @ self._chol.T

    def cdf(self, a):
        """Joint CDF at the point ``a`` (bivariate mixtures only)."""
        if self.dim != 2:
            raise DimensionError("the exact joint CDF is implemented for bivariate mixtures only")
        a = np.asarray(a, dtype=float)
        if a.shape != (2,):
            raise DimensionError(f"expected a 2-vector, got shape {a.shape}")
        cov = np.asarray(self.cov, dtype=float)
        sd = np.sqrt(np.diag(cov))
        rho = cov[0, 1] / (sd[0] * sd[1])
        total = 0.0
        for w, mu in zip(self.weights, self.means):
            h = (a[0] - mu[0]) / sd[0]
            k = (a[1] - mu[1]) / sd[1]
            total += w * bvn_cdf(h, k, rho)
        return min(1.0, max(0.0, total))

    def marginal_cdf(self, q, coord):
        """CDF of coordinate ``coord`` (1-based) at ``q``."""
        idx = _coord_index(coord, self.dim)
        sd = math.sqrt(self.cov[idx][idx])
        return float(sum(w * special.ndtr((q - mu[idx]) / sd) for w, mu in zip(self.weights, self.means)))

    def marginal_quantile(self, coord, tau):
        """Quantile of coordinate ``coord`` at level ``tau``, found by bracketed root search."""
        if not 1e-6 <= tau <= 1 - 1e-6:
            raise ValueError(f"quantile level must lie in [1e-6, 1 - 1e-6], got {tau}")
        idx = _coord_index(coord, self.dim)
        centers = [mu[idx] for mu in self.means]
        sd = math.sqrt(self.cov[idx][idx])
        # the bracket is symmetric about the midpoint of the extreme means
        mid = 0.5 * (min(centers) + max(centers))
        half = 0.5 * (max(centers) - min(centers)) + 6.0 * sd
        return optimize.brentq(lambda q: self.marginal_cdf(q, coord) - tau, mid - half, mid + half, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


@dataclass(frozen=True)
class PointMass:
    """Degenerate coefficient law concentrated on one point."""

    point: tuple

    @property
    def dim(self):
        return len(self.point)

    def sample(self, rng, size):
        return np.tile(np.asarray(self.point, dtype=float), (size, 1))

    def to_dict(self):
        return {"point": list(self.point)}


def _coord_index(coord, dim):
    if not 1 <= coord <= dim:
        raise ValueError(f"coordinate must be in 1..{dim}, got {coord}")
    return coord - 1


@dataclass(frozen=True)
class ChoiceDataset:
    """Observed choices ``y`` (0 = outside good) and inside-good characteristics ``x`` of shape (n, J, K)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y)
        if x.ndim != 3 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise DimensionError(f"inconsistent dataset shapes x={x.shape}, y={y.shape}")
        if x.shape[0] < 1 or x.shape[1] < 1 or x.shape[2] < 1:
            raise DimensionError(f"dataset needs n, J, K >= 1, got x={x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("characteristics must be finite")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise ValueError("choices must be integers")
            y = y.astype(np.int64)
        if np.any(y < 0) or np.any(y > x.shape[1]):
            raise ValueError(f"choices must lie in 0..{x.shape[1]}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y.astype(np.int64))

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def J(self):
        return self.x.shape[1]

    @property
    def K(self):
        return self.x.shape[2]

    @property
    def onehot(self):
        """Indicator matrix of shape (n, J + 1)."""
        out = np.zeros((self.n, self.J + 1))
        out[np.arange(self.n), self.y] = 1.0
        return out

    def header(self):
        return ["id", "y"] + [f"x_{j}_{k}" for j in range(1, self.J + 1) for k in range(1, self.K + 1)]

    def to_csv(self, path):
        flat = self.x.reshape(self.n, -1)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            for i in range(self.n):
                writer.writerow([i + 1, int(self.y[i])] + [repr(float(v)) for v in flat[i]])

    @classmethod
    def read_csv(cls, path):
        """Parse a dataset written by :meth:`to_csv`; errors name the offending line."""
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DatasetParseError("empty file, header row required", line=1) from None
            J, K = _parse_header(header)
            ys, rows = [], []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DatasetParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
                try:
                    y = int(row[1])
                    values = [float(v) for v in row[2:]]
                except ValueError as exc:
                    raise DatasetParseError(str(exc), line=lineno) from None
                if not 0 <= y <= J:
                    raise DatasetParseError(f"choice {y} outside 0..{J}", line=lineno)
                if not all(math.isfinite(v) for v in values):
                    raise DatasetParseError("non-finite characteristic", line=lineno)
                ys.append(y)
                rows.append(values)
        if not rows:
            raise DatasetParseError("no data rows", line=2)
        return cls(np.asarray(rows).reshape(len(rows), J, K), np.asarray(ys, dtype=np.int64))


def _parse_header(header):
    if len(header) < 3 or header[0] != "id" or header[1] != "y":
        raise DatasetParseError("header must start with 'id,y' followed by x_j_k columns", line=1)
    pairs = []
    for name in header[2:]:
        parts = name.split("_")
        if len(parts) != 3 or parts[0] != "x" or not parts[1].isdigit() or not parts[2].isdigit():
            raise DatasetParseError(f"bad column name {name!r}", line=1)
        pairs.append((int(parts[1]), int(parts[2])))
    J = max(p[0] for p in pairs)
    K = max(p[1] for p in pairs)
    expected = [(j, k) for j in range(1, J + 1) for k in range(1, K + 1)]
    if pairs != expected:
        raise DatasetParseError("x columns must be x_1_1..x_J_K in row-major order", line=1)
    return J, K


def simulate_dataset(dgp, n, J, K, rng):
    """Draw ``n`` individuals: uniform[0, 1] characteristics, coefficients from ``dgp``, logit choices."""
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")
    if dgp.dim != K:
        raise DimensionError(f"DGP dimension {dgp.dim} does not match K={K}")
    x = rng.uniform(0.0, 1.0, size=(n, J, K))
    alpha = dgp.sample(rng, n)
    utility = np.zeros((n, J + 1))
    utility[:, 1:] = np.einsum("ijk,ik->ij", x, alpha)
    utility -= utility.max(axis=1, keepdims=True)
    prob = np.exp(utility)
    prob /= prob.sum(axis=1, keepdims=True)
    u = rng.uniform(size=(n, 1))
    y = (np.cumsum(prob, axis=1) < u).sum(axis=1)
    # guard against cumulative sums a rounding error below one
    y = np.minimum(y, J)
    return ChoiceDataset(x, y)


def spell_density(t, alpha1, alpha2):
    """First-passage (inverse Gaussian) density of one unemployment spell.

    ``alpha2 / (sqrt(2 pi) t^{3/2}) * exp(-(alpha1 t - alpha2)^2 / (2 t))``; integrates
    to one over (0, inf) when ``alpha1 >= 0``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("spell durations must be positive")
    if np.any(np.asarray(alpha2) <= 0):
        raise ValueError("barrier alpha2 must be positive")
    log_f = np.log(alpha2) - 0.5 * math.log(2 * math.pi) - 1.5 * np.log(t) - (alpha1 * t - alpha2) ** 2 / (2 * t)
    return np.exp(log_f)


def duration_kernel(t1, t2, alpha1, alpha2):
    """Joint density of two independent spells sharing the heterogeneity point ``(alpha1, alpha2)``."""
    return spell_density(t1, alpha1, alpha2) * spell_density(t2, alpha1, alpha2)
