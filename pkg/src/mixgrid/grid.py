"""Halton support grids for the fixed-grid estimator."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = ["PRIMES", "radical_inverse", "GridSpec", "Grid", "halton_grid"]

PRIMES = (2, 3, 5, 7, 11, 13, 17, 19)


def radical_inverse(index, base):
    """Van der Corput radical inverse: reflect the base-``base`` digits of ``index`` about the radix point."""
    if index < 1:
        raise ValueError(f"index must be >= 1, got {index}")
    if base < 2:
        raise ValueError(f"base must be >= 2, got {base}")
    result = 0.0
    scale = 1.0 / base
    while index > 0:
        index, digit = divmod(index, base)
        result += digit * scale
        scale /= base
    return result


@dataclass(frozen=True)
class GridSpec:
    D: int
    K: int = 2
    bounds: tuple = ((-5.0, 5.0), (-5.0, 5.0))

    def __post_init__(self):
        if self.D < 1:
            raise ValueError(f"grid size D must be >= 1, got {self.D}")
        if self.K < 1:
            raise ValueError(f"dimension K must be >= 1, got {self.K}")
        if self.K > len(PRIMES):
            raise ValueError(f"Halton grids support K <= {len(PRIMES)}, got {self.K}")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if len(bounds) != self.K:
            raise ValueError(f"need {self.K} (lo, hi) bounds, got {len(bounds)}")
        if any(not lo < hi for lo, hi in bounds):
            raise ValueError(f"every bound needs lo < hi, got {bounds}")
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def square(cls, D, K=2, lo=-5.0, hi=5.0):
        return cls(D, K, tuple((lo, hi) for _ in range(K)))


@dataclass(frozen=True, eq=False)
class Grid:
    points: np.ndarray
    spec: GridSpec

    @property
    def D(self):
        return self.points.shape[0]

    @property
    def K(self):
        return self.points.shape[1]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["d"] + [f"alpha_{k}" for k in range(1, self.K + 1)])
            for d, row in enumerate(self.points, start=1):
                writer.writerow([d] + [repr(float(v)) for v in row])


def halton_grid(spec):
    """Unscrambled Halton points 1..D mapped affinely onto ``spec.bounds``.

    Dimension k uses the k-th prime and the sequence starts at index 1 with no
    skip, so a grid of size D is the first D rows of any larger grid.
    """
    unit = np.array([[radical_inverse(d, PRIMES[k]) for k in range(spec.K)] for d in range(1, spec.D + 1)])
    lo = np.array([b[0] for b in spec.bounds])
    hi = np.array([b[1] for b in spec.bounds])
    return Grid(lo + unit * (hi - lo), spec)
