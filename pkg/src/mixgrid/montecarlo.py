"""Monte Carlo comparison of the plain and principal-component fixed-grid estimators.

Each replication draws a fresh dataset from the Gaussian-mixture design, fits
both estimators on one fixed Halton grid, and evaluates their CDFs on an
equally spaced lattice and their marginal quantiles. Replication ``m`` uses a
random stream derived only from ``(seed, m)``, and aggregation always runs in
``m`` order, so results do not depend on how replications are scheduled.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .estimator import atom_quantile, build_design, cdf_values, fit_fixed_grid, fit_pcr
from .exceptions import DimensionError, SolverError
from .grid import GridSpec, halton_grid
from .kernels import GaussianMixtureDGP, simulate_dataset

__all__ = [
    "McCell",
    "CellResult",
    "ReplicationRecord",
    "TableArtifact",
    "eval_lattice",
    "integrated_abs_bias",
    "integrated_rmse",
    "integrated_mean_bias",
    "quantile_rmse",
    "replication_stream",
    "run_replication",
    "run_cell",
    "run_table",
    "ESTIMATORS",
]

log = logging.getLogger(__name__)

ESTIMATORS = ("plain", "pcr")
FAILURE_RATE = 0.01


@dataclass(frozen=True)
class McCell:
    n: int
    D: int
    p: int = 5
    M: int = 500
    seed: int = 20200518
    quantile_levels: tuple = (0.25, 0.5, 0.75)
    J: int = 3
    K: int = 2
    bounds: tuple = ((-5.0, 5.0), (-5.0, 5.0))
    lattice_per_dim: int = 11
    tol: float = 1e-8
    outside_rows: bool = False

    def __post_init__(self):
        for name in ("n", "D", "p", "M", "J", "K"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if any(not 0.0 < t < 1.0 for t in self.quantile_levels):
            raise ValueError(f"quantile levels must lie in (0, 1), got {self.quantile_levels}")
        object.__setattr__(self, "quantile_levels", tuple(float(t) for t in self.quantile_levels))
        object.__setattr__(self, "bounds", tuple((float(lo), float(hi)) for lo, hi in self.bounds))

    def to_dict(self):
        d = asdict(self)
        d["quantile_levels"] = list(self.quantile_levels)
        d["bounds"] = [list(b) for b in self.bounds]
        return d


@dataclass
class ReplicationRecord:
    m: int
    cdf: dict = field(default_factory=dict)
    quantiles: dict = field(default_factory=dict)
    objective: dict = field(default_factory=dict)
    kkt_residual: dict = field(default_factory=dict)
    effective_p: int | None = None
    error: str | None = None


@dataclass
class CellResult:
    cell: McCell
    bias_plain: float
    bias_pcr: float
    rmse_plain: float
    rmse_pcr: float
    meanbias_plain: float
    meanbias_pcr: float
    quantile_rmse: dict
    completed: int
    failures: list
    max_kkt_residual: float
    min_objective_gap: float
    replications: list | None = None

    @property
    def failed(self):
        return len(self.failures) > FAILURE_RATE * self.cell.M


def eval_lattice(bounds=((-5.0, 5.0), (-5.0, 5.0)), per_dim=11):
    """Equally spaced lattice with endpoints, ``per_dim`` points per axis, lexicographic order."""
    if per_dim < 2:
        raise ValueError(f"need at least 2 points per dimension, got {per_dim}")
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in bounds]
    return np.array(list(itertools.product(*axes)))


def _check_shapes(per_rep, truth):
    per_rep = np.atleast_2d(np.asarray(per_rep, dtype=float))
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if per_rep.shape[1] != truth.size:
        raise DimensionError(f"estimates have {per_rep.shape[1]} lattice points, truth has {truth.size}")
    return per_rep, truth


def integrated_abs_bias(per_rep_cdfs, truth):
    """``(1/(M L)) sum_m sum_l |F_m(a_l) - F_0(a_l)|``."""
    per_rep, truth = _check_shapes(per_rep_cdfs, truth)
    return float(np.mean(np.abs(per_rep - truth)))


def integrated_mean_bias(per_rep_cdfs, truth):
    """``(1/L) sum_l |(1/M) sum_m F_m(a_l) - F_0(a_l)|``, the absolute bias of the average estimate."""
    per_rep, truth = _check_shapes(per_rep_cdfs, truth)
    return float(np.mean(np.abs(per_rep.mean(axis=0) - truth)))


def integrated_rmse(per_rep_cdfs, truth):
    """``sqrt((1/(M L)) sum_m sum_l (F_m(a_l) - F_0(a_l))^2)``."""
    per_rep, truth = _check_shapes(per_rep_cdfs, truth)
    return float(np.sqrt(np.mean((per_rep - truth) ** 2)))


def quantile_rmse(per_rep_quantiles, truth):
    q = np.asarray(per_rep_quantiles, dtype=float).reshape(-1)
    if q.size < 1:
        raise ValueError("need at least one replication")
    return float(np.sqrt(np.mean((q - truth) ** 2)))


def replication_stream(seed, m):
    """Independent generator for replication ``m``; a pure function of ``(seed, m)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(m,)))


def _quantile_key(estimator, coord, tau):
    return f"{estimator}_c{coord}_t{tau:g}"


def run_replication(cell, m, dgp=None, grid=None, lattice=None):
    """Simulate, fit both estimators and evaluate them for replication ``m``."""
    dgp = GaussianMixtureDGP() if dgp is None else dgp
    grid = halton_grid(GridSpec(cell.D, cell.K, cell.bounds)) if grid is None else grid
    lattice = eval_lattice(cell.bounds, cell.lattice_per_dim) if lattice is None else lattice
    record = ReplicationRecord(m)
    with threadpool_limits(1):
        data = simulate_dataset(dgp, cell.n, cell.J, cell.K, replication_stream(cell.seed, m))
        design = build_design(data, grid, cell.outside_rows)
        try:
            fits = {
                "plain": fit_fixed_grid(data, grid, tol=cell.tol, design=design),
                "pcr": fit_pcr(data, grid, min(cell.p, grid.D), tol=cell.tol, design=design),
            }
        except SolverError as exc:
            record.error = f"{type(exc).__name__}: {exc}"
            return record
    record.effective_p = fits["pcr"].effective_p
    for name, fit in fits.items():
        record.cdf[name] = cdf_values(fit.weights, grid.points, lattice)
        record.objective[name] = fit.certificate.objective
        record.kkt_residual[name] = float(fit.certificate.kkt_residual)
        for coord in range(1, cell.K + 1):
            for tau in cell.quantile_levels:
                record.quantiles[_quantile_key(name, coord, tau)] = atom_quantile(fit.weights, grid.points[:, coord - 1], tau)
    return record


def _replication_task(args):
    cell, m = args
    return run_replication(cell, m)


def _run_replications(cell, workers):
    ms = range(1, cell.M + 1)
    if workers <= 1:
        dgp = GaussianMixtureDGP()
        grid = halton_grid(GridSpec(cell.D, cell.K, cell.bounds))
        lattice = eval_lattice(cell.bounds, cell.lattice_per_dim)
        return [run_replication(cell, m, dgp, grid, lattice) for m in ms]
    chunk = max(1, cell.M // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        records = list(pool.map(_replication_task, ((cell, m) for m in ms), chunksize=chunk))
    return sorted(records, key=lambda r: r.m)


def true_targets(cell, dgp=None):
    """True CDF on the evaluation lattice and true marginal quantiles of the mixture."""
    dgp = GaussianMixtureDGP() if dgp is None else dgp
    lattice = eval_lattice(cell.bounds, cell.lattice_per_dim)
    cdf = np.array([dgp.cdf(a) for a in lattice])
    quantiles = {(coord, tau): dgp.marginal_quantile(coord, tau) for coord in range(1, cell.K + 1) for tau in cell.quantile_levels}
    return cdf, quantiles


def run_cell(cell, workers=1, keep_replications=False):
    """Run all replications of ``cell`` and aggregate the loss metrics."""
    truth_cdf, truth_q = true_targets(cell)
    records = _run_replications(cell, workers)
    ok = [r for r in records if r.error is None]
    failures = [(r.m, r.error) for r in records if r.error is not None]
    if failures:
        log.warning("cell n=%d D=%d: %d of %d replications failed", cell.n, cell.D, len(failures), cell.M)
    metrics = {}
    quantile_metrics = {}
    for name in ESTIMATORS:
        if ok:
            cdfs = np.stack([r.cdf[name] for r in ok])
            metrics[f"bias_{name}"] = integrated_abs_bias(cdfs, truth_cdf)
            metrics[f"rmse_{name}"] = integrated_rmse(cdfs, truth_cdf)
            metrics[f"meanbias_{name}"] = integrated_mean_bias(cdfs, truth_cdf)
        else:
            metrics[f"bias_{name}"] = metrics[f"rmse_{name}"] = metrics[f"meanbias_{name}"] = math.nan
        for (coord, tau), q0 in truth_q.items():
            key = _quantile_key(name, coord, tau)
            quantile_metrics[key] = quantile_rmse([r.quantiles[key] for r in ok], q0) if ok else math.nan
    kkt = max((v for r in ok for v in r.kkt_residual.values()), default=math.nan)
    gap = min((r.objective["pcr"] - r.objective["plain"] for r in ok), default=math.nan)
    return CellResult(
        cell=cell,
        quantile_rmse=quantile_metrics,
        completed=len(ok),
        failures=failures,
        max_kkt_residual=kkt,
        min_objective_gap=gap,
        replications=records if keep_replications else None,
        **metrics,
    )


CSV_BASE = ["n", "D", "p", "M", "seed", "bias_plain", "bias_pcr", "rmse_plain", "rmse_pcr"]
CSV_EXTRA = ["meanbias_plain", "meanbias_pcr", "completed", "failures", "max_kkt_residual"]

LAYOUTS = {
    "table1": "Bias and RMSE for CDFs",
    "table2": "RMSE for medians of the marginals",
    "table3": "RMSE for tau-quantiles of the marginals",
}


@dataclass
class TableArtifact:
    results: list
    layout: str = "table1"

    def quantile_columns(self):
        keys = []
        for r in self.results:
            for k in r.quantile_rmse:
                if k not in keys:
                    keys.append(k)
        return [f"q_{k}" for k in keys]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        qcols = self.quantile_columns()
        writer.writerow(CSV_BASE + qcols + CSV_EXTRA)
        for r in self.results:
            c = r.cell
            row = [c.n, c.D, c.p, c.M, c.seed] + [repr(getattr(r, k)) for k in CSV_BASE[5:]]
            row += [repr(r.quantile_rmse.get(q[2:], math.nan)) for q in qcols]
            row += [repr(r.meanbias_plain), repr(r.meanbias_pcr), r.completed, len(r.failures), repr(r.max_kkt_residual)]
            writer.writerow(row)
        return buf.getvalue()

    def rows(self):
        """Header and rows of the published-style table for the current layout."""
        header, rows = [], []
        if self.layout == "table1":
            header = ["n", "D", "Bias(F_hat)", "Bias(F_tilde)", "RMSE(F_hat)", "RMSE(F_tilde)"]
            for r in self.results:
                rows.append([r.cell.n, r.cell.D, r.bias_plain, r.bias_pcr, r.rmse_plain, r.rmse_pcr])
        elif self.layout == "table2":
            header = ["n", "D", "RMSEQ1", "RMSEQ1-PCR", "RMSEQ2", "RMSEQ2-PCR"]
            for r in self.results:
                rows.append([r.cell.n, r.cell.D] + self._quantile_cells(r, 0.5))
        elif self.layout == "table3":
            header = ["tau", "n", "D", "RMSEQ1", "RMSEQ1-PCR", "RMSEQ2", "RMSEQ2-PCR"]
            levels = sorted({t for r in self.results for t in r.cell.quantile_levels if t != 0.5})
            for tau in levels:
                for r in self.results:
                    if tau in r.cell.quantile_levels:
                        rows.append([tau, r.cell.n, r.cell.D] + self._quantile_cells(r, tau))
        else:
            raise ValueError(f"unknown layout {self.layout!r}")
        return header, rows

    @staticmethod
    def _quantile_cells(result, tau):
        q = result.quantile_rmse
        return [q.get(_quantile_key(e, c, tau), math.nan) for c in (1, 2) for e in ESTIMATORS]

    def to_text(self):
        header, rows = self.rows()
        cells = [header] + [[_fmt(v) for v in row] for row in rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
        lines = [LAYOUTS[self.layout], ""]
        for k, row in enumerate(cells):
            lines.append("  ".join(v.rjust(w) for v, w in zip(row, widths)))
            if k == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def config(self):
        return {"layout": self.layout, "cells": [r.cell.to_dict() for r in self.results]}

    def write(self, out_dir, stem):
        """Write ``stem.csv``, ``stem.txt`` and the ``stem.json`` provenance sidecar."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{stem}.csv").write_text(self.to_csv())
        (out_dir / f"{stem}.txt").write_text(self.to_text())
        (out_dir / f"{stem}.json").write_text(json.dumps(self.config(), indent=2) + "\n")


def _fmt(v):
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def run_table(cells, workers=1, layout="table1", keep_replications=False):
    """Run ``cells`` in order and collect them into a :class:`TableArtifact`."""
    results = []
    for cell in cells:
        log.info("running cell n=%d D=%d M=%d", cell.n, cell.D, cell.M)
        results.append(run_cell(cell, workers=workers, keep_replications=keep_replications))
    return TableArtifact(results, layout)
