"""Command-line interface: ``mixgrid {dgp,fit,diagnose,mc}``.

Every command reads one JSON config (``--config``) and writes its outputs into
``--out``. Exit codes: 0 success, 2 invalid configuration, 3 I/O or parse
failure, 4 solver failure, 5 at least one Monte Carlo cell failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from .config import DgpConfig, DiagnoseConfig, FitConfig, load_json, load_schedule
from .diagnostics import KERNELS, diagnose
from .estimator import fit_fixed_grid, fit_pcr
from .exceptions import DatasetParseError, DimensionError, SolverError
from .grid import GridSpec, halton_grid
from .kernels import ChoiceDataset, GaussianMixtureDGP, simulate_dataset
from .montecarlo import run_table

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_SOLVER = 4
EXIT_CELL_FAILURE = 5

log = logging.getLogger("mixgrid")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _read_config(model, path, overrides):
    try:
        raw = load_json(path)
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}", EXIT_IO) from None
    except json.JSONDecodeError as exc:
        raise CliError(f"config is not valid JSON: {exc}", EXIT_VALIDATION) from None
    if not isinstance(raw, dict):
        raise CliError("config must be a JSON object", EXIT_VALIDATION)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return model.model_validate(raw)


def _out_dir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory: {exc}", EXIT_IO) from None
    return out


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _grid_spec(D, K, bounds, default):
    if bounds is None:
        bounds = [default] * K
    return GridSpec(D, K, tuple(tuple(b) for b in bounds))


def cmd_dgp(args):
    cfg = _read_config(DgpConfig, args.config, {"seed": args.seed})
    mix = cfg.mixture
    dgp = GaussianMixtureDGP(tuple(mix.weights), tuple(tuple(m) for m in mix.means), tuple(tuple(r) for r in mix.cov))
    data = simulate_dataset(dgp, cfg.n, cfg.J, cfg.K, np.random.default_rng(cfg.seed))
    out = _out_dir(args.out)
    data.to_csv(out / "dataset.csv")
    _write_json(out / "manifest.json", {"version": __version__, **cfg.model_dump()})
    log.info("wrote %d individuals to %s", cfg.n, out / "dataset.csv")


def cmd_fit(args):
    overrides = {"p": args.p}
    if args.pcr:
        overrides["pcr"] = True
    cfg = _read_config(FitConfig, args.config, overrides)
    try:
        data = ChoiceDataset.read_csv(cfg.data)
    except OSError as exc:
        raise CliError(f"cannot read dataset: {exc}", EXIT_IO) from None
    grid = halton_grid(_grid_spec(cfg.D, data.K, cfg.bounds, (-5.0, 5.0)))
    if cfg.pcr:
        fit = fit_pcr(data, grid, min(cfg.p, cfg.D), tol=cfg.tol, outside_rows=cfg.outside_rows)
    else:
        fit = fit_fixed_grid(data, grid, tol=cfg.tol, outside_rows=cfg.outside_rows)
    out = _out_dir(args.out)
    fit.to_json(out / "fit.json")
    log.info("%s fit: objective %.6g, KKT residual %.2e", fit.method, fit.certificate.objective, fit.certificate.kkt_residual)


def cmd_diagnose(args):
    cfg = _read_config(DiagnoseConfig, args.config, {"seed": args.seed})
    if cfg.kernel == "logit":
        kernel = KERNELS["logit"](cfg.J, cfg.K)
        spec = _grid_spec(cfg.D, cfg.K, cfg.bounds, (-5.0, 5.0))
    else:
        kernel = KERNELS["duration"](cfg.t_max)
        spec = _grid_spec(cfg.D, 2, cfg.bounds, (0.5, 2.0))
        if spec.bounds[1][0] <= 0:
            raise CliError("duration grids need a positive barrier (second coordinate)", EXIT_VALIDATION)
    report = diagnose(halton_grid(spec), kernel, cfg.draws, np.random.default_rng(cfg.seed))
    out = _out_dir(args.out)
    report.to_json(out / "report.json", include_psi=cfg.include_psi)
    report.spectrum_csv(out / "spectrum.csv")
    log.info("xi_min %.3e, tau_D %s", report.xi_min, report.tau_D)


def cmd_mc(args):
    try:
        schedule = load_schedule(args.config)
    except OSError as exc:
        raise CliError(f"cannot read schedule: {exc}", EXIT_IO) from None
    except json.JSONDecodeError as exc:
        raise CliError(f"schedule is not valid JSON: {exc}", EXIT_VALIDATION) from None
    if args.seed is not None:
        schedule = schedule.model_copy(update={"seed": args.seed})
    if args.workers < 1:
        raise CliError("--workers must be >= 1", EXIT_VALIDATION)
    table = run_table(schedule.mc_cells(), workers=args.workers, layout=schedule.layout)
    out = _out_dir(args.out)
    table.write(out, schedule.layout)
    sys.stdout.write(table.to_text())
    failed = [r for r in table.results if r.failed]
    if failed:
        cells = ", ".join(f"(n={r.cell.n}, D={r.cell.D})" for r in failed)
        raise CliError(f"cells failed: {cells}", EXIT_CELL_FAILURE)


def build_parser():
    parser = argparse.ArgumentParser(prog="mixgrid", description="Fixed-grid estimation of random-coefficient distributions.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("dgp", help="simulate a choice dataset")
    common(p)
    p.set_defaults(func=cmd_dgp)

    p = sub.add_parser("fit", help="fit the fixed-grid estimator to a dataset")
    common(p, seed=False)
    p.add_argument("--pcr", action="store_true", help="use the principal-component restricted fit")
    p.add_argument("--p", type=int, default=None, help="number of principal components")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnose", help="Gram matrix, smallest eigenvalue and singular spectrum")
    common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("mc", help="run a Monte Carlo schedule (path or table1/table2/table3)")
    common(p)
    p.add_argument("--workers", type=int, default=1, help="worker processes (outputs do not depend on it)")
    p.set_defaults(func=cmd_mc)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"mixgrid: {exc}", file=sys.stderr)
        return exc.code
    except ValidationError as exc:
        print(f"mixgrid: invalid configuration\n{exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DatasetParseError as exc:
        print(f"mixgrid: cannot parse dataset: {exc}", file=sys.stderr)
        return EXIT_IO
    except SolverError as exc:
        print(f"mixgrid: solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, DimensionError) as exc:
        print(f"mixgrid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"mixgrid: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
