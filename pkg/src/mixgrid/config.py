"""Validated JSON configurations for the command-line tools."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .montecarlo import McCell

Bounds = list[tuple[float, float]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MixtureParams(_Strict):
    weights: list[float] = [0.5, 0.5]
    means: list[list[float]] = [[-2.2, -2.2], [1.3, 1.3]]
    cov: list[list[float]] = [[0.8, 0.15], [0.15, 0.8]]


class DgpConfig(_Strict):
    n: int = Field(gt=0)
    J: int = Field(3, gt=0)
    K: int = Field(2, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)
    mixture: MixtureParams = MixtureParams()


class FitConfig(_Strict):
    data: str
    D: int = Field(gt=0)
    bounds: Optional[Bounds] = None
    pcr: bool = False
    p: int = Field(5, gt=0)
    tol: float = Field(1e-8, gt=0)
    outside_rows: bool = False


class DiagnoseConfig(_Strict):
    kernel: Literal["logit", "duration"]
    D: int = Field(gt=0)
    bounds: Optional[Bounds] = None
    draws: int = Field(10_000, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)
    J: int = Field(3, gt=0)
    K: int = Field(2, gt=0)
    t_max: float = Field(5.0, gt=0)
    include_psi: bool = True

    @model_validator(mode="after")
    def _duration_is_bivariate(self):
        if self.kernel == "duration" and self.K != 2:
            raise ValueError("the duration kernel has two heterogeneity coordinates (K = 2)")
        return self


class CellSpec(_Strict):
    n: int = Field(gt=0)
    D: int = Field(gt=0)


class McSchedule(_Strict):
    layout: Literal["table1", "table2", "table3"] = "table1"
    p: int = Field(5, gt=0)
    M: int = Field(500, gt=0)
    seed: int = Field(20200518, ge=0, lt=2**64)
    quantile_levels: list[float] = [0.25, 0.5, 0.75]
    outside_rows: bool = False
    tol: float = Field(1e-8, gt=0)
    cells: list[CellSpec]

    @field_validator("quantile_levels")
    @classmethod
    def _levels_in_unit_interval(cls, v):
        if any(not 0.0 < t < 1.0 for t in v):
            raise ValueError("quantile levels must lie in (0, 1)")
        return v

    def mc_cells(self):
        return [
            McCell(
                n=c.n,
                D=c.D,
                p=self.p,
                M=self.M,
                seed=self.seed,
                quantile_levels=tuple(self.quantile_levels),
                outside_rows=self.outside_rows,
                tol=self.tol,
            )
            for c in self.cells
        ]


BUNDLED_SCHEDULES = ("table1", "table2", "table3")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def load_schedule(name_or_path):
    """Read a schedule from a path, or one of the bundled names ``table1``/``table2``/``table3``."""
    if name_or_path in BUNDLED_SCHEDULES and not Path(name_or_path).exists():
        text = resources.files("mixgrid").joinpath("schedules", f"{name_or_path}.json").read_text()
        return McSchedule.model_validate_json(text)
    return McSchedule.model_validate(load_json(name_or_path))
