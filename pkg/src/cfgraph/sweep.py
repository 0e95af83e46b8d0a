"""Hyperparameter grids, sweep execution and validation-only model selection.

Sweep files use INI-style ``key = value`` sections; list values are comma
separated::

    [sweep]
    seed = 0
    tau = 0.2
    pipeline = auto          ; auto | A | B

    [pipeline-a]
    K = 1, 2, 3
    x_src = raw, rownorm
    alpha = 0.1, 1, 10
    epsilon = 0, 0.1
    cns = off, on

    [pipeline-b]
    K = 3, 6
    phi = none, tanh
    lam = 1
    sigma_scale = 0.5, 1, 2
    lambda_prime = 0.01
    use_lcf = true, false

Omitted keys fall back to the full default grids below.
"""

from __future__ import annotations

import configparser
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, evaluate
from .errors import MissingFile, ValidationError
from .lcfnet import LcfConfig, fit_lcfnet, predict_lcfnet
from .pipeline_a import CnsParams, PipelineAConfig, RffParams, fit_a, predict_a
from .router import DEFAULT_TAU, route

GRID_A = {
    "K": [1, 2, 3, 4, 5, 6, 7, 8],
    "x_src": ["raw", "rownorm"],
    "alpha": [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0],
    "epsilon": [0.0, 0.05, 0.1],
    "cns": [False, True],
    "variant": ["plain"],
    "precision": ["fp64"],
}
GRID_B = {
    "K": [3, 6, 9],
    "phi": ["none", "tanh", "elu"],
    "lam": [0.5, 1.0, 2.0],
    "sigma_scale": [0.25, 0.5, 1.0, 2.0, 4.0],
    "lambda_prime": [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
    "use_lcf": [True, False],
    "whiten": [True],
}
_TYPES = {"K": int, "x_src": str, "alpha": float, "epsilon": float, "variant": str, "precision": str,
          "phi": str, "lam": float, "sigma_scale": float, "lambda_prime": float}


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "on", "yes"):
        return True
    if v in ("0", "false", "off", "no"):
        return False
    raise ValidationError(f"not a boolean: {s!r}")


def _parse_list(key, raw):
    items = [t.strip() for t in raw.split(",") if t.strip()]
    if not items:
        raise ValidationError(f"grid for {key!r} is empty")
    conv = _TYPES.get(key, _parse_bool if key in ("cns", "use_lcf", "whiten") else str)
    try:
        return [conv(t) for t in items]
    except ValueError as exc:
        raise ValidationError(f"bad value in grid {key!r}: {exc}") from None


@dataclass
class SweepConfig:
    grid_a: dict = field(default_factory=lambda: dict(GRID_A))
    grid_b: dict = field(default_factory=lambda: dict(GRID_B))
    cns: CnsParams = field(default_factory=CnsParams)
    rff: RffParams = field(default_factory=RffParams)
    seed: int = 0
    tau: float = DEFAULT_TAU
    pipeline: str = "auto"
    precision: str | None = None
    chunk: int | None = None

    def __post_init__(self):
        for grid, allowed in ((self.grid_a, GRID_A), (self.grid_b, GRID_B)):
            for k, v in grid.items():
                if k not in allowed:
                    raise ValidationError(f"unknown grid key {k!r}")
                if not len(v):
                    raise ValidationError(f"grid for {k!r} is empty")
        if self.pipeline not in ("auto", "A", "B"):
            raise ValidationError("pipeline must be auto, A or B")

    @classmethod
    def from_text(cls, text):
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        cp.optionxform = str
        cp.read_string(text)
        known = {"sweep", "pipeline-a", "pipeline-b", "cns", "rff"}
        unknown = set(cp.sections()) - known
        if unknown:
            raise ValidationError(f"unknown sections: {sorted(unknown)}")
        grid_a = dict(GRID_A)
        grid_b = dict(GRID_B)
        for sec, grid, allowed in (("pipeline-a", grid_a, GRID_A), ("pipeline-b", grid_b, GRID_B)):
            if sec in cp:
                for k, raw in cp[sec].items():
                    if k not in allowed:
                        raise ValidationError(f"unknown key {k!r} in [{sec}]")
                    grid[k] = _parse_list(k, raw)
        kw = {}
        if "sweep" in cp:
            s = cp["sweep"]
            for k in s:
                if k not in ("seed", "tau", "pipeline", "precision", "chunk"):
                    raise ValidationError(f"unknown key {k!r} in [sweep]")
            if "seed" in s:
                kw["seed"] = s.getint("seed")
            if "tau" in s:
                kw["tau"] = s.getfloat("tau")
            if "pipeline" in s:
                kw["pipeline"] = s["pipeline"].strip()
            if "precision" in s:
                kw["precision"] = s["precision"].strip()
            if "chunk" in s:
                kw["chunk"] = s.getint("chunk")
        if "cns" in cp:
            c = cp["cns"]
            kw["cns"] = CnsParams(c.getfloat("alpha_correct", 0.5), c.getfloat("alpha_smooth", 0.5),
                                  c.getint("num_iters", 50))
        if "rff" in cp:
            r = cp["rff"]
            kw["rff"] = RffParams(r.getint("num_features", 512), r.getfloat("sigma", 1.0),
                                  r.getint("seed", kw.get("seed", 0)))
        elif "seed" in kw:
            kw["rff"] = RffParams(seed=kw["seed"])
        return cls(grid_a, grid_b, **kw)

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        if not path.is_file():
            raise MissingFile(f"sweep config not found: {path}")
        return cls.from_text(path.read_text())

    def cells_a(self):
        keys = sorted(self.grid_a)
        for values in itertools.product(*(self.grid_a[k] for k in keys)):
            c = dict(zip(keys, values))
            if self.precision:
                c["precision"] = self.precision
            yield c

    def cells_b(self):
        keys = sorted(self.grid_b)
        seen = set()
        for values in itertools.product(*(self.grid_b[k] for k in keys)):
            c = dict(zip(keys, values))
            if not c["use_lcf"]:
                # layer settings are irrelevant without layers; keep one representative
                c.update(K=min(self.grid_b["K"]), phi=self.grid_b["phi"][0], lam=self.grid_b["lam"][0])
            key = tuple(sorted(c.items()))
            if key not in seen:
                seen.add(key)
                yield c


def config_a(cell, sweep: SweepConfig):
    variant = cell.get("variant", "plain")
    return PipelineAConfig(K=cell["K"], x_src=cell["x_src"], alpha=cell["alpha"], epsilon=cell["epsilon"],
                           variant=variant, cns=sweep.cns if cell["cns"] else None,
                           rff=sweep.rff if variant == "multihop-rff" else None,
                           precision=cell.get("precision", "fp64"))


def config_b(cell, sweep: SweepConfig):
    kw = {} if sweep.chunk is None else {"chunk": sweep.chunk}
    return LcfConfig(K=cell["K"], phi=cell["phi"], lam=cell["lam"], sigma_scale=cell["sigma_scale"],
                     lambda_prime=cell["lambda_prime"], use_lcf=cell["use_lcf"], whiten=cell["whiten"], **kw)


def _sort_key(cell):
    # values of one key share a type across cells, so native comparison works
    return tuple((k, cell[k]) for k in sorted(cell))


def select(cells):
    """Index of the best cell: highest ``val``, ties to the lexicographically smallest config."""
    if not cells:
        raise ValidationError("sweep produced no cells")
    best = max(c["val"] for c in cells)
    tied = [i for i, c in enumerate(cells) if c["val"] == best]
    return min(tied, key=lambda i: _sort_key(cells[i]["config"]))


def run_sweep(ds: Dataset, sweep: SweepConfig, report_test=True):
    """Route, fit every grid cell, select on validation. Returns (model, report dict).

    Selection sees validation scores only; test scores are filled in afterwards
    for the audit trail when ``report_test`` is set.
    """
    if not ds.val_mask.any():
        raise ValidationError("validation mask is empty; selection needs validation nodes")
    if sweep.pipeline == "auto":
        decision = route(ds, sweep.tau)
        pipeline = decision.pipeline
        routing = decision.to_json()
    else:
        pipeline, routing = sweep.pipeline, {"pipeline": sweep.pipeline, "reason": "forced"}
    if pipeline == "A":
        cells_iter, make, fit, pred = sweep.cells_a(), config_a, fit_a, predict_a
    else:
        cells_iter, make, fit, pred = sweep.cells_b(), config_b, fit_lcfnet, predict_lcfnet
    cells, scores, best_model = [], [], None
    for cell in cells_iter:
        model = fit(ds, make(cell, sweep))
        s = pred(model, ds)
        cells.append({"config": cell, "val": evaluate(s, ds, ds.val_mask)})
        scores.append(s if report_test else None)
        # only the running winner's model is kept in memory
        if select(cells) == len(cells) - 1:
            best_model = model
    best = select(cells)
    if report_test and ds.test_mask.any():
        for c, s in zip(cells, scores):
            c["test"] = evaluate(s, ds, ds.test_mask)
    report = {"routing": routing, "pipeline": pipeline, "selected": best,
              "selected_config": cells[best]["config"], "cells": cells}
    return best_model, report


def jsonable(obj):
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
