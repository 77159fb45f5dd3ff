"""Simulation-study presets and the grid runner.

Seeds: every (cell, replicate) gets ``SeedSequence([master, cell, replicate])``;
its first 63-bit word seeds the simulator and the clustering.  The manifest
records all three integers, so any row can be replayed with :func:`run_cell`.
"""
from __future__ import annotations

import concurrent.futures as cf
import itertools
import json
import logging
import threading
import time
import traceback
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .estimate import fit_params, refine
from .model import MULCHParams, Membership, SRParams, expected_count_matrix
from .pipeline import align_labels, permute_params
from .simulate import SimConfig, simulate
from .spectral import ari, count_matrix, misclustering_rate, spectral_cluster, spectral_norm_error

log = logging.getLogger(__name__)

KINDS = ("cluster", "gmm", "refine")


def cell_seed(master: int, cell: int, replicate: int) -> int:
    return int(np.random.SeedSequence([int(master), int(cell), int(replicate)]).generate_state(1, np.uint64)[0] >> 1)


# ---------------------------------------------------------------------------
# Model factories (one per design)
# ---------------------------------------------------------------------------

def ss_mulch_design(n: int, K: int, **_) -> MULCHParams:
    return MULCHParams.grid_ss_mulch(n, K, 1.0)


def gamma_design(s: float, **_) -> SRParams:
    """Two blocks; reciprocal excitation s from block 0 to block 1 only.

    The (0,1) baseline is ``0.001 - 0.0001 s`` so that the expected counts do
    not depend on s.
    """
    M = np.array([[0.002, 0.001 - 0.0001 * s], [0.0001, 0.002]])
    an = np.zeros((2, 2))
    ar = np.array([[0.0, s], [0.0, 0.0]])
    ones = np.ones((2, 2))
    return SRParams(M, an, ar, ones, ones, "full")


def sr_design(K: int, beta_between: float = 0.5, **_) -> SRParams:
    within = dict(M=0.002, alpha_n=0.2, alpha_r=0.2, beta_n=1.0, beta_r=1.0)
    between = dict(M=0.001, alpha_n=0.1, alpha_r=0.1, beta_n=beta_between, beta_r=beta_between)
    return SRParams.two_level(K, within, between, "restricted_r")


SENSITIVITY_BASE = (1e-4, 0.1, 0.1, 0.0015, 0.0015, 0.0015, 0.0015)
SENSITIVITY_FACTORS = ("n", "r", "tc", "ac", "gr", "ar", "mu_divide", "mu_max")


def sensitivity_design(K: int, s: float, factor: str, **_) -> MULCHParams:
    """Equal within/between MULCH parameters with one within-block knob scaled by s."""
    within = list(SENSITIVITY_BASE)
    between = list(SENSITIVITY_BASE)
    if factor in SENSITIVITY_FACTORS[:6]:
        k = 1 + SENSITIVITY_FACTORS.index(factor)
        within[k] *= s
    elif factor == "mu_divide":
        within[0], between[0] = 1e-3, 1e-3 / s
    elif factor == "mu_max":
        within[0] = 1e-4 * s
        between[0] = within[0] / 2
    else:
        raise ValueError(f"unknown factor {factor!r}")
    return MULCHParams.ss_mulch(K, within, between, 1.0)


DESIGNS: Dict[str, Callable[..., Any]] = {
    "ss_mulch": ss_mulch_design,
    "gamma": gamma_design,
    "sr": sr_design,
    "sensitivity": sensitivity_design,
}


# ---------------------------------------------------------------------------
# Spec
# ---------------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    """A grid of simulation cells.

    ``grid`` maps axis names (n, K, T, s, factor, ...) to value lists and is
    expanded as a Cartesian product, unless ``cells`` lists the cells
    explicitly.  ``fixed`` holds scalars shared by every cell.  ``kind`` is
    ``'cluster'`` (ARI and spectral error), ``'gmm'`` (parameter errors) or
    ``'refine'`` (ARI and time with and without refinement).
    """

    name: str
    design: str
    kind: str
    grid: Dict[str, List[Any]] = field(default_factory=dict)
    cells: Optional[List[Dict[str, Any]]] = None
    fixed: Dict[str, Any] = field(default_factory=dict)
    replicates: int = 1
    seed: int = 0
    output_dir: str = "results"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.expand():
            raise ValueError("grid is empty")

    def expand(self) -> List[Dict[str, Any]]:
        if self.cells is not None:
            base = [dict(c) for c in self.cells]
        elif self.grid:
            keys = list(self.grid)
            base = [dict(zip(keys, vals)) for vals in itertools.product(*(self.grid[k] for k in keys))]
        else:
            base = [{}]
        return [{**self.fixed, **c} for c in base]


def preset(key: str, /, **overrides) -> ExperimentSpec:
    """Named simulation studies.  Keyword overrides replace spec fields (including ``name``)."""
    n_line = [dict(n=n, T=600) for n in (40, 70, 90)]
    T_line = [dict(n=90, T=T) for T in (200, 400, 600)]
    presets = {
        "cluster_nT": dict(design="ss_mulch", kind="cluster", grid=dict(n=[20, 40, 60], T=[30, 60, 120]),
                     fixed=dict(K=4), replicates=15),
        "cluster_KT": dict(design="ss_mulch", kind="cluster", grid=dict(K=[2, 3, 4, 5], T=[30, 60, 120]),
                        fixed=dict(n=60), replicates=15),
        "cluster_Kn": dict(design="ss_mulch", kind="cluster", grid=dict(K=[2, 3, 4, 5], n=[30, 60, 90]),
                        fixed=dict(T=120), replicates=15),
        "gamma_max": dict(design="gamma", kind="cluster", grid=dict(s=[0.0, 0.2, 0.4, 0.6, 0.8]),
                     fixed=dict(n=40, K=2, T=300), replicates=100),
        "gmm_consistency": dict(design="sr", kind="gmm", cells=T_line + n_line[:2],
                     fixed=dict(K=4, beta_between=0.5), replicates=10),
        "refinement": dict(design="sr", kind="refine",
                     cells=[dict(n=40, T=T) for T in (200, 400, 600, 800, 1000)]
                     + [dict(n=n, T=300) for n in (20, 60, 80)],
                     fixed=dict(K=4, beta_between=0.1), replicates=10),
        "sensitivity": dict(design="sensitivity", kind="cluster",
                      cells=[dict(factor=f, s=s) for f in SENSITIVITY_FACTORS
                             for s in ((1, 2, 3, 4, 5) if f in ("n", "r") else (1, 2, 4, 8))],
                      fixed=dict(n=100, K=4, T=700), replicates=15),
    }
    if key not in presets:
        raise ValueError(f"unknown preset {key!r}; choose from {sorted(presets)}")
    kw = dict(presets[key], name=key)
    kw.update(overrides)
    return ExperimentSpec(**kw)


PRESETS = ("cluster_nT", "cluster_KT", "cluster_Kn", "gamma_max", "gmm_consistency", "refinement", "sensitivity")


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------

def _param_errors(true: SRParams, est: SRParams) -> Dict[str, float]:
    out = {}
    for name in ("M", "alpha_n", "alpha_r", "beta_n", "beta_r"):
        a, b = getattr(true, name), getattr(est, name)
        out[f"mse_{name}"] = float(np.mean((a - b) ** 2))
        out[f"rel_{name}"] = float(np.linalg.norm(a - b) / np.linalg.norm(a))
    return out


def run_cell(spec: ExperimentSpec, cell: int, replicate: int) -> Dict[str, Any]:
    """One (cell, replicate): simulate, cluster, and measure.  Deterministic given its seed."""
    settings = spec.expand()[cell]
    seed = cell_seed(spec.seed, cell, replicate)
    n, K, T = int(settings["n"]), int(settings["K"]), float(settings["T"])
    params = DESIGNS[spec.design](**settings)
    z = Membership.equal_blocks(n, K)
    t_start = time.perf_counter()
    events = simulate(params, z, T, SimConfig(seed=seed))
    row = {**settings, "cell": cell, "replicate": replicate, "seed": seed, "n_events": len(events),
           "sim_time": time.perf_counter() - t_start}
    N = count_matrix(events)
    t = time.perf_counter()
    z_hat = spectral_cluster(N, K, seed=seed)
    row["cluster_time"] = time.perf_counter() - t
    row["ari"] = ari(z, z_hat)
    row["misclustering"] = misclustering_rate(z, z_hat)
    if spec.kind == "cluster":
        E = expected_count_matrix(params, z, T)
        row["spectral_error"] = spectral_norm_error(N, E)
        return row
    t = time.perf_counter()
    pf = fit_params(events, z_hat, params.variant, seed=seed)
    row["estimate_time"] = time.perf_counter() - t
    row["base_time"] = row["cluster_time"] + row["estimate_time"]
    if spec.kind == "gmm":
        est = permute_params(pf.params, align_labels(z, z_hat))
        row.update(_param_errors(params, est))
        return row
    t = time.perf_counter()
    ref = refine(events, z_hat, pf.params, K, seed=seed)
    row["refine_time"] = time.perf_counter() - t
    row["refined_time"] = row["base_time"] + row["refine_time"]
    row["ari_refined"] = ari(z, ref.membership)
    row["moves"] = ref.changed
    return row


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    rows: pd.DataFrame
    failures: List[Dict[str, Any]]
    manifest_path: Optional[Path]
    results_path: Optional[Path]

    @property
    def all_failed(self) -> bool:
        return self.rows.empty and bool(self.failures)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def run_experiment(spec: ExperimentSpec, threads: int = 1, write: bool = True,
                   cells: Optional[Sequence[int]] = None) -> ExperimentResult:
    """Run every (cell, replicate) and write ``<name>.csv`` plus ``<name>.manifest.jsonl``.

    Failures are logged and recorded in the manifest; the run goes on.  Rows
    are written sorted by (cell, replicate), so the output does not depend
    on ``threads``.
    """
    grid = spec.expand()
    todo = [(c, r) for c in (range(len(grid)) if cells is None else cells) for r in range(spec.replicates)]
    rows, failures = [], []
    lock = threading.Lock()

    def work(cr):
        c, r = cr
        try:
            row = run_cell(spec, c, r)
            with lock:
                rows.append(row)
        except Exception as exc:
            log.warning("cell %d replicate %d failed: %s", c, r, exc)
            with lock:
                failures.append({"cell": c, "replicate": r, "seed": cell_seed(spec.seed, c, r),
                                 "error": repr(exc), "traceback": traceback.format_exc()})

    if threads <= 1:
        for cr in todo:
            work(cr)
    else:
        with cf.ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, todo))
    frame = pd.DataFrame(rows)
    if not frame.empty:
        frame = frame.sort_values(["cell", "replicate"]).reset_index(drop=True)
    failures.sort(key=lambda f: (f["cell"], f["replicate"]))
    res_path = man_path = None
    if write:
        out = Path(spec.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        res_path = out / f"{spec.name}.csv"
        man_path = out / f"{spec.name}.manifest.jsonl"
        frame.to_csv(res_path, index=False, float_format="%.17g")
        failed = {(f["cell"], f["replicate"]): f for f in failures}
        with open(man_path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"experiment": spec.name, "spec": asdict(spec), "software": _version(),
                                 "numpy": np.__version__, "seed_scheme": "SeedSequence([master, cell, replicate])",
                                 "cells": len(grid), "replicates": spec.replicates}, default=_jsonable) + "\n")
            for c, r in sorted(todo):
                entry = {"cell": c, "replicate": r, "master_seed": spec.seed, "seed": cell_seed(spec.seed, c, r),
                         "settings": grid[c], "status": "failed" if (c, r) in failed else "ok"}
                if (c, r) in failed:
                    entry["error"] = failed[(c, r)]["error"]
                fh.write(json.dumps(entry, default=_jsonable) + "\n")
    return ExperimentResult(frame, failures, man_path, res_path)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def spec_from_kv(d: Dict[str, Any]) -> ExperimentSpec:
    """Experiment config: ``preset = cluster_nT`` plus overrides, or a full spec.

    ``grid.<axis> = v1 v2 ...`` sets grid axes, ``fixed.<key> = v`` sets
    scalars; ``replicates``, ``seed``, ``output_dir``, ``design``, ``kind``
    and ``name`` are plain keys.
    """
    d = dict(d)
    grid = {k[5:]: (v if isinstance(v, list) else [v]) for k, v in d.items() if k.startswith("grid.")}
    fixed = {k[6:]: v for k, v in d.items() if k.startswith("fixed.")}
    plain = {k: v for k, v in d.items() if "." not in k}
    name = plain.pop("preset", None)
    kw: Dict[str, Any] = {}
    for key in ("replicates", "seed"):
        if key in plain:
            kw[key] = int(plain.pop(key))
    for key in ("output_dir", "design", "kind", "name"):
        if key in plain:
            kw[key] = str(plain.pop(key))
    if plain:
        raise ValueError(f"unknown experiment keys {sorted(plain)}")
    if name is not None:
        base = preset(str(name))
        if grid:
            kw["grid"], kw["cells"] = grid, None
        if fixed:
            kw["fixed"] = {**base.fixed, **fixed}
        return preset(str(name), **kw)
    if grid:
        kw["grid"] = grid
    kw["fixed"] = fixed
    if "name" not in kw:
        kw["name"] = "experiment"
    return ExperimentSpec(**kw)
