"""Command-line interface: ``dchawkes {simulate,fit,eval,select-k,experiment}``.

Every subcommand accepts ``--config FILE`` (key-value format, see
:mod:`dchawkes.dataio`); flags given on the command line override config
entries.  Exit codes: 0 success, 1 run failure, 2 bad configuration.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .dataio import ConfigError, DatasetSpec, ingest, read_kv, read_params, write_params
from .evaluation import EvalConfig, dynamic_link_auc, test_loglik_per_event
from .events import EventLog
from .experiments import PRESETS, run_experiment, spec_from_kv
from .model import Membership, SRParams
from .pipeline import FitOptions, PipelineError, fit_pipeline, select_K
from .simulate import SimConfig, simulate

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
log = logging.getLogger("dchawkes")


PATH_KEYS = ("params", "events", "test", "labels", "out")


def _settings(args, keys) -> Dict[str, Any]:
    """Config file values overridden by explicitly given flags.

    Relative paths inside a config file are resolved against its directory.
    """
    cfg: Dict[str, Any] = {}
    base = Path(".")
    if args.config:
        cfg = read_kv(args.config)
        base = Path(args.config).parent
        for key in PATH_KEYS:
            if key in cfg and not Path(str(cfg[key])).is_absolute():
                cfg[key] = str(base / str(cfg[key]))
    for key in keys:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    cfg["_base"] = base
    return cfg


def _load_data(cfg) -> Tuple[EventLog, Optional[EventLog]]:
    """Training (and optional test) logs from ``dataset.*`` keys or ``events``/``test`` files."""
    ds = {k[8:]: v for k, v in cfg.items() if k.startswith("dataset.")}
    if ds:
        train, test, _ = ingest(DatasetSpec.from_kv(ds, cfg["_base"]))
        return train, (test if len(test) else None)
    if "events" not in cfg:
        raise ConfigError("need --events or dataset.* settings")
    train = EventLog.from_csv(cfg["events"])
    test = EventLog.from_csv(cfg["test"], n=train.n, start=train.horizon_T) if cfg.get("test") else None
    return train, test


def _labels(path, K=None) -> Membership:
    z = np.loadtxt(path, dtype=np.int64, ndmin=1, comments="#")
    return Membership(z, int(K) if K is not None else int(z.max()) + 1)


def _write_labels(path, z: Membership) -> None:
    np.savetxt(path, z.z, fmt="%d", header=f"K={z.K}")


def _fit_options(cfg) -> FitOptions:
    return FitOptions(variant=str(cfg.get("variant", "restricted_r")), refine=bool(cfg.get("refine", False)),
                      sweeps=int(cfg.get("sweeps", 1)), sigma_star=float(cfg.get("sigma_star", 0.99)),
                      beta_init=float(cfg.get("beta_init", 1.0)), fit_beta=bool(cfg.get("fit_beta", True)),
                      seed=int(cfg.get("seed", 0)))


def _config_hash(cfg) -> str:
    clean = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in cfg.items() if not k.startswith("_")}
    return hashlib.sha256(json.dumps(clean, sort_keys=True, default=str).encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _settings(args, ["params", "n", "T", "seed", "replicates", "out", "burn_in", "labels"])
    for key in ("params", "n", "T", "out"):
        if key not in cfg:
            raise ConfigError(f"simulate needs {key}")
    params, meta = read_params(cfg["params"])
    n, T = int(cfg["n"]), float(cfg["T"])
    z = _labels(cfg["labels"], params.K) if cfg.get("labels") else Membership.equal_blocks(n, params.K)
    if z.n != n:
        raise ConfigError(f"labels have {z.n} nodes, n = {n}")
    sim = SimConfig(seed=int(cfg.get("seed", meta.get("seed", 0))), replicates=int(cfg.get("replicates", 1)),
                    burn_in=float(cfg.get("burn_in", 0.0)), allow_self_edges=bool(cfg.get("self_edges", False)))
    out = Path(str(cfg["out"]))
    out.parent.mkdir(parents=True, exist_ok=True)
    for r in range(sim.replicates):
        events = simulate(params, z, T, sim, replicate=r)
        path = out if sim.replicates == 1 else out.with_name(f"{out.stem}_r{r}{out.suffix}")
        events.to_csv(path)
        print(f"{path}: {len(events)} events")
    _write_labels(out.with_suffix(".labels.txt"), z)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _settings(args, ["events", "K", "variant", "refine", "sweeps", "seed", "out", "labels"])
    if "K" not in cfg and not cfg.get("labels"):
        raise ConfigError("fit needs K (or labels)")
    train, _ = _load_data(cfg)
    z = _labels(cfg["labels"], cfg.get("K")) if cfg.get("labels") else None
    K = int(cfg["K"]) if "K" in cfg else z.K
    result = fit_pipeline(train, K, _fit_options(cfg), z=z)
    out = Path(str(cfg.get("out", "fit.params")))
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = {"train_loglik": result.train_loglik, "events": len(train), "n": train.n,
            "config_hash": _config_hash(cfg), "seconds": round(result.timings["total"], 6)}
    write_params(out, result.params, meta)
    _write_labels(out.with_suffix(".labels.txt"), result.membership)
    summary = result.summary()
    summary["timings"] = result.timings
    out.with_suffix(".json").write_text(json.dumps(summary, indent=1, default=str))
    for flag in result.flags:
        log.warning(flag)
    print(f"K={K} train loglik {result.train_loglik:.6g} ({len(train)} events) -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _settings(args, ["events", "test", "params", "labels", "delta", "n_intervals", "seed", "out"])
    for key in ("params", "labels"):
        if key not in cfg:
            raise ConfigError(f"eval needs {key}")
    train, test = _load_data(cfg)
    if test is None:
        raise ConfigError("eval needs a test set (--test or dataset.test_*)")
    params, _ = read_params(cfg["params"])
    if not isinstance(params, SRParams):
        raise ConfigError("eval needs SR parameters")
    z = _labels(cfg["labels"], params.K)
    rows = [{"metric": "test_loglik_per_event", "mean": test_loglik_per_event(train, test, params, z), "std": 0.0}]
    if "delta" in cfg:
        ec = EvalConfig(float(cfg["delta"]), int(cfg.get("n_intervals", 100)), int(cfg.get("seed", 0)))
        auc = dynamic_link_auc(train.merged(test), params, z, ec, test.start, test.horizon_T)
        rows.append({"metric": "dynamic_link_auc", "mean": auc.mean, "std": auc.std, "skipped": auc.skipped})
    h = _config_hash(cfg)
    for row in rows:
        row.update(dataset=str(cfg.get("dataset.path", cfg.get("events", ""))), model=params.variant, K=params.K,
                   config_hash=h)
        print(json.dumps(row))
    if cfg.get("out"):
        with open(str(cfg["out"]), "a", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
    return EXIT_OK


def cmd_select_k(args) -> int:
    cfg = _settings(args, ["events", "test", "K_list", "variant", "refine", "seed"])
    if "K_list" not in cfg:
        raise ConfigError("select-k needs K_list")
    ks = cfg["K_list"]
    ks = [int(k) for k in (ks if isinstance(ks, list) else str(ks).replace(",", " ").split())]
    train, test = _load_data(cfg)
    if test is None:
        raise ConfigError("select-k needs a test set")
    best, table = select_K(train, test, ks, _fit_options(cfg))
    for k in sorted(table):
        print(f"K={k}\t{table[k]:.6f}")
    print(f"best K = {best}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.config:
        d = read_kv(args.config)
    else:
        d = {}
    if args.preset:
        d["preset"] = args.preset
    for key in ("replicates", "seed", "output_dir"):
        v = getattr(args, key)
        if v is not None:
            d[key] = v
    if "preset" not in d and "design" not in d:
        raise ConfigError(f"experiment needs --preset (one of {', '.join(PRESETS)}) or a config")
    try:
        spec = spec_from_kv(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    res = run_experiment(spec, threads=args.threads or 1)
    print(f"{len(res.rows)} rows -> {res.results_path}; {len(res.failures)} failures; manifest {res.manifest_path}")
    return EXIT_FAIL if res.all_failed else EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dchawkes", description="Dependent community Hawkes models")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", help="key-value config file")
        sp.add_argument("--threads", type=int, default=None, help="concurrency cap")
        sp.set_defaults(func=fn)
        return sp

    sp = add("simulate", cmd_simulate, "simulate event logs from a parameter file")
    sp.add_argument("--params")
    sp.add_argument("--n", type=int)
    sp.add_argument("--T", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--burn-in", dest="burn_in", type=float)
    sp.add_argument("--labels", help="file with one block label per node")
    sp.add_argument("--out")

    sp = add("fit", cmd_fit, "cluster and estimate a restricted SR model")
    sp.add_argument("--events")
    sp.add_argument("--K", type=int)
    sp.add_argument("--variant", choices=["restricted_r"])
    sp.add_argument("--refine", action="store_true", default=None)
    sp.add_argument("--sweeps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--labels", help="skip clustering and use these labels")
    sp.add_argument("--out", help="parameter file to write")

    sp = add("eval", cmd_eval, "test log-likelihood and link-prediction AUC")
    sp.add_argument("--events")
    sp.add_argument("--test")
    sp.add_argument("--params")
    sp.add_argument("--labels")
    sp.add_argument("--delta", type=float)
    sp.add_argument("--n-intervals", dest="n_intervals", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="append JSON result rows here")

    sp = add("select-k", cmd_select_k, "choose K by test log-likelihood")
    sp.add_argument("--events")
    sp.add_argument("--test")
    sp.add_argument("--K-list", dest="K_list", nargs="+", type=int)
    sp.add_argument("--variant", choices=["restricted_r"])
    sp.add_argument("--refine", action="store_true", default=None)
    sp.add_argument("--seed", type=int)

    sp = add("experiment", cmd_experiment, "run a simulation study")
    sp.add_argument("--preset", choices=PRESETS)
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--output-dir", dest="output_dir")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print(f"failed in {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_FAIL
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
