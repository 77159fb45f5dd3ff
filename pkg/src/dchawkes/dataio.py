"""Key-value parameter/config files and event-data ingestion.

Key-value grammar (one entry per line)::

    # comment (also allowed after a value)
    key = value

Values are parsed as

* a matrix when they contain ``;`` (rows separated by ``;``, entries by
  whitespace or commas), stored row-major;
* a list when they hold several whitespace/comma separated tokens;
* otherwise a scalar: int, float, ``true``/``false``, or a bare string.
  A value starting with ``"`` is read as a JSON string (for paths with
  spaces or ``#``).

Keys are case-sensitive, may contain dots (``meta.seed``) and must be
unique.  In parameter files every K x K matrix may also be given as a flat
list of K^2 entries (row-major) or, when K = 1, as a scalar.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .events import EventLog, read_event_frame
from .model import EXCITATION_TYPES, AnyParams, MULCHParams, SRParams, params_from_dict, params_to_dict

SCALE_TO = 1000.0
SELF_EDGE_POLICIES = ("drop", "keep", "error")


class ConfigError(ValueError):
    """Malformed configuration or parameter file."""


def _scalar(tok: str):
    low = tok.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        return tok


def _tokens(s: str):
    return [t for t in s.replace(",", " ").split() if t]


def parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith('"'):
        return json.loads(raw)
    if ";" in raw:
        rows = [_tokens(r) for r in raw.split(";")]
        rows = [r for r in rows if r]
        if len({len(r) for r in rows}) != 1:
            raise ConfigError(f"ragged matrix: {raw!r}")
        return np.array([[float(x) for x in r] for r in rows])
    toks = _tokens(raw)
    if not toks:
        raise ConfigError("empty value")
    if len(toks) == 1:
        return _scalar(toks[0])
    return [_scalar(t) for t in toks]


def _strip_comment(line: str) -> str:
    out, quoted = [], False
    for ch in line:
        if ch == '"':
            quoted = not quoted
        if ch == "#" and not quoted:
            break
        out.append(ch)
    return "".join(out)


def parse_kv(text: str, source: str = "<string>") -> Dict[str, Any]:
    """Parse key-value text.

    Raises
    ------
    ConfigError
        On a line without ``=``, an empty key, a duplicate key or a bad value;
        the message names the line.
    """
    out: Dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = _strip_comment(line).strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = parse_value(raw)
        except (ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from exc
    return out


def read_kv(path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    return parse_kv(path.read_text(encoding="utf-8"), str(path))


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        if not v or any(c in v for c in ' \t#;,"') or v != v.strip():
            return json.dumps(v)
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    a = np.asarray(v)
    if a.ndim == 2:
        return "; ".join(" ".join(repr(float(x)) for x in row) for row in a)
    if a.ndim == 1:
        return " ".join(format_value(x.item() if hasattr(x, "item") else x) for x in a)
    raise ConfigError(f"cannot format value of shape {a.shape}")


def dump_kv(d: Dict[str, Any]) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in d.items())


# ---------------------------------------------------------------------------
# Parameter files
# ---------------------------------------------------------------------------

def _as_matrix(v, K: int, key: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        if K != 1:
            raise ConfigError(f"{key}: scalar given but K = {K}")
        return a.reshape(1, 1)
    if a.ndim == 1:
        if a.size != K * K:
            raise ConfigError(f"{key}: flat list needs {K * K} entries, got {a.size}")
        return a.reshape(K, K)
    if a.shape != (K, K):
        raise ConfigError(f"{key}: expected {K}x{K}, got {a.shape[0]}x{a.shape[1]}")
    return a


def params_from_kv(d: Dict[str, Any]) -> Tuple[AnyParams, Dict[str, Any]]:
    """Build parameters from parsed key-values; returns ``(params, meta)``.

    ``meta`` collects every ``meta.*`` key with the prefix removed.
    """
    d = dict(d)
    meta = {k[5:]: d.pop(k) for k in list(d) if k.startswith("meta.")}
    model = str(d.pop("model", "sr")).lower()
    if "K" not in d:
        raise ConfigError("parameter file needs K")
    K = int(d.pop("K"))
    if K < 1:
        raise ConfigError("K must be >= 1")
    spec: Dict[str, Any] = {"model": model}
    if model == "sr":
        spec["variant"] = str(d.pop("variant", "full"))
        names = ("M", "alpha_n", "alpha_r", "beta_n", "beta_r")
    elif model in ("chip", "bhm"):
        names = ("M", "alpha_n", "beta_n")
    elif model == "mulch":
        names = ("mu",) + tuple(f"alpha_{k}" for k in EXCITATION_TYPES)
        if "beta" in d:
            spec["beta"] = _as_matrix(d.pop("beta"), K, "beta") if np.ndim(d.get("beta")) else float(d.pop("beta"))
        for k in EXCITATION_TYPES:
            if f"beta_{k}" in d:
                spec[f"beta_{k}"] = _as_matrix(d.pop(f"beta_{k}"), K, f"beta_{k}")
    else:
        raise ConfigError(f"unknown model {model!r}")
    for name in names:
        if name not in d:
            raise ConfigError(f"missing parameter {name!r}")
        spec[name] = _as_matrix(d.pop(name), K, name)
    if d:
        raise ConfigError(f"unknown keys {sorted(d)}")
    try:
        return params_from_dict(spec), meta
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def read_params(path) -> Tuple[AnyParams, Dict[str, Any]]:
    return params_from_kv(read_kv(path))


def params_kv(params: AnyParams, meta: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    d = params_to_dict(params)
    out: Dict[str, Any] = {"model": d.pop("model"), "K": d.pop("K")}
    if "variant" in d:
        out["variant"] = d.pop("variant")
    if isinstance(params, MULCHParams):
        betas = [np.asarray(d[f"beta_{k}"]) for k in EXCITATION_TYPES]
        if all(np.all(b == betas[0].flat[0]) for b in betas):
            for k in EXCITATION_TYPES:
                d.pop(f"beta_{k}")
            d["beta"] = float(betas[0].flat[0])
    for k, v in d.items():
        out[k] = np.asarray(v) if isinstance(v, list) else v
    for k, v in (meta or {}).items():
        out[f"meta.{k}"] = v
    return out


def write_params(path, params: AnyParams, meta: Optional[Dict[str, Any]] = None) -> None:
    Path(path).write_text(dump_kv(params_kv(params, meta)), encoding="utf-8")


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSpec:
    """Where and how to read a real event dataset.

    Exactly one of ``test_event_count`` / ``test_fraction`` should be set;
    with neither, everything is training data.  ``self_edges`` is one of
    ``'drop'`` (default), ``'keep'`` or ``'error'``.
    """

    path: str
    columns: Optional[Sequence[Union[int, str]]] = None
    scale_to: bool = True
    test_event_count: Optional[int] = None
    test_fraction: Optional[float] = None
    self_edges: str = "drop"

    def __post_init__(self):
        if self.self_edges not in SELF_EDGE_POLICIES:
            raise ConfigError(f"self_edges must be one of {SELF_EDGE_POLICIES}")
        if self.test_event_count is not None and self.test_fraction is not None:
            raise ConfigError("give test_event_count or test_fraction, not both")
        if self.test_event_count is not None and self.test_event_count < 0:
            raise ConfigError("test_event_count must be >= 0")
        if self.test_fraction is not None and not 0 <= self.test_fraction < 1:
            raise ConfigError("test_fraction must be in [0, 1)")

    @classmethod
    def from_kv(cls, d: Dict[str, Any], base: Optional[Path] = None) -> "DatasetSpec":
        path = Path(str(d["path"]))
        if base is not None and not path.is_absolute():
            path = base / path
        cols = d.get("columns")
        if cols is not None and not isinstance(cols, list):
            raise ConfigError("columns needs three entries")
        return cls(str(path), cols, bool(d.get("scale_to", True)), d.get("test_event_count"),
                   d.get("test_fraction"), str(d.get("self_edges", "drop")))


@dataclass(frozen=True)
class NodeMap:
    """Original node labels; ``labels[k]`` is the label of dense index k."""

    labels: np.ndarray

    def index_of(self, label) -> int:
        hits = np.flatnonzero(self.labels == label)
        if not hits.size:
            raise KeyError(label)
        return int(hits[0])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"index": np.arange(self.labels.size), "label": self.labels})


def ingest(spec: DatasetSpec) -> Tuple[EventLog, EventLog, NodeMap]:
    """Read, clean, reindex, rescale and split a dataset.

    Events are stably sorted by time, so a file with shuffled rows gives the
    same result as the sorted file except for the order of exactly tied
    events.  Nodes are indexed by sorted label.  When ``scale_to`` is set,
    times are mapped affinely onto [0, 1000].  The last m events form the
    test set; the split time is the first test event time, which ends the
    training window and starts the test window.

    Raises
    ------
    FileNotFoundError
        If the file does not exist.
    ValueError
        On an empty file, malformed rows (with line numbers), self
        edges under the ``'error'`` policy, or a test size leaving no
        training events.
    """
    path = Path(spec.path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    frame = read_event_frame(path, spec.columns)
    frame = frame.sort_values("timestamp", kind="stable").reset_index(drop=True)
    loops = (frame.sender.astype(str) == frame.receiver.astype(str)) if frame.sender.dtype != frame.receiver.dtype \
        else (frame.sender == frame.receiver)
    if loops.any():
        if spec.self_edges == "error":
            rows = np.flatnonzero(loops.to_numpy())[:10].tolist()
            raise ValueError(f"{path}: self edges at sorted rows {rows}")
        if spec.self_edges == "drop":
            frame = frame[~loops].reset_index(drop=True)
    if frame.empty:
        raise ValueError(f"{path}: no events")
    labels = pd.concat([frame.sender, frame.receiver])
    if labels.map(type).nunique() > 1:
        labels = labels.astype(str)
        frame = frame.assign(sender=frame.sender.astype(str), receiver=frame.receiver.astype(str))
    uniq = np.sort(labels.unique())
    s = np.searchsorted(uniq, frame.sender.to_numpy())
    r = np.searchsorted(uniq, frame.receiver.to_numpy())
    t = frame.timestamp.to_numpy(float)
    if spec.scale_to:
        lo, hi = t[0], t[-1]
        t = (t - lo) * (SCALE_TO / (hi - lo)) if hi > lo else np.zeros_like(t)
        t = np.clip(t, 0.0, SCALE_TO)
    E = t.size
    if spec.test_event_count is not None:
        m = int(spec.test_event_count)
    elif spec.test_fraction is not None:
        m = int(math.floor(spec.test_fraction * E + 0.5))
    else:
        m = 0
    if m >= E:
        raise ValueError(f"test set of {m} events leaves no training events (total {E})")
    n = uniq.size
    self_ok = spec.self_edges == "keep"
    t0, t_end = float(t[0]), float(t[-1])
    split = float(t[E - m]) if m else t_end
    meta = {"source": str(path)}
    train = EventLog(s[:E - m], r[:E - m], t[:E - m], n, split, t0, self_ok, dict(meta, part="train"))
    test = EventLog(s[E - m:], r[E - m:], t[E - m:], n, t_end, split, self_ok, dict(meta, part="test"))
    return train, test, NodeMap(uniq)


def write_events(path, events: EventLog) -> None:
    events.to_csv(path)


def read_events(path, **kw) -> EventLog:
    return EventLog.from_csv(path, **kw)
