"""Relational event logs."""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd


@dataclass(frozen=True)
class EventLog:
    """Time-sorted directed events ``sender -> receiver`` at ``time``.

    Parameters
    ----------
    sender, receiver : array_like of int
        Node indices in ``[0, n)``.
    time : array_like of float
        Event times in ``[start, horizon_T]``.  Sorted on construction
        (stable, so simultaneous events keep their input order).
    n : int
        Number of nodes.
    horizon_T : float
        End of the observation window.
    start : float
        Start of the observation window (0 for simulated data).
    """

    sender: np.ndarray
    receiver: np.ndarray
    time: np.ndarray
    n: int
    horizon_T: float
    start: float = 0.0
    allow_self_edges: bool = False
    metadata: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        s = np.asarray(self.sender, dtype=np.int64).ravel()
        r = np.asarray(self.receiver, dtype=np.int64).ravel()
        t = np.asarray(self.time, dtype=float).ravel()
        if not (s.size == r.size == t.size):
            raise ValueError("sender, receiver and time must have equal length")
        if not np.all(np.isfinite(t)):
            raise ValueError("event times must be finite")
        if self.horizon_T < self.start:
            raise ValueError("horizon_T must not precede start")
        if t.size:
            if s.min() < 0 or r.min() < 0 or max(s.max(), r.max()) >= self.n:
                raise ValueError(f"node index out of range [0, {self.n})")
            if t.min() < self.start or t.max() > self.horizon_T:
                raise ValueError("event times must lie in [start, horizon_T]")
            if not self.allow_self_edges and np.any(s == r):
                raise ValueError("self edges present but allow_self_edges is False")
        if t.size > 1 and np.any(np.diff(t) < 0):
            order = np.argsort(t, kind="stable")
            s, r, t = s[order], r[order], t[order]
        for a in (s, r, t):
            a.setflags(write=False)
        object.__setattr__(self, "sender", s)
        object.__setattr__(self, "receiver", r)
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "horizon_T", float(self.horizon_T))
        object.__setattr__(self, "start", float(self.start))

    def __len__(self) -> int:
        return self.time.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventLog):
            return NotImplemented
        return ((self.n, self.horizon_T, self.start, self.allow_self_edges)
                == (other.n, other.horizon_T, other.start, other.allow_self_edges)
                and np.array_equal(self.sender, other.sender) and np.array_equal(self.receiver, other.receiver)
                and np.array_equal(self.time, other.time))

    __hash__ = None

    @classmethod
    def empty(cls, n: int, horizon_T: float, **kw) -> "EventLog":
        z = np.zeros(0)
        return cls(z, z, z, n, horizon_T, **kw)

    def window(self, t0: float, t1: float, closed_left: bool = True) -> "EventLog":
        """Events with ``t0 <= t <= t1`` (or ``t0 < t`` if not ``closed_left``)."""
        lo = np.searchsorted(self.time, t0, side="left" if closed_left else "right")
        hi = np.searchsorted(self.time, t1, side="right")
        return EventLog(self.sender[lo:hi], self.receiver[lo:hi], self.time[lo:hi], self.n,
                        t1, t0, self.allow_self_edges, dict(self.metadata))

    def merged(self, other: "EventLog") -> "EventLog":
        """Union of two logs on the same node set; ``self`` events come first among ties."""
        if other.n != self.n:
            raise ValueError("logs have different node counts")
        return EventLog(
            np.concatenate([self.sender, other.sender]),
            np.concatenate([self.receiver, other.receiver]),
            np.concatenate([self.time, other.time]),
            self.n, max(self.horizon_T, other.horizon_T), min(self.start, other.start),
            self.allow_self_edges or other.allow_self_edges, dict(self.metadata),
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"sender": self.sender, "receiver": self.receiver, "timestamp": self.time})

    def to_csv(self, path, header: bool = True, metadata: bool = True) -> None:
        """Write ``sender,receiver,timestamp`` rows; times use round-trip ``repr`` formatting.

        A sidecar ``<path>.meta.json`` holds n, the window and any metadata.
        """
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if header:
                fh.write("sender,receiver,timestamp\n")
            for s, r, t in zip(self.sender.tolist(), self.receiver.tolist(), self.time.tolist()):
                fh.write(f"{s},{r},{t!r}\n")
        if metadata:
            meta = {"n": self.n, "start": self.start, "horizon_T": self.horizon_T,
                    "allow_self_edges": self.allow_self_edges, **self.metadata}
            Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, default=_json_default))

    @classmethod
    def from_csv(cls, path, n: Optional[int] = None, horizon_T: Optional[float] = None,
                 start: Optional[float] = None, allow_self_edges: Optional[bool] = None) -> "EventLog":
        """Read a log written by :meth:`to_csv` (or any 3-column CSV of integer node ids).

        Missing window information is taken from the sidecar when present,
        otherwise from the data (n = max id + 1, window = [0, last time]).
        """
        path = Path(path)
        meta = {}
        side = Path(str(path) + ".meta.json")
        if side.exists():
            meta = json.loads(side.read_text())
        frame = read_event_frame(path)
        s = frame.iloc[:, 0].to_numpy(np.int64)
        r = frame.iloc[:, 1].to_numpy(np.int64)
        t = frame.iloc[:, 2].to_numpy(float)
        n = n if n is not None else meta.pop("n", int(max(s.max(initial=-1), r.max(initial=-1)) + 1))
        start = start if start is not None else meta.pop("start", 0.0)
        horizon_T = horizon_T if horizon_T is not None else meta.pop("horizon_T", float(t.max(initial=start)))
        if allow_self_edges is None:
            allow_self_edges = meta.pop("allow_self_edges", bool(np.any(s == r)))
        for key in ("n", "start", "horizon_T", "allow_self_edges"):
            meta.pop(key, None)
        return cls(s, r, t, n, horizon_T, start, allow_self_edges, meta)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _has_header(first_line: str, time_col: int = 2) -> bool:
    # node ids may be arbitrary strings, so only the timestamp field decides
    fields = [f.strip() for f in first_line.split(",")]
    if len(fields) <= time_col:
        return True
    try:
        float(fields[time_col])
    except ValueError:
        return True
    return False


def read_event_frame(path, columns=None) -> pd.DataFrame:
    """Parse an event CSV into a (sender, receiver, timestamp) frame.

    The header is auto-detected.  ``columns`` picks the three columns (names
    or positions) when the file has extra ones.  Malformed rows raise
    ``ValueError`` naming the file line.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        raise ValueError(f"{path}: empty event file")
    if columns is not None and any(isinstance(c, str) for c in columns):
        header = True
    else:
        header = _has_header(next(line for line in lines if line.strip()),
                             2 if columns is None else int(columns[2]))
    frame = pd.read_csv(io.StringIO(text), header=0 if header else None, dtype=str,
                        skip_blank_lines=True, skipinitialspace=True)
    if columns is None:
        if frame.shape[1] < 3:
            raise ValueError(f"{path}: expected at least 3 columns, got {frame.shape[1]}")
        cols = list(frame.columns[:3])
    else:
        cols = [frame.columns[c] if isinstance(c, int) else c for c in columns]
        missing = [c for c in cols if c not in frame.columns]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
    frame = frame[cols]
    out = pd.DataFrame({
        "sender": frame.iloc[:, 0],
        "receiver": frame.iloc[:, 1],
        "timestamp": pd.to_numeric(frame.iloc[:, 2], errors="coerce"),
    })
    bad = out["timestamp"].isna() | ~np.isfinite(out["timestamp"].to_numpy(float, na_value=np.nan))
    bad |= out["sender"].isna() | out["receiver"].isna()
    if bad.any():
        # map back to 1-based file lines, accounting for header and blank lines
        data_lines = [k + 1 for k, line in enumerate(lines) if line.strip()]
        if header:
            data_lines = data_lines[1:]
        where = [data_lines[k] for k in np.flatnonzero(bad.to_numpy())[:10]]
        raise ValueError(f"{path}: malformed rows at lines {where}")
    # exact decimal parse (pandas' fast float parser is not always round-trip)
    out["timestamp"] = np.array([float(x) for x in frame.iloc[:, 2].str.strip()])
    out["sender"] = out["sender"].str.strip()
    out["receiver"] = out["receiver"].str.strip()
    # integer ids stay integers; anything else is left as a string label
    for col in ("sender", "receiver"):
        as_num = pd.to_numeric(out[col], errors="coerce")
        if as_num.notna().all() and np.all(as_num == np.round(as_num)):
            out[col] = as_num.astype(np.int64)
    return out
