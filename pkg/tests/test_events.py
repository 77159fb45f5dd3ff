import numpy as np
import pytest
from hypothesis import given, strategies as st

from dchawkes.events import EventLog, read_event_frame


def small_log():
    return EventLog([0, 1, 2, 0], [1, 0, 0, 2], [0.5, 0.1, 3.25, 1.0], 3, 4.0)


def test_sorted_and_readonly():
    log = small_log()
    assert log.time.tolist() == [0.1, 0.5, 1.0, 3.25]
    assert log.sender.tolist() == [1, 0, 0, 2]
    with pytest.raises(ValueError):
        log.time[0] = 2.0


@pytest.mark.parametrize("kw", [
    dict(sender=[0, 3], receiver=[1, 0], time=[0.1, 0.2]),     # node out of range
    dict(sender=[0, 1], receiver=[1, 0], time=[0.1, 5.0]),     # beyond horizon
    dict(sender=[0, 1], receiver=[1, 0], time=[0.1, np.nan]),  # non-finite
    dict(sender=[0, 1], receiver=[0, 0], time=[0.1, 0.2]),     # self edge
    dict(sender=[0], receiver=[1, 0], time=[0.1, 0.2]),        # ragged
])
def test_validation(kw):
    with pytest.raises(ValueError):
        EventLog(n=3, horizon_T=4.0, **kw)


def test_self_edges_allowed_when_flagged():
    log = EventLog([1], [1], [0.3], 2, 1.0, allow_self_edges=True)
    assert len(log) == 1


def test_window_and_merge():
    log = small_log()
    w = log.window(0.5, 1.0)
    assert w.time.tolist() == [0.5, 1.0]
    assert (w.start, w.horizon_T) == (0.5, 1.0)
    a, b = log.window(0.0, 0.9), log.window(0.9, 4.0, closed_left=False)
    m = a.merged(b)
    assert np.array_equal(m.time, log.time)
    assert np.array_equal(m.sender, log.sender)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4),
                          st.floats(0, 100, allow_nan=False, allow_infinity=False)), max_size=30))
def test_csv_round_trip_bit_exact(tmp_path_factory, rows):
    rows = [r for r in rows if r[0] != r[1]]
    s, r, t = (list(c) for c in zip(*rows)) if rows else ([], [], [])
    log = EventLog(s, r, t, 5, 100.0, metadata={"tag": "x"})
    path = tmp_path_factory.mktemp("csv") / "ev.csv"
    log.to_csv(path)
    back = EventLog.from_csv(path)
    assert back == log
    assert back.time.tobytes() == log.time.tobytes()
    assert back.metadata["tag"] == "x"


def test_from_csv_without_sidecar(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("3,1,0.5\n1,3,2.0\n")
    log = EventLog.from_csv(p)
    assert log.n == 4 and log.horizon_T == 2.0 and log.start == 0.0


def test_malformed_row_names_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("sender,receiver,timestamp\n0,1,0.5\n1,0,notatime\n")
    with pytest.raises(ValueError, match=r"lines \[3\]"):
        read_event_frame(p)


def test_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("\n")
    with pytest.raises(ValueError, match="empty"):
        read_event_frame(p)


def test_extra_columns_selected(tmp_path):
    p = tmp_path / "wide.csv"
    p.write_text("t,src,dst,w\n0.5,a,b,1\n0.7,b,a,2\n")
    f = read_event_frame(p, columns=["src", "dst", "t"])
    assert f.iloc[:, 2].tolist() == [0.5, 0.7]
    assert f.iloc[:, 0].tolist() == ["a", "b"]
