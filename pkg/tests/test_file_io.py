import csv
import json

import numpy as np
import pytest

from pyhawkesnet.errors import FormatError
from pyhawkesnet.file_io import (
    _atomic,
    meta_path,
    read_events,
    read_graph,
    read_json,
    write_events,
    write_flat_csv,
    write_graph,
    write_json,
    write_qq_csv,
)
from pyhawkesnet.graph import InteractionGraph, sample_graph
from pyhawkesnet.kernel import KernelSpec
from pyhawkesnet.simulator import EventLog, simulate


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


def test_graph_round_trip(tmp_path):
    g = sample_graph(13, 0.3, seed=4)
    path = tmp_path / "g.txt"
    write_graph(path, g)
    back = read_graph(path)
    assert back.n == 13
    assert back.p == 0.3
    assert back.seed == 4
    assert np.array_equal(back.theta, g.theta)


def test_graph_without_seed(tmp_path):
    g = InteractionGraph(3, 0.5, np.eye(3, dtype=bool))
    path = tmp_path / "g.txt"
    write_graph(path, g)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "3 0.5 -"
    assert read_graph(path).seed is None


@pytest.mark.parametrize(
    "content",
    [
        "",
        "3 0.5\n",
        "three 0.5 1\n",
        "2 0.5 1\n80\n",
        "2 0.5 1\nzz\n40\n",
        "2 0.5 1\n8000\n40\n",
    ],
)
def test_graph_format_errors(tmp_path, content):
    path = tmp_path / "g.txt"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(FormatError):
        read_graph(path)


def test_events_round_trip(tmp_path):
    g = sample_graph(6, 0.5, seed=2)
    log = simulate(g, KernelSpec.exponential(2.0), 1.0, 10.0, seed=3)
    path = tmp_path / "ev.csv"
    sidecar = write_events(path, log, {"seed": 42})
    assert sidecar == tmp_path / "ev.meta.json"
    assert meta_path(path) == sidecar

    meta = read_json(sidecar)
    assert meta["seed"] == 42
    assert meta["n"] == 6
    assert meta["horizon"] == 10.0
    assert meta["kernel"] == "exp:2.0"

    back = read_events(path)
    assert back.identical(log)
    assert back.meta["seed"] == 42

    rows = read_rows(path)
    assert rows[0] == ["individual", "time"]
    assert len(rows) == log.total_events + 1
    assert all(len(r[1].split(".")[1]) == 9 for r in rows[1:])


def test_events_without_sidecar(tmp_path):
    path = tmp_path / "ev.csv"
    path.write_text("individual,time\n1,0.5\n0,0.25\n1,0.75\n", encoding="utf-8")
    with pytest.raises(FormatError):
        read_events(path)
    log = read_events(path, n=3, horizon=1.0)
    assert log.counts_at(1.0).tolist() == [1, 2, 0]


@pytest.mark.parametrize(
    "body",
    [
        "who,when\n0,0.5\n",
        "individual,time\n0,0.5,1\n",
        "individual,time\nzero,0.5\n",
        "individual,time\n2,0.5\n",
        "individual,time\n0,0.5\n0,0.5\n",
        "individual,time\n0,1.5\n",
    ],
)
def test_events_format_errors(tmp_path, body):
    path = tmp_path / "ev.csv"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(FormatError):
        read_events(path, n=2, horizon=1.0)


def test_json_helpers(tmp_path):
    path = tmp_path / "out.json"
    write_json(path, {"x": np.float64(1.5), "bad": float("nan"), "arr": np.arange(3)})
    assert read_json(path) == {"x": 1.5, "bad": None, "arr": [0, 1, 2]}

    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(FormatError):
        read_json(broken)


def test_qq_csv(tmp_path):
    path = tmp_path / "qq.csv"
    write_qq_csv(path, [(-1.0, -0.5), (1.0, 2.0)])
    assert read_rows(path) == [
        ["theoretical_quantile", "empirical_quantile"],
        ["-1.0", "-0.5"],
        ["1.0", "2.0"],
    ]


def test_flat_csv(tmp_path):
    path = tmp_path / "flat.csv"
    write_flat_csv(path, {"a": {"b": 1, "c": [2, None]}, "d": "x"})
    assert read_rows(path) == [
        ["key", "value"],
        ["a.b", "1"],
        ["a.c.0", "2"],
        ["a.c.1", ""],
        ["d", "x"],
    ]


def test_atomic_write_leaves_nothing_on_failure(tmp_path):
    path = tmp_path / "out.json"
    with pytest.raises(RuntimeError):
        with _atomic(path) as f:
            f.write("partial")
            raise RuntimeError("boom")
    assert list(tmp_path.iterdir()) == []

    write_json(path, {"ok": True})
    assert json.loads(path.read_text(encoding="utf-8")) == {"ok": True}
    assert [p.name for p in tmp_path.iterdir()] == ["out.json"]
