import json

import pytest

from pyhawkesnet import __version__
from pyhawkesnet.cli import main
from pyhawkesnet.file_io import read_events, read_json
from pyhawkesnet.graph import sample_graph
from pyhawkesnet.kernel import KernelSpec
from pyhawkesnet.simulator import simulate
from pyhawkesnet.subcritical import estimate
from pyhawkesnet.utils import derive_seeds

SIMULATE = ["simulate", "--n", "20", "--p", "0.5", "--mu", "1", "--kernel", "exp:1", "--horizon", "40", "--seed", "7"]


@pytest.fixture
def events(tmp_path, capsys):
    path = tmp_path / "ev.csv"
    assert main([*SIMULATE, "--out", str(path)]) == 0
    capsys.readouterr()
    return path


def write_config(path, **data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_simulate_writes_log_and_sidecar(events):
    meta = read_json(events.with_name("ev.meta.json"))
    assert meta["seed"] == 7
    assert meta["seed_source"] == "flag"
    assert meta["n"] == 20
    assert meta["horizon"] == 40.0
    assert read_events(events).total_events == meta["events"]


def test_simulate_is_reproducible(events, tmp_path):
    again = tmp_path / "again.csv"
    assert main([*SIMULATE, "--out", str(again)]) == 0
    assert events.read_bytes() == again.read_bytes()


def test_simulate_with_saved_graph(tmp_path):
    graph = tmp_path / "g.txt"
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    assert main([*SIMULATE, "--graph-out", str(graph), "--out", str(first)]) == 0
    reuse = ["simulate", "--graph", str(graph), "--mu", "1", "--kernel", "exp:1", "--horizon", "40", "--seed", "7"]
    assert main([*reuse, "--out", str(second)]) == 0
    assert read_events(first).identical(read_events(second))


def test_simulate_budget_keeps_partial_log(tmp_path, capsys):
    path = tmp_path / "ev.csv"
    assert main([*SIMULATE, "--max-events", "5", "--out", str(path)]) == 1
    assert capsys.readouterr().err.startswith("E1:")
    assert read_events(path).total_events == 6
    assert read_json(tmp_path / "ev.meta.json")["truncated"] is True


def test_simulate_needs_graph_source(tmp_path, capsys):
    code = main(["simulate", "--mu", "1", "--kernel", "exp:1", "--horizon", "4", "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert capsys.readouterr().err.startswith("E2:")


def test_estimate_sub_matches_in_memory(events, capsys):
    assert main(["estimate-sub", "--events", str(events), "--k", "10", "--t", "16"]) == 0
    data = json.loads(capsys.readouterr().out)

    graph_seed, sim_seed = derive_seeds(7, 2)
    log = simulate(sample_graph(20, 0.5, graph_seed), KernelSpec.parse("exp:1"), 1.0, 40.0, sim_seed)
    expected = estimate(log, 10, 16.0)
    assert data["kind"] == "subcritical"
    assert data["delta"] == 2.0
    for key in ("epsilon", "v_stat", "x_stat", "p_hat", "mu_hat", "lambda_hat"):
        assert data[key] == getattr(expected, key)
    assert data["source"]["meta"]["seed"] == 7


def test_estimate_sub_csv(events, tmp_path):
    out = tmp_path / "est.csv"
    assert main(["estimate-sub", "--events", str(events), "--k", "10", "--t", "16", "--format", "csv", "--out", str(out)]) == 0
    keys = [line.split(",")[0] for line in out.read_text(encoding="utf-8").splitlines()]
    assert keys[0] == "key"
    assert "p_hat" in keys
    assert "ci.halfwidth" in keys


def test_estimate_sub_horizon_too_short(events, capsys):
    assert main(["estimate-sub", "--events", str(events), "--k", "10", "--t", "30"]) == 1
    assert capsys.readouterr().err.startswith("E1:")


def test_missing_events_file(tmp_path, capsys):
    code = main(["estimate-sub", "--events", str(tmp_path / "none.csv"), "--k", "1", "--t", "1"])
    assert code == 2
    assert capsys.readouterr().err.startswith("E2:")


def test_estimate_super(events, capsys):
    assert main(["estimate-super", "--events", str(events), "--k", "10", "--t", "40"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["kind"] == "supercritical"
    assert data["alpha0_source"] in ("fitted", None)


def test_graph_limits(capsys):
    assert main(["graph-limits", "--n", "10", "--p", "1", "--seed", "3", "--k", "5", "--kernel", "exp:4"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["ell_bar"] == pytest.approx(4 / 3)
    assert data["rho"] == pytest.approx(1.0)
    assert data["alpha_n"] == pytest.approx(-3.0)
    assert data["graph"]["edges"] == 100
    assert data["notes"] == []


def test_validate_failure_exit_code(tmp_path, capsys):
    config = write_config(
        tmp_path / "cfg.json",
        target="graph_v_inf_clt", n=40, k=20, p=0.5, replicas=4, seed=3,
        tolerances={"variance_band_matrix": 0.0},
    )
    out = tmp_path / "report.json"
    qq = tmp_path / "qq.csv"
    code = main(["validate", "--config", config, "--threads", "1", "--quiet", "--out", str(out), "--qq-out", str(qq)])
    assert code == 3
    assert capsys.readouterr().err.startswith("E3:")
    report = read_json(out)
    assert report["passed"] is False
    assert len(report["values"]) == 4
    assert len(qq.read_text(encoding="utf-8").splitlines()) == 5


def test_validate_needs_seed(tmp_path, capsys):
    config = write_config(tmp_path / "cfg.json", target="graph_v_inf_clt", n=40, k=20, p=0.5, replicas=4)
    code = main(["validate", "--config", config, "--threads", "1", "--quiet", "--out", str(tmp_path / "r.json")])
    assert code == 1
    assert "seed" in capsys.readouterr().err


def test_validate_seed_flag(tmp_path, capsys):
    config = write_config(
        tmp_path / "cfg.json",
        target="graph_v_inf_clt", n=40, k=20, p=0.5, replicas=3,
        tolerances={"variance_band_matrix": 100.0, "ks_level": 0.0, "mean_sd_factor": 1e6},
    )
    out = tmp_path / "r.json"
    assert main(["validate", "--config", config, "--seed", "9", "--threads", "1", "--quiet", "--out", str(out)]) == 0
    assert read_json(out)["config"]["seed"] == 9
