import csv
import json

import numpy as np
import pytest

from netexp.analysis import bias_tte_adjusted
from netexp.cli import main
from netexp.designs import SaturationRD
from netexp.network import InterferenceGraph, Partition
from netexp.outcomes import HaneModel, load_model, save_model


def run_json(capsys, argv):
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)


@pytest.fixture
def cycle_file(tmp_path, cycle_model):
    path = tmp_path / "cycle.json"
    save_model(cycle_model, path)
    return path


def exit_code(argv) -> int:
    """Exit status of ``main``, whether it returns or exits through argparse."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


def write_scenario(tmp_path, **content):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(content))
    return str(path)


# ---------------------------------------------------------------- generate


def test_generate_round_trip(tmp_path, capsys):
    out = tmp_path / "m.json"
    assert main(["generate", "--n", "30", "--edge-prob", "0.1", "--seed", "5", "--out", str(out)]) == 0
    m = load_model(out)
    assert m.n == 30
    assert f"edges={m.graph.n_edges}" in capsys.readouterr().out


def test_generate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        main(["generate", "--n", "25", "--edge-prob", "0.2", "--seed", "11", "--out", str(path)])
    assert a.read_bytes() == b.read_bytes()
    main(["generate", "--n", "25", "--edge-prob", "0.2", "--seed", "12", "--out", str(b)])
    assert a.read_bytes() != b.read_bytes()


def test_generate_clustered(tmp_path):
    out, part = tmp_path / "m.json", tmp_path / "p.csv"
    argv = ["generate", "--clustered", "--n", "20", "--clusters", "4", "--edge-prob", "0.5", "--p-between", "0.0",
            "--seed", "1", "--out", str(out), "--partition-out", str(part)]
    assert main(argv) == 0
    m = load_model(out)
    labels = np.repeat(np.arange(4), 5)
    assert np.all(labels[m.graph.src] == labels[m.graph.dst])
    assert part.exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["generate", "--n", "5", "--edge-prob", "1.5", "--out", "x.json"],
        ["generate", "--n", "5", "--gamma", "cauchy:0", "--out", "x.json"],
        ["generate", "--clustered", "--n", "5", "--out", "x.json"],
        ["generate", "--n", "5"],
        ["frobnicate"],
    ],
)
def test_generate_usage_errors(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert exit_code(argv) == 1
    assert capsys.readouterr().err
    assert not (tmp_path / "x.json").exists()


# ---------------------------------------------------------------- truth


def test_truth_text(cycle_file, capsys):
    assert main(["truth", str(cycle_file)]) == 0
    out = capsys.readouterr().out
    assert "tte: 5.0" in out and "ate: 1.0" in out and "aie: 4.0" in out


def test_truth_json(cycle_file, capsys):
    t = run_json(capsys, ["truth", str(cycle_file), "--json"])
    assert (t["tte"], t["ate"], t["aie"]) == (5.0, 1.0, 4.0)
    assert t["n"] == 3 and t["n_edges"] == 3 and t["d_max"] == 1


def test_truth_missing_file(tmp_path):
    assert exit_code(["truth", str(tmp_path / "absent.json")]) == 1


# ---------------------------------------------------------------- run / verify


def test_verify_worked_case(tmp_path, cycle_file, capsys):
    sc = write_scenario(tmp_path, model=cycle_file.name, design={"type": "crd", "treated": 1},
                        estimators=["tte_adjusted", "tte_ht"])
    report = run_json(capsys, ["verify", sc])
    adj, ht = report["estimators"]
    assert adj["oracle"]["mean"] == pytest.approx(5.0)
    assert adj["oracle"]["variance"] == pytest.approx(8 / 3)
    assert adj["analytical_variance"] == pytest.approx(8 / 3)
    assert adj["analytical_bias"] == pytest.approx(0.0, abs=1e-12)
    assert ht["analytical_bias"] == pytest.approx(-6.0)
    assert ht["formula_bias"] == pytest.approx(-6.0)
    assert report["truth"] == {"tte": 5.0, "ate": 1.0, "aie": 4.0}
    assert report["disagreements"] == []
    meta = report["metadata"]
    assert meta["n"] == 3 and meta["d_max"] == 1 and meta["verify"] is True
    assert meta["design"]["type"] == "crd"


def test_run_with_mc_and_outputs(tmp_path, cycle_file, capsys):
    sc = write_scenario(tmp_path, model=str(cycle_file), design={"type": "crd", "treated": 1},
                        estimators=["tte_adjusted"], verify=True, mc={"replicates": 5000, "master_seed": 3},
                        output="report.json")
    csv_path = tmp_path / "flat.csv"
    assert main(["run", sc, "--csv", str(csv_path), "--strict"]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    mc = report["estimators"][0]["mc"]
    assert mc["replicates"] == 5000
    assert abs(mc["empirical_mean"] - 5.0) <= 5 * mc["stderr_of_mean"]
    rows = list(csv.DictReader(csv_path.open()))
    assert [r["channel"] for r in rows] == ["analytical", "oracle", "mc"]
    assert float(rows[1]["variance"]) == pytest.approx(8 / 3)


def test_saturation_bias_reported(tmp_path, capsys):
    part = Partition(np.repeat([0, 1], 3))
    model = HaneModel(InterferenceGraph.from_edges(6, [(0, 3, 3.0)]), np.arange(6.0), np.ones(6))
    save_model(model, tmp_path / "m.json")
    sc = write_scenario(tmp_path, model="m.json",
                        design={"type": "saturation", "partition": [0, 0, 0, 1, 1, 1], "treated_per_cluster": [1, 2]},
                        estimators=["tte_adjusted_simple"], verify=True)
    rec = run_json(capsys, ["run", sc])["estimators"][0]
    expected = bias_tte_adjusted(model, SaturationRD(part, (1, 2)))
    assert expected == pytest.approx(-0.25)
    assert rec["analytical_bias"] == pytest.approx(expected, abs=1e-12)
    assert rec["formula_bias"] == pytest.approx(expected, abs=1e-12)
    assert rec["oracle"]["bias"] == pytest.approx(expected, abs=1e-12)


def test_unequal_marginals_fall_back_with_note(tmp_path, capsys):
    # unit 3 hears from its own cluster and from the other one, so no per-unit constant exists
    model = HaneModel(InterferenceGraph.from_edges(6, [(0, 3, 3.0), (4, 3, 1.0), (1, 4, 2.0)]),
                      np.arange(6.0), np.ones(6))
    save_model(model, tmp_path / "m.json")
    sc = write_scenario(tmp_path, model="m.json",
                        design={"type": "saturation", "partition": [0, 0, 0, 1, 1, 1], "treated_per_cluster": [1, 2]},
                        estimators=["tte_adjusted"], verify=True)
    rec = run_json(capsys, ["run", sc])["estimators"][0]
    assert rec["label"] == "tte_adjusted_simple"
    assert rec["notes"]
    assert rec["analytical_bias"] == pytest.approx(rec["oracle"]["bias"], abs=1e-12)
    assert rec["analytical_bias"] != pytest.approx(0.0, abs=1e-6)


def test_mc_only_large_model(tmp_path, capsys):
    sc = write_scenario(tmp_path, model={"generate": {"n": 500, "edge_prob": 0.01, "seed": 2}},
                        design={"type": "crd", "treated": 250}, estimators=["tte_adjusted"],
                        mc={"replicates": 200, "master_seed": 1})
    rec = run_json(capsys, ["run", sc])["estimators"][0]
    assert "oracle" not in rec
    assert rec["mc"]["replicates"] == 200
    assert rec["variance_formula"] == "var_tte_adjusted_crd"


def test_verify_refuses_huge_support(tmp_path, capsys):
    sc = write_scenario(tmp_path, model={"generate": {"n": 60, "edge_prob": 0.05}},
                        design={"type": "crd", "treated": 30}, estimators=["tte_ht"])
    assert exit_code(["verify", sc]) == 1


def test_strict_exit_two_on_forced_mismatch(tmp_path, cycle_file, capsys, monkeypatch):
    import netexp.cli as cli

    def skewed(model, e, d, b):
        from netexp.analysis import AnalyticalResult

        return AnalyticalResult(123.0, 0.0, "forced")

    monkeypatch.setattr(cli, "analytical_moments", skewed)
    sc = write_scenario(tmp_path, model=cycle_file.name, design={"type": "crd", "treated": 1},
                        estimators=["tte_adjusted"], verify=True)
    assert main(["run", sc, "--strict"]) == 2
    assert "disagreement" in capsys.readouterr().err
    assert main(["run", sc]) == 0


@pytest.mark.parametrize(
    "content",
    [
        {"design": {"type": "crd", "treated": 1}, "verify": True},
        {"model": "cycle.json", "design": {"type": "crd", "treated": 1}, "estimators": ["tte_ht"]},
        {"model": "cycle.json", "design": {"type": "crd", "treated": 1}, "estimators": ["nope"], "verify": True},
        {"model": "cycle.json", "design": {"type": "crd"}, "estimators": ["tte_ht"], "verify": True},
        {"model": "cycle.json", "design": {"type": "crd", "treated": 1}, "estimators": ["tte_ht"],
         "mc": {"replicates": 1}},
        {"model": "cycle.json", "design": {"type": "crd", "treated": 1}, "estimators": ["tte_ht"], "verify": True,
         "baseline": {"mode": "population_mean"}},
    ],
)
def test_bad_scenarios(tmp_path, cycle_file, content):
    sc = write_scenario(tmp_path, **content)
    assert exit_code(["run", sc]) == 1


def test_population_mean_survey(tmp_path, cycle_file, capsys):
    sc = write_scenario(tmp_path, model=cycle_file.name, design={"type": "crd", "treated": 1},
                        estimators=[{"name": "tte_adjusted", "baseline": "population_mean"}],
                        baseline={"mode": "survey", "size": 2, "seed": 4},
                        mc={"replicates": 300, "master_seed": 2})
    report = run_json(capsys, ["run", sc])
    assert report["metadata"]["mc"]["survey_size"] == 2
    assert report["estimators"][0]["baseline_mode"] == "subtract_population_mean"


# ---------------------------------------------------------------- moments


@pytest.mark.parametrize(
    "argv, value",
    [
        (["--crd", "4", "2", "--cov", "0", "1"], -1 / 12),
        (["--crd", "4", "2", "--cov", "0", "1", "2"], -1 / 12),
        (["--bernoulli", "0.5", "--cov", "0", "1"], 0.0),
        (["--crd", "6", "3", "--cov", "0", "1", "2", "3"], None),
        (["--crd", "4", "2", "--cov", "0", "1", "--raw"], 1 / 6),
        (["--bernoulli", "0.3", "--n", "4", "--cov", "2"], 0.21),
    ],
)
def test_moments(argv, value, capsys):
    assert main(["moments", *argv]) == 0
    out = capsys.readouterr().out
    closed = float(out.split("closed form:")[1].split()[0])
    enum = float(out.split("enumeration:")[1].split()[0])
    assert closed == pytest.approx(enum, abs=1e-14)
    if value is not None:
        assert closed == pytest.approx(value, abs=1e-14)
    assert "agree: True" in out


@pytest.mark.parametrize(
    "argv",
    [["--crd", "4", "5", "--cov", "0"], ["--crd", "4", "2", "--cov", "4"], ["--crd", "4", "2", "--cov", "0", "1", "2", "3", "0"],
     ["--bernoulli", "1.5", "--cov", "0"]],
)
def test_moments_usage_errors(argv):
    assert exit_code(["moments", *argv]) == 1


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "0.1.0" in capsys.readouterr().out


def test_survey_ignored_by_estimators_without_baseline(tmp_path, capsys):
    sc = write_scenario(tmp_path, model={"generate": {"n": 40, "edge_prob": 0.05, "seed": 3}},
                        design={"type": "crd", "treated": 10}, estimators=["tte_adjusted", "tte_ht"],
                        baseline={"mode": "survey", "size": 8, "seed": 1}, mc={"replicates": 400, "master_seed": 5})
    adj, ht = run_json(capsys, ["run", sc])["estimators"]
    assert adj["baseline_mode"] == "subtract_population_mean"
    assert ht["baseline_mode"] == "none"
    assert ht["mc"]["replicates"] == adj["mc"]["replicates"] == 400
