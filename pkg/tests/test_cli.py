"""End-to-end checks of the command line front end.

Commands run in-process through spikedpca.cli.main so exit codes and
emitted files can be asserted directly.  Each test works inside its own
tmp_path; configs are written as JSON files the way a user would.
"""

import json
import os

import numpy as np

from spikedpca.cli import main


def _write_json(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return str(path)


def _write_csv(path, array):
    np.savetxt(path, np.asarray(array, dtype=float), delimiter=",")
    return str(path)


def _spiked_data(tmp_path, n=300, N=20, support=5, lam=12.0, seed=7):
    rng = np.random.default_rng(seed)
    theta = np.zeros(N)
    theta[:support] = 1.0 / np.sqrt(support)
    X = (np.sqrt(lam) * rng.standard_normal((n, 1))) @ theta[None, :]
    X += rng.standard_normal((n, N))
    return _write_csv(tmp_path / "data.csv", X)


def _read_json(out_dir, name):
    with open(os.path.join(str(out_dir), name), "r", encoding="utf-8") as fh:
        return json.load(fh)


def _simulate_config():
    return {
        "model": {"q": 1.0, "radii": [3.0], "lambdas": [8.0],
                  "support_sizes": [6]},
        "grid": [{"n": 80, "N": 40}],
        "estimators": [{"name": "opca"}],
        "reps": 3,
        "master_seed": 1,
    }


# ---------------------------------------------------------------------------
# estimate

def test_estimate_aspca_success(tmp_path):
    data = _spiked_data(tmp_path)
    out = tmp_path / "out"
    code = main(["estimate", data, "--out", str(out), "--no-figures"])
    assert code == 0
    doc = _read_json(out, "result.json")
    assert doc["kind"] == "estimation-result"
    assert doc["result"]["method"] == "aspca"
    assert doc["result"]["rank"] == 1
    assert doc["result"]["fallback_used"] is False
    assert doc["config"]["estimator"] == "aspca"  # default filled in
    assert len(doc["config_sha256"]) == 64
    csv_path = out / "components.csv"
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# config_sha256=")
    assert lines[1] == "coordinate,component_1"
    assert len(lines) == 2 + 20


def test_estimate_header_row_skipped(tmp_path):
    data = _spiked_data(tmp_path, n=120)
    raw = open(data, "r", encoding="utf-8").read()
    with_header = tmp_path / "withheader.csv"
    with_header.write_text("c0," * 19 + "c19\n" + raw, encoding="utf-8")
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["estimate", data, "--out", str(out_a),
                 "--no-figures"]) == 0
    assert main(["estimate", str(with_header), "--header",
                 "--out", str(out_b), "--no-figures"]) == 0
    assert _read_json(out_a, "result.json")["result"] \
        == _read_json(out_b, "result.json")["result"]


def test_estimate_opca_and_config_override(tmp_path):
    data = _spiked_data(tmp_path)
    out = tmp_path / "out"
    code = main(["estimate", data, "--out", str(out), "--no-figures",
                 "--override", "estimator=opca",
                 "--override", "n_components=2",
                 "--override", "config.center=true"])
    assert code == 0
    doc = _read_json(out, "result.json")
    assert doc["result"]["method"] == "opca"
    assert doc["config"]["n_components"] == 2
    assert doc["config"]["config"]["center"] is True
    lines = (out / "components.csv").read_text().splitlines()
    assert lines[1] == "coordinate,component_1,component_2"


def test_estimate_non_numeric_input_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1.0,2.0\n3.0,notanumber\n", encoding="utf-8")
    code = main(["estimate", str(bad), "--out", str(tmp_path / "o"),
                 "--no-figures"])
    assert code == 2
    assert "input parsing" in capsys.readouterr().err


def test_estimate_single_column_exits_3(tmp_path):
    narrow = _write_csv(tmp_path / "narrow.csv",
                        np.random.default_rng(0).standard_normal((30, 1)))
    code = main(["estimate", narrow, "--out", str(tmp_path / "o"),
                 "--no-figures"])
    assert code == 3


def test_estimate_noise_only_falls_back_exit_4(tmp_path, capsys):
    noise = _write_csv(tmp_path / "noise.csv",
                       np.random.default_rng(3).standard_normal((60, 20)))
    out = tmp_path / "o"
    code = main(["estimate", noise, "--out", str(out), "--no-figures"])
    assert code == 4
    assert "fallback" in capsys.readouterr().err
    doc = _read_json(out, "result.json")  # the result is still written
    assert doc["result"]["fallback_used"] is True
    assert doc["result"]["rank"] == 0


def test_estimate_noise_with_known_rank_exit_0(tmp_path):
    noise = _write_csv(tmp_path / "noise.csv",
                       np.random.default_rng(3).standard_normal((60, 20)))
    code = main(["estimate", noise, "--out", str(tmp_path / "o"),
                 "--no-figures", "--override", "config.M_known=1"])
    assert code == 0


# ---------------------------------------------------------------------------
# config plumbing: schema, overrides, flags

def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = _simulate_config()
    cfg["bogus"] = 1
    path = _write_json(tmp_path / "sim.json", cfg)
    code = main(["simulate-risk", "--config", path,
                 "--out", str(tmp_path / "o"), "--no-figures"])
    assert code == 2
    assert "unknown keys: bogus" in capsys.readouterr().err


def test_nested_unknown_key_exits_2(tmp_path, capsys):
    cfg = _simulate_config()
    cfg["estimators"][0]["gamma"] = 2.0
    path = _write_json(tmp_path / "sim.json", cfg)
    code = main(["simulate-risk", "--config", path,
                 "--out", str(tmp_path / "o"), "--no-figures"])
    assert code == 2
    assert "estimators[0]" in capsys.readouterr().err


def test_missing_required_key_exits_2(tmp_path, capsys):
    cfg = _simulate_config()
    del cfg["model"]
    path = _write_json(tmp_path / "sim.json", cfg)
    code = main(["simulate-risk", "--config", path,
                 "--out", str(tmp_path / "o"), "--no-figures"])
    assert code == 2
    assert "required key is missing" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert main(["simulate-risk", "--out", str(tmp_path / "o"),
                 "--no-figures"]) == 2
    assert main(["simulate-risk", "--config",
                 str(tmp_path / "absent.json"),
                 "--out", str(tmp_path / "o"), "--no-figures"]) == 2
    not_json = tmp_path / "broken.json"
    not_json.write_text("{", encoding="utf-8")
    assert main(["simulate-risk", "--config", str(not_json),
                 "--out", str(tmp_path / "o"), "--no-figures"]) == 2


def test_missing_out_dir_exits_2(tmp_path):
    path = _write_json(tmp_path / "sim.json", _simulate_config())
    assert main(["simulate-risk", "--config", path, "--no-figures"]) == 2


def test_override_dotted_paths_and_list_indices(tmp_path):
    path = _write_json(tmp_path / "sim.json", _simulate_config())
    out = tmp_path / "o"
    code = main(["simulate-risk", "--config", path, "--out", str(out),
                 "--no-figures",
                 "--override", "reps=2",
                 "--override", "grid.0.n=60",
                 "--override", "model.lambdas.0=6.5",
                 "--override", "model.weights=equal",
                 "--override", "noiseless=true"])
    assert code == 0
    cfg = _read_json(out, "summary.json")["config"]
    assert cfg["reps"] == 2
    assert cfg["grid"][0]["n"] == 60
    assert cfg["model"]["lambdas"] == [6.5]
    assert cfg["model"]["weights"] == "equal"  # bare string passes through
    assert cfg["noiseless"] is True


def test_override_syntax_errors_exit_2(tmp_path, capsys):
    path = _write_json(tmp_path / "sim.json", _simulate_config())
    out = str(tmp_path / "o")
    assert main(["simulate-risk", "--config", path, "--out", out,
                 "--no-figures", "--override", "noequals"]) == 2
    assert main(["simulate-risk", "--config", path, "--out", out,
                 "--no-figures", "--override", "grid.5.n=3"]) == 2
    assert main(["simulate-risk", "--config", path, "--out", out,
                 "--no-figures", "--override", "model.q.x=1"]) == 2
    err = capsys.readouterr().err
    assert "key=value" in err
    assert "out of range" in err
    assert "cannot descend into a scalar" in err


def test_seed_flag_beats_config_and_override(tmp_path):
    path = _write_json(tmp_path / "sim.json", _simulate_config())
    out = tmp_path / "o"
    code = main(["simulate-risk", "--config", path, "--out", str(out),
                 "--no-figures", "--seed", "5", "--reps", "2",
                 "--override", "master_seed=7"])
    assert code == 0
    doc = _read_json(out, "summary.json")
    assert doc["config"]["master_seed"] == 5
    assert doc["config"]["reps"] == 2


# ---------------------------------------------------------------------------
# simulate-risk

def test_simulate_risk_outputs(tmp_path):
    path = _write_json(tmp_path / "sim.json", _simulate_config())
    out = tmp_path / "o"
    code = main(["simulate-risk", "--config", path, "--out", str(out)])
    assert code == 0
    assert sorted(os.listdir(out)) == ["risk.csv", "risk.png", "summary.json"]
    doc = _read_json(out, "summary.json")
    assert doc["kind"] == "risk-report"
    assert len(doc["rows"]) == 1
    assert doc["rows"][0]["estimator"] == "opca"
    assert doc["rows"][0]["reps_used"] == 3
    lines = (out / "risk.csv").read_text().splitlines()
    assert lines[0] == "# config_sha256=%s" % doc["config_sha256"]
    assert lines[1] == "# master_seed=1"


def test_simulate_risk_no_figures(tmp_path):
    path = _write_json(tmp_path / "sim.json", _simulate_config())
    out = tmp_path / "o"
    assert main(["simulate-risk", "--config", path, "--out", str(out),
                 "--no-figures"]) == 0
    assert sorted(os.listdir(out)) == ["risk.csv", "summary.json"]


def test_simulate_risk_regression_block(tmp_path):
    cfg = _simulate_config()
    cfg["grid"] = [{"n": n, "N": 40} for n in (60, 90, 140, 200)]
    cfg["reps"] = 4
    cfg["regressions"] = [{"predictor": "theory"}]
    path = _write_json(tmp_path / "sim.json", cfg)
    out = tmp_path / "o"
    assert main(["simulate-risk", "--config", path, "--out", str(out),
                 "--no-figures"]) == 0
    fits = _read_json(out, "summary.json")["slope_fits"]
    assert len(fits) == 1
    assert fits[0]["n_points"] == 4


def test_simulate_risk_invalid_nu_exits_3(tmp_path):
    cfg = _simulate_config()
    cfg["nu"] = 2    # single-spike model
    path = _write_json(tmp_path / "sim.json", cfg)
    assert main(["simulate-risk", "--config", path,
                 "--out", str(tmp_path / "o"), "--no-figures"]) == 3


# ---------------------------------------------------------------------------
# lower-bound

def _lower_config():
    # nh = 8 sits below both c1(N-1) and the sparse cap, so the packing
    # regime and the rate classification agree on bounded-below
    return {
        "family": "polar-sphere",
        "n": 6, "N": 70,
        "lambdas": [2.0],
        "q": 1.0, "radii": [6.0],
        "regime": "bounded-below",
    }


def test_lower_bound_polar(tmp_path):
    path = _write_json(tmp_path / "lb.json", _lower_config())
    out = tmp_path / "o"
    code = main(["lower-bound", "--config", path, "--out", str(out)])
    assert code == 0
    assert sorted(os.listdir(out)) == ["certificate.json", "certificate.png",
                                       "members.csv"]
    doc = _read_json(out, "certificate.json")
    assert doc["kind"] == "lower-bound-certificate"
    assert doc["family"]["kind"] == "polar-sphere"
    assert doc["family"]["cardinality"] >= 2
    assert doc["fano"]["bound"] > 0.0
    assert doc["minimax_rate"]["case_tag"] == "bounded-below"
    # every member listed in the csv: base point is member -1
    lines = (out / "members.csv").read_text().splitlines()
    assert lines[1] == "member,coordinate,value"
    members = {int(line.split(",")[0]) for line in lines[2:]}
    assert members == set(range(-1, doc["family"]["cardinality"]))


def test_lower_bound_two_point(tmp_path):
    cfg = {"family": "two-point", "n": 200, "N": 25,
           "lambdas": [5.0, 2.0], "nu": 1, "mu": 2}
    path = _write_json(tmp_path / "lb.json", cfg)
    out = tmp_path / "o"
    assert main(["lower-bound", "--config", path, "--out", str(out),
                 "--no-figures"]) == 0
    doc = _read_json(out, "certificate.json")
    assert doc["family"]["cardinality"] == 2
    assert doc["minimax_rate"] is None          # no q/radii given
    assert doc["cross_component_floor"] > 0.0


def test_lower_bound_requires_family_fields(tmp_path, capsys):
    cfg = {"family": "two-point", "n": 200, "N": 25, "lambdas": [5.0, 2.0]}
    path = _write_json(tmp_path / "lb.json", cfg)
    assert main(["lower-bound", "--config", path,
                 "--out", str(tmp_path / "o"), "--no-figures"]) == 2
    assert "lower-bound.mu" in capsys.readouterr().err


def test_lower_bound_infeasible_exits_3(tmp_path, capsys):
    cfg = _lower_config()
    cfg["n"] = 2    # nh too small for any sign packing
    cfg["lambdas"] = [1.0]
    path = _write_json(tmp_path / "lb.json", cfg)
    code = main(["lower-bound", "--config", path,
                 "--out", str(tmp_path / "o"), "--no-figures"])
    assert code == 3
    assert "infeasible" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# concentration-check

def test_concentration_check_runs(tmp_path):
    cfg = {"checks": [{"kind": "chi2_upper",
                       "params": {"n": 50, "eps": 0.45}},
                      {"kind": "cross_product",
                       "params": {"n": 100, "b": 1.0}}],
           "reps": 2000, "master_seed": 9}
    path = _write_json(tmp_path / "conc.json", cfg)
    out = tmp_path / "o"
    code = main(["concentration-check", "--config", path, "--out", str(out)])
    assert code == 0
    assert sorted(os.listdir(out)) == ["checks.csv", "checks.png",
                                       "summary.json"]
    doc = _read_json(out, "summary.json")
    assert doc["all_hold"] is True
    assert [c["kind"] for c in doc["checks"]] == ["chi2_upper",
                                                  "cross_product"]
    # one stream per check, offset from the master seed
    assert [c["seed"] for c in doc["checks"]] == ["9", "10"]
    lines = (out / "checks.csv").read_text().splitlines()
    assert lines[2].split(",")[0] == "kind"


def test_concentration_check_out_of_domain_exits_3(tmp_path):
    cfg = {"checks": [{"kind": "chi2_upper",
                       "params": {"n": 50, "eps": 2.0}}],
           "reps": 100}
    path = _write_json(tmp_path / "conc.json", cfg)
    assert main(["concentration-check", "--config", path,
                 "--out", str(tmp_path / "o"), "--no-figures"]) == 3


def test_concentration_check_unknown_kind_exits_2(tmp_path):
    cfg = {"checks": [{"kind": "laplace", "params": {"n": 50}}],
           "reps": 100}
    path = _write_json(tmp_path / "conc.json", cfg)
    assert main(["concentration-check", "--config", path,
                 "--out", str(tmp_path / "o"), "--no-figures"]) == 2


# ---------------------------------------------------------------------------
# packing

def test_packing_outputs(tmp_path):
    cfg = {"sign": [{"m": 9}],
           "supports": [{"n_pool": 6, "m": 2, "max_overlap": 0}]}
    path = _write_json(tmp_path / "pack.json", cfg)
    out = tmp_path / "o"
    code = main(["packing", "--config", path, "--out", str(out)])
    assert code == 0
    assert sorted(os.listdir(out)) == ["packing.csv", "packing.png",
                                       "summary.json"]
    doc = _read_json(out, "summary.json")
    assert doc["sign"][0]["count"] == 144
    assert doc["supports"][0]["count"] == 3
    lines = (out / "packing.csv").read_text().splitlines()
    assert len(lines) == 2 + 2    # preamble, header, one row per request


def test_packing_requires_some_entry(tmp_path, capsys):
    path = _write_json(tmp_path / "pack.json", {})
    assert main(["packing", "--config", path,
                 "--out", str(tmp_path / "o"), "--no-figures"]) == 2
    assert "at least one entry" in capsys.readouterr().err


def test_packing_infeasible_exits_3(tmp_path):
    path = _write_json(tmp_path / "pack.json", {"sign": [{"m": 3}]})
    assert main(["packing", "--config", path,
                 "--out", str(tmp_path / "o"), "--no-figures"]) == 3


# ---------------------------------------------------------------------------
# determinism and verify

def _tree_bytes(root):
    out = {}
    for name in sorted(os.listdir(str(root))):
        with open(os.path.join(str(root), name), "rb") as fh:
            out[name] = fh.read()
    return out


def test_rerun_is_byte_identical(tmp_path):
    path = _write_json(tmp_path / "lb.json", _lower_config())
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["lower-bound", "--config", path, "--out", str(out1)]) == 0
    assert main(["lower-bound", "--config", path, "--out", str(out2)]) == 0
    a, b = _tree_bytes(out1), _tree_bytes(out2)
    assert sorted(a) == sorted(b)
    for name in a:
        assert a[name] == b[name], name


def test_verify_accepts_fresh_outputs(tmp_path, capsys):
    path = _write_json(tmp_path / "sim.json", _simulate_config())
    out = tmp_path / "o"
    assert main(["simulate-risk", "--config", path, "--out", str(out),
                 "--no-figures"]) == 0
    assert main(["verify", str(out)]) == 0
    assert "OK" in capsys.readouterr().out


def test_verify_detects_tampering(tmp_path, capsys):
    path = _write_json(tmp_path / "sim.json", _simulate_config())
    out = tmp_path / "o"
    assert main(["simulate-risk", "--config", path, "--out", str(out),
                 "--no-figures"]) == 0
    doc = _read_json(out, "summary.json")
    doc["config"]["reps"] = 999    # edit without rehashing
    (out / "summary.json").write_text(json.dumps(doc), encoding="utf-8")
    assert main(["verify", str(out)]) == 1
    assert "hash mismatch" in capsys.readouterr().out


def test_verify_rejects_plain_json(tmp_path, capsys):
    plain = tmp_path / "plain.json"
    plain.write_text('{"a": 1}', encoding="utf-8")
    assert main(["verify", str(plain)]) == 1
    assert "no embedded config" in capsys.readouterr().out


def test_verify_empty_dir(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["verify", str(empty)]) == 1
    assert "no JSON documents" in capsys.readouterr().err
