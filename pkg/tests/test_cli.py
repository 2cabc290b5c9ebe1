import json

import numpy as np
import pytest

from mmwcov.cli import CSV_HEADER, ConfigError, defaults_text, execute, main, parse_config
from mmwcov.netgeom import NetworkParams


def test_defaults_parse_to_baseline():
    cfg = parse_config("mode = analytic\n" + defaults_text())
    ref = NetworkParams()
    for k, v in ref.to_dict().items():
        got = cfg.params.to_dict()[k]
        if isinstance(v, float):
            assert got == pytest.approx(v, rel=1e-9), k
        else:
            assert got == v, k


def test_units_are_converted():
    cfg = parse_config("mode = analytic\nlambda_bs_per_km2 = 30\nbandwidth_mhz = 100\n")
    assert cfg.params.lambda_bs == pytest.approx(30e-6)
    assert cfg.params.bandwidth == pytest.approx(100e6)


def error_of(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value


def test_negative_density_is_unit_violation():
    err = error_of("mode = analytic\nlambda_bs_per_km2 = -5\n")
    assert err.kind == "unit_violation"
    assert err.line == 2


def test_unitless_name_points_to_unit():
    err = error_of("mode = analytic\nlambda_bs = 60\n")
    assert err.kind == "unit_violation"
    assert "lambda_bs_per_km2" in str(err)


def test_duplicate_key_names_its_line():
    err = error_of("mode = analytic\nseed = 1\n\nseed = 2\n")
    assert err.kind == "duplicate_key"
    assert err.line == 4
    assert err.record()["line"] == 4


def test_unknown_key():
    assert error_of("mode = analytic\nfoo = 1\n").kind == "unknown_key"


def test_syntax_error():
    assert error_of("mode analytic\n").kind == "syntax"


def test_missing_mode():
    assert error_of("seed = 3\n").kind == "missing_field"


def test_sweep_needs_variable():
    assert error_of("mode = sweep\n").kind == "missing_field"


def test_overrides_win():
    cfg = parse_config("mode = analytic\nseed = 1\n", dict(seed=9, mode="simulate"))
    assert (cfg.seed, cfg.mode) == (9, "simulate")


def test_config_text_round_trips():
    cfg = parse_config("mode = simulate\ntrials = 7\nn_ue = 16\nthreshold_step_db = 2.5\n")
    again = parse_config(cfg.text())
    assert again == cfg


SIM = "mode = simulate\ntrials = 6\nseed = 4\nthreshold_step_db = 5\nrate_points = 13\n"


def test_simulation_csv_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    first = execute(parse_config(SIM), a)
    summary = json.loads((a / first["summary_file"]).read_text())
    cfg = parse_config(summary["config"])
    second = execute(cfg, b)
    assert first["outputs"] == second["outputs"]
    for name in first["outputs"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    head = (a / first["outputs"][0]).read_text().splitlines()[0]
    assert head == ",".join(CSV_HEADER)


def test_summary_contents(tmp_path):
    s = execute(parse_config(SIM), tmp_path)
    rec = json.loads((tmp_path / s["summary_file"]).read_text())
    assert rec["status"] == "ok"
    assert rec["params"]["n_bs"] == 64
    assert set(rec["versions"]) >= {"numpy", "scipy", "python"}
    assert len(rec["outputs"]) == 3


def test_analytic_run(tmp_path):
    s = execute(parse_config("mode = analytic\nthreshold_step_db = 5\nrate_points = 13\n"),
                tmp_path)
    rows = (tmp_path / s["outputs"][0]).read_text().splitlines()
    vals = np.array([float(r.split(",")[1]) for r in rows[1:]])
    assert np.all(np.diff(vals) <= 1e-12)


def test_sweep_run(tmp_path):
    text = "mode = sweep\nsweep_variable = lambda_bs_per_km2\nsweep_values = 20, 60, 120\n"
    s = execute(parse_config(text), tmp_path)
    rows = (tmp_path / s["outputs"][0]).read_text().splitlines()
    assert rows[0] == "lambda_bs_per_km2,coverage_none"
    assert len(rows) == 4
    assert s["results"]["argmax"]["none"] in (20.0, 60.0, 120.0)


def test_validate_run(tmp_path):
    s = execute(parse_config(SIM.replace("simulate", "validate")), tmp_path)
    assert 0.0 <= s["results"]["max_gap"] <= 1.0


def test_compare_run(tmp_path):
    s = execute(parse_config("mode = compare\nrate_points = 61\n"), tmp_path)
    assert s["results"]["engines"] == "analytic/analytic"
    assert float(s["results"]["o"]["0.5"]) > 0


def test_main_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("mode = analytic\nlambda_bs_per_km2 = -5\n")
    assert main(["run", "--config", str(bad)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "unit_violation" and err["line"] == 2

    good = tmp_path / "good.txt"
    good.write_text(SIM)
    assert main(["run", "--config", str(good), "--out", str(tmp_path / "o")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["status"] == "ok"
    assert main(["run", "--config", str(tmp_path / "o" / out["summary"]), "--trials", "3",
                 "--out", str(tmp_path / "p")]) == 0
    capsys.readouterr()
    assert main(["run", "--config", str(good), "--seed", "-1"]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.txt")]) == 2


def test_print_defaults(capsys):
    assert main(["--print-defaults"]) == 0
    text = capsys.readouterr().out
    assert "lambda_bs_per_km2 = 60" in text
    parse_config("mode = analytic\n" + text)
