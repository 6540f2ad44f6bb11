import csv
import io
import json
import math

import pytest
import yaml

from pbcover import cli, config as cfgmod, simkit


def write_config(tmp_path, name="run.yaml", **sections):
    d = cfgmod.load().to_dict()
    for sec, vals in sections.items():
        if isinstance(vals, dict):
            d[sec].update(vals)
        else:
            d[sec] = vals
    path = tmp_path / name
    path.write_text(yaml.safe_dump(d, sort_keys=False))
    return path


def read_rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def run(tmp_path, command, cfg, *extra, out="out"):
    code = cli.main([command, "--config", str(cfg), "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out / f"{command}.csv"


SMALL_SWEEP = {"m_values": [2, 3, 6], "s_values": [1, 2], "d_min_m": 0.0, "d_max_m": 80.0, "d_step_m": 10.0}


def test_baseline_loads_with_expected_values():
    rc = cfgmod.load()
    assert rc.rf.transmit_power_dbm == 27.0
    assert rc.rf.frequency_mhz == 915.0
    assert rc.qos.snr_threshold_db == 5.0
    cfg = rc.rf_config()
    assert cfg.transmit_power_watts == pytest.approx(10 ** (2.7 - 3))
    assert cfg.circuit_power_watts == 0.0
    conv = rc.conversions()
    assert conv  # dB to linear conversions are recorded


def test_unknown_key_reports_line(tmp_path):
    text = cfgmod.load().dump().replace("  noise_power_dbm:", "  noise_floor_dbm:")
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    with pytest.raises(cfgmod.ConfigError) as err:
        cfgmod.load(path)
    line = next(i for i, l in enumerate(text.splitlines(), 1) if "noise_floor_dbm" in l)
    assert "noise_floor_dbm" in str(err.value)
    assert f"line {line}" in str(err.value)
    assert cli.main(["solve-dstar", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_duplicate_and_bad_types_rejected():
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.parse("scenario: a\nscenario: b\n", "dup")
    text = cfgmod.load().dump().replace("outage_cap: 0.05", "outage_cap: lots")
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.parse(text, "types")
    text = cfgmod.load().dump().replace("threshold_method: closed", "threshold_method: guess")
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.parse(text, "choice")


def test_effective_config_round_trip(tmp_path):
    rc = cfgmod.load()
    again = cfgmod.parse(rc.dump(), "effective")
    assert again == rc
    assert again.dump() == rc.dump()


def test_solve_dstar_rows(tmp_path):
    cfg = write_config(tmp_path, sweep=SMALL_SWEEP)
    code, out = run(tmp_path, "solve-dstar", cfg)
    assert code == 0
    rows = read_rows(out)
    assert list(rows[0])[:8] == cli.BASE_COLUMNS
    m2 = [r for r in rows if r["M"] == "2"]
    assert all(float(r["d_star"]) == pytest.approx(0.0, abs=0.1) for r in m2)
    numeric = {(r["M"], r["S"]): r for r in rows if r["method"] == "Numeric"}
    assert float(numeric["6", "2"]["r_cov"]) >= float(numeric["6", "1"]["r_cov"])
    assert all(r["path_agrees"] == "true" for r in rows if r["path_agrees"])
    meta = json.loads(out.with_suffix(".json").read_text())
    assert meta["seed"] == 0 and "conversions" in meta and "runtime_ms" in meta
    assert len(meta["row_runtime_ms"]) == len(rows)
    assert cfgmod.load(out.parent / "solve-dstar.effective.yaml") == cfgmod.load(cfg)


def test_s_sweep_diminishing_returns(tmp_path):
    cfg = write_config(tmp_path, sweep={"m_values": [6], "s_values": [1, 2, 3]})
    code, out = run(tmp_path, "solve-dstar", cfg)
    r = {row["S"]: float(row["r_cov"]) for row in read_rows(out) if row["method"] == "Numeric"}
    assert r["2"] - r["1"] > r["3"] - r["2"] > 0


def test_gcd_curve_columns(tmp_path):
    cfg = write_config(tmp_path, sweep=SMALL_SWEEP)
    code, out = run(tmp_path, "gcd-curve", cfg)
    assert code == 0
    rows = read_rows(out)
    for (m, s) in {(r["M"], r["S"]) for r in rows}:
        sub = [r for r in rows if r["M"] == m and r["S"] == s]
        assert len({r["d_inf"] for r in sub}) == 1 and len({r["r_cov_inf"] for r in sub}) == 1
    one = {(r["M"], r["d"]): float(r["r_cov"]) for r in rows if r["S"] == "1"}
    two = {(r["M"], r["d"]): float(r["r_cov"]) for r in rows if r["S"] == "2"}
    assert all(two[k] >= one[k] for k in two)
    six = sorted((float(r["d"]), float(r["r_cov"])) for r in rows if r["M"] == "6" and r["S"] == "1")
    peak = max(six, key=lambda x: x[1])
    assert peak[0] == pytest.approx(54.29, abs=10.0)
    assert six[-1][1] < 0.7 * peak[1]
    d_inf = float(rows[0]["d_inf"])
    assert float(rows[0]["r_cov_inf"]) == pytest.approx((1 + math.sqrt(2)) / 2 * d_inf)


def test_circuit_power_rows(tmp_path):
    cfg = write_config(tmp_path, circuit={"circuit_power_dbm": [-200.0, -30.0, -20.0], "m_values": [5, 6]})
    code, out = run(tmp_path, "circuit-power", cfg)
    rows = read_rows(out)
    by = {(r["xi_dbm"], r["M"]): r for r in rows}
    for xi in ("-30", "-20"):
        assert float(by[xi, "5"]["d_star"]) == pytest.approx(float(by[xi, "6"]["d_star"]), abs=0.05)
    ratio = float(by["-20", "6"]["r_cov"]) / float(by["-30", "6"]["r_cov"])
    assert ratio == pytest.approx(1 / 3, abs=0.1)
    # xi -> 0 reproduces the unconstrained solve at the same power
    cfg2 = write_config(tmp_path, "free.yaml", rf={"transmit_power_dbm": 35.0},
                        sweep={"m_values": [6], "s_values": [1]})
    _, free = run(tmp_path, "solve-dstar", cfg2, out="free")
    ref = next(r for r in read_rows(free) if r["method"] == "Numeric")
    assert float(by["-200", "6"]["r_cov"]) == pytest.approx(float(ref["r_cov"]), rel=1e-9)
    assert float(by["-200", "6"]["d_star"]) == pytest.approx(float(ref["d_star"]), abs=1e-6)


def test_strict_truncation_exit(tmp_path):
    cfg = write_config(tmp_path, sweep={"m_values": [6], "s_values": [1], "d_min_m": 40.0, "d_max_m": 50.0},
                       planner={"r_upper_m": 30.0, "grid_step_r_m": 0.1, "grid_step_d_m": 0.1})
    code, _ = run(tmp_path, "gcd-curve", cfg)
    assert code == 0
    code, _ = run(tmp_path, "gcd-curve", cfg, "--strict")
    assert code == 3


def test_rejects_bad_flags(tmp_path):
    cfg = write_config(tmp_path, sweep=SMALL_SWEEP)
    assert run(tmp_path, "gcd-curve", cfg, "--trials", "5")[0] == 2
    assert run(tmp_path, "gcd-curve", cfg, "--threads", "0")[0] == 2


def test_csv_byte_identical_across_runs(tmp_path):
    cfg = write_config(tmp_path, sweep=SMALL_SWEEP)
    _, a = run(tmp_path, "solve-dstar", cfg, out="a")
    _, b = run(tmp_path, "solve-dstar", cfg, "--threads", "3", out="b")
    assert a.read_bytes() == b.read_bytes()
    assert b"\r\n" in a.read_bytes()


SMALL_SCHEMES = {"area_m_values": [4], "two_tier_m_values": [6], "n_realizations": 50, "n_radii": 2,
                 "cell_size_m": 4.0}


def test_compare_schemes_checkpoint_resume(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, schemes=SMALL_SCHEMES)
    code, out = run(tmp_path, "compare-schemes", cfg)
    assert code == 0
    first = out.read_bytes()
    rows = read_rows(out)
    assert {r["scheme"] for r in rows} == {"single_tier", "two_tier", "symmetric", "random"}
    assert (out.parent / "compare-schemes.checkpoint.json").exists()

    def boom(*a, **k):
        raise AssertionError("finished tasks must not be recomputed")

    monkeypatch.setattr(simkit, "compare_two_tier", boom)
    monkeypatch.setattr(simkit, "best_random_area", boom)
    code, again = run(tmp_path, "compare-schemes", cfg)
    assert code == 0 and again.read_bytes() == first
