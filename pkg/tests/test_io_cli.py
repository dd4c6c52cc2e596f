import json

import numpy as np
import pytest

from urbanlos import io
from urbanlos.cli import main
from urbanlos.citygen import preset
from urbanlos.fitting import Sig2Params, model_curve
from urbanlos.montecarlo import PlosCurve, SimulationConfig, city_for, run

SIM = ["simulate", "--env", "urban", "--layout", "ru", "--cities", "3", "--ues", "400", "--habs-max", "500",
       "--seed", "5"]


def test_city_json_roundtrip(tmp_path):
    city = city_for("rh", preset("urban"), 2)
    io.write_city(city, tmp_path / "c.json")
    back = io.read_city(tmp_path / "c.json")
    assert back.buildings == city.buildings
    assert back.highways == city.highways
    assert back.params == city.params and back.seed == city.seed


def test_city_json_rejects_outside_building():
    d = io.city_to_dict(city_for("rm", preset("urban"), 0))
    d["buildings"][0]["x"] = 999.0
    with pytest.raises(io.FormatError):
        io.city_from_dict(d)


def test_curve_csv_roundtrip():
    curve = run(SimulationConfig(preset("urban"), "rm", 500.0, 200, 2))
    text = io.format_curve(curve)
    lines = text.splitlines()
    assert lines[0].startswith("# urbanlos ") and "config_hash=" in lines[1]
    assert lines[2] == io.CURVE_HEADER and len(lines) == 3 + 91
    back = io.parse_curve(text)
    assert np.array_equal(back.los_count, curve.los_count)
    assert np.array_equal(back.los_sum, curve.los_sum)
    assert np.allclose(back.plos, curve.plos, equal_nan=True, rtol=1e-5)
    # empty bins stay empty, never 0
    empty = np.flatnonzero(curve.los_count == 0)
    assert all(lines[3 + t].split(",")[1] == "" for t in empty)


def test_analytic_curve_csv():
    curve = model_curve(Sig2Params(-4.933, 12.4, -12.83, 4.049))
    back = io.parse_curve(io.format_curve(curve))
    assert back.los_count is None
    assert np.allclose(back.plos, curve.plos, rtol=1e-5)


@pytest.mark.parametrize(
    "text",
    [
        "theta,plos\n",
        io.CURVE_HEADER + "\n" + "\n".join(f"{t},0.5,," for t in range(90)),
        io.CURVE_HEADER + "\n" + "\n".join(f"{t},1.5,," for t in range(91)),
        io.CURVE_HEADER + "\n" + "\n".join(f"{t},0.5,60,50" for t in range(91)),
    ],
)
def test_curve_csv_rejects(text):
    with pytest.raises(io.FormatError):
        io.parse_curve(text)


def test_generate(tmp_path, capsys):
    out = tmp_path / "city.json"
    assert main(["generate", "--env", "urban", "--layout", "rm", "--seed", "7", "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["buildings"]) == 500
    assert main(["generate", "--env", "urban", "--layout", "manhattan", "--seed", "7", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert len(data["buildings"]) == 484
    assert len({(b["w"], b["l"]) for b in data["buildings"]}) == 1
    assert "achieved_alpha=" in capsys.readouterr().out


def test_generate_invalid_alpha(capsys):
    rc = main(["generate", "--alpha", "1.2", "--beta", "100", "--gamma", "10", "--layout", "ru"])
    assert rc == 2
    assert "alpha must be in (0,1]" in capsys.readouterr().err


def test_generate_failure_exit_3(tmp_path, capsys):
    rc = main(["generate", "--alpha", "0.5", "--beta", "5", "--gamma", "10", "--layout", "ru"])
    assert rc == 3


def test_simulate_outputs(tmp_path):
    out = tmp_path / "curve.csv"
    assert main(SIM + ["--out", str(out), "--plot"]) == 0
    curve = io.read_curve(out)
    assert curve.total_count == 1200
    man = json.loads((tmp_path / "curve.manifest.json").read_text())
    assert man["config"]["n_cities"] == 3 and len(man["cities"]) == 3
    assert man["config_hash"] in out.read_text()
    assert (tmp_path / "curve.png").stat().st_size > 0


def test_simulate_missing_flags(capsys):
    assert main(["simulate", "--env", "urban", "--layout", "ru", "--out", "x.csv"]) == 2
    assert "--ues" in capsys.readouterr().err


def test_simulate_config_file(tmp_path):
    cfg = {"params": {"alpha": 0.3, "beta": 500, "gamma": 15}, "layout": "ru", "h_abs_max": 500,
           "n_ue": 400, "n_cities": 3, "seed": 5}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    main(["simulate", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "a.csv")])
    main(SIM + ["--out", str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    (tmp_path / "bad.json").write_text(json.dumps({**cfg, "colour": 1}))
    assert main(["simulate", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "c.csv")]) == 2


def test_simulate_no_buildings(tmp_path):
    out = tmp_path / "v.csv"
    assert main(SIM + ["--no-buildings", "--out", str(out)]) == 0
    c = io.read_curve(out)
    assert (c.plos[c.defined] == 1).all()


def test_simulate_byte_identical_across_threads(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(SIM + ["--out", str(a), "--threads", "1"])
    main(SIM + ["--out", str(b), "--threads", "2"])
    assert a.read_bytes() == b.read_bytes()


def test_city_roundtrip_through_cli(tmp_path):
    city = tmp_path / "c.json"
    main(["generate", "--env", "urban", "--layout", "ru", "--seed", "5", "--out", str(city)])
    main(["simulate", "--city", str(city), "--ues", "400", "--habs-max", "500", "--seed", "5",
          "--out", str(tmp_path / "a.csv")])
    a = io.read_curve(tmp_path / "a.csv")
    b = run(SimulationConfig(preset("urban"), "ru", 500.0, 400, 1, seed=5))
    assert np.array_equal(a.los_sum, b.los_sum) and np.array_equal(a.los_count, b.los_count)


def test_split_highway(tmp_path):
    out = tmp_path / "rh.csv"
    args = ["simulate", "--env", "urban", "--layout", "rh", "--cities", "2", "--ues", "300", "--habs-max", "500",
            "--split-highway", "--out", str(out)]
    assert main(args) == 0
    street = io.read_curve(tmp_path / "rh.street.csv")
    hw = io.read_curve(tmp_path / "rh.highway.csv")
    assert street.total_count == hw.total_count == 600
    args[4] = "ru"
    assert main(args) == 3


def test_custom_highways(tmp_path):
    (tmp_path / "hw.json").write_text(json.dumps([{"axis": "vertical", "offset": 400, "width": 80}]))
    out = tmp_path / "c.json"
    assert main(["generate", "--env", "urban", "--layout", "rh", "--highways", str(tmp_path / "hw.json"),
                 "--out", str(out)]) == 0
    for b in json.loads(out.read_text())["buildings"]:
        assert b["x"] + b["w"] <= 400 + 1e-9 or b["x"] >= 480 - 1e-9
    (tmp_path / "bad.json").write_text(json.dumps([{"axis": "vertical", "offset": 400, "width": 80},
                                                   {"axis": "horizontal", "offset": 400, "width": 80}]))
    assert main(["generate", "--env", "urban", "--layout", "rh", "--highways", str(tmp_path / "bad.json")]) == 2


def test_table2_and_compare(tmp_path, capsys):
    ref = tmp_path / "ref.csv"
    assert main(["table2", "--env", "urban", "--layout", "rm", "--out", str(ref)]) == 0
    c = io.read_curve(ref)
    assert c.plos[90] == pytest.approx(0.9903, abs=1e-4)
    assert ((c.plos > 0) & (c.plos < 1)).all()
    main(["table2", "--env", "urban", "--layout", "rm", "--model", "sig1", "--out", str(tmp_path / "s1.csv")])
    assert io.read_curve(tmp_path / "s1.csv").plos[7] > 0.1325  # monotone past theta = a = 6.55
    capsys.readouterr()

    assert main(["compare", str(ref), str(ref), "--json", str(tmp_path / "m.json")]) == 0
    assert "rmse=0 mae=0 r2=1" in capsys.readouterr().out
    shifted = PlosCurve.from_values(np.clip(c.plos + 0.1, None, 1.0))
    io.write_curve(shifted, tmp_path / "s.csv")
    main(["compare", str(tmp_path / "s.csv"), str(ref), "--theta-max", "60"])
    assert "rmse=0.1 mae=0.1" in capsys.readouterr().out


def test_table2_unknown_triple():
    with pytest.raises(SystemExit) as e:
        main(["table2", "--env", "city", "--layout", "rm"])
    assert e.value.code == 2


def test_fit_command(tmp_path, capsys):
    ref = tmp_path / "ref.csv"
    main(["table2", "--env", "suburban", "--layout", "ru", "--out", str(ref)])
    assert main(["fit", str(ref), "--out", str(tmp_path / "fit.json"), "--plot"]) == 0
    res = json.loads((tmp_path / "fit.json").read_text())
    assert res["model"] == "sig2" and res["rmse"] < 1e-6 and len(res["support"]) == 91
    assert set(res["params"]) == {"x1", "x2", "x3", "x4"}
    assert (tmp_path / "fit.png").exists()


def test_fit_insufficient_and_malformed(tmp_path, capsys):
    sparse = tmp_path / "sparse.csv"
    io.write_curve(PlosCurve.from_accumulators(np.full(91, 1.0), np.full(91, 2)), sparse)
    assert main(["fit", str(sparse)]) == 4
    bad = tmp_path / "bad.csv"
    bad.write_text("angle,p\n0,1\n")
    assert main(["fit", str(bad)]) == 2
    assert io.CURVE_HEADER in capsys.readouterr().err


def test_compare_empty_support(tmp_path):
    a = PlosCurve.from_accumulators(np.r_[np.ones(10), np.zeros(81)], np.r_[np.ones(10, int), np.zeros(81, int)])
    b = PlosCurve.from_accumulators(np.r_[np.zeros(81), np.ones(10)], np.r_[np.zeros(81, int), np.ones(10, int)])
    io.write_curve(a, tmp_path / "a.csv")
    io.write_curve(b, tmp_path / "b.csv")
    assert main(["compare", str(tmp_path / "a.csv"), str(tmp_path / "b.csv")]) == 4
