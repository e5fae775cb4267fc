import csv
import json
import shutil
import subprocess

import numpy as np
import pytest
import yaml

from tvlob import LiquidityProfile, TimeGrid, dp_value, solve
from tvlob.cli import run

OW = {
    "profile": {"family": "constant", "params": {"kappa": 1.0}, "rho": 2.0, "horizon": 1.0},
    "order": {"x": 100.0, "delta": 0.0},
    "grid": {"N": 1000},
}


def write_config(tmp_path, config, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(config))
    return path


def invoke(tmp_path, command, config, *extra, out="out"):
    cfg = write_config(tmp_path, config) if isinstance(config, dict) else config
    out_dir = tmp_path / out
    code = run([command, "--config", str(cfg), "--out", str(out_dir), *extra])
    summary = json.loads((out_dir / "summary.json").read_text())
    return code, summary, out_dir


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_solve_constant_example(tmp_path):
    code, summary, out = invoke(tmp_path, "solve", OW)
    assert code == 0 and "error" not in summary
    header, rows = read_csv(out / "barrier.csv")
    assert header == ["t", "c"]
    assert float(rows[0][1]) == pytest.approx(3.0, rel=0.02)
    assert rows[-1][1] == "0"
    header, rows = read_csv(out / "strategy.csv")
    assert header == ["t", "trade"]
    trades = np.array([float(r[1]) for r in rows])
    assert trades[0] == pytest.approx(25, rel=0.01) and trades[-1] == pytest.approx(25, rel=0.01)
    res = summary["result"]
    assert res["value"] == pytest.approx(2500, rel=5e-3)
    assert res["total_cost"] == pytest.approx(res["breakdown"]["total"])
    assert res["diagnostics"]["max_pieces"] >= 1
    assert summary["config"]["order"]["x"] == 100.0


def test_solve_x_zero(tmp_path):
    cfg = {**OW, "order": {"x": 0.0}, "grid": {"N": 20}}
    code, summary, out = invoke(tmp_path, "solve", cfg)
    assert code == 0
    _, rows = read_csv(out / "strategy.csv")
    assert all(float(r[1]) == 0.0 for r in rows)
    assert summary["result"]["total_cost"] == 0.0


def test_infinite_barrier_sentinel(tmp_path):
    cfg = {**OW, "profile": {"family": "exponential", "params": {"kappa": 1.0, "nu": -1.5}, "rho": 2.0,
                             "horizon": 1.0}, "grid": {"N": 10}}
    code, _, out = invoke(tmp_path, "solve", cfg)
    assert code == 0
    _, rows = read_csv(out / "barrier.csv")
    assert [r[1] for r in rows[:-1]] == ["inf"] * 10


@pytest.mark.parametrize("kappa", [0.0, -1.0])
def test_bad_kappa_names_the_field(tmp_path, capsys, kappa):
    cfg = {**OW, "profile": {**OW["profile"], "params": {"kappa": kappa}}}
    code, summary, _ = invoke(tmp_path, "solve", cfg)
    assert code != 0
    assert summary["error"]["type"] == "ConfigError"
    assert "profile.params.kappa" in summary["error"]["message"]
    assert "profile.params.kappa" in capsys.readouterr().err


def test_parse_error_has_line_context(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("profile:\n  family: constant\n  rho: [1, 2\norder:\n  x: 1\n")
    code, summary, _ = invoke(tmp_path, "solve", bad)
    assert code == 2
    msg = summary["error"]["message"]
    assert "bad.yaml:" in msg and "rho: [1, 2" in msg


def test_missing_block_and_file(tmp_path):
    code, summary, _ = invoke(tmp_path, "solve", {"profile": OW["profile"], "grid": {"N": 3}})
    assert code == 2 and "order" in summary["error"]["message"]
    code, summary, _ = invoke(tmp_path, "solve", tmp_path / "nope.yaml")
    assert code == 2


def test_set_override(tmp_path):
    code, summary, _ = invoke(tmp_path, "solve", OW, "--set", "order.x=0", "--set", "grid.N=5")
    assert code == 0
    assert summary["config"]["grid"]["N"] == 5 and summary["result"]["value"] == 0.0
    code, summary, _ = invoke(tmp_path, "solve", OW, "--n", "4", out="o2")
    assert summary["config"]["grid"]["N"] == 4
    code, summary, _ = invoke(tmp_path, "solve", OW, "--set", "order.x", out="o3")
    assert code == 2


@pytest.mark.parametrize("profile, regime", [
    ({"family": "exponential", "params": {"kappa": 1.0, "nu": -2.5}}, "PriceManipulation"),
    ({"family": "constant", "params": {"kappa": 1.0}}, "Clean"),
    # thresholds for kappa=1, rho=2, T=1: PM below -0.8
    ({"family": "straight-line", "params": {"kappa": 1.0, "m": -0.9}}, "PriceManipulation"),
    ({"family": "straight-line", "params": {"kappa": 1.0, "m": -0.7}}, "TransactionTriggered"),
])
def test_classify(tmp_path, profile, regime):
    cfg = {"profile": {**profile, "rho": 2.0, "horizon": 1.0}, "numerics": {"samples": 2001}}
    code, summary, _ = invoke(tmp_path, "classify", cfg)
    assert code == 0
    c = summary["result"]["classification"]
    assert c["regime"] == regime
    if regime == "PriceManipulation":
        assert c["witness_cost"] < 0 and c["t"] is not None


def test_converge_constant(tmp_path):
    cfg = {**OW, "grid": {"N": [1, 10, 100, 1000]}, "numerics": {"panels": 1000, "samples": 1000}}
    code, summary, out = invoke(tmp_path, "converge", cfg)
    assert code == 0
    header, rows = read_csv(out / "converge.csv")
    assert header[:4] == ["N", "dp_value", "reference_value", "rel_gap"] and header[-1] == "wall_time"
    assert [r[0] for r in rows] == ["1", "10", "100", "1000"]
    gaps = [float(r[3]) for r in rows]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert gaps[0] == max(gaps)
    assert float(rows[0][2]) == pytest.approx(2500.0, rel=1e-12)


def test_converge_exponential(tmp_path):
    cfg = {**OW, "profile": {"family": "exponential", "params": {"kappa": 1.0, "nu": 0.5}, "rho": 2.0,
                             "horizon": 1.0},
           "numerics": {"panels": 2000, "samples": 2000}, "converge": {"timing": False}}
    code, summary, out = invoke(tmp_path, "converge", cfg)
    assert code == 0
    assert summary["result"]["rows"][0]["rel_gap"] <= 0.01
    header, _ = read_csv(out / "converge.csv")
    assert "wall_time" not in header and header[4] == "barrier_gap_t=0"


def test_converge_needs_reference_outside_clean(tmp_path):
    cfg = {**OW, "profile": {"family": "exponential", "params": {"kappa": 1.0, "nu": -1.5}, "rho": 2.0,
                             "horizon": 1.0}, "grid": {"N": [10]}, "numerics": {"samples": 500}}
    code, summary, _ = invoke(tmp_path, "converge", cfg)
    assert code == 2 and "reference_value" in summary["error"]["message"]
    cfg["converge"] = {"reference_value": 1.0, "timing": False}
    code, summary, _ = invoke(tmp_path, "converge", cfg, out="o2")
    assert code == 0


def test_evaluate_own_strategy(tmp_path):
    cfg = {**OW, "grid": {"N": 50}}
    code, summary, out = invoke(tmp_path, "solve", cfg)
    code, ev, _ = invoke(tmp_path, "evaluate", cfg, "--strategy", str(out / "strategy.csv"), out="ev")
    assert code == 0
    p = LiquidityProfile.constant(1.0, 2.0, 1.0)
    ref = dp_value(solve(p, TimeGrid.uniform(p, 50)), 0, 0.0, 100.0)
    assert ev["result"]["breakdown"]["temporary"] == pytest.approx(ref, rel=1e-8)
    assert ev["result"]["identity_cost"] == pytest.approx(ref, rel=1e-6)


def _write_strategy(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) for v in r) + "\n")


def test_evaluate_twap_not_better_than_optimal(tmp_path):
    t = np.linspace(0, 1, 51)
    _write_strategy(tmp_path / "twap.csv", ["t", "trade"], zip(t, np.full(51, 100 / 51)))
    cfg = {**OW, "grid": {"N": 50}}
    code, ev, _ = invoke(tmp_path, "evaluate", cfg, "--strategy", str(tmp_path / "twap.csv"))
    assert code == 0
    assert ev["result"]["breakdown"]["temporary"] >= 2500.0 * 0.995
    p = LiquidityProfile.constant(1.0, 2.0, 1.0)
    assert ev["result"]["breakdown"]["temporary"] >= dp_value(solve(p, TimeGrid.uniform(p, 50)), 0, 0.0, 100.0)


def test_evaluate_dynamic_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    t = np.linspace(0, 1, 11)
    cfg = {"profile": {"family": "straight-line", "params": {"kappa": 1.0, "m": 0.5}, "rho": 2.0,
                       "horizon": 1.0, "gamma": 0.3},
           "order": {"x": 0.0, "A0": 10.0, "B0": 10.0}}
    for i in range(5):
        buys = rng.uniform(0, 2, 11) * (rng.uniform(size=11) < 0.6)
        sells = rng.uniform(0, 1, 11)
        sells *= buys.sum() / sells.sum()
        path = tmp_path / f"rt{i}.csv"
        _write_strategy(path, ["t", "buy", "sell"], zip(t, buys, sells))
        code, ev, _ = invoke(tmp_path, "evaluate", cfg, "--variant", "dynamic", "--strategy", str(path), out=f"o{i}")
        assert code == 0
        r = ev["result"]
        assert r["total_cost"] >= -1e-9
        assert r["buy_leg"]["volume"] == pytest.approx(r["sell_leg"]["volume"], rel=1e-12)


def test_evaluate_errors(tmp_path):
    t = np.linspace(0, 1, 6)
    _write_strategy(tmp_path / "s.csv", ["t", "trade"], zip(t, [1, -1, 0, 0, 0, 0]))
    cfg = {**OW, "grid": {"N": 5}}
    code, ev, _ = invoke(tmp_path, "evaluate", cfg, "--strategy", str(tmp_path / "s.csv"))
    assert code == 1 and ev["error"]["type"] == "PreconditionError"
    # the zero-spread variant allows sells
    code, ev, _ = invoke(tmp_path, "evaluate", cfg, "--variant", "zero", "--strategy", str(tmp_path / "s.csv"),
                         out="o2")
    assert code == 0 and "identity_cost" in ev["result"]
    code, ev, _ = invoke(tmp_path, "evaluate", {**OW, "grid": {"N": 4}}, "--strategy", str(tmp_path / "s.csv"),
                         out="o3")
    assert code == 2 and "grid" in ev["error"]["message"]
    _write_strategy(tmp_path / "h.csv", ["time", "trade"], zip(t, t))
    code, ev, _ = invoke(tmp_path, "evaluate", cfg, "--strategy", str(tmp_path / "h.csv"), out="o4")
    assert code == 2 and "header" in ev["error"]["message"]


def test_barrier_command(tmp_path):
    cfg = {**OW, "grid": {"N": 4}, "numerics": {"panels": 200, "samples": 200}}
    code, summary, out = invoke(tmp_path, "barrier", cfg)
    assert code == 0
    _, rows = read_csv(out / "barrier.csv")
    np.testing.assert_allclose([float(r[1]) for r in rows], [3, 2.5, 2, 1.5, 0], rtol=1e-12)
    assert summary["result"]["infinite_nodes"] == 0


def test_determinism(tmp_path):
    cfg = {**OW, "grid": {"N": [5, 50]}, "numerics": {"panels": 200, "samples": 200},
           "converge": {"timing": False}}
    path = write_config(tmp_path, cfg)
    for cmd in ("solve", "converge"):
        args = ["--set", "grid.N=40"] if cmd == "solve" else []
        run([cmd, "--config", str(path), "--out", str(tmp_path / "a"), *args])
        run([cmd, "--config", str(path), "--out", str(tmp_path / "b"), *args])
    for name in ("summary.json", "barrier.csv", "strategy.csv", "converge.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_exit_code_iff_error(tmp_path):
    for cfg, extra in [(OW, ["--n", "3"]), ({**OW, "order": {"x": -1}}, []), ({"profile": {}}, [])]:
        code, summary, _ = invoke(tmp_path, "solve", cfg, *extra)
        assert (code == 0) == ("error" not in summary)


@pytest.mark.skipif(shutil.which("tvlob") is None, reason="console script not installed")
def test_console_script(tmp_path):
    path = write_config(tmp_path, {**OW, "grid": {"N": 10}})
    proc = subprocess.run(["tvlob", "solve", "--config", str(path), "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "summary.json").exists()
