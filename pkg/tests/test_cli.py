import csv
import json

import pytest

from tailcast.cli import main


@pytest.fixture
def sim(tmp_path):
    out = tmp_path / "sim.csv"
    rc = main(["simulate", "--model", "ar", "--phi", "0.6", "--family", "cauchy", "--n", "3000", "--seed", "5",
               "--out", str(out)])
    assert rc == 0
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_writes_csv_and_sidecar(sim):
    rows = _rows(sim)
    assert len(rows) == 3000 and set(rows[0]) == {"t", "value"}
    meta = json.loads(sim.with_suffix(".json").read_text())
    assert meta["generator"] == "numpy.PCG64" and meta["config"]["seed"] == 5


def test_seed_env_overrides_config(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": "ar", "phi": [0.3], "n": 100, "seed": 1, "family": "gaussian"}))
    monkeypatch.setenv("TAILCAST_SEED", "9")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a.csv")]) == 0
    assert json.loads((tmp_path / "a.json").read_text())["config"]["seed"] == 9
    # An explicit flag still wins.
    assert main(["simulate", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "b.csv")]) == 0
    assert json.loads((tmp_path / "b.json").read_text())["config"]["seed"] == 2


def test_fit_ar_output(sim, tmp_path):
    out = tmp_path / "fit.json"
    assert main(["fit-ar", "--data", str(sim), "--order", "1", "--loss", "lad", "--out", str(out)]) == 0
    fit = json.loads(out.read_text())
    assert set(fit) == {"phi", "order", "loss", "n"}
    assert abs(fit["phi"][0] - 0.6) < 0.05


def test_fit_farima_output(sim, tmp_path):
    out = tmp_path / "ff.json"
    assert main(["fit-farima", "--data", str(sim), "--out", str(out)]) == 0
    assert set(json.loads(out.read_text())) == {"alpha_hat", "xi_hat", "d_hat", "n"}


def test_lambda_opt_commands(tmp_path):
    out = tmp_path / "l.json"
    assert main(["lambda-opt", "--model", "ar1", "--phi", "0.5", "--alpha", "1.5", "--h", "2", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["lambda_opt"] == pytest.approx(0.125)
    assert main(["lambda-opt", "--model", "ma", "--coeffs", "1,1", "--alpha", "1", "--p-eps", "1", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["lambda_opt"] == pytest.approx(0.5)
    grid = tmp_path / "g.csv"
    assert main(["lambda-opt-grid", "--d-grid", "0.1,0.3", "--alpha-grid", "1.2,1.8", "--K", "5000",
                 "--out", str(grid)]) == 0
    rows = _rows(grid)
    assert [r["lambda"] == "" for r in rows] == [False, False, True, False]


def test_predict_and_report(sim, tmp_path):
    pred = tmp_path / "pred.csv"
    assert main(["predict", "--data", str(sim), "--model", "ar", "--order", "1", "--h", "1", "--p", "0.9",
                 "--train-len", "1500", "--out", str(pred)]) == 0
    rows = _rows(pred)
    assert set(rows[0]) == {"t", "score", "alarm", "outcome"}
    assert int(rows[0]["t"]) == 1500 and rows[-1]["outcome"] == ""
    rep, roc = tmp_path / "rep.json", tmp_path / "roc.csv"
    assert main(["report", "--predictions", str(pred), "--out", str(rep), "--roc", str(roc)]) == 0
    body = json.loads(rep.read_text())
    assert body["n_pending_excluded"] == 1
    assert sum(body["counts"].values()) == len(rows) - 1
    assert _rows(roc)[0]["fpr"] == "0.0"


def test_backtest_cli_deterministic(sim, tmp_path):
    cfg = tmp_path / "bt.json"
    cfg.write_text(json.dumps({"window_len": 1000, "stride": 200, "horizons": [1, 2], "levels": [0.9],
                               "models": [{"type": "baseline"}, {"type": "ar", "order": 2, "loss": "ols"}]}))
    for d in ("r1", "r2"):
        assert main(["backtest", "--config", str(cfg), "--data", str(sim), "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "r1/report.json").read_bytes() == (tmp_path / "r2/report.json").read_bytes()


def test_exit_codes(sim, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"nonsense": 1}')
    assert main(["backtest", "--config", str(bad), "--data", str(sim)]) == 2
    assert main(["fit-ar", "--data", str(tmp_path / "missing.csv")]) == 3
    assert main(["lambda-opt", "--model", "ar1", "--phi", "1.5"]) == 2
    assert main(["not-a-command"]) == 2
    strict = tmp_path / "strict.json"
    strict.write_text('{"window_len": 1000, "stride": 100, "max_skip_fraction": 0.0, '
                      '"models": [{"type": "ar", "order": 2, "loss": "ols"}]}')
    flat = tmp_path / "flat.csv"
    flat.write_text("timestamp,value\n" + "".join(f"{i},1.0\n" for i in range(1500)))
    assert main(["backtest", "--config", str(strict), "--data", str(flat), "--out", str(tmp_path / "o")]) == 4
