import csv
import random

import pytest
import yaml

from lvrep_pomdp.bench.cli import main
from lvrep_pomdp.bench.config import parse_config
from lvrep_pomdp.bench.runner import learning_curves, read_metrics
from lvrep_pomdp.errors import ConfigError

BASE = {
    "format": "lvrep-experiment",
    "version": 1,
    "fixture": {"name": "flip", "params": {"eta": 1.0, "horizon": 2}},
    "agent": {"L": 1, "K": 2},
    "seeds": [0],
    "variants": ["bonusOn"],
    "final_eval_episodes": 50,
}


def _write(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return path


def _data_rows(path):
    return [l for l in path.read_text().splitlines()[2:]]


def test_run_minimal(tmp_path, capsys):
    cfg = _write(tmp_path, BASE)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    metrics = out / "metrics.csv"
    assert metrics.read_text().splitlines()[0] == "# lvrep-metrics v1"
    assert len(_data_rows(metrics)) == 2
    for name in ("config.yaml", "summary.csv", "runs/bonusOn-s0.model.yaml",
                 "runs/bonusOn-s0.policy.yaml", "runs/bonusOn-s0.bonus.csv"):
        assert (out / name).exists()
    assert "medianFinalReturn" in capsys.readouterr().out


def test_run_rerun_is_byte_identical(tmp_path):
    doc = {**BASE, "seeds": [0, 1], "variants": ["bonusOn", "bonusOff", "uniformBaseline"]}
    cfg = _write(tmp_path, doc)
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert main(["run", "--config", str(cfg), "--out", str(o)]) == 0
    for f in sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file()):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f


def test_worker_pool_matches_serial(tmp_path):
    doc = {**BASE, "seeds": [0, 1], "variants": ["bonusOn", "bonusOff"]}
    serial = _write(tmp_path, doc, "s.yaml")
    pooled = _write(tmp_path, {**doc, "workers": 2}, "p.yaml")
    main(["run", "--config", str(serial), "--out", str(tmp_path / "s")])
    main(["run", "--config", str(pooled), "--out", str(tmp_path / "p")])
    assert (tmp_path / "s/metrics.csv").read_bytes() == (tmp_path / "p/metrics.csv").read_bytes()


def test_seed_override_and_env_out(tmp_path, monkeypatch):
    cfg = _write(tmp_path, {**BASE, "seeds": [0, 1]})
    monkeypatch.setenv("LVREP_OUT", str(tmp_path / "env"))
    assert main(["run", "--config", str(cfg), "--seed-override", "7"]) == 0
    rows = read_metrics(tmp_path / "env/metrics.csv")
    assert {r["runId"] for r in rows} == {"bonusOn-s7"}


def test_unknown_fixture_names_key(tmp_path, capsys):
    doc = {**BASE, "fixture": {"name": "maze"}}
    assert main(["run", "--config", str(_write(tmp_path, doc))]) != 0
    err = capsys.readouterr().err
    assert "fixture" in err and "maze" in err


@pytest.mark.parametrize("patch,needle", [
    ({"extra": 1}, "extra"),
    ({"agent": {"L": 1, "K": 2, "gamma": 0.9}}, "gamma"),
    ({"version": 2}, "version"),
    ({"seeds": [1, 1]}, "distinct"),
    ({"variants": ["bonusOn", "greedy"]}, "variants"),
])
def test_config_validation(tmp_path, capsys, patch, needle):
    assert main(["run", "--config", str(_write(tmp_path, {**BASE, **patch}))]) == 2
    assert needle in capsys.readouterr().err


def test_config_fixture_file(tmp_path):
    assert main(["fixtures", "--out", str(tmp_path)]) == 0
    doc = {**BASE, "fixture": {"file": "flip.yaml"}}
    cfg, pomdp = parse_config(doc, tmp_path)
    assert pomdp.n_states == 2 and cfg.agent.m == 2
    with pytest.raises(ConfigError):
        parse_config({**BASE, "fixture": {"file": "x.yaml", "name": "flip"}})


def test_verify_flip_ok(tmp_path, capsys):
    assert main(["verify", "--fixture", "flip", "--L", "1", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "ok" in out
    rows = list(csv.DictReader(open(tmp_path / "residuals.csv")))
    assert all(float(r["maxResidual"]) <= 1e-8 for r in rows)


def test_verify_noisy_flip_strict_fails(capsys):
    assert main(["verify", "--fixture", "flip", "--param", "eta=0.8", "--strict"]) == 1
    assert "gap" in capsys.readouterr().out


def test_verify_zero_reward(tmp_path):
    args = ["verify", "--fixture", "gridmask", "--param", "zero_reward=true", "--L", "1",
            "--policy", "stochastic:2", "--out", str(tmp_path)]
    assert main(args) == 0
    rows = list(csv.DictReader(open(tmp_path / "residuals.csv")))
    assert all(float(r["maxResidual"]) == 0.0 for r in rows)


def test_verify_bad_policy(capsys):
    assert main(["verify", "--fixture", "flip", "--policy", "greedy"]) == 2


def test_verify_is_deterministic(capsys):
    args = ["verify", "--fixture", "lock", "--L", "2", "--policy", "random:1"]
    main(args)
    first = capsys.readouterr().out
    main(args)
    assert capsys.readouterr().out == first


def _metrics(tmp_path, rows, name="m.csv"):
    path = tmp_path / name
    lines = ["# lvrep-metrics v1", "runId,episode,return,planningValue,modelTV,meanBonus,wallClockMs"]
    lines += [f"{r},{e},{v},,,,0.0" for r, e, v in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_plot_data_two_variants(tmp_path):
    rows = [(f"{v}-s{s}", e, float(s + e)) for v in ("bonusOn", "bonusOff") for s in (0, 1)
            for e in (1, 2)]
    path = _metrics(tmp_path, rows)
    assert main(["plot-data", str(path), "--out", str(tmp_path / "c")]) == 0
    files = sorted(p.name for p in (tmp_path / "c").iterdir())
    assert files == ["curve_bonusOff.csv", "curve_bonusOn.csv"]
    lines = (tmp_path / "c/curve_bonusOn.csv").read_text().splitlines()
    assert lines[0] == "episode,mean,stderr,nRuns"
    assert lines[1] == "1,1.5,0.5,2"


def test_plot_data_single_run_zero_stderr(tmp_path):
    path = _metrics(tmp_path, [("bonusOn-s0", e, 0.3 * e) for e in (1, 2, 3)])
    curves = learning_curves(read_metrics(path))
    assert [pt[2] for pt in curves["bonusOn"]] == [0.0, 0.0, 0.0]


def test_plot_data_order_independent(tmp_path):
    rng = random.Random(0)
    rows = [(f"{v}-s{s}", e, rng.random()) for v in ("bonusOn", "uniformBaseline")
            for s in range(4) for e in range(1, 6)]
    shuffled = rows[:]
    rng.shuffle(shuffled)
    a = _metrics(tmp_path, rows, "a.csv")
    b = _metrics(tmp_path, shuffled, "b.csv")
    main(["plot-data", str(a), "--out", str(tmp_path / "ca")])
    main(["plot-data", str(b), "--out", str(tmp_path / "cb")])
    for name in ("curve_bonusOn.csv", "curve_uniformBaseline.csv"):
        assert (tmp_path / "ca" / name).read_bytes() == (tmp_path / "cb" / name).read_bytes()


def test_plot_data_schema_mismatch(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# lvrep-metrics v2\nrunId,episode\n")
    assert main(["plot-data", str(path)]) != 0
    path.write_text("# lvrep-metrics v1\nrunId,episode,return\nx,1,0\n")
    assert main(["plot-data", str(path)]) != 0


def test_fixtures_lists_builtins(capsys):
    assert main(["fixtures"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in ("flip", "lock", "gridmask"))
