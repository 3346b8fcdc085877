import csv
import io
import json
import math
import shutil
from pathlib import Path

import pytest

from qsanov import cli
from qsanov import experiments as E
from qsanov.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
BERN = lambda a: {"variant": "classical_iid", "p": [a, 1 - a]}  # noqa: E731
LAZY = {"variant": "classical_markov", "T": [[0.75, 0.25], [0.25, 0.75]]}


def cfg_of(**kw):
    raw = {"kind": "stein", "models": {"null": BERN(0.5), "reference": BERN(0.25)}, "n_values": [16, 64]}
    raw.update(kw)
    return E.parse_config(raw)


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.mark.parametrize(
    "raw,path",
    [
        ({"kind": "bogus"}, "kind"),
        ({"n_values": [4, 2]}, "n_values"),
        ({"n_values": []}, "n_values"),
        ({"eps": 1.5}, "eps"),
        ({"eps": [0.1, 1.0]}, "eps[1]"),
        ({"eps": [0.1]}, "eps"),
        ({"delta": -1}, "delta"),
        ({"format": "xml"}, "format"),
        ({"m_slices": 0}, "m_slices"),
        ({"eta": 0}, "eta"),
        ({"models": {"null": {"variant": "classical_iid", "p": [0.5, 0.6]}, "reference": BERN(0.5)}}, "models.null"),
        ({"models": {"omega": [BERN(0.3), {"variant": "nope"}], "reference": BERN(0.5)}}, "models.omega[1]"),
    ],
)
def test_config_errors_name_the_field(raw, path):
    with pytest.raises(ConfigError) as info:
        cfg_of(**raw)
    assert info.value.path == path and path in str(info.value)


def test_missing_model_reported_at_run():
    cfg = cfg_of(models={"null": BERN(0.5)})
    with pytest.raises(ConfigError, match="models.reference"):
        E.run(cfg)


def test_schedules_align_with_n():
    cfg = cfg_of(eps=[0.2, 0.1], delta=0.05)
    assert cfg.eps == [0.2, 0.1] and cfg.delta == [0.05, 0.05]


def test_config_hash_tracks_content():
    assert cfg_of().config_hash == cfg_of().config_hash
    assert cfg_of().config_hash != cfg_of(seed=1).config_hash


def test_stein_bernoulli_rows():
    res = E.run(cfg_of(n_values=[64, 1024, 4096], tolerance=0.02))
    assert res.passed
    assert [r.n for r in res.records] == [64, 1024, 4096]
    last = res.records[-1]
    assert abs(last.quantities["beta_relaxed_over_n"] + 0.143841) <= 0.02
    assert last.quantities["beta_projection_over_n"] >= last.quantities["beta_relaxed_over_n"] - 1e-12


def test_stein_identical_models():
    res = E.run(cfg_of(models={"null": BERN(0.5), "reference": BERN(0.5)}, n_values=[4, 16, 64]))
    assert res.passed
    for r in res.records:
        assert r.target == 0.0 and abs(r.gap) <= abs(math.log(0.9)) / r.n + 1e-12


def test_stein_qubit_rows_respect_converse():
    cfg = E.load_config(CONFIGS / "stein_qubit.json")
    cfg = E.ExperimentConfig(**{**cfg.__dict__, "n_values": [1, 2, 3, 4], "eps": [0.1] * 4})
    res = E.run(cfg)
    assert not any("converse" in f for f in res.failures)
    for r in res.records:
        assert r.quantities["beta_relaxed_over_n"] >= r.quantities["converse_over_n"] - 1e-9


def test_sanov_examples():
    raw = {
        "kind": "sanov",
        "models": {"omega": [BERN(0.3), BERN(0.7)], "reference": BERN(0.5)},
        "n_values": [512],
        "eps": 0.05,
    }
    res = E.run(E.parse_config(raw))
    q = res.records[0].quantities
    assert res.passed and q["mass_min"] >= 0.95 and q["ref_log_mass"] <= -0.082282 + 0.03
    raw["models"] = {"omega": [BERN(0.5)], "reference": BERN(1.0)}
    raw["n_values"], raw["eta"] = [10], 0.1
    r = E.run(E.parse_config(raw)).records[0]
    assert r.quantities["ref_log_mass"] == -math.inf and r.target == pytest.approx(-10.0)
    assert r.quantities["mass_0"] == 1 - 2**-10


def test_sanov_singleton_matches_stein_row():
    raw = {"kind": "sanov", "models": {"omega": [BERN(0.5)], "reference": BERN(0.25)}, "n_values": [512], "eps": 0.05}
    sanov = E.run(E.parse_config(raw)).records[0].quantities["ref_log_mass"]
    stein = E.run(cfg_of(n_values=[512])).records[0].quantities["beta_projection_over_n"]
    assert abs(sanov - stein) <= 0.05


def test_aep_examples():
    raw = {"kind": "aep", "models": {"null": BERN(0.5), "reference": BERN(0.25)}, "n_values": [64, 128, 256, 512], "eps": 0.2}
    res = E.run(E.parse_config(raw))
    assert res.passed and res.records[-1].quantities["mass"] >= 0.95
    raw["models"]["reference"] = BERN(0.5)
    assert all(r.quantities["mass"] == pytest.approx(1.0) for r in E.run(E.parse_config(raw)).records)
    raw["models"]["reference"] = BERN(1.0)
    raw["eps"] = 0.5
    for r in E.run(E.parse_config(raw)).records:
        assert r.quantities["mass"] == 1 - 2.0**-r.n


def test_mixing_audit_examples():
    def audit(ref, nulls=()):
        raw = {"kind": "mixing_audit", "models": {"reference": ref, "nulls": list(nulls)}, "n_values": [20], "l_values": [1, 2, 3]}
        return E.run(E.parse_config(raw))

    alphas = [r.quantities["alpha"] for r in audit(BERN(0.3)).records]
    assert alphas == [1.0, 1.0, 1.0]
    swap = audit({"variant": "classical_markov", "T": [[0, 1], [1, 0]], "pi": [0.5, 0.5]}).records
    assert all(r.quantities["alpha"] == 0.0 and r.quantities["star_mixing"] == 0 for r in swap)
    res = audit(LAZY, [BERN(0.5)])
    alpha_rows = [r for r in res.records if r.quantities["record"] == "alpha"]
    assert [r.quantities["alpha"] for r in alpha_rows] == pytest.approx([0.5, 0.75, 0.875], abs=1e-12)
    probe = [r for r in res.records if r.quantities["record"] == "hp_probe"]
    assert res.passed and probe[0].quantities["verdict"] != "violated"


def test_mixing_config_consistent_by_1024():
    res = E.run(E.load_config(CONFIGS / "mixing_lazy.json"))
    probe = [r for r in res.records if r.quantities["record"] == "hp_probe"]
    assert res.passed and {r.quantities["verdict"] for r in probe} == {"consistent"}


def test_stationary_examples():
    mix = {"variant": "finite_mixture", "weights": [0.5, 0.5], "components": [BERN(1.0), BERN(0.5)]}
    raw = {"kind": "stationary", "models": {"null": mix, "reference": BERN(0.5)}, "n_values": [512], "delta": 0.05}
    res = E.run(E.parse_config(raw))
    q = res.records[0].quantities
    assert res.passed and abs(q["beta_over_n"]) <= 0.05
    assert q["overline_s"] == pytest.approx(math.log(2)) and abs(q["log_rank_over_n"] - math.log(2)) <= 0.1
    worst = {"variant": "finite_mixture", "weights": [0.5, 0.5], "components": [BERN(0.5), BERN(1.0)]}
    raw["models"] = {"null": worst, "reference": BERN(0.25)}
    assert E.run(E.parse_config(raw)).records[0].target == pytest.approx(-0.143841, abs=1e-6)
    raw["models"] = {"null": BERN(0.5), "reference": BERN(0.25)}
    raw["n_values"], raw["tolerance"] = [64, 256], 0.1
    stat = E.run(E.parse_config(raw)).records
    stein = E.run(cfg_of(n_values=[64, 256])).records
    for a, b in zip(stat, stein):
        assert a.quantities["beta_over_n"] == pytest.approx(b.quantities["beta_relaxed_over_n"], abs=1e-12)


def test_gap_recomputable_from_rows():
    cfg = cfg_of(n_values=[8, 32, 128])
    for row in rows_of(E.render(E.run(cfg).records)):
        assert float(row["gap"]) == pytest.approx(float(row["beta_relaxed_over_n"]) - float(row["target"]), abs=1e-15)
        assert row["config_hash"] == cfg.config_hash and row["seed"] == "0"


def test_render_empty_and_order():
    assert E.render([], "csv") == "kind,n,target,gap,seed,config_hash\n"
    assert E.render([], "jsonl") == ""
    recs = E.run(cfg_of()).records
    lines = E.render(recs).splitlines()
    assert len(lines) == 3 and lines[1].startswith("stein,16,") and lines[2].startswith("stein,64,")


def test_jsonl_infinity_sentinels():
    rec = E.RunRecord("sanov", 10, {"ref_log_mass": -math.inf, "x": math.nan}, -10.0, -math.inf, 0, "h")
    obj = json.loads(E.render([rec], "jsonl"))
    assert obj["ref_log_mass"] == "-inf" and obj["gap"] == "-inf" and obj["x"] == "nan"
    assert "-inf" in E.render([rec], "csv")


def test_emit_deterministic(tmp_path):
    cfg = cfg_of(n_values=[8, 64])
    a = E.emit(E.run(cfg).records, cfg, tmp_path / "a.csv")
    b = E.emit(E.run(cfg).records, cfg, tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_cli_exit_codes(tmp_path, capsys):
    shutil.copy(CONFIGS / "stein_bernoulli.json", tmp_path / "s.json")
    out = tmp_path / "o.csv"
    assert cli.main(["stein", "--config", str(tmp_path / "s.json"), "--out", str(out), "--quiet"]) == 0
    first = out.read_bytes()
    assert cli.main(["stein", "--config", str(tmp_path / "s.json"), "--out", str(out), "--quiet"]) == 0
    assert out.read_bytes() == first
    assert cli.main(["sanov", "--config", str(tmp_path / "s.json"), "--quiet"]) == 1
    assert "kind" in capsys.readouterr().err
    assert cli.main(["stein", "--config", str(tmp_path / "missing.json")]) == 1
    raw = json.loads((tmp_path / "s.json").read_text())
    raw["tolerance"] = 1e-6
    (tmp_path / "tight.json").write_text(json.dumps(raw))
    assert cli.main(["stein", "--config", str(tmp_path / "tight.json"), "--out", str(out)]) == 2
    assert "check failed" in capsys.readouterr().out


def test_cli_overrides(tmp_path):
    shutil.copy(CONFIGS / "aep_bernoulli.json", tmp_path / "a.json")
    out = tmp_path / "a.jsonl"
    code = cli.main(["aep", "--config", str(tmp_path / "a.json"), "--out", str(out), "--format", "jsonl", "--seed", "7", "--quiet"])
    assert code == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert rows and all(r["seed"] == 7 for r in rows)
