import csv
import io
import json

import numpy as np
import pytest

from semlink.config import ScenarioConfig
from semlink.controller import PROBING, TASK_ACTIVE
from semlink.errors import ConfigError, OracleScriptGap
from semlink.harness import (
    CSV_COLUMNS, cells, command_focus, parse_total, run_scenario, summary_path, sweep,
)
from semlink.metrics import success_rate
from semlink.tools import Detection

TINY = dict(content_w=128, content_h=96)
SCENE = [{"trigger": "predict@*", "response": "scene"}, {"trigger": "verify@*", "response": 1},
         {"trigger": "describe@*", "response": "pedestrian crossing scene"}]


def oracle(label):
    return [{"trigger": "predict@*", "response": label}, {"trigger": "verify@*", "response": 1},
            {"trigger": "describe@*", "response": "something"}]


def config(**kw):
    doc = dict(case="document", mode="full_image", chain="baseline", snr_db=[20], seeds=[0],
               corpus=dict(kind="document", count=2, seed=1, **TINY), oracle=oracle("document"),
               channel=dict(model="awgn"))
    doc.update(kw)
    return ScenarioConfig.from_dict(doc)


# -- ledger and modes ---------------------------------------------------------------

@pytest.mark.parametrize("mode", ["full_image", "intention_aware", "intention_stored", "direct_voice"])
def test_ledger_completeness(mode):
    cfg = config(mode=mode, snr_db=[5, 20], seeds=[0, 1], frames_per_item=3, memory=["look at the chart"])
    res = run_scenario(cfg)
    assert len(res.outcomes) == 2 * 2 * 2
    # each session's outcome carries exactly the transmissions it logged
    assert sum(len(o.records) for o in res.outcomes) == len(res.ledger)
    assert sorted(map(id, (r for o in res.outcomes for r in o.records))) == sorted(map(id, res.records))


def test_full_image_runs_no_tool_and_no_probe():
    res = run_scenario(config(mode="full_image"))
    assert all(e.kind == "task" for e in res.ledger)
    assert all((e.height, e.width) == (124, 166) for e in res.ledger)
    assert not [e for e in res.events if e["event"] == "select_tool"]


def test_direct_voice_never_probes():
    res = run_scenario(config(mode="direct_voice", frames_per_item=8))
    assert all(e.kind == "task" for e in res.ledger)


def test_intention_aware_probes_are_256():
    res = run_scenario(config(mode="intention_aware"))
    probes = [e for e in res.ledger if e.kind == "probe"]
    assert len(probes) == 2
    assert all((e.width, e.height) == (256, 256) for e in probes)


def test_direct_voice_text_is_small_utf8():
    cfg = config(case="text", mode="direct_voice", corpus=dict(kind="receipt", count=10, seed=2),
                 oracle=oracle("text-reading"))
    res = run_scenario(cfg)
    assert all(e.record.chain == "text" for e in res.ledger)
    assert np.mean([e.record.payload_bytes for e in res.ledger]) < 1024


def test_baseline_far_below_threshold_fails():
    cfg = config(snr_db=[-10], seeds=[0, 1, 2], channel=dict(model="awgn"))
    res = run_scenario(cfg)
    assert not any(e.record.delivered for e in res.ledger)
    assert success_rate(res.outcomes) == 0.0


def test_baseline_high_snr_succeeds():
    cfg = config(corpus=dict(kind="document", count=3, seed=1), snr_db=[30])
    res = run_scenario(cfg)
    assert success_rate(res.outcomes) == 1.0


def test_fallback_probe_at_next_step():
    k = 9
    script = [{"trigger": "predict@*", "response": "document"},
              {"trigger": f"verify@{k}", "response": 0}, {"trigger": "verify@*", "response": 1}]
    cfg = config(mode="intention_aware", oracle=script, frames_per_item=20,
                 corpus=dict(kind="document", count=1, seed=1, **TINY), frame_interval=1.0)
    res = run_scenario(cfg)
    trans = [e for e in res.events if e["event"] == "transition"]
    assert [(e["src"], e["dst"], e["step"]) for e in trans] == [(TASK_ACTIVE, PROBING, k)]
    probe_steps = [e.step for e in res.ledger if e.kind == "probe"]
    assert probe_steps == [0, k + 1]


def test_prediction_failure_keeps_probing():
    script = [{"trigger": "predict@0", "response": {"error": "timeout"}},
              {"trigger": "predict@*", "response": "document"}, {"trigger": "verify@*", "response": 1}]
    cfg = config(mode="intention_aware", oracle=script, frames_per_item=6, frame_interval=0.5,
                 corpus=dict(kind="document", count=1, seed=1, **TINY))
    res = run_scenario(cfg)
    probes = [(e.step, e.t) for e in res.ledger if e.kind == "probe"]
    assert probes == [(0, 0.0), (2, 1.0)]
    assert [e.kind for e in res.ledger].count("task") >= 1


def test_oracle_gap_names_step():
    cfg = config(mode="intention_aware", oracle=[{"trigger": "predict@0", "response": "document"}])
    with pytest.raises(OracleScriptGap) as exc:
        run_scenario(cfg)
    assert exc.value.kind == "verify" and exc.value.step == 0


def test_stored_mode_uses_memory():
    cfg = config(case="scene", mode="intention_stored", oracle=SCENE, memory=["Observe pedestrians"],
                 corpus=dict(kind="scene", count=3, seed=1))
    res = run_scenario(cfg)
    got = [e["command"] for e in res.events if e["event"] == "retrieve"]
    assert got == ["Observe pedestrians"] * 3


def test_scene_modes_crop_ordering():
    common = dict(case="scene", oracle=SCENE, memory=["Observe pedestrians"],
                  corpus=dict(kind="scene", count=4, seed=9), probe_chain="baseline")
    areas = {}
    for mode in ("intention_aware", "intention_stored", "direct_voice"):
        res = run_scenario(config(mode=mode, **common))
        areas[mode] = [e.width * e.height for e in res.ledger if e.kind == "task"]
    for a, s, d in zip(areas["intention_aware"], areas["intention_stored"], areas["direct_voice"]):
        assert d <= s <= a


def test_responses_log(tmp_path):
    path = tmp_path / "resp.jsonl"
    cfg = config(case="scene", mode="intention_aware", oracle=SCENE, responses_log=str(path),
                 corpus=dict(kind="scene", count=2, seed=1))
    run_scenario(cfg)
    lines = [json.loads(l) for l in path.read_text().splitlines()]
    assert len(lines) == 2 and all("response" in l for l in lines)


# -- helpers ------------------------------------------------------------------------------

def test_command_focus():
    black = Detection(0, 0, 1, 1, 0.9, "person", ("black",))
    red = Detection(0, 0, 1, 1, 0.9, "person", ("red",))
    dog = Detection(0, 0, 1, 1, 0.9, "dog")
    f = command_focus("Observe the person in black clothing")
    assert f(black) and not f(red) and not f(dog)
    g = command_focus("Observe pedestrians")
    assert g(black) and g(red) and not g(dog)
    assert command_focus("read this") is None
    assert command_focus(None) is None


def test_parse_total():
    assert parse_total("SHOP\nTOTAL 12.50\n") == "12.50"
    assert parse_total("T0TAL 12.50") == ""


def test_cell_cross_product():
    cfg = config(snr_db=[0, 5, 10, 15], seeds=list(range(50)), n=[2, 4])
    assert len(cells(cfg)) == 4 * 50 * 2


# -- sweep ----------------------------------------------------------------------------------

def test_sweep_rows_and_determinism(tmp_path):
    cfg = config(snr_db=[0, 5, 10, 15], seeds=list(range(50)),
                 corpus=dict(kind="document", count=1, seed=1, **TINY))
    main, summary = sweep(cfg, tmp_path / "a.csv")
    again, summary2 = sweep(cfg, tmp_path / "b.csv")
    assert main == again and summary == summary2
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert summary_path(tmp_path / "a.csv").exists()
    rows = list(csv.DictReader(io.StringIO(main)))
    assert len(rows) == 200
    assert tuple(rows[0]) == CSV_COLUMNS
    keys = [(float(r["snr_db"]), int(r["seed"])) for r in rows]
    assert keys == sorted(keys)


def test_sweep_semantic_psnr_rises(tmp_path):
    cfg = config(chain="semantic", snr_db=[0, 10, 20], seeds=[0, 1],
                 corpus=dict(kind="document", count=1, seed=1, **TINY))
    rows = list(csv.DictReader(io.StringIO(sweep(cfg)[0])))
    by_snr = {}
    for r in rows:
        by_snr.setdefault(float(r["snr_db"]), []).append(float(r["psnr_db"]))
    means = [np.mean(by_snr[s]) for s in sorted(by_snr)]
    assert means == sorted(means)


def test_master_seed_env(monkeypatch):
    monkeypatch.setenv("SEMLINK_SEED", "77")
    assert config().master_seed == 77


def test_master_seed_changes_rayleigh_results():
    a = sweep(config(chain="semantic", channel=dict(model="rayleigh"), master_seed=1))[0]
    b = sweep(config(chain="semantic", channel=dict(model="rayleigh"), master_seed=2))[0]
    assert a != b


# -- config --------------------------------------------------------------------------------

@pytest.mark.parametrize("bad", [
    dict(case="poem"), dict(mode="telepathy"), dict(chain="pigeon"), dict(snr_db=[]), dict(seeds=[]),
    dict(n=[3]), dict(corpus_dir="x"), dict(check_period=0), dict(filter_blurry=1.5),
    dict(channel=dict(model="rician")), dict(channel=dict(k=4, num_taps=8)), dict(unknown_key=1),
    dict(baseline=dict(bits_per_symbol=5)),
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        config(**bad)


def test_config_load_relative_oracle(tmp_path):
    (tmp_path / "o.json").write_text(json.dumps({"records": oracle("document")}))
    doc = dict(case="document", mode="full_image", chain="baseline", snr_db=[20], seeds=[0],
               corpus=dict(kind="document", count=1), oracle="o.json")
    (tmp_path / "c.json").write_text(json.dumps(doc))
    cfg = ScenarioConfig.load(tmp_path / "c.json")
    assert cfg.oracle[0]["response"] == "document"


def test_config_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        ScenarioConfig.load(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        ScenarioConfig.load(tmp_path / "bad.json")
