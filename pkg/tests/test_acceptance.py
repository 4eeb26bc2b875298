"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the report lines
inline; they are also written through the terminal reporter when output is
captured.
"""

import csv
import io
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import spearmanr

from semlink.channel import eesm, flat_channel
from semlink.codec import (
    DEFAULT_TRANSFORM, LatentTensor, analyze, decode, dequantize, encode, latent_size, pad_reflect,
    quantization_step, quantize,
)
from semlink.config import ScenarioConfig
from semlink.controller import CommandMemory, retrieve_command
from semlink.harness import run_scenario, sweep
from semlink.metrics import success_rate
from semlink.transport import RATIOS, SymbolStream, num_complex_symbols, ofdm_frames, pack_latent, unpack_latent

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def report(request, capsys):
    def emit(number: int, ok: bool, detail: str, elapsed: float, limit: float):
        ok = bool(ok) and elapsed < limit
        line = f"ACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'}: {detail} [{elapsed:.2f}s < {limit:g}s]"
        with capsys.disabled():
            print("\n" + line)
        request.node.user_properties.append(("acceptance", line))
        return ok
    return emit


def _oracle(label, describe="nothing in particular"):
    return [{"trigger": "predict@*", "response": label}, {"trigger": "verify@*", "response": 1},
            {"trigger": "describe@*", "response": describe}]


# 1 -------------------------------------------------------------------------------------

def test_ac01_worked_example_arithmetic(report):
    t0 = time.perf_counter()
    lat = analyze(pad_reflect(np.zeros((704, 1024, 3)))[0])
    L = latent_size(704, 1024)
    n_sym = num_complex_symbols(L, 4)
    frames = ofdm_frames(n_sym, 64)
    stream = pack_latent(np.zeros(L, dtype=np.int64), 4)
    got = (lat.data.shape, L, n_sym, frames, stream.num_complex_symbols)
    want = ((192, 44, 64), 540_672, 67_584, 1_056, 67_584)
    ok = got == want
    assert report(1, ok, f"latent {got[0]}, L={L}, N_sym={n_sym}, N_OFDM={frames}",
                  time.perf_counter() - t0, 1.0)


# 2 -------------------------------------------------------------------------------------

def test_ac02_eesm_identities(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_flat = 0.0
    for s in np.concatenate([10 ** rng.uniform(-3, 4, 200), [1e-6, 1.0, 1e5]]):
        for beta in (0.5, 1.0, 5.0, 37.0):
            e = eesm(flat_channel(64, 10 * math.log10(s)).snrs_linear, beta)
            worst_flat = max(worst_flat, abs(e - s) / s)
    sandwich_bad = 0
    for _ in range(1000):
        snrs = 10 ** rng.uniform(-3, 4, int(rng.integers(1, 257)))
        e = eesm(snrs, float(rng.uniform(0.1, 50)))
        sandwich_bad += not (snrs.min() <= e <= snrs.max())
    ok = worst_flat <= 1e-9 and sandwich_bad == 0
    assert report(2, ok, f"flat rel err {worst_flat:.1e} (<=1e-9), sandwich violations {sandwich_bad}/1000",
                  time.perf_counter() - t0, 1.0)


# 3 -------------------------------------------------------------------------------------

def test_ac03_quantizer_bound(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst, idem_bad = 0.0, 0
    for n in RATIOS:
        for _ in range(100):
            shape = tuple(int(v) for v in rng.integers(1, 9, 3))
            y = rng.normal(rng.uniform(-5, 5), rng.uniform(0.01, 50), shape)
            q = quantize(LatentTensor(y, 1, 1), n)
            step = quantization_step(q)
            if step > 0:
                worst = max(worst, float(np.abs(dequantize(q).data - y).max() / (step / 2)))
            idem_bad += not np.array_equal(quantize(dequantize(q), n).levels, q.levels)
    ok = worst <= 1 + 1e-9 and idem_bad == 0
    assert report(3, ok, f"max |y-yhat|/(delta/2) = {worst:.6f}, idempotence failures {idem_bad}/400",
                  time.perf_counter() - t0, 5.0)


# 4 -------------------------------------------------------------------------------------

def test_ac04_pack_bit_exact(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    bad_round, bad_flip = 0, 0
    for n in RATIOS:
        b = 32 // n
        for _ in range(1000):
            count = 2 * n * int(rng.integers(1, 12))
            levels = rng.integers(0, 1 << b, count, dtype=np.int64)
            stream = pack_latent(levels, n)
            bad_round += not np.array_equal(unpack_latent(stream), levels)
            w, bit = int(rng.integers(stream.words.size)), int(rng.integers(32))
            words = stream.words.copy()
            words[w] ^= np.uint32(1 << bit)
            flipped = unpack_latent(SymbolStream(words, n, stream.num_elements))
            bad_flip += int(np.count_nonzero(flipped != levels)) != 1
    ok = bad_round == 0 and bad_flip == 0
    assert report(4, ok, f"round-trip failures {bad_round}/4000, single-flip violations {bad_flip}/4000",
                  time.perf_counter() - t0, 5.0)


# 5 -------------------------------------------------------------------------------------

def test_ac05_codec_bound(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for r in range(50):
        h, w = (int(v) for v in rng.integers(1, 258, 2))
        for k in range(2):
            n = RATIOS[(2 * r + k) % 4]
            img = rng.random((h, w, 3))
            if k:
                img = np.clip(np.cumsum(img - 0.5, axis=0) / max(1, h) + 0.5, 0, 1)
            q = encode(img, n)
            err = float(np.sum((img - decode(q)) ** 2))
            bound = DEFAULT_TRANSFORM.discarded_energy(pad_reflect(img)[0]) + q.levels.size * (quantization_step(q) / 2) ** 2
            worst = max(worst, err / bound if bound > 0 else (0.0 if err == 0 else math.inf))
    ok = worst <= 1 + 1e-6
    assert report(5, ok, f"max error/bound over 100 images, 50 resolutions = {worst:.4f}",
                  time.perf_counter() - t0, 60.0)


# 6 -------------------------------------------------------------------------------------

def test_ac06_threshold_vs_graceful(report):
    t0 = time.perf_counter()
    snrs = list(range(16))
    base = dict(case="document", mode="full_image", snr_db=snrs, seeds=list(range(50)),
                corpus=dict(kind="document", count=1, seed=7, content_w=256, content_h=192),
                channel=dict(model="awgn"), oracle=_oracle("document"))
    bcfg = ScenarioConfig.from_dict({**base, "chain": "baseline"})
    bres = run_scenario(bcfg)
    sres = run_scenario(ScenarioConfig.from_dict({**base, "chain": "semantic"}))
    rate = {s: np.mean([e.record.delivered for e in bres.ledger if e.snr_db == s]) for s in snrs}
    lo = max(s for s in snrs if rate[s] < 0.05)
    hi = min(s for s in snrs if rate[s] > 0.95)
    thr = bcfg.channel.bler_threshold_db
    mean_psnr = [np.mean([o.psnr_db for c in sres.cells if c["snr_db"] == s for o in c["outcomes"]]) for s in snrs]
    rho = spearmanr(snrs, mean_psnr).statistic
    ok = 0 < hi - lo <= 6 and abs(lo - thr) <= 6 and abs(hi - thr) <= 6 and rho >= 0.9
    assert report(6, ok, f"baseline <5% up to {lo} dB, >95% from {hi} dB (window {hi - lo} dB, threshold "
                         f"{thr} dB); semantic PSNR Spearman rho={rho:.3f}",
                  time.perf_counter() - t0, 300.0)


# 7 -------------------------------------------------------------------------------------

def test_ac07_document_bandwidth(report):
    t0 = time.perf_counter()
    common = dict(case="document", snr_db=[20], seeds=[0], corpus=dict(kind="document", count=300, seed=1),
                  oracle=_oracle("document"))
    sem = run_scenario(ScenarioConfig.from_dict({**common, "mode": "intention_aware", "chain": "semantic", "n": [4]}))
    full = run_scenario(ScenarioConfig.from_dict({**common, "mode": "full_image", "chain": "baseline"}))
    s_sym = sum(e.record.complex_symbols for e in sem.ledger)
    b_sym = sum(e.record.complex_symbols for e in full.ledger)
    ratio = s_sym / b_sym
    canny_used = all(e["tool"] == "canny" for e in sem.events if e["event"] == "select_tool")
    ok = ratio <= 0.5 and canny_used
    assert report(7, ok, f"semantic n=4 + Canny (probes included) uses {100 * ratio:.1f}% of full-frame "
                         f"baseline symbols ({s_sym} vs {b_sym})", time.perf_counter() - t0, 300.0)


# 8 -------------------------------------------------------------------------------------

def test_ac08_case1_ordering(report):
    t0 = time.perf_counter()
    from semlink.corpus import CorpusSpec, generate_corpus

    corpus = generate_corpus(CorpusSpec("receipt", 300, seed=1))
    common = dict(case="text", snr_db=[20], seeds=[0], corpus=dict(kind="receipt", count=300, seed=1),
                  oracle=_oracle("text-reading"), channel=dict(model="awgn"))
    ocr = run_scenario(ScenarioConfig.from_dict({**common, "mode": "direct_voice", "chain": "baseline"}), corpus)
    ocr_f = run_scenario(ScenarioConfig.from_dict({**common, "mode": "direct_voice", "chain": "baseline",
                                                   "filter_blurry": 0.10}), corpus)
    full = run_scenario(ScenarioConfig.from_dict({**common, "mode": "full_image", "chain": "baseline"}), corpus)
    ocr_bytes = np.mean([o.payload_bytes for o in ocr.outcomes])
    full_bytes = np.mean([o.payload_bytes for o in full.outcomes])
    sr, sr_f = success_rate(ocr.outcomes), success_rate(ocr_f.outcomes)
    kept = len(ocr_f.outcomes)
    ok = ocr_bytes < 0.01 * full_bytes and sr_f > sr and kept == 270
    assert report(8, ok, f"OCR {ocr_bytes:.0f} B vs full {full_bytes:.0f} B ({100 * ocr_bytes / full_bytes:.2f}%); "
                         f"SR {sr:.3f} -> {sr_f:.3f} after filter; kept {kept}/300",
                  time.perf_counter() - t0, 120.0)


# 9 -------------------------------------------------------------------------------------

def test_ac09_controller_trace(report):
    t0 = time.perf_counter()
    cfg = ScenarioConfig.load(CONFIGS / "trace_60s.json")
    res = run_scenario(cfg)
    falls = [e for e in res.events if e["event"] == "transition" and e["src"] == "task_active" and e["dst"] == "probing"]
    checks = [e for e in res.events if e["event"] == "check"]
    probes = [e for e in res.ledger if e.kind == "probe"]
    fall_step = falls[0]["step"] if falls else None
    after = [p for p in probes if fall_step is not None and p.step > fall_step]
    expected = math.floor(60 / cfg.check_period)
    ok = (len(falls) == 1 and falls[0]["t"] == 30.0 and len(after) == 1 and after[0].step == fall_step + 1
          and (after[0].width, after[0].height) == (256, 256) and abs(len(checks) - expected) <= 1)
    assert report(9, ok, f"{len(falls)} TaskActive->Probing at t={falls[0]['t'] if falls else None}, "
                         f"{len(after)} probe after (step {after[0].step if after else None}), "
                         f"{len(checks)} checks (expected {expected}+-1)", time.perf_counter() - t0, 1.0)


# 10 ------------------------------------------------------------------------------------

def test_ac10_ablation_modes(report):
    t0 = time.perf_counter()
    from semlink.corpus import CorpusSpec, generate_corpus

    corpus = generate_corpus(CorpusSpec("scene", 30, seed=1))
    payload = {}
    for mode in ("full_image", "intention_aware", "intention_stored", "direct_voice"):
        cfg = ScenarioConfig.load(CONFIGS / f"case3_scene_{mode}.json")
        cfg = ScenarioConfig.from_dict({**{k: v for k, v in cfg.to_dict().items() if k not in ("corpus", "responses_log")},
                                        "corpus": {"kind": "scene", "count": 30, "seed": 1}})
        res = run_scenario(cfg, corpus)
        payload[mode] = float(np.mean([o.payload_bytes for o in res.outcomes]))
    retrieved = retrieve_command(CommandMemory().add("Observe pedestrians", 0.0), "pedestrian crossing scene")
    p = payload
    ok = (p["direct_voice"] < p["intention_stored"] <= p["intention_aware"] < p["full_image"]
          and retrieved == "Observe pedestrians")
    detail = ", ".join(f"{m}={v:.0f} B" for m, v in p.items())
    assert report(10, ok, f"{detail}; retrieval -> {retrieved!r}", time.perf_counter() - t0, 120.0)


# 11 ------------------------------------------------------------------------------------

def test_ac11_sweep_determinism(report, tmp_path):
    t0 = time.perf_counter()
    cfg = ScenarioConfig.load(CONFIGS / "threshold_awgn.json")
    cfg = ScenarioConfig.from_dict({**{k: v for k, v in cfg.to_dict().items() if k not in ("corpus", "channel")},
                                    "corpus": cfg.to_dict()["corpus"], "chain": "semantic",
                                    "channel": {"model": "rayleigh"}, "n": [2, 4]})
    a = sweep(cfg, tmp_path / "a.csv")
    b = sweep(cfg, tmp_path / "b.csv")
    same = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes() and a == b
    rows = len(list(csv.DictReader(io.StringIO(a[0]))))
    assert report(11, same, f"two semantic Rayleigh sweeps ({rows} rows) byte-identical: {same}",
                  time.perf_counter() - t0, 300.0)
