"""Scenario runner: corpus -> controller -> tools -> chain -> task oracle.

Every transmission, probes included, lands in the ledger exactly once.  A
sweep cell is one ``(snr, seed, n)`` triple; each cell derives its random
streams from ``(master_seed, cell index)`` so cells are independent and
their results can be assembled in any order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import codec
from .channel import ChannelRealization, flat_channel, sample_channel
from .config import ScenarioConfig
from .controller import (
    CAPTURE_PROBE, CAPTURE_TASK, CONSISTENCY_CHECK, SELECT_TOOL, CommandMemory, Delta, IntentController,
    ProbeResult, ScriptedOracle, TaskSpace, Tick, Voice, retrieve_command, select_tool,
)
from .corpus import CLOTHING, SCENE_CATEGORIES, CorpusItem, generate_corpus, load_corpus
from .errors import OracleScriptGap
from .imaging import jpeg_bytes, jpeg_decode
from .metrics import TaskOutcome, bandwidth_summary, default_synonyms, mentioned, object_coverage, psnr
from .textutil import token_set
from .tools import (
    Detection, ReferenceDetector, ReferenceOcr, ToolResult, default_registry, downsample_probe,
    filter_by_scores, image_key, sharpness_score,
)
from .transport import TransmissionRecord, baseline_transmit, semantic_record, semantic_transmit, text_transmit

log = logging.getLogger(__name__)

CSV_COLUMNS = ("scenario", "chain", "snr_db", "n", "payload_bytes", "complex_symbols", "delivered",
               "psnr_db", "success", "coverage", "seed", "items", "probes")
SUMMARY_COLUMNS = ("scenario", "chain", "count", "total_bytes", "mean_bytes", "bytes_p25", "bytes_p50",
                   "bytes_p75", "total_symbols", "mean_symbols", "symbols_p25", "symbols_p50", "symbols_p75")
DEFAULT_VOICE = {"text": "Read the text on this receipt", "document": "Look at this document"}


@dataclass(frozen=True)
class LedgerEntry:
    scenario: str
    cell: int
    snr_db: float
    seed: int
    n: int
    item: str
    step: int
    t: float
    kind: str  # probe | task
    width: int
    height: int
    record: TransmissionRecord


@dataclass
class ScenarioResult:
    outcomes: list[TaskOutcome] = field(default_factory=list)
    ledger: list[LedgerEntry] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    cells: list[dict] = field(default_factory=list)

    @property
    def records(self) -> list[TransmissionRecord]:
        return [e.record for e in self.ledger]


# -- corpus and reference engines -------------------------------------------------

def _detections(ann: dict) -> list[Detection]:
    return [Detection(*o["box"], o["confidence"], o["category"], tuple(o.get("attributes", ())))
            for o in ann.get("objects", []) + ann.get("distractors", [])]


def prepare_corpus(cfg: ScenarioConfig, corpus: list[CorpusItem] | None = None) -> list[CorpusItem]:
    if corpus is None:
        corpus = generate_corpus(cfg.corpus) if cfg.corpus is not None else load_corpus(cfg.corpus_dir)
    if cfg.filter_blurry is not None:
        keep = filter_by_scores([sharpness_score(it.image) for it in corpus], cfg.filter_blurry)
        corpus = [corpus[i] for i in keep]
    return corpus


def reference_engines(corpus: list[CorpusItem], cfg: ScenarioConfig) -> tuple[ReferenceOcr, ReferenceDetector]:
    ocr = ReferenceOcr(corruption=cfg.ocr_corruption, seed=cfg.master_seed)
    det = ReferenceDetector()
    sharp = []
    for it in corpus:
        img = it.image
        sharp.append(sharpness_score(img))
        ocr.register(img, it.ann.get("text", ""), sharp[-1])
        det.register(img, _detections(it.ann))
    ocr.max_sharpness = max(sharp) if sharp else 1.0
    return ocr, det


# -- transmission -------------------------------------------------------------------

class Link:
    """Sends images or text over one channel realization.

    Source coding is deterministic, so recent encodings are cached and
    reused across sweep cells.
    """

    def __init__(self, cfg: ScenarioConfig, cache_size: int = 8):
        self.cfg = cfg
        self.cache_size = cache_size
        self._cache: OrderedDict = OrderedDict()

    def _cached(self, key, make):
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        value = self._cache[key] = make()
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return value

    def _encoded(self, img, n):
        return self._cached(("semantic", image_key(img), n), lambda: codec.to_wire(codec.encode(img, n)))

    def _jpeg_payload(self, img):
        def make():
            data = jpeg_bytes(img, self.cfg.baseline.jpeg_quality)
            return data, jpeg_decode(data)
        return self._cached(("jpeg", image_key(img), self.cfg.baseline.jpeg_quality), make)

    def send_image(self, img, chain: str, n: int, ch: ChannelRealization, seed: int):
        link = self.cfg.channel.link
        if chain == "semantic":
            header, stream = self._encoded(img, n)
            rx = semantic_transmit(stream, ch, seed)
            recon = codec.decode(codec.from_wire(header, rx))
            return semantic_record(stream, ch, link), recon
        data, decoded = self._jpeg_payload(img)
        b = self.cfg.baseline
        rec = baseline_transmit(len(data), ch, b.rate, b.bits_per_symbol, seed, link=link)
        return rec, (decoded if rec.delivered else np.zeros_like(img))

    def send_text(self, text: str, ch: ChannelRealization, seed: int):
        b = self.cfg.baseline
        rec = text_transmit(text, ch, seed, rate=b.rate, bits_per_symbol=b.bits_per_symbol,
                            link=self.cfg.channel.link)
        return rec, (text if rec.delivered else "")


def _seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _channel(cfg: ScenarioConfig, snr_db: float, seed: int) -> ChannelRealization:
    c = cfg.channel
    if c.model == "awgn":
        return flat_channel(c.k, snr_db)
    return sample_channel(seed, c.k, c.num_taps, snr_db)


# -- task oracle policies ---------------------------------------------------------------

def _inside(inner, outer) -> bool:
    return inner[0] >= outer[0] and inner[1] >= outer[1] and inner[2] <= outer[2] and inner[3] <= outer[3]


def _region_psnr(recon, captured, region, box) -> float:
    x0, y0, x1, y1 = (region[0] - box[0], region[1] - box[1], region[2] - box[0], region[3] - box[1])
    return psnr(recon[y0:y1, x0:x1], captured[y0:y1, x0:x1])


def parse_total(text: str) -> str:
    for line in text.splitlines():
        parts = line.split()
        if len(parts) >= 2 and parts[0].upper() == "TOTAL":
            return parts[1]
    return ""


def _phrase(category: str) -> str:
    syn = default_synonyms().get(category, ())
    return syn[0] if syn else category


def judge(item: CorpusItem, case: str, tool: ToolResult, received, delivered: bool, tau: float,
          records) -> TaskOutcome:
    ann = item.ann
    if tool.text is not None:
        pred = parse_total(received) if case == "text" else ""
        return TaskOutcome.judge(ann["id"], pred, [ann.get("answer", "")], records)
    box = tool.box
    quality = psnr(received, tool.image)
    if case in ("text", "document"):
        region = ann["answer_box"]
        ok = _inside(region, box) and _region_psnr(received, tool.image, region, box) >= tau
        return TaskOutcome.judge(ann["id"], ann["answer"] if ok else "", [ann["answer"]], records,
                                 psnr_db=quality)
    seen = []
    for obj in ann["objects"]:
        ob = obj["box"]
        ix = (max(ob[0], box[0]), max(ob[1], box[1]), min(ob[2], box[2]), min(ob[3], box[3]))
        if ix[2] <= ix[0] or ix[3] <= ix[1]:
            continue
        area = (ob[2] - ob[0]) * (ob[3] - ob[1])
        if (ix[2] - ix[0]) * (ix[3] - ix[1]) >= 0.5 * area and _region_psnr(received, tool.image, ix, box) >= tau:
            seen.append(obj["category"])
    response = ("I can see " + ", ".join(f"a {_phrase(c)}" for c in sorted(set(seen)))) if seen else "Nothing clear."
    cov = object_coverage(response, ann["categories"])
    return TaskOutcome(ann["id"], response, tuple(ann["categories"]), cov == 1.0, tuple(records),
                       coverage=cov, psnr_db=quality)


def command_focus(command: str | None) -> Callable[[Detection], bool] | None:
    """Detection filter implied by a spoken or stored command."""
    if not command:
        return None
    cats = {c for c in SCENE_CATEGORIES if mentioned(command, c)}
    attrs = token_set(command) & set(CLOTHING)
    if not cats and not attrs:
        return None
    return lambda d: (not cats or d.category in cats) and attrs <= set(d.attributes)


# -- session ------------------------------------------------------------------------------

class Session:
    """Runs the closed loop for one corpus item inside one sweep cell."""

    def __init__(self, cfg: ScenarioConfig, link: Link, registry, oracle: ScriptedOracle,
                 memory: CommandMemory, cell: dict, result: ScenarioResult, responses: list | None):
        self.cfg, self.link, self.registry, self.oracle = cfg, link, registry, oracle
        self.memory = memory
        self.cell = cell
        self.result = result
        self.responses = responses
        self.step = 0
        self.tx = 0

    def _tx_seed(self, item_idx):
        self.tx += 1
        c = self.cell
        return _seed(self.cfg.master_seed, c["index"], item_idx, self.tx)

    def _log(self, item, t, kind, img, rec):
        c = self.cell
        self.result.ledger.append(LedgerEntry(self.cfg.name, c["index"], c["snr_db"], c["seed"], c["n"], item.ann["id"],
                                              self.step, t, kind, img.shape[1] if img is not None else 0,
                                              img.shape[0] if img is not None else 0, rec))

    def _event(self, item, t, what, **kw):
        self.result.events.append({"item": item.ann["id"], "step": self.step, "t": t, "event": what, **kw})

    def run(self, item: CorpusItem, item_idx: int) -> TaskOutcome:
        cfg = self.cfg
        image = item.image
        ch = _channel(cfg, self.cell["snr_db"], _seed(cfg.master_seed, self.cell["index"], item_idx))
        records: list[TransmissionRecord] = []
        outcome = None

        def transmit(img, chain, n, t, kind):
            rec, rx = self.link.send_image(img, chain, n, ch, self._tx_seed(item_idx))
            self._log(item, t, kind, img, rec)
            records.append(rec)
            return rec, rx

        def task(tool_id, focus, t):
            nonlocal outcome
            opts = {"focus": focus} if tool_id == "object" else {}
            res = self.registry.run(tool_id, image, **opts)
            if res.text is not None:
                rec, rx = self.link.send_text(res.text, ch, self._tx_seed(item_idx))
                self._log(item, t, "task", None, rec)
                records.append(rec)
            else:
                rec, rx = transmit(res.image, cfg.chain, self.cell["n"], t, "task")
            outcome = judge(item, cfg.case, res, rx, rec.delivered, cfg.tau_db, list(records))
            if self.responses is not None:
                self.responses.append({"item": item.ann["id"], "step": self.step, "cell": self.cell["index"],
                                       "response": outcome.predicted, "truths": list(outcome.truths)})
            return rx if res.text is None else None

        if cfg.mode == "full_image":
            full = ToolResult("none", image=image, box=(0, 0, image.shape[1], image.shape[0]))
            rec, rx = transmit(image, cfg.chain, self.cell["n"], 0.0, "task")
            outcome = judge(item, cfg.case, full, rx, rec.delivered, cfg.tau_db, list(records))
            self.step += 1
            return outcome

        ctl = IntentController(TaskSpace(), self.oracle, check_period=cfg.check_period, memory=self.memory)
        pending: list[str] = []
        tool_id, focus, last_probe, last_task = "none", None, None, None
        for frame in range(cfg.frames_per_item):
            t = frame * cfg.frame_interval
            queue = list(pending)
            pending = []
            if frame == 0 and cfg.mode == "direct_voice":
                cmd = cfg.voice_command or item.ann.get("voice_command") or DEFAULT_VOICE.get(cfg.case, "")
                queue += ctl.handle(Voice(cmd, t))
                focus = command_focus(cmd)
            queue += [a for a in ctl.handle(Tick(t)) if a not in queue]
            while queue:
                action = queue.pop(0)
                if action == CAPTURE_PROBE:
                    _, last_probe = transmit(downsample_probe(image), cfg.probe_chain, cfg.probe_n, t, "probe")
                    label = ctl.predict_intention(last_probe, self.step)
                    if label is not None:
                        queue += ctl.handle(ProbeResult(label))
                        queue += [a for a in ctl.handle(Tick(t)) if a not in queue]
                elif action == SELECT_TOOL:
                    tool_id = select_tool(ctl.state.label, ctl.space)
                    if cfg.mode == "intention_stored" and last_probe is not None:
                        context = self.oracle.describe(last_probe, self.step)
                        cmd = retrieve_command(ctl.state.memory, context)
                        focus = command_focus(cmd)
                        self._event(item, t, "retrieve", context=context, command=cmd)
                    elif cfg.mode == "intention_aware":
                        focus = None
                    self._event(item, t, "select_tool", label=ctl.state.label, tool=tool_id)
                elif action == CAPTURE_TASK:
                    last_task = task(tool_id, focus, t)
                elif action == CONSISTENCY_CHECK:
                    view = last_task if last_task is not None else last_probe
                    delta = ctl.check_consistency(view if view is not None else image, t, self.step)
                    if delta is not None:
                        self._event(item, t, "check", delta=delta)
                        before = ctl.mode
                        acts = ctl.handle(Delta(delta))
                        if ctl.mode != before:
                            self._event(item, t, "transition", src=before, dst=ctl.mode)
                        pending += [a for a in acts if a not in pending]
            self.step += 1
        self.memory = ctl.state.memory
        if outcome is None:
            outcome = TaskOutcome(item.ann["id"], "", (item.ann.get("answer", ""),), False, tuple(records))
        return outcome


# -- scenario and sweep -------------------------------------------------------------------

def cells(cfg: ScenarioConfig) -> list[dict]:
    out = []
    for si, snr in enumerate(cfg.snr_db):
        for seed in cfg.seeds:
            for n in cfg.n:
                out.append({"index": len(out), "snr_idx": si, "snr_db": float(snr), "seed": int(seed), "n": int(n)})
    return out


def run_scenario(cfg: ScenarioConfig, corpus: list[CorpusItem] | None = None) -> ScenarioResult:
    """Run every corpus item through every sweep cell."""
    corpus = prepare_corpus(cfg, corpus)
    ocr, det = reference_engines(corpus, cfg)
    registry = default_registry(ocr, det, canny_low=cfg.canny_low, canny_high=cfg.canny_high,
                                conf_threshold=cfg.conf_threshold, margin=cfg.margin)
    oracle = ScriptedOracle(list(cfg.oracle))
    link = Link(cfg)
    result = ScenarioResult()
    responses = [] if cfg.responses_log else None
    for cell in cells(cfg):
        memory = CommandMemory()
        for i, cmd in enumerate(cfg.memory):
            memory = memory.add(cmd, float(-len(cfg.memory) + i))
        session = Session(cfg, link, registry, oracle, memory, cell, result, responses)
        cell_outcomes = []
        for idx, item in enumerate(corpus):
            try:
                cell_outcomes.append(session.run(item, idx))
            except OracleScriptGap as gap:
                log.error("oracle script gap in cell %d, item %s: %s", cell["index"], item.ann["id"], gap)
                raise
        result.outcomes.extend(cell_outcomes)
        result.cells.append({**cell, "outcomes": cell_outcomes})
    if responses is not None:
        with open(cfg.responses_log, "w") as fh:
            for r in responses:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
    return result


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cell_rows(cfg: ScenarioConfig, result: ScenarioResult) -> list[dict]:
    rows = []
    for cell in result.cells:
        outs = cell["outcomes"]
        entries = [e for e in result.ledger if e.cell == cell["index"]]
        task_recs = [e.record for e in entries if e.kind == "task"]
        probes = sum(e.kind == "probe" for e in entries)
        psnrs = [o.psnr_db for o in outs if o.psnr_db is not None]
        covs = [o.coverage for o in outs if o.coverage is not None]
        rows.append({
            "scenario": cfg.name,
            "chain": cfg.chain,
            "snr_db": cell["snr_db"],
            "n": cell["n"],
            "payload_bytes": float(np.mean([o.payload_bytes for o in outs])) if outs else 0.0,
            "complex_symbols": float(np.mean([o.complex_symbols for o in outs])) if outs else 0.0,
            "delivered": float(np.mean([r.delivered for r in task_recs])) if task_recs else None,
            "psnr_db": float(np.mean(psnrs)) if psnrs else None,
            "success": float(np.mean([o.success for o in outs])) if outs else None,
            "coverage": float(np.mean(covs)) if covs else None,
            "seed": cell["seed"],
            "items": len(outs),
            "probes": probes,
        })
    rows.sort(key=lambda r: (r["scenario"], r["chain"], r["snr_db"], r["n"], r["seed"]))
    return rows


def summary_rows(cfg: ScenarioConfig, result: ScenarioResult) -> list[dict]:
    if not result.ledger:
        return []
    summ = bandwidth_summary(result.records)
    rows = []
    for chain, s in summ["chains"].items():
        b, y = s["bytes"], s["symbols"]
        rows.append({"scenario": cfg.name, "chain": chain, "count": b["count"],
                     "total_bytes": b["total"], "mean_bytes": b["mean"], "bytes_p25": b["p25"],
                     "bytes_p50": b["p50"], "bytes_p75": b["p75"], "total_symbols": y["total"],
                     "mean_symbols": y["mean"], "symbols_p25": y["p25"], "symbols_p50": y["p50"],
                     "symbols_p75": y["p75"]})
    return rows


def to_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def summary_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.stem + "_bandwidth.csv")


def sweep(cfg: ScenarioConfig, out: str | Path | None = None, corpus=None) -> tuple[str, str]:
    """Run the cross-product and render the cell CSV plus the bandwidth summary CSV."""
    result = run_scenario(cfg, corpus)
    main = to_csv(cell_rows(cfg, result), CSV_COLUMNS)
    summary = to_csv(summary_rows(cfg, result), SUMMARY_COLUMNS)
    if out is not None:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(main)
        summary_path(out).write_text(summary)
    return main, summary
