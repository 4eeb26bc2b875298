"""Scenario configuration loaded from JSON."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .channel import LinkAbstractionConfig
from .corpus import CorpusSpec
from .errors import ConfigError, ParameterError
from .transport import RATIOS

CASES = ("text", "document", "scene")
MODES = ("full_image", "intention_aware", "intention_stored", "direct_voice")
CHAINS = ("baseline", "semantic")
SEED_ENV = "SEMLINK_SEED"


@dataclass(frozen=True)
class ChannelConfig:
    model: str = "rayleigh"  # or "awgn"
    k: int = 64
    num_taps: int = 8
    beta: float = 5.0
    bler_threshold_db: float = 4.0
    bler_slope_db: float = 1.0

    def __post_init__(self):
        if self.model not in ("rayleigh", "awgn"):
            raise ConfigError(f"channel model must be rayleigh or awgn, got {self.model!r}")
        if self.k < 1 or not 1 <= self.num_taps <= self.k:
            raise ConfigError("need k >= 1 and 1 <= num_taps <= k")
        try:
            self.link
        except ParameterError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def link(self) -> LinkAbstractionConfig:
        return LinkAbstractionConfig(self.beta, self.bler_threshold_db, self.bler_slope_db)


@dataclass(frozen=True)
class BaselineConfig:
    jpeg_quality: int = 50
    rate: float = 0.5
    bits_per_symbol: int = 4

    def __post_init__(self):
        if not 1 <= self.jpeg_quality <= 95:
            raise ConfigError("jpeg_quality must lie in [1, 95]")
        if not 0 < self.rate <= 1 or self.bits_per_symbol not in (2, 4, 6, 8):
            raise ConfigError("invalid baseline code rate or modulation")


@dataclass(frozen=True)
class ScenarioConfig:
    case: str
    mode: str
    chain: str
    snr_db: tuple[float, ...]
    seeds: tuple[int, ...]
    n: tuple[int, ...] = (4,)
    name: str = ""
    corpus: CorpusSpec | None = None
    corpus_dir: str | None = None
    oracle: tuple[dict, ...] = ()
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    probe_chain: str = "semantic"
    probe_n: int = 4
    tau_db: float = 18.0
    filter_blurry: float | None = None
    master_seed: int = 0
    memory: tuple[str, ...] = ()
    voice_command: str | None = None
    check_period: float = 1.0
    frame_interval: float = 0.25
    frames_per_item: int = 1
    conf_threshold: float = 0.30
    margin: float = 0.05
    canny_low: float = 0.04
    canny_high: float = 0.08
    ocr_corruption: float = 0.3
    responses_log: str | None = None

    def __post_init__(self):
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {CASES}, got {self.case!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.chain not in CHAINS or self.probe_chain not in CHAINS:
            raise ConfigError(f"chains must be one of {CHAINS}")
        if not self.snr_db or not self.seeds or not self.n:
            raise ConfigError("snr_db, seeds and n must be nonempty")
        if any(v not in RATIOS for v in self.n) or self.probe_n not in RATIOS:
            raise ConfigError(f"compression ratios must be in {RATIOS}")
        if (self.corpus is None) == (self.corpus_dir is None):
            raise ConfigError("give exactly one of corpus or corpus_dir")
        if self.check_period <= 0 or self.frame_interval <= 0 or self.frames_per_item < 1:
            raise ConfigError("timing parameters must be positive")
        if self.filter_blurry is not None and not 0 <= self.filter_blurry < 1:
            raise ConfigError("filter_blurry must lie in [0, 1)")
        if not self.name:
            object.__setattr__(self, "name", f"{self.case}-{self.mode}-{self.chain}")

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "ScenarioConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            for key in ("snr_db", "seeds", "n", "memory"):
                if key in doc:
                    v = doc[key]
                    doc[key] = tuple(v) if isinstance(v, (list, tuple)) else (v,)
            doc["snr_db"] = tuple(float(v) for v in doc.get("snr_db", ()))
            doc["seeds"] = tuple(int(v) for v in doc.get("seeds", ()))
            if isinstance(doc.get("corpus"), dict):
                doc["corpus"] = CorpusSpec.from_dict(doc["corpus"])
            if isinstance(doc.get("channel"), dict):
                doc["channel"] = ChannelConfig(**doc["channel"])
            if isinstance(doc.get("baseline"), dict):
                doc["baseline"] = BaselineConfig(**doc["baseline"])
            oracle = doc.get("oracle", ())
            if isinstance(oracle, str):
                path = Path(oracle)
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                loaded = json.loads(path.read_text())
                oracle = loaded["records"] if isinstance(loaded, dict) else loaded
            doc["oracle"] = tuple(oracle)
            if doc.get("corpus_dir") and base_dir is not None and not Path(doc["corpus_dir"]).is_absolute():
                doc["corpus_dir"] = str(base_dir / doc["corpus_dir"])
            if SEED_ENV in os.environ:
                doc["master_seed"] = int(os.environ[SEED_ENV])
            return cls(**doc)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError, OSError) as exc:
            raise ConfigError(f"invalid scenario config: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc, base_dir=path.parent)

    def to_dict(self) -> dict:
        return asdict(self)
