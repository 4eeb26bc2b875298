"""Desk-scale simulator for intention-aware semantic uplink from smart glasses."""

from .channel import ChannelRealization, LinkAbstractionConfig, bler, eesm, flat_channel, sample_channel
from .codec import decode, encode, latent_size
from .config import ScenarioConfig
from .controller import CommandMemory, IntentController, ScriptedOracle, TaskSpace, retrieve_command, step
from .corpus import CorpusSpec, generate_corpus
from .harness import run_scenario, sweep
from .metrics import bandwidth_summary, object_coverage, psnr, success_rate
from .transport import baseline_transmit, pack_latent, semantic_transmit, unpack_latent

__all__ = [
    "ChannelRealization", "LinkAbstractionConfig", "bler", "eesm", "flat_channel", "sample_channel",
    "decode", "encode", "latent_size", "ScenarioConfig", "CommandMemory", "IntentController",
    "ScriptedOracle", "TaskSpace", "retrieve_command", "step", "CorpusSpec", "generate_corpus",
    "run_scenario", "sweep", "bandwidth_summary", "object_coverage", "psnr", "success_rate",
    "baseline_transmit", "pack_latent", "semantic_transmit", "unpack_latent",
]
__version__ = "0.1.0"
