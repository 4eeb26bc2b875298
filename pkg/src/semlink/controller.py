"""Closed-loop intention controller.

The controller alternates between two modes.  While *probing* it asks for a
low-resolution capture on every period and waits for the cloud to name an
intention.  Once *task-active* it asks for a task capture plus a consistency
check once per period; a negative check drops it back to probing.  Voice
commands jump straight to a task.

:func:`step` is the pure transition function.  :class:`IntentController`
wraps it with the oracle calls and the failure policy (fail-closed on
prediction, fail-open on consistency).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Protocol

import numpy as np

from .errors import OracleError, OracleScriptGap, ToolError
from .textutil import jaccard, token_set

log = logging.getLogger(__name__)

PROBING = "probing"
TASK_ACTIVE = "task_active"

CAPTURE_PROBE = "capture_probe"
CAPTURE_TASK = "capture_task"
CONSISTENCY_CHECK = "consistency_check"
SELECT_TOOL = "select_tool"

DEFAULT_BINDINGS = {"text-reading": "ocr", "document": "canny", "scene": "object"}
DEFAULT_PROMPTS = {
    "text-reading": "read translate text receipt menu note words",
    "document": "document page chart figure layout table flowchart",
    "scene": "observe scene describe look watch object people pedestrian count",
}
_EPS = 1e-9


# -- task space and memory ---------------------------------------------------

@dataclass
class TaskSpace:
    intentions: list[str] = field(default_factory=lambda: list(DEFAULT_BINDINGS))
    tool_binding: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_BINDINGS))
    prompts: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_PROMPTS))
    pending: set[str] = field(default_factory=set)

    def __post_init__(self):
        if len(set(self.intentions)) != len(self.intentions):
            raise ValueError("intention labels must be unique")
        for label in self.intentions:
            self.tool_binding.setdefault(label, "none")

    def __contains__(self, label: str) -> bool:
        return label in self.intentions

    def add_pending(self, label: str, tool: str = "none") -> None:
        """Register a label the VLM proposed; it waits for user confirmation."""
        if label not in self.intentions:
            self.intentions.append(label)
            self.tool_binding[label] = tool
            self.prompts.setdefault(label, label)
            self.pending.add(label)

    def confirm(self, label: str, tool: str | None = None) -> None:
        self.pending.discard(label)
        if tool is not None:
            self.tool_binding[label] = tool

    def to_json(self) -> str:
        return json.dumps({
            "intentions": self.intentions,
            "tool_binding": self.tool_binding,
            "prompts": self.prompts,
            "pending": sorted(self.pending),
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TaskSpace":
        doc = json.loads(text)
        return cls(intentions=list(doc["intentions"]), tool_binding=dict(doc["tool_binding"]),
                   prompts=dict(doc.get("prompts", {})), pending=set(doc.get("pending", [])))


@dataclass(frozen=True)
class CommandMemory:
    """Bounded buffer of generalizable voice commands, oldest first."""

    entries: tuple[tuple[str, float], ...] = ()
    capacity: int = 32

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be positive")
        if len(self.entries) > self.capacity:
            object.__setattr__(self, "entries", tuple(self.entries[-self.capacity:]))

    def add(self, command: str, timestamp: float) -> "CommandMemory":
        entries = tuple(sorted(self.entries + ((command, float(timestamp)),), key=lambda e: e[1]))
        return CommandMemory(entries=entries[-self.capacity:], capacity=self.capacity)

    def __len__(self) -> int:
        return len(self.entries)

    def to_json(self) -> str:
        return json.dumps({"capacity": self.capacity,
                           "entries": [{"command": c, "timestamp": t} for c, t in self.entries]}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CommandMemory":
        doc = json.loads(text)
        entries = tuple((e["command"], float(e["timestamp"])) for e in doc.get("entries", []))
        return cls(entries=entries, capacity=int(doc.get("capacity", 32)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "CommandMemory":
        return cls.from_json(Path(path).read_text())


def retrieve_command(memory: CommandMemory, context: str, min_score: float = 0.1) -> str | None:
    """Stored command with the highest token-set Jaccard similarity to ``context``.

    Equal scores go to the most recent entry.
    """
    ctx = token_set(context)
    best, best_key = None, None
    for idx, (command, ts) in enumerate(memory.entries):
        key = (jaccard(token_set(command), ctx), ts, idx)
        if best_key is None or key > best_key:
            best, best_key = command, key
    if best is None or best_key[0] < min_score:
        return None
    return best


# -- command tagging ---------------------------------------------------------

ATTRIBUTE_STOP_LIST = frozenset({
    "black", "white", "red", "green", "blue", "yellow", "orange", "purple", "pink", "brown", "grey", "gray",
    "clothing", "clothes", "shirt", "jacket", "coat", "hat", "dress", "trouser", "pant", "shoe", "wearing",
})


@dataclass(frozen=True)
class StopListTagger:
    """A command is generalizable unless it names a specific attribute."""

    stop_list: frozenset[str] = ATTRIBUTE_STOP_LIST

    def __call__(self, command: str) -> bool:
        return not (token_set(command) & self.stop_list)


def parse_voice(command: str, space: TaskSpace) -> str | None:
    """Best-matching intention for a spoken command, or None."""
    words = token_set(command)
    best, best_score = None, 0
    for label in space.intentions:
        vocab = token_set(label.replace("-", " ")) | token_set(space.prompts.get(label, ""))
        score = len(words & vocab)
        if score > best_score:
            best, best_score = label, score
    return best


# -- events and pure transition ---------------------------------------------

@dataclass(frozen=True)
class Tick:
    t: float


@dataclass(frozen=True)
class Voice:
    command: str
    t: float = 0.0


@dataclass(frozen=True)
class ProbeResult:
    label: str


@dataclass(frozen=True)
class Delta:
    value: int


Event = Tick | Voice | ProbeResult | Delta


@dataclass(frozen=True)
class IntentState:
    mode: str = PROBING
    label: str | None = None
    last_check_time: float | None = None
    last_probe_time: float | None = None
    check_period: float = 1.0
    memory: CommandMemory = field(default_factory=CommandMemory)
    retries: int = 0

    def __post_init__(self):
        if not self.check_period > 0:
            raise ValueError("check_period must be positive")
        if self.mode not in (PROBING, TASK_ACTIVE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if (self.mode == TASK_ACTIVE) != (self.label is not None):
            raise ValueError("task-active state needs exactly one label")


def _due(last: float | None, now: float, period: float) -> bool:
    return last is None or now - last >= period - _EPS


def _activate(state: IntentState, label: str) -> IntentState:
    return replace(state, mode=TASK_ACTIVE, label=label, last_check_time=None, retries=0)


def step(state: IntentState, event, space: TaskSpace,
         tagger: Callable[[str], bool] = StopListTagger()) -> tuple[IntentState, tuple[str, ...]]:
    """Apply one event; returns the new state and the actions to perform."""
    if isinstance(event, Tick):
        if state.mode == PROBING:
            if _due(state.last_probe_time, event.t, state.check_period):
                return replace(state, last_probe_time=event.t), (CAPTURE_PROBE,)
            return state, ()
        if _due(state.last_check_time, event.t, state.check_period):
            return replace(state, last_check_time=event.t), (CAPTURE_TASK, CONSISTENCY_CHECK)
        return state, ()

    if isinstance(event, Voice):
        label = parse_voice(event.command, space)
        if label is None:
            log.error("voice command %r matches no intention", event.command)
            return state, ()
        memory = state.memory.add(event.command, event.t) if tagger(event.command) else state.memory
        return replace(_activate(state, label), memory=memory), (SELECT_TOOL,)

    if isinstance(event, ProbeResult):
        if state.mode != PROBING:
            return state, ()
        if event.label not in space:
            log.error("probe result %r is not in the task space", event.label)
            return state, ()
        return _activate(state, event.label), (SELECT_TOOL,)

    if isinstance(event, Delta):
        if event.value not in (0, 1):
            log.error("consistency indicator must be 0 or 1, got %r", event.value)
            return state, ()
        if state.mode == TASK_ACTIVE and event.value == 0:
            return replace(state, mode=PROBING, label=None, last_check_time=None, last_probe_time=None), (CAPTURE_PROBE,)
        return state, ()

    log.error("malformed event %r", event)
    return state, ()


def select_tool(label: str, space: TaskSpace) -> str:
    """Tool id bound to ``label``; pending labels use the full frame."""
    if label not in space:
        raise ToolError(f"label {label!r} is not in the task space")
    if label in space.pending:
        return "none"
    try:
        return space.tool_binding[label]
    except KeyError:
        raise ToolError(f"label {label!r} has no tool binding") from None


# -- oracle-driven wrapper ---------------------------------------------------

class VlmHandle(Protocol):
    def predict(self, image: np.ndarray, step: int) -> str: ...

    def verify(self, image: np.ndarray, label: str, step: int) -> int: ...


def predict_intention(probe: np.ndarray, space: TaskSpace, oracle: VlmHandle, step_index: int = 0) -> str:
    """Ask the oracle for a label; unknown labels join the space as pending."""
    if probe.shape[:2] != (256, 256):
        raise ValueError(f"probe must be 256 x 256, got {probe.shape[:2]}")
    label = str(oracle.predict(probe, step_index)).strip()
    if label not in space:
        space.add_pending(label)
    return label


class IntentController:
    """Stateful session around :func:`step` with oracle access."""

    def __init__(self, space: TaskSpace, oracle: VlmHandle, *, check_period: float = 1.0,
                 memory: CommandMemory | None = None, tagger: Callable[[str], bool] = StopListTagger()):
        self.space = space
        self.oracle = oracle
        self.tagger = tagger
        self.state = IntentState(check_period=check_period, memory=memory or CommandMemory())
        self.transitions: list[tuple[str, str]] = []
        self.checks: list[float] = []
        self._last_check: float | None = None
        self.failures: list[str] = []

    @property
    def mode(self) -> str:
        return self.state.mode

    def handle(self, event) -> tuple[str, ...]:
        before = self.state.mode
        self.state, actions = step(self.state, event, self.space, self.tagger)
        if self.state.mode != before:
            self.transitions.append((before, self.state.mode))
            self._last_check = None
        return actions

    def predict_intention(self, probe: np.ndarray, step_index: int = 0) -> str | None:
        """Fail-closed: an oracle failure leaves the controller probing."""
        try:
            label = predict_intention(probe, self.space, self.oracle, step_index)
        except OracleError as exc:
            if isinstance(exc, OracleScriptGap):
                raise
            self.state = replace(self.state, retries=self.state.retries + 1)
            self.failures.append(f"predict@{step_index}: {exc}")
            log.warning("intention prediction failed at step %d: %s", step_index, exc)
            return None
        return label

    def check_consistency(self, task_img: np.ndarray, now: float, step_index: int = 0) -> int | None:
        """Run the oracle check if a period has elapsed; None when skipped.

        Fail-open: an oracle failure counts as delta = 1.
        """
        if self.state.mode != TASK_ACTIVE:
            return None
        if not _due(self._last_check, now, self.state.check_period):
            return None
        self._last_check = now
        self.checks.append(now)
        try:
            delta = int(self.oracle.verify(task_img, self.state.label, step_index))
        except OracleError as exc:
            if isinstance(exc, OracleScriptGap):
                raise
            self.failures.append(f"verify@{step_index}: {exc}")
            log.warning("consistency check failed at step %d: %s; staying on task", step_index, exc)
            delta = 1
        return delta


def replay(events: Iterable, space: TaskSpace, state: IntentState | None = None,
           tagger: Callable[[str], bool] = StopListTagger()) -> list[tuple[IntentState, tuple[str, ...]]]:
    """Apply a trace of events, returning every (state, actions) pair."""
    state = state or IntentState()
    out = []
    for ev in events:
        state, actions = step(state, ev, space, tagger)
        out.append((state, actions))
    return out


# -- scripted oracle ---------------------------------------------------------

@dataclass
class ScriptedOracle:
    """Deterministic VLM stand-in replaying ``{trigger, response}`` records.

    A trigger is ``"<kind>@<step>"`` or ``"<kind>@*"`` with kind one of
    ``predict``, ``verify`` and ``describe``.  An exact step match wins over
    the wildcard; among equal triggers the first record wins.  A response of
    the form ``{"error": msg}`` simulates an oracle failure.
    """

    records: list[dict] = field(default_factory=list)
    calls: list[tuple[str, int]] = field(default_factory=list)

    KINDS = ("predict", "verify", "describe")

    def __post_init__(self):
        self._table: dict[str, object] = {}
        for rec in self.records:
            trigger = rec.get("trigger") if isinstance(rec, dict) else None
            if not isinstance(trigger, str) or "@" not in trigger or "response" not in rec:
                raise ValueError(f"malformed oracle record {rec!r}")
            kind, _, where = trigger.partition("@")
            if kind not in self.KINDS or not (where == "*" or where.isdigit()):
                raise ValueError(f"malformed oracle trigger {trigger!r}")
            self._table.setdefault(f"{kind}@{int(where) if where != '*' else '*'}", rec["response"])

    @classmethod
    def from_json(cls, text: str) -> "ScriptedOracle":
        doc = json.loads(text)
        return cls(records=list(doc["records"] if isinstance(doc, dict) else doc))

    @classmethod
    def load(cls, path: str | Path) -> "ScriptedOracle":
        return cls.from_json(Path(path).read_text())

    def lookup(self, kind: str, step: int):
        self.calls.append((kind, step))
        for key in (f"{kind}@{step}", f"{kind}@*"):
            if key in self._table:
                response = self._table[key]
                if isinstance(response, dict) and "error" in response:
                    raise OracleError(str(response["error"]))
                return response
        raise OracleScriptGap(kind, step)

    def predict(self, image: np.ndarray, step: int) -> str:
        return str(self.lookup("predict", step))

    def verify(self, image: np.ndarray, label: str, step: int) -> int:
        return int(self.lookup("verify", step))

    def describe(self, image: np.ndarray, step: int) -> str:
        return str(self.lookup("describe", step))
