"""Decision oracles: deterministic mock policies, a scripted replayer, and a remote chat client.

All backends share one surface:

* ``decide(query)`` answers "What is your next plan?" for one time step.
* ``ask(profile, question, memories)`` answers a questionnaire item.
* ``generate_persona(prompt)`` turns a persona-crafting request into a document.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import httpx

from .errors import (
    ConfigError,
    OracleUnavailable,
    PersonaGenerationError,
    PersonaParseError,
    TransportError,
)
from .persona import PersonaProfile, parse_persona_document
from .scenario import Condition

NEXT_PLAN_QUESTION = "What is your next plan?"

DECISION_FORMAT = (
    "Answer in exactly this format:\n"
    "Decision: forward | stop | backward\n"
    "Reason: <why>\n"
    "Confidence: <1-5>/5 - <short explanation>\n"
    "Trust: <1-5>/5 - <short explanation>"
)

RATING_FORMAT = "Answer in exactly this format:\nRating: <1-5>/5\nReason: <why>"

TASK_BRIEF = (
    "You are taking part in a street-crossing study as a pedestrian. You start 3.2 m from the "
    "road edge; five positions are marked 0.8 m apart. An autonomous vehicle approaches over "
    "about 8 seconds. Every second you see what you would see from your current position and "
    "choose to move forward one position, stop, or step backward. The status line shows your "
    "position as '*' with the road on the right."
)


@dataclass(frozen=True)
class OracleConfig:
    backend: str = "mock"
    endpoint: str = ""
    model: str = ""
    temperature: float = 1.0
    max_frames: int = 24
    api_key_env: str = "ORACLE_API_KEY"
    timeout: float = 60.0
    retry_limit: int = 3
    retry_backoff: float = 1.0
    history_window: int | None = None
    max_in_flight: int = 4
    rate_per_sec: float | None = None
    policy: str = "profiled"

    def __post_init__(self):
        if self.backend not in ("remote", "mock"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_frames < 1:
            raise ConfigError("max_frames must be >= 1")

    def describe(self) -> dict:
        meta = {"backend": self.backend, "temperature": self.temperature}
        if self.backend == "remote":
            meta.update(model=self.model, endpoint=self.endpoint)
        else:
            meta["policy"] = self.policy
        return meta


@dataclass(frozen=True)
class ChatTurn:
    role: str
    text: str
    frames: tuple[Path, ...] = ()

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad chat role {self.role!r}")


@dataclass(frozen=True)
class DecisionQuery:
    """Everything one decision request may use; remote backends only see the
    persona, frames, status and history."""

    profile: PersonaProfile
    frames: tuple[Path, ...]
    status: str
    history: tuple = ()
    condition: Condition | None = None
    position: int = 0
    time_step: int = 0
    reminder: str = ""


@dataclass(frozen=True)
class Question:
    key: str
    text: str
    kind: str  # "likert" or "text"


POST_TRIAL_QUESTIONS = (
    Question("q1_confidence", "How confident are you in your decision?", "likert"),
    Question("q2_trust", "How much do you trust the autonomous vehicle?", "likert"),
)

POST_STUDY_QUESTIONS = (
    Question("q1_similarity", "How similar do you think this field study is compared to real life?", "likert"),
    Question("q2_genuineness", "How genuine do you think your behavior in this study was compared to real life?", "likert"),
    Question("q3_acceptance", "After this interaction with the autonomous vehicle, how accepting are you toward it?", "likert"),
    Question("q4_helpfulness", "How much do you think the vehicle's interface helped you make your decision?", "likert"),
    Question("q5_eye_meaning", 'What do you think the "eye" display means?', "text"),
    Question("q6_light_meaning", 'What do you think the "light strip" display means?', "text"),
    Question("q7_no_ehmi_strategy", "When there is no interface on the car, how do you make your decision?", "text"),
)


def subsample_frames(frames, cap: int) -> tuple[Path, ...]:
    """Uniformly pick at most ``cap`` frames, keeping the first and last."""
    frames = tuple(frames)
    n = len(frames)
    if n <= cap:
        return frames
    if cap == 1:
        return (frames[0],)
    idx = [round(i * (n - 1) / (cap - 1)) for i in range(cap)]
    return tuple(frames[i] for i in idx)


def format_decision_reply(action: str, reason: str, confidence: int, trust: int,
                          confidence_note: str = "", trust_note: str = "") -> str:
    conf = f"Confidence: {confidence}/5" + (f" - {confidence_note}" if confidence_note else "")
    tr = f"Trust: {trust}/5" + (f" - {trust_note}" if trust_note else "")
    return f"Decision: {action}\nReason: {reason}\n{conf}\n{tr}"


def av_phase(time_step: int, av_behavior: str) -> str:
    """Coarse AV proximity over the 8-second approach."""
    if time_step < 3:
        return "far"
    if time_step < 6:
        return "approaching"
    if time_step < 8:
        return "near"
    return "yielded" if av_behavior == "stop" else "passed"


# -- mock policies ------------------------------------------------------------


@dataclass(frozen=True)
class Rule:
    """One row of a policy table; ``None`` fields match anything."""

    action: str
    confidence: int
    trust: int
    reason: str
    ehmi: frozenset | None = None
    av: frozenset | None = None
    phases: frozenset | None = None
    min_position: int = 0
    max_position: int = 4
    min_time: int = 0

    def matches(self, cond: Condition, position: int, time_step: int, phase: str) -> bool:
        return (
            (self.ehmi is None or cond.ehmi in self.ehmi)
            and (self.av is None or cond.av_behavior in self.av)
            and (self.phases is None or phase in self.phases)
            and self.min_position <= position <= self.max_position
            and time_step >= self.min_time
        )


def _fs(*items) -> frozenset:
    return frozenset(items)


@dataclass(frozen=True)
class MockPolicy:
    """First-match rule table; the last rule must be a catch-all."""

    policy_id: str
    rules: tuple[Rule, ...]
    interview: dict = field(default_factory=dict)

    def __post_init__(self):
        last = self.rules[-1]
        catch_all = (
            last.ehmi is None and last.av is None and last.phases is None
            and last.min_position == 0 and last.max_position >= 4 and last.min_time == 0
        )
        if not catch_all:
            raise ValueError(f"policy {self.policy_id!r} is not total: last rule must match everything")

    def lookup(self, cond: Condition, position: int, time_step: int) -> Rule:
        phase = av_phase(time_step, cond.av_behavior)
        for rule in self.rules:
            if rule.matches(cond, position, time_step, phase):
                return rule
        raise AssertionError("unreachable: policy table is total")

    def reply(self, cond: Condition, position: int, time_step: int) -> str:
        rule = self.lookup(cond, position, time_step)
        phase = av_phase(time_step, cond.av_behavior)
        ehmi = {"light_strip": "light strip", "eyes": "eye display", "none": "no eHMI"}[cond.ehmi]
        reason = rule.reason.format(
            phase=phase, ehmi=ehmi, av=cond.av_behavior, position=position, time=time_step
        )
        return format_decision_reply(
            rule.action, reason, rule.confidence, rule.trust,
            "rule-based mock rating", "rule-based mock rating",
        )


_DEFAULT_INTERVIEW = {
    "q1_similarity": 4,
    "q2_genuineness": 4,
    "q3_acceptance": 4,
    "q4_helpfulness": 4,
    "q5_eye_meaning": "The eyes show that the vehicle has noticed me and is aware of pedestrians.",
    "q6_light_meaning": "The light strip works like a traffic signal: green means it is safe to cross.",
    "q7_no_ehmi_strategy": "I watch the vehicle's speed and distance and wait until it clearly slows down.",
}


def _always(action: str, conf: int, trust: int, reason: str, pid: str) -> MockPolicy:
    return MockPolicy(pid, (Rule(action, conf, trust, reason),), dict(_DEFAULT_INTERVIEW))


def _cautious() -> MockPolicy:
    rules = (
        Rule("stop", 4, 2, "The vehicle is still moving and will not yield ({phase}); I wait.",
             av=_fs("pass"), phases=_fs("approaching", "near")),
        Rule("forward", 4, 3, "The vehicle has passed, so the road is clear now.",
             av=_fs("pass"), phases=_fs("passed")),
        Rule("forward", 4, 4, "The {ehmi} tells me the vehicle is yielding, so I go on.",
             ehmi=_fs("light_strip", "eyes"), av=_fs("stop"), phases=_fs("near", "yielded")),
        Rule("forward", 3, 3, "The vehicle has stopped; I cross carefully.",
             ehmi=_fs("none"), av=_fs("stop"), phases=_fs("yielded")),
        Rule("forward", 4, 3, "The vehicle is still far ({phase}); I move closer to look.",
             phases=_fs("far")),
        Rule("stop", 3, 2, "I cannot tell what the vehicle will do ({phase}, {ehmi}); I wait."),
    )
    return MockPolicy("cautious", rules, dict(_DEFAULT_INTERVIEW))


def _profiled(profile: PersonaProfile | None, seed: int) -> MockPolicy:
    """Persona-keyed policy: the waiting spot and patience derive from a stable hash."""
    key = f"{profile.name if profile else ''}|{seed}".encode()
    digest = hashlib.sha256(key).digest()
    wait_at = 2 + digest[0] % 3          # 2, 3 or 4
    boldness = digest[1] % 3             # 0 (patient) .. 2 (bold)
    signal_trust = 3 + digest[2] % 3     # 3..5
    retreats = digest[3] % 4 == 0
    rules = [
        Rule("forward", 4, 3, "The vehicle is still far ({phase}); I walk toward the road.",
             max_position=wait_at - 1),
        Rule("forward", 4, signal_trust, "The {ehmi} signals the vehicle is yielding; I cross.",
             ehmi=_fs("light_strip", "eyes"), av=_fs("stop"), min_time=6 - boldness),
        Rule("forward", 3, 3, "The vehicle has stopped without any display; I cross.",
             ehmi=_fs("none"), av=_fs("stop"), min_time=7 - boldness),
        Rule("forward", 4, 3, "The vehicle has gone past; the road is clear.",
             av=_fs("pass"), phases=_fs("passed")),
    ]
    if retreats:
        rules.append(Rule("backward", 4, 2, "The vehicle is close and not slowing; I step back.",
                          av=_fs("pass"), phases=_fs("near"), min_position=3))
    rules.append(Rule("stop", 3 + boldness % 2, 2, "I wait at the edge and watch the vehicle ({phase}, {ehmi})."))
    interview = dict(_DEFAULT_INTERVIEW)
    interview.update(
        q1_similarity=3 + digest[4] % 2,
        q2_genuineness=4 + digest[5] % 2,
        q3_acceptance=2 + digest[6] % 4,
        q4_helpfulness=2 + digest[7] % 4,
    )
    return MockPolicy(f"profiled:{digest[:4].hex()}", tuple(rules), interview)


POLICY_IDS = ("always_forward", "assertive", "always_stop", "cautious", "profiled")


def make_policy(policy_id: str, profile: PersonaProfile | None = None, seed: int = 0) -> MockPolicy:
    if policy_id in ("always_forward", "assertive"):
        return _always("forward", 5, 4, "I feel sure and keep walking.", policy_id)
    if policy_id == "always_stop":
        return _always("stop", 5, 2, "I stay where I am and watch.", policy_id)
    if policy_id == "cautious":
        return _cautious()
    if policy_id == "profiled":
        return _profiled(profile, seed)
    raise ConfigError(f"unknown mock policy {policy_id!r}; choose from {', '.join(POLICY_IDS)}")


def _mean_rating(memories, attr: str, default: int = 3) -> int:
    values = [getattr(e, attr) for m in memories for e in m.timeline]
    if not values:
        return default
    return max(1, min(5, int(sum(values) / len(values) + 0.5)))


def reference_persona_text(key: str = "test12") -> str:
    return resources.files("crossbench").joinpath("data", "personas", f"{key}.json").read_text()


class MockOracle:
    """Stateless rule-table backend; replies are a pure function of the query."""

    def __init__(self, config: OracleConfig | None = None, seed: int = 0):
        self.config = config or OracleConfig(backend="mock")
        self.seed = seed

    def policy_for(self, profile: PersonaProfile | None) -> MockPolicy:
        return make_policy(self.config.policy, profile, self.seed)

    def decide(self, query: DecisionQuery) -> str:
        if not query.frames:
            raise ValueError("decide() needs at least one frame")
        policy = self.policy_for(query.profile)
        return policy.reply(query.condition, query.position, query.time_step)

    def ask(self, profile: PersonaProfile, question: Question, memories=()) -> str:
        if question.key == "q1_confidence":
            rating = _mean_rating(memories, "confidence")
        elif question.key == "q2_trust":
            rating = _mean_rating(memories, "trust")
        else:
            value = self.policy_for(profile).interview[question.key]
            if question.kind == "text":
                return f"Answer: {value}"
            rating = int(value)
        return f"Rating: {rating}/5\nReason: mock rating derived from the logged trial."

    def generate_persona(self, prompt: str) -> str:
        return reference_persona_text("test12")


class ScriptedOracle:
    """Replays canned replies in order; used for golden-trace tests."""

    def __init__(self, decisions, answers=(), persona_replies=(), config: OracleConfig | None = None):
        self.config = config or OracleConfig(backend="mock", policy="scripted")
        self._decisions = list(decisions)
        self._answers = list(answers)
        self._personas = list(persona_replies)
        self.calls: list = []

    def decide(self, query: DecisionQuery) -> str:
        self.calls.append(query)
        return self._decisions.pop(0)

    def ask(self, profile, question, memories=()) -> str:
        self.calls.append(question)
        return self._answers.pop(0)

    def generate_persona(self, prompt: str) -> str:
        self.calls.append(prompt)
        return self._personas.pop(0)


# -- remote backend -----------------------------------------------------------


class _TokenBucket:
    def __init__(self, rate: float, burst: float | None = None, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate
        self.capacity = burst if burst is not None else max(1.0, rate)
        self.tokens = self.capacity
        self.clock, self.sleep = clock, sleep
        self.last = clock()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self.lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate)
                self.last = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.rate
            self.sleep(wait)


def _image_part(path: Path) -> dict:
    mime = "image/png" if path.suffix.lower() == ".png" else "image/jpeg"
    data = base64.b64encode(path.read_bytes()).decode("ascii")
    return {"type": "image_url", "image_url": {"url": f"data:{mime};base64,{data}"}}


def build_messages(turns: list[ChatTurn]) -> list[dict]:
    messages = []
    for turn in turns:
        if turn.frames:
            content = [{"type": "text", "text": turn.text}] + [_image_part(f) for f in turn.frames]
            messages.append({"role": turn.role, "content": content})
        else:
            messages.append({"role": turn.role, "content": turn.text})
    return messages


def decision_turns(query: DecisionQuery, cap: int, window: int | None = None) -> list[ChatTurn]:
    """Persona as system context, prior steps as turns, current frames as the new turn."""
    turns = [ChatTurn("system", f"{query.profile.system_text()}\n\n{TASK_BRIEF}\n\n{DECISION_FORMAT}")]
    history = list(query.history)
    if window is not None:
        history = history[-window:] if window > 0 else []
    for rec in history:
        turns.append(ChatTurn("user", f"Time step {rec.time_step}. Status: {render_before(rec)}\n{NEXT_PLAN_QUESTION}"))
        turns.append(ChatTurn("assistant", format_decision_reply(rec.action, rec.reason, rec.confidence, rec.trust)))
    text = (
        f"Time step {query.time_step} ({query.time_step:.1f}s). Current position: {query.position}.\n"
        f"Status: {query.status}\n{NEXT_PLAN_QUESTION}"
    )
    if query.reminder:
        text += f"\n\n{query.reminder}"
    turns.append(ChatTurn("user", text, subsample_frames(query.frames, cap)))
    return turns


def render_before(rec) -> str:
    from .simulator import render_status

    return render_status(rec.position_before)


class RemoteOracle:
    """Chat-completions client with inline image attachments.

    Safe to share between threads: concurrent calls are capped by a
    semaphore and optionally paced by a token bucket.
    """

    def __init__(self, config: OracleConfig, client: httpx.Client | None = None,
                 transcript: Callable[[dict], None] | None = None, sleep=time.sleep):
        if config.backend != "remote":
            raise ConfigError("RemoteOracle needs backend='remote'")
        if not config.endpoint:
            raise ConfigError("remote backend requires an endpoint URL")
        if not config.api_key_env:
            raise ConfigError("remote backend requires a credential environment variable name")
        key = os.environ.get(config.api_key_env)
        if not key:
            raise ConfigError(f"credential environment variable {config.api_key_env} is not set")
        self.config = config
        self._key = key
        self._client = client or httpx.Client(timeout=config.timeout)
        self._gate = threading.BoundedSemaphore(max(1, config.max_in_flight))
        self._bucket = _TokenBucket(config.rate_per_sec) if config.rate_per_sec else None
        self._sleep = sleep
        self.transcript = transcript

    def _post_once(self, messages: list[dict]) -> str:
        body = {"model": self.config.model, "temperature": self.config.temperature, "messages": messages}
        headers = {"Authorization": f"Bearer {self._key}"}
        if self._bucket:
            self._bucket.acquire()
        with self._gate:
            try:
                resp = self._client.post(self.config.endpoint, json=body, headers=headers,
                                         timeout=self.config.timeout)
            except httpx.HTTPError as exc:
                raise TransportError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code // 100 != 2:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed response body: {exc}") from exc
        if isinstance(content, list):
            content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
        if self.transcript:
            self.transcript({"request": _redact(messages), "response": content})
        return content

    def chat(self, turns: list[ChatTurn]) -> str:
        messages = build_messages(turns)
        last: Exception | None = None
        for attempt in range(self.config.retry_limit + 1):
            try:
                return self._post_once(messages)
            except TransportError as exc:
                last = exc
                if attempt < self.config.retry_limit:
                    self._sleep(self.config.retry_backoff * (2 ** attempt))
        raise OracleUnavailable(f"oracle unreachable after {self.config.retry_limit + 1} attempts: {last}")

    def decide(self, query: DecisionQuery) -> str:
        if not query.frames:
            raise ValueError("decide() needs at least one frame")
        return self.chat(decision_turns(query, self.config.max_frames, self.config.history_window))

    def ask(self, profile: PersonaProfile, question: Question, memories=()) -> str:
        frames = tuple(f for m in memories for f in m.representative_frames())
        memory_text = "\n\n".join(m.text() for m in memories)
        fmt = RATING_FORMAT if question.kind == "likert" else "Answer: <your answer>"
        turns = [
            ChatTurn("system", f"{profile.system_text()}\n\n{TASK_BRIEF}"),
            ChatTurn("user", f"Here is your memory of the study so far:\n{memory_text}\n\n"
                             f"{question.text}\n{fmt}", frames),
        ]
        return self.chat(turns)

    def generate_persona(self, prompt: str) -> str:
        return self.chat([ChatTurn("user", prompt)])


def _redact(messages: list[dict]) -> list[dict]:
    out = []
    for m in messages:
        if isinstance(m["content"], list):
            parts = [p if p["type"] == "text" else {"type": "image_url", "image_url": "<omitted>"}
                     for p in m["content"]]
            out.append({"role": m["role"], "content": parts})
        else:
            out.append(m)
    return out


def make_oracle(config: OracleConfig, seed: int = 0, transcript=None):
    if config.backend == "mock":
        return MockOracle(config, seed)
    return RemoteOracle(config, transcript=transcript)


def generate_persona(oracle, prompt: str) -> PersonaProfile:
    """Run the crafting prompt; one corrective re-query if the reply does not parse."""
    reply = oracle.generate_persona(prompt)
    try:
        return parse_persona_document(reply)
    except PersonaParseError as first:
        corrective = (
            f"{prompt}\n\nYour previous reply could not be used ({first}). Reply with only the "
            "JSON object with keys name, description and decision_criteria (exactly five strings)."
        )
        reply = oracle.generate_persona(corrective)
        try:
            return parse_persona_document(reply)
        except PersonaParseError as second:
            raise PersonaGenerationError(f"persona reply unparseable after retry: {second}") from second


def write_transcript_line(path: Path, entry: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")
