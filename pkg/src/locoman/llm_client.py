"""Language evaluator backends for instruction decomposition and node scoring.

Three interchangeable backends implement the same interface: a deterministic
keyword mock (no I/O), a fixture-replay store keyed by request hash, and a
live HTTP client. Planning code only sees the interface, so the whole planner
test suite runs without network access.
"""

import hashlib
import json
import os
import re
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import httpx
from importlib import resources

from .errors import (
    ConfigError,
    EvaluatorError,
    EvaluatorParseError,
    EvaluatorTimeoutError,
    RejectedInputError,
)

_ROLES = ("system", "user", "assistant")

_LIKELIHOOD_RE = re.compile(r"0(?:\.\d+)?|1(?:\.0+)?|\.\d+")
_TASK_LINE_RE = re.compile(r"\s*(?:-|\d+[.)])\s+(.+?)\s*")
_SELECTION_RE = re.compile(r"\s*([a-z_]+)\s*\|(.*)")

# words that carry no object/place content in a task phrase
_STOPWORDS = frozenset(
    "the a an to in on at of and it up into onto with from "
    "go navigate pick place press put drop grasp take clean find bring".split()
)


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in _ROLES:
            raise RejectedInputError(f"message role must be one of {_ROLES}, got '{self.role}'")


@dataclass(frozen=True)
class EvaluatorRequest:
    messages: tuple[Message, ...]
    temperature: float = 0.0
    model: str = ""

    def __post_init__(self):
        if not self.messages:
            raise RejectedInputError("request needs at least one message")
        if not self.temperature >= 0.0:
            raise RejectedInputError("temperature must be non-negative")


@dataclass(frozen=True)
class EvaluatorResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class NodeScore:
    """Evaluator verdict for one scene node against one task."""

    node_id: str
    likelihood: float
    rationale: str = ""

    def __post_init__(self):
        if not 0.0 <= self.likelihood <= 1.0:
            raise RejectedInputError(f"likelihood must sit in [0, 1], got {self.likelihood}")


def request_hash(request: EvaluatorRequest) -> str:
    """Canonical content hash used for fixture lookup and audit records."""
    payload = {
        "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        "temperature": request.temperature,
        "model": request.model,
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


# ----------------------------------------------------------------- prompts


def _template(name: str) -> str:
    source = resources.files("locoman.configs").joinpath(f"prompts/{name}")
    return source.read_text()


_SYSTEM = Message("system", "You are the task evaluator for a quadruped manipulation robot.")


def build_decompose_request(instruction: str) -> EvaluatorRequest:
    body = _template("decompose_v1.txt").format(instruction=instruction)
    return EvaluatorRequest(messages=(_SYSTEM, Message("user", body)), temperature=0.0)


def build_score_request(task: str, description: str, objects) -> EvaluatorRequest:
    body = _template("score_node_v1.txt").format(
        task=task, description=description, objects=", ".join(objects) or "none"
    )
    return EvaluatorRequest(messages=(_SYSTEM, Message("user", body)), temperature=0.0)


def build_select_request(task: str, skill_names) -> EvaluatorRequest:
    body = _template("select_skill_v1.txt").format(task=task, skills=", ".join(skill_names))
    return EvaluatorRequest(messages=(_SYSTEM, Message("user", body)), temperature=0.0)


# ----------------------------------------------------------------- parsing


def parse_likelihood(text: str) -> float:
    """Accept exactly one decimal in [0, 1]; anything else is a parse error."""
    if _LIKELIHOOD_RE.fullmatch(text.strip()):
        value = float(text)
        if 0.0 <= value <= 1.0:
            return value
    raise EvaluatorParseError("response is not a bare decimal in [0, 1]", raw_text=text)


def parse_task_list(text: str) -> list[str]:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise EvaluatorParseError("empty task list response", raw_text=text)
    tasks = []
    for line in lines:
        m = _TASK_LINE_RE.fullmatch(line)
        if m is None:
            raise EvaluatorParseError(f"line is not a task item: {line!r}", raw_text=text)
        tasks.append(m.group(1))
    return tasks


def parse_skill_selection(text: str) -> tuple[str, tuple[str, ...]]:
    lines = [line for line in text.splitlines() if line.strip()]
    if len(lines) != 1:
        raise EvaluatorParseError("selection must be a single line", raw_text=text)
    m = _SELECTION_RE.fullmatch(lines[0])
    if m is None:
        raise EvaluatorParseError(f"selection line is malformed: {lines[0]!r}", raw_text=text)
    queries = tuple(q.strip() for q in m.group(2).split(";") if q.strip())
    return m.group(1), queries


# ---------------------------------------------------------------- backends


class Evaluator(ABC):
    """Common surface the planner programs against."""

    @abstractmethod
    def decompose(self, instruction: str) -> list[str]:
        """Split an instruction into an ordered list of atomic tasks."""

    @abstractmethod
    def score_node(self, task: str, node_id: str, description: str, objects) -> NodeScore:
        """Rate how well a described location fits a task."""

    @abstractmethod
    def select_skill(self, task: str, manifest) -> tuple[str, tuple[str, ...]] | None:
        """Pick the skill and text queries for a task; None when nothing fits."""


def _tokens(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9]+", text.lower()))


def _strip_article(phrase: str) -> str:
    return re.sub(r"^(?:the|a|an)\s+", "", phrase.strip())


class MockEvaluator(Evaluator):
    """Deterministic keyword evaluator; every answer is a pure function of its inputs.

    Scoring rule: the task's content keywords (lowercase words minus a fixed
    stopword/verb list) are matched exactly against the node's object labels
    and description words. likelihood = matched / total, clamped to [0, 1].

    Decomposition rule table:
      * "clean the X in the Y"  ->  navigate to Y; pick up the X;
                                    navigate to X bin; place X in the X bin
      * "press the X button"    ->  navigate to X; press the ADA button
        (X == "ada" stays atomic so the emitted task does not expand again)
      * clauses joined by "then" decompose independently and concatenate
      * anything else passes through as a single task
    """

    def decompose(self, instruction: str) -> list[str]:
        clauses = re.split(r"\s*,?\s+then\s+", instruction.strip(), flags=re.IGNORECASE)
        tasks: list[str] = []
        for clause in clauses:
            tasks.extend(self._decompose_clause(clause.strip()))
        return tasks

    def _decompose_clause(self, clause: str) -> list[str]:
        low = clause.lower()
        m = re.fullmatch(r"clean (?:the )?(.+?) in the (.+)", low)
        if m:
            obj, place = m.group(1), m.group(2)
            return [
                f"navigate to {place}",
                f"pick up the {obj}",
                f"navigate to {obj} bin",
                f"place {obj} in the {obj} bin",
            ]
        m = re.fullmatch(r"press the (.+) button", low)
        if m and m.group(1) != "ada":
            return [f"navigate to {m.group(1)}", "press the ADA button"]
        return [clause]

    def score_node(self, task: str, node_id: str, description: str, objects) -> NodeScore:
        keywords = _tokens(task) - _STOPWORDS
        if not keywords:
            return NodeScore(node_id, 0.0, "task has no content keywords")
        seen = _tokens(description)
        for label in objects:
            seen |= _tokens(label)
        matched = len(keywords & seen)
        likelihood = min(1.0, max(0.0, matched / len(keywords)))
        return NodeScore(node_id, likelihood, f"matched {matched} of {len(keywords)} keywords")

    def select_skill(self, task: str, manifest) -> tuple[str, tuple[str, ...]] | None:
        low = task.lower().strip()
        if re.fullmatch(r"(?:navigate|go) to .+", low):
            return ("navigate", ())
        m = re.fullmatch(r"pick up (.+)", low)
        if m:
            return ("grasp", (_strip_article(m.group(1)),))
        m = re.fullmatch(r"place (.+) in (.+)", low)
        if m:
            return ("place", (_strip_article(m.group(2)),))
        m = re.fullmatch(r"press (.+)", low)
        if m:
            return ("press", (_strip_article(m.group(1)),))
        return None


class CompletionEvaluator(Evaluator):
    """Evaluator that talks through a completion endpoint with strict grammars.

    A response that fails its grammar is retried once with the identical
    request; a second failure surfaces as a parse error carrying the raw text.
    """

    @abstractmethod
    def complete(self, request: EvaluatorRequest) -> EvaluatorResponse:
        """One completion round trip."""

    def _ask(self, request: EvaluatorRequest, parser):
        response = self.complete(request)
        try:
            return parser(response.text), response.text
        except EvaluatorParseError:
            response = self.complete(request)
            return parser(response.text), response.text

    def decompose(self, instruction: str) -> list[str]:
        tasks, _ = self._ask(build_decompose_request(instruction), parse_task_list)
        return tasks

    def score_node(self, task: str, node_id: str, description: str, objects) -> NodeScore:
        likelihood, text = self._ask(build_score_request(task, description, objects), parse_likelihood)
        return NodeScore(node_id, likelihood, text.strip())

    def select_skill(self, task: str, manifest):
        selection, _ = self._ask(build_select_request(task, tuple(manifest)), parse_skill_selection)
        return selection


class HttpEvaluator(CompletionEvaluator):
    """Live backend: one POST per completion against a configured endpoint."""

    def __init__(self, url: str, model: str, api_key: str | None = None,
                 timeout: float = 30.0, transport=None, audit_path=None):
        if not url:
            raise ConfigError("evaluator endpoint URL is required")
        self._url = url
        self._model = model
        self._api_key = api_key
        self._audit_path = Path(audit_path) if audit_path else None
        self._client = httpx.Client(transport=transport, timeout=timeout)

    @classmethod
    def from_env(cls, **kwargs) -> "HttpEvaluator":
        """Read endpoint settings from the environment, failing before any network use."""
        url = os.environ.get("LOCOMAN_EVAL_URL", "")
        if not url:
            raise ConfigError("LOCOMAN_EVAL_URL is not set; the live evaluator needs an endpoint")
        model = os.environ.get("LOCOMAN_EVAL_MODEL", "default")
        api_key = os.environ.get("LOCOMAN_EVAL_KEY")
        return cls(url=url, model=model, api_key=api_key, **kwargs)

    def complete(self, request: EvaluatorRequest) -> EvaluatorResponse:
        payload = {
            "model": request.model or self._model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
        }
        headers = {}
        if self._api_key:
            headers["authorization"] = f"Bearer {self._api_key}"
        started = time.monotonic()
        try:
            response = self._client.post(self._url, json=payload, headers=headers)
        except httpx.TimeoutException as exc:
            raise EvaluatorTimeoutError(f"evaluator call timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise EvaluatorError(f"evaluator transport failure: {exc}") from exc
        latency_ms = (time.monotonic() - started) * 1000.0
        self._audit(request, latency_ms)
        if response.status_code != 200:
            raise EvaluatorError(f"evaluator returned HTTP {response.status_code}")
        try:
            data = response.json()
        except ValueError as exc:
            raise EvaluatorError("evaluator response body is not JSON") from exc
        text = data.get("text")
        if not isinstance(text, str):
            raise EvaluatorError("evaluator response is missing a 'text' field")
        usage = data.get("usage") or {}
        return EvaluatorResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
        )

    def _audit(self, request: EvaluatorRequest, latency_ms: float) -> None:
        if self._audit_path is None:
            return
        record = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "request_hash": request_hash(request),
            "latency_ms": latency_ms,
        }
        with open(self._audit_path, "a") as fh:
            fh.write(json.dumps(record) + "\n")


class FixtureEvaluator(CompletionEvaluator):
    """Replay backend: responses come from a recorded hash -> text mapping."""

    def __init__(self, source):
        if isinstance(source, (str, Path)):
            with open(source) as fh:
                data = json.load(fh)
            if not isinstance(data, dict) or data.get("version") != 1:
                raise ConfigError("fixture file must carry version: 1")
            responses = data.get("responses")
            if not isinstance(responses, dict):
                raise ConfigError("fixture file needs a 'responses' mapping")
            self._responses = dict(responses)
        else:
            self._responses = dict(source)

    def complete(self, request: EvaluatorRequest) -> EvaluatorResponse:
        digest = request_hash(request)
        if digest not in self._responses:
            raise EvaluatorError(f"no fixture response recorded for request {digest[:12]}")
        return EvaluatorResponse(text=self._responses[digest])
