"""Chat-completion bridge: prompt rendering, provider transport, JSON
extraction and schema validation, plus record/replay fixtures so every
generation step can run deterministically offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from . import dataflow, prompts
from .errors import EmptyText, FixtureMiss, ProviderUnreachable, SchemaInvalid
from .notebook import Notebook, code_cells
from .script import EmphasisElement

DEFAULT_MODEL = "gpt-4"
DEFAULT_TEMPERATURE = 0.0  # reproducibility first
DEFAULT_TIMEOUT_S = 60.0

CORRECTIVE_INSTRUCTION = (
    "Your previous response could not be parsed against the required schema. "
    "Respond again with only a fenced JSON code block that satisfies the "
    "Output Requirements exactly, and nothing else."
)


@dataclass(frozen=True)
class PromptTemplate:
    name: str  # logic_flow | narration | question_transform
    system_text: str
    input_slots: tuple[str, ...]


TEMPLATES = {
    "logic_flow": PromptTemplate("logic_flow", prompts.LOGIC_FLOW_SYSTEM, ("cells",)),
    "narration": PromptTemplate("narration", prompts.NARRATION_SYSTEM, ("cells", "emphases")),
    "question_transform": PromptTemplate("question_transform", prompts.QUESTION_SYSTEM, ("sentence",)),
}


@dataclass
class LlmExchange:
    request_hash: str
    response_text: str
    validated: bool = False


@dataclass(frozen=True)
class NarrationResult:
    id: int
    narration: str
    inputs: dict = field(default_factory=dict)  # {"code_snippet": ..., "annotation": ...}


def request_hash(template_name: str, messages: Sequence[dict], model: str) -> str:
    canonical = json.dumps([template_name, list(messages), model], sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ChatProvider(Protocol):
    def complete(self, messages: list[dict], *, model: str, temperature: float) -> str: ...


class HttpChatProvider:
    """OpenAI-style chat completions over HTTP."""

    def __init__(self, endpoint: str, api_key: str = "", timeout: float = DEFAULT_TIMEOUT_S,
                 transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout
        self._transport = transport

    def complete(self, messages: list[dict], *, model: str, temperature: float) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {"model": model, "messages": messages, "temperature": temperature}
        try:
            with httpx.Client(transport=self._transport, timeout=self.timeout) as client:
                response = client.post(self.endpoint, json=body, headers=headers)
                response.raise_for_status()
                payload = response.json()
            return payload["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, json.JSONDecodeError) as exc:
            raise ProviderUnreachable(f"chat provider failed: {exc}") from exc


class FixtureStore:
    """Raw response texts on disk, one file per request hash."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def path(self, digest: str) -> Path:
        return self.directory / f"{digest}.txt"

    def load(self, digest: str) -> str | None:
        path = self.path(digest)
        if not path.exists():
            return None
        return path.read_text(encoding="utf-8")

    def save(self, digest: str, text: str) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path(digest).write_text(text, encoding="utf-8")


class StubProvider:
    """Deterministic offline provider.

    Synthesizes schema-valid responses from the request payload itself, so
    the whole pipeline (extraction, validation, retry) runs without network.
    """

    def complete(self, messages: list[dict], *, model: str, temperature: float) -> str:
        system = messages[0]["content"]
        user = messages[-1]["content"]
        if system == prompts.LOGIC_FLOW_SYSTEM:
            return self._logic_flow(user)
        if system == prompts.NARRATION_SYSTEM:
            return self._narration(user)
        if system == prompts.QUESTION_SYSTEM:
            sentence = user.split("\n", 1)[1] if "\n" in user else user
            return f"What is happening in this step, and why does it matter? {sentence}"
        raise ProviderUnreachable("stub provider: unrecognized prompt")

    @staticmethod
    def _payload(user: str) -> list[dict]:
        return json.loads(extract_json_payload(user))

    def _logic_flow(self, user: str) -> str:
        entries = []
        for cell in self._payload(user):
            analysis = dataflow.analyze_cell_names(cell["source"])
            inputs = sorted(analysis.referenced) + dataflow.file_path_literals(cell["source"])
            entries.append({
                "id": cell["id"],
                "description": dataflow.default_description(cell["source"], cell["id"]),
                "inputs": inputs,
                "outputs": sorted(analysis.defined),
            })
        return "```json\n" + json.dumps(entries, ensure_ascii=False, indent=2) + "\n```"

    def _narration(self, user: str) -> str:
        entries = []
        for cell in self._payload(user):
            description = dataflow.default_description(cell["source"], cell["id"])
            phrase = description[0].lower() + description[1:] if description else "this step"
            sentences = [f"Now we move on to cell {cell['id']}, where the goal is: {phrase}."]
            for emphasis in cell.get("emphases", []):
                note = emphasis["annotation"].rstrip(".")
                sentences.append(f"Here we rely on `{emphasis['code_snippet']}`: {note}.")
            if not cell.get("emphases"):
                sentences.append("The result shows how this step fits into the overall analysis.")
            first = cell.get("emphases", [{}])[0] if cell.get("emphases") else {}
            entries.append({
                "id": cell["id"],
                "narration": " ".join(sentences),
                "inputs": {
                    "code_snippet": first.get("code_snippet", ""),
                    "annotation": first.get("annotation", ""),
                },
            })
        return "```json\n" + json.dumps(entries, ensure_ascii=False, indent=2) + "\n```"


_FENCED_RE = re.compile(r"```[A-Za-z0-9_-]*\n(.*?)```", re.DOTALL)


def extract_json_payload(text: str) -> str:
    """The first fenced code block, else the widest braces/brackets span."""
    match = _FENCED_RE.search(text)
    if match:
        return match.group(1).strip()
    starts = [i for i in (text.find("["), text.find("{")) if i != -1]
    ends = [i for i in (text.rfind("]"), text.rfind("}")) if i != -1]
    if starts and ends and min(starts) < max(ends):
        return text[min(starts):max(ends) + 1].strip()
    raise SchemaInvalid("response contains no JSON payload")


def validate_logic_flow_payload(text: str, expected_ids: Sequence[int]) -> list[dict]:
    """Parse a logic-flow response and check ids and required keys."""
    try:
        payload = json.loads(extract_json_payload(text))
    except json.JSONDecodeError as exc:
        raise SchemaInvalid(f"logic flow response is not valid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise SchemaInvalid("logic flow response must be a JSON list")
    if len(payload) != len(expected_ids):
        raise SchemaInvalid(f"expected {len(expected_ids)} entries, got {len(payload)}")
    for position, (entry, expected_id) in enumerate(zip(payload, expected_ids)):
        if not isinstance(entry, dict):
            raise SchemaInvalid(f"[{position}]: entry must be an object")
        for key in ("id", "description", "inputs", "outputs"):
            if key not in entry:
                raise SchemaInvalid(f"[{position}].{key}: missing")
        if entry["id"] != expected_id:
            raise SchemaInvalid(f"[{position}].id: expected {expected_id}, got {entry['id']!r}")
        if not isinstance(entry["description"], str) or not entry["description"].strip():
            raise SchemaInvalid(f"[{position}].description: must be non-empty text")
        for key in ("inputs", "outputs"):
            if not isinstance(entry[key], list):
                raise SchemaInvalid(f"[{position}].{key}: must be a list")
    return payload


def validate_narration_payload(text: str, expected_ids: Sequence[int]) -> list[NarrationResult]:
    try:
        payload = json.loads(extract_json_payload(text))
    except json.JSONDecodeError as exc:
        raise SchemaInvalid(f"narration response is not valid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise SchemaInvalid("narration response must be a JSON list")
    by_id: dict[int, NarrationResult] = {}
    for position, entry in enumerate(payload):
        if not isinstance(entry, dict):
            raise SchemaInvalid(f"[{position}]: entry must be an object")
        for key in ("id", "narration", "inputs"):
            if key not in entry:
                raise SchemaInvalid(f"[{position}].{key}: missing")
        if entry["id"] not in expected_ids:
            raise SchemaInvalid(f"[{position}].id: {entry['id']!r} does not name a requested cell")
        if not isinstance(entry["narration"], str) or not entry["narration"].strip():
            raise SchemaInvalid(f"[{position}].narration: must be non-empty text")
        inputs = entry["inputs"]
        if not isinstance(inputs, dict) or "code_snippet" not in inputs or "annotation" not in inputs:
            raise SchemaInvalid(f"[{position}].inputs: must carry code_snippet and annotation")
        by_id[entry["id"]] = NarrationResult(id=entry["id"], narration=entry["narration"], inputs=inputs)
    missing = [i for i in expected_ids if i not in by_id]
    if missing:
        raise SchemaInvalid(f"missing narration entries for cells {missing}")
    return [by_id[i] for i in expected_ids]


class LlmBridge:
    """Renders prompts, talks to a provider, validates, and optionally
    records or replays fixtures keyed by request hash.
    """

    def __init__(self, provider: ChatProvider | None = None,
                 fixtures: FixtureStore | None = None, record: bool = False,
                 model: str = DEFAULT_MODEL, temperature: float = DEFAULT_TEMPERATURE):
        if provider is None and fixtures is None:
            raise ValueError("need a provider, fixtures, or both")
        self.provider = provider
        self.fixtures = fixtures
        self.record = record
        self.model = model
        self.temperature = temperature
        self.exchanges: list[LlmExchange] = []

    def _complete(self, template_name: str, messages: list[dict]) -> tuple[str, LlmExchange]:
        digest = request_hash(template_name, messages, self.model)
        if self.fixtures is not None and not self.record:
            stored = self.fixtures.load(digest)
            if stored is None:
                raise FixtureMiss(f"no fixture for request {digest[:12]}... ({template_name})")
            exchange = LlmExchange(digest, stored)
            self.exchanges.append(exchange)
            return stored, exchange
        assert self.provider is not None
        text = self.provider.complete(messages, model=self.model, temperature=self.temperature)
        if self.fixtures is not None and self.record:
            self.fixtures.save(digest, text)
        exchange = LlmExchange(digest, text)
        self.exchanges.append(exchange)
        return text, exchange

    def _complete_validated(self, template_name: str, messages: list[dict], validate):
        text, exchange = self._complete(template_name, messages)
        try:
            result = validate(text)
        except SchemaInvalid as first_error:
            retry_messages = messages + [
                {"role": "assistant", "content": text},
                {"role": "user", "content": CORRECTIVE_INSTRUCTION},
            ]
            try:
                text, exchange = self._complete(template_name, retry_messages)
            except FixtureMiss:
                raise first_error from None
            result = validate(text)  # raises SchemaInvalid if still bad
        exchange.validated = True
        return result

    # --- operations --------------------------------------------------------

    def generate_logic_descriptions(self, notebook: Notebook) -> list[dict]:
        cells = code_cells(notebook)
        if not cells:
            return []
        ids = [cell.index for cell in cells]
        payload = [{"id": cell.index, "source": cell.source} for cell in cells]
        messages = [
            {"role": "system", "content": TEMPLATES["logic_flow"].system_text},
            {"role": "user", "content": "Notebook cells:\n```json\n"
                                        + json.dumps(payload, ensure_ascii=False, indent=2) + "\n```"},
        ]
        return self._complete_validated("logic_flow", messages,
                                        lambda text: validate_logic_flow_payload(text, ids))

    def generate_narrations(self, notebook: Notebook,
                            emphases: Sequence[EmphasisElement],
                            cell_indices: Sequence[int] | None = None) -> list[NarrationResult]:
        cells = {cell.index: cell for cell in code_cells(notebook)}
        for emphasis in emphases:
            if emphasis.cell_index not in cells:
                raise ValueError(f"emphasis {emphasis.id} references cell {emphasis.cell_index}, "
                                 "which is not a code cell")
            source = cells[emphasis.cell_index].source
            start, end = emphasis.span
            if not (0 <= start < end <= len(source)):
                raise ValueError(f"emphasis {emphasis.id} span {emphasis.span} is outside its cell source")
        ids = list(cell_indices) if cell_indices is not None else sorted(cells)
        if not ids:
            return []
        unknown = [i for i in ids if i not in cells]
        if unknown:
            raise ValueError(f"requested cells {unknown} are not code cells")
        payload = []
        for index in ids:
            cell = cells[index]
            payload.append({
                "id": index,
                "source": cell.source,
                "emphases": [
                    {"code_snippet": cell.source[e.span[0]:e.span[1]], "annotation": e.annotation}
                    for e in emphases if e.cell_index == index
                ],
            })
        messages = [
            {"role": "system", "content": TEMPLATES["narration"].system_text},
            {"role": "user", "content": "Notebook cells with emphasis elements:\n```json\n"
                                        + json.dumps(payload, ensure_ascii=False, indent=2) + "\n```"},
        ]
        return self._complete_validated("narration", messages,
                                        lambda text: validate_narration_payload(text, ids))

    def transform_to_question(self, sentence: str) -> str:
        if not sentence.strip():
            raise EmptyText("cannot transform an empty sentence")
        messages = [
            {"role": "system", "content": TEMPLATES["question_transform"].system_text},
            {"role": "user", "content": f"Sentence:\n{sentence}"},
        ]
        text, exchange = self._complete("question_transform", messages)
        if not text.strip():
            raise SchemaInvalid("question transform returned empty text")
        exchange.validated = True
        return text.strip()


def bridge_from_env(stub: bool = False, fixtures_dir: str | None = None,
                    record: bool = False) -> LlmBridge:
    """Build a bridge from environment configuration.

    CELLCAST_LLM_URL / _MODEL / _KEY / _TIMEOUT / _TEMPERATURE select the
    live provider; CELLCAST_LLM_FIXTURES selects replay mode. `stub` wins
    over both.
    """
    model = os.environ.get("CELLCAST_LLM_MODEL", DEFAULT_MODEL)
    temperature = float(os.environ.get("CELLCAST_LLM_TEMPERATURE", DEFAULT_TEMPERATURE))
    if stub:
        return LlmBridge(StubProvider(), model=model, temperature=temperature)
    fixtures_dir = fixtures_dir or os.environ.get("CELLCAST_LLM_FIXTURES")
    fixtures = FixtureStore(fixtures_dir) if fixtures_dir else None
    endpoint = os.environ.get("CELLCAST_LLM_URL")
    provider = None
    if endpoint:
        provider = HttpChatProvider(
            endpoint,
            api_key=os.environ.get("CELLCAST_LLM_KEY", ""),
            timeout=float(os.environ.get("CELLCAST_LLM_TIMEOUT", DEFAULT_TIMEOUT_S)),
        )
    if provider is None and fixtures is None:
        raise ProviderUnreachable(
            "no LLM configured: set CELLCAST_LLM_URL or CELLCAST_LLM_FIXTURES, or use stub mode")
    return LlmBridge(provider, fixtures=fixtures, record=record and provider is not None,
                     model=model, temperature=temperature)
