"""Chat-completion extraction backend with deterministic prompts.

Two prompts drive the remote path: one retrieves ToC text from the raw
page stream, one structures that text into index JSON guided by a single
worked example and the index schema. Prompt templates live in
``prompts/``; rendering is byte-deterministic so both prompts can be
pinned by golden tests. A fixture-driven mock transport stands in for the
real endpoint everywhere tests need it.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import requests

from .errors import (
    EmptyReply,
    InvariantViolation,
    MalformedInput,
    SchemaViolation,
    TransportError,
    UnboundPlaceholder,
)
from .pagedoc import PagedDocument
from .tocgrammar import (
    Heading,
    Subheading,
    TocIndex,
    index_from_jsonable,
    index_to_json_bytes,
)

_PLACEHOLDER = re.compile(r"\{\{([A-Z_]+)\}\}")
_TEMPLATE_SEPARATOR = "---"

# JSON Schema for the canonical index format, bound to {{SCHEMA}}.
INDEX_JSON_SCHEMA = """\
{
  "type": "object",
  "required": ["toc"],
  "properties": {
    "toc": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["hn", "ht", "sh"],
        "properties": {
          "hn": {"type": "string", "minLength": 1},
          "ht": {"type": "string", "minLength": 1},
          "sh": {
            "type": "array",
            "items": {
              "type": "object",
              "required": ["shn", "sht"],
              "properties": {
                "shn": {"type": "string", "minLength": 1},
                "sht": {"type": "string", "minLength": 1}
              }
            }
          }
        }
      }
    }
  }
}"""


class PromptId(Enum):
    TOC_RETRIEVAL = "toc_retrieval"
    FEW_SHOT_STRUCTURING = "few_shot_structuring"


@dataclass(frozen=True)
class PromptTemplate:
    id: PromptId
    system_text: str
    user_text_template: str


def load_template(prompt_id: PromptId) -> PromptTemplate:
    """Load a versioned template from package data."""
    text = (
        resources.files("tocindex")
        .joinpath(f"prompts/{prompt_id.value}.txt")
        .read_text(encoding="utf-8")
    )
    lines = text.split("\n")
    try:
        split_at = lines.index(_TEMPLATE_SEPARATOR)
    except ValueError:
        raise MalformedInput(f"template {prompt_id.value} has no '---' separator") from None
    system = "\n".join(lines[:split_at]).strip("\n")
    user = "\n".join(lines[split_at + 1 :]).strip("\n")
    return PromptTemplate(id=prompt_id, system_text=system, user_text_template=user)


def render_prompt(template: PromptTemplate, bindings: dict[str, str]) -> list[dict[str, str]]:
    """Substitute placeholders and return [system message, user message].

    Every placeholder used by the template must be bound; substitution is a
    single pass, so placeholder-like text inside bound values stays inert.
    """
    used = set(_PLACEHOLDER.findall(template.system_text))
    used |= set(_PLACEHOLDER.findall(template.user_text_template))
    missing = sorted(used - bindings.keys())
    if missing:
        raise UnboundPlaceholder(f"unbound placeholders: {', '.join(missing)}")

    def substitute(text: str) -> str:
        return _PLACEHOLDER.sub(lambda m: bindings[m.group(1)], text)

    return [
        {"role": "system", "content": substitute(template.system_text)},
        {"role": "user", "content": substitute(template.user_text_template)},
    ]


@dataclass(frozen=True)
class LlmConfig:
    base_url: str
    model_name: str
    temperature: float = 0.0
    max_retries: int = 2
    timeout: float = 60.0
    api_key_source: str = "LLM_API_KEY"

    def __post_init__(self):
        if self.temperature < 0:
            raise InvariantViolation("temperature must be >= 0")
        if self.max_retries < 0:
            raise InvariantViolation("max_retries must be >= 0")

    @classmethod
    def from_jsonable(cls, obj) -> "LlmConfig":
        if not isinstance(obj, dict) or "base_url" not in obj or "model_name" not in obj:
            raise MalformedInput('LLM config needs "base_url" and "model_name"')
        known = {f for f in ("base_url", "model_name", "temperature", "max_retries", "timeout", "api_key_source")}
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass(frozen=True)
class FewShotExample:
    input_text: str
    output_index: TocIndex


def default_few_shot_example() -> FewShotExample:
    """The single worked example bound into the structuring prompt."""
    input_text = "\n".join(
        [
            "TABLE OF CONTENTS",
            "DIVISION 03 - CONCRETE",
            "03 30 00 Cast-in-Place Concrete ....... 12",
            "03 40 00 Precast Concrete ....... 19",
            "DIVISION 04 - MASONRY",
            "04 20 00 Unit Masonry ....... 24",
        ]
    )
    output_index = TocIndex(
        headings=(
            Heading(
                hn="03",
                ht="CONCRETE",
                subheadings=(
                    Subheading(shn="033000", sht="Cast-in-Place Concrete"),
                    Subheading(shn="034000", sht="Precast Concrete"),
                ),
            ),
            Heading(
                hn="04",
                ht="MASONRY",
                subheadings=(Subheading(shn="042000", sht="Unit Masonry"),),
            ),
        )
    )
    return FewShotExample(input_text=input_text, output_index=output_index)


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------


def request_digest(body: dict) -> str:
    """Stable SHA-256 over the canonical JSON bytes of a request body."""
    canonical = json.dumps(body, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class HttpTransport:
    """POSTs chat-completion bodies to ``{base_url}/v1/chat/completions``."""

    def __init__(self, config: LlmConfig):
        self.config = config

    def send(self, body: dict) -> str:
        url = self.config.base_url.rstrip("/") + "/v1/chat/completions"
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_source, "")
        if api_key:
            headers["Authorization"] = "Bearer " + api_key
        try:
            response = requests.post(url, json=body, headers=headers, timeout=self.config.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"request to {url} failed: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(f"HTTP {response.status_code} from {url}")
        try:
            payload = response.json()
            content = payload["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise TransportError(f"malformed completion payload from {url}: {exc}") from exc
        if not isinstance(content, str):
            raise TransportError(f"completion content is not text ({type(content).__name__})")
        return content


class MockTransport:
    """Replays canned replies keyed by request digest from a fixture directory.

    A file named ``<digest>.txt`` answers exactly that request; a
    ``default.txt`` file, when present, answers anything else.
    """

    def __init__(self, fixture_dir):
        self.fixture_dir = Path(fixture_dir)

    def send(self, body: dict) -> str:
        digest = request_digest(body)
        exact = self.fixture_dir / f"{digest}.txt"
        if exact.is_file():
            return exact.read_text(encoding="utf-8")
        fallback = self.fixture_dir / "default.txt"
        if fallback.is_file():
            return fallback.read_text(encoding="utf-8")
        raise TransportError(f"no canned reply for request digest {digest}")


def add_canned_reply(fixture_dir, body: dict, reply: str) -> Path:
    """Write the canned reply for ``body`` into a mock fixture directory."""
    directory = Path(fixture_dir)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{request_digest(body)}.txt"
    path.write_text(reply, encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Request building and the two extraction operations
# ---------------------------------------------------------------------------


def document_raw_text(doc: PagedDocument) -> str:
    """Flatten a document into the page-by-page text bound to {{RAW_TEXT}}."""
    blocks = []
    for page in doc.pages:
        blocks.append(f"=== Page {page.number} ===")
        blocks.extend(page.lines)
    return "\n".join(blocks)


def _request_body(config: LlmConfig, messages: list[dict[str, str]]) -> dict:
    return {
        "model": config.model_name,
        "temperature": config.temperature,
        "messages": messages,
    }


def build_retrieval_request(doc: PagedDocument, config: LlmConfig) -> dict:
    messages = render_prompt(
        load_template(PromptId.TOC_RETRIEVAL), {"RAW_TEXT": document_raw_text(doc)}
    )
    return _request_body(config, messages)


def build_structuring_request(toc_lines, example: FewShotExample, config: LlmConfig) -> dict:
    messages = render_prompt(
        load_template(PromptId.FEW_SHOT_STRUCTURING),
        {
            "SCHEMA": INDEX_JSON_SCHEMA,
            "EXAMPLE_IN": example.input_text,
            "EXAMPLE_OUT": index_to_json_bytes(example.output_index).decode("utf-8"),
            "TOC_TEXT": "\n".join(toc_lines),
        },
    )
    return _request_body(config, messages)


def _send_with_retry(transport, body: dict, max_retries: int) -> str:
    last: TransportError | None = None
    for _ in range(1 + max_retries):
        try:
            return transport.send(body)
        except TransportError as exc:
            last = exc
    raise last


def retrieve_toc_text(doc: PagedDocument, config: LlmConfig, transport=None) -> list[str]:
    """Ask the model for the ToC text of ``doc``; reply split into lines."""
    transport = transport if transport is not None else HttpTransport(config)
    reply = _send_with_retry(transport, build_retrieval_request(doc, config), config.max_retries)
    if not reply.strip():
        raise EmptyReply("model returned no ToC text")
    return reply.splitlines()


def _strip_code_fences(text: str) -> str:
    stripped = text.strip()
    if stripped.startswith("```"):
        stripped = re.sub(r"^```[A-Za-z0-9_-]*\s*", "", stripped)
        stripped = re.sub(r"\s*```$", "", stripped)
    return stripped.strip()


def structure_toc(toc_lines, example: FewShotExample, config: LlmConfig, transport=None) -> TocIndex:
    """Convert retrieved ToC lines into a validated index via the model.

    Performs at most ``1 + max_retries`` requests. A parse or schema
    failure appends a repair turn (the bad reply plus the parse error) and
    retries; transport failures retry the same conversation. The returned
    index always validates against the canonical schema.
    """
    toc_lines = list(toc_lines)
    if not toc_lines:
        raise InvariantViolation("structure_toc requires at least one ToC line")
    transport = transport if transport is not None else HttpTransport(config)

    messages = build_structuring_request(toc_lines, example, config)["messages"]
    last_error: Exception | None = None
    for _ in range(1 + config.max_retries):
        body = _request_body(config, messages)
        try:
            reply = transport.send(body)
        except TransportError as exc:
            last_error = exc
            continue
        if not reply.strip():
            raise EmptyReply("model returned an empty structuring reply")
        try:
            parsed = json.loads(_strip_code_fences(reply))
        except json.JSONDecodeError as exc:
            last_error = SchemaViolation(f"reply is not valid JSON: {exc}")
        else:
            try:
                return index_from_jsonable(parsed)
            except MalformedInput as exc:
                last_error = SchemaViolation(f"reply does not match the index schema: {exc}")
        messages = messages + [
            {"role": "assistant", "content": reply},
            {
                "role": "user",
                "content": f"{last_error}\nReturn only valid JSON matching the schema.",
            },
        ]
    if isinstance(last_error, TransportError):
        raise last_error
    raise SchemaViolation(f"no schema-valid reply after {1 + config.max_retries} attempts: {last_error}")


def seed_mock_extraction(
    fixture_dir,
    doc: PagedDocument,
    toc_lines,
    index: TocIndex,
    example: FewShotExample | None = None,
    config: LlmConfig | None = None,
) -> None:
    """Write the canned replies that walk a document through the mock path.

    After seeding, ``retrieve_toc_text`` answers with ``toc_lines`` and
    ``structure_toc`` answers with the canonical JSON of ``index`` for this
    document, example, and config combination.
    """
    example = example if example is not None else default_few_shot_example()
    config = config if config is not None else DEFAULT_MOCK_CONFIG
    reply = "\n".join(toc_lines)
    add_canned_reply(fixture_dir, build_retrieval_request(doc, config), reply)
    # The structuring request must see exactly the lines the pipeline will
    # recover from the retrieval reply.
    add_canned_reply(
        fixture_dir,
        build_structuring_request(reply.splitlines(), example, config),
        index_to_json_bytes(index).decode("utf-8"),
    )


# Fixed config for the mock path so request digests are reproducible.
DEFAULT_MOCK_CONFIG = LlmConfig(base_url="http://mock.invalid", model_name="mock-structurer")
