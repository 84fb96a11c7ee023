import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from tocindex.errors import EmptyReply, SchemaViolation, TransportError, UnboundPlaceholder
from tocindex.llmbackend import (
    DEFAULT_MOCK_CONFIG,
    FewShotExample,
    HttpTransport,
    LlmConfig,
    MockTransport,
    PromptId,
    add_canned_reply,
    build_retrieval_request,
    build_structuring_request,
    default_few_shot_example,
    load_template,
    render_prompt,
    request_digest,
    retrieve_toc_text,
    seed_mock_extraction,
    structure_toc,
)
from tocindex.pagedoc import PagedDocument, PageText
from tocindex.tocgrammar import index_to_json_bytes


def make_doc(*pages):
    return PagedDocument(
        pages=tuple(PageText(i, tuple(lines)) for i, lines in enumerate(pages, start=1))
    )


TOC_LINES = [
    "DIVISION 03 - CONCRETE",
    "03 30 00 Cast-in-Place Concrete ....... 12",
]


class CountingTransport:
    def __init__(self, replies):
        self.replies = list(replies)
        self.bodies = []

    def send(self, body):
        self.bodies.append(body)
        reply = self.replies[min(len(self.bodies), len(self.replies)) - 1]
        if isinstance(reply, Exception):
            raise reply
        return reply


# ---------------------------------------------------------------------------
# Prompt rendering
# ---------------------------------------------------------------------------


def test_render_is_deterministic():
    template = load_template(PromptId.FEW_SHOT_STRUCTURING)
    example = default_few_shot_example()
    bindings = {
        "SCHEMA": "{}",
        "EXAMPLE_IN": example.input_text,
        "EXAMPLE_OUT": index_to_json_bytes(example.output_index).decode(),
        "TOC_TEXT": "\n".join(TOC_LINES),
    }
    first = render_prompt(template, bindings)
    second = render_prompt(template, bindings)
    assert first == second
    assert [m["role"] for m in first] == ["system", "user"]
    assert "{{" not in first[0]["content"] and "{{" not in first[1]["content"]


def test_missing_binding_raises():
    template = load_template(PromptId.FEW_SHOT_STRUCTURING)
    with pytest.raises(UnboundPlaceholder) as excinfo:
        render_prompt(template, {"EXAMPLE_IN": "x", "EXAMPLE_OUT": "y", "TOC_TEXT": "z"})
    assert "SCHEMA" in str(excinfo.value)


def test_retrieval_prompt_contains_all_pages_in_order():
    doc = make_doc(["first page"], ["second page"], ["third page"])
    body = build_retrieval_request(doc, DEFAULT_MOCK_CONFIG)
    assert len(body["messages"]) == 2
    user = body["messages"][1]["content"]
    assert user.index("first page") < user.index("second page") < user.index("third page")


def test_placeholder_like_text_in_bindings_stays_inert():
    template = load_template(PromptId.TOC_RETRIEVAL)
    rendered = render_prompt(template, {"RAW_TEXT": "literal {{RAW_TEXT}} inside"})
    assert "literal {{RAW_TEXT}} inside" in rendered[1]["content"]


# ---------------------------------------------------------------------------
# Mock transport
# ---------------------------------------------------------------------------


def test_mock_replays_seeded_reply(tmp_path):
    body = {"model": "m", "temperature": 0.0, "messages": []}
    add_canned_reply(tmp_path, body, "hello")
    assert MockTransport(tmp_path).send(body) == "hello"


def test_mock_without_fixture_is_transport_error(tmp_path):
    with pytest.raises(TransportError):
        MockTransport(tmp_path).send({"model": "m"})


def test_mock_default_reply_answers_everything(tmp_path):
    (tmp_path / "default.txt").write_text("fallback", encoding="utf-8")
    assert MockTransport(tmp_path).send({"any": "thing"}) == "fallback"


def test_request_digest_is_key_order_independent():
    a = {"model": "m", "temperature": 0.0}
    b = {"temperature": 0.0, "model": "m"}
    assert request_digest(a) == request_digest(b)


# ---------------------------------------------------------------------------
# retrieve_toc_text / structure_toc
# ---------------------------------------------------------------------------


def test_retrieve_passes_through_mock_fixture(tmp_path):
    doc = make_doc(["TABLE OF CONTENTS"] + TOC_LINES)
    seed_mock_extraction(tmp_path, doc, TOC_LINES, default_few_shot_example().output_index)
    assert retrieve_toc_text(doc, DEFAULT_MOCK_CONFIG, MockTransport(tmp_path)) == TOC_LINES


def test_retrieve_empty_reply_raises(tmp_path):
    doc = make_doc(["x"])
    add_canned_reply(tmp_path, build_retrieval_request(doc, DEFAULT_MOCK_CONFIG), "  \n ")
    with pytest.raises(EmptyReply):
        retrieve_toc_text(doc, DEFAULT_MOCK_CONFIG, MockTransport(tmp_path))


def test_retrieve_retries_then_raises_transport_error():
    doc = make_doc(["x"])
    config = LlmConfig(base_url="http://x.invalid", model_name="m", max_retries=2)
    transport = CountingTransport([TransportError("boom")])
    with pytest.raises(TransportError):
        retrieve_toc_text(doc, config, transport)
    assert len(transport.bodies) == 1 + config.max_retries


def test_structure_happy_path():
    gold = default_few_shot_example().output_index
    transport = CountingTransport([index_to_json_bytes(gold).decode()])
    config = LlmConfig(base_url="http://x.invalid", model_name="m")
    result = structure_toc(TOC_LINES, default_few_shot_example(), config, transport)
    assert result == gold
    assert len(transport.bodies) == 1


def test_structure_strips_markdown_fences():
    gold = default_few_shot_example().output_index
    fenced = "```json" + index_to_json_bytes(gold).decode() + "```"
    transport = CountingTransport([fenced])
    config = LlmConfig(base_url="http://x.invalid", model_name="m")
    assert structure_toc(TOC_LINES, default_few_shot_example(), config, transport) == gold


def test_structure_repairs_after_bad_reply():
    gold = default_few_shot_example().output_index
    transport = CountingTransport(["not json at all", index_to_json_bytes(gold).decode()])
    config = LlmConfig(base_url="http://x.invalid", model_name="m", max_retries=2)
    assert structure_toc(TOC_LINES, default_few_shot_example(), config, transport) == gold
    assert len(transport.bodies) == 2
    repair = transport.bodies[1]["messages"]
    assert repair[-2]["role"] == "assistant"
    assert repair[-1]["role"] == "user"
    assert "Return only valid JSON matching the schema." in repair[-1]["content"]


def test_structure_prose_exhausts_retries():
    config = LlmConfig(base_url="http://x.invalid", model_name="m", max_retries=2)
    transport = CountingTransport(["prose"])
    with pytest.raises(SchemaViolation):
        structure_toc(TOC_LINES, default_few_shot_example(), config, transport)
    assert len(transport.bodies) == 1 + config.max_retries


def test_structure_schema_invalid_json_exhausts_retries():
    config = LlmConfig(base_url="http://x.invalid", model_name="m", max_retries=1)
    transport = CountingTransport(['{"toc": [{"hn": "1"}]}'])
    with pytest.raises(SchemaViolation):
        structure_toc(TOC_LINES, default_few_shot_example(), config, transport)
    assert len(transport.bodies) == 2


def test_structure_empty_reply_is_terminal():
    config = LlmConfig(base_url="http://x.invalid", model_name="m", max_retries=5)
    transport = CountingTransport([""])
    with pytest.raises(EmptyReply):
        structure_toc(TOC_LINES, default_few_shot_example(), config, transport)
    assert len(transport.bodies) == 1


def test_mock_end_to_end_matches_seeded_index(tmp_path):
    doc = make_doc(["TABLE OF CONTENTS"] + TOC_LINES)
    gold = default_few_shot_example().output_index
    seed_mock_extraction(tmp_path, doc, TOC_LINES, gold)
    transport = MockTransport(tmp_path)
    lines = retrieve_toc_text(doc, DEFAULT_MOCK_CONFIG, transport)
    assert structure_toc(lines, default_few_shot_example(), DEFAULT_MOCK_CONFIG, transport) == gold


# ---------------------------------------------------------------------------
# HTTP transport against a local endpoint
# ---------------------------------------------------------------------------


class _Endpoint:
    """Minimal chat-completions endpoint for transport tests."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

        endpoint = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers["Content-Length"])
                endpoint.requests.append(
                    {
                        "path": self.path,
                        "auth": self.headers.get("Authorization"),
                        "body": json.loads(self.rfile.read(length)),
                    }
                )
                status, payload = endpoint.responses[
                    min(len(endpoint.requests), len(endpoint.responses)) - 1
                ]
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def base_url(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


def _completion(text):
    return {"choices": [{"message": {"content": text}}]}


def test_http_transport_round_trip(monkeypatch):
    endpoint = _Endpoint([(200, _completion("reply text"))])
    try:
        monkeypatch.setenv("LLM_API_KEY", "secret-key")
        config = LlmConfig(base_url=endpoint.base_url, model_name="m", timeout=5)
        reply = HttpTransport(config).send({"model": "m", "temperature": 0.0, "messages": []})
        assert reply == "reply text"
        (request,) = endpoint.requests
        assert request["path"] == "/v1/chat/completions"
        assert request["auth"] == "Bearer secret-key"
        assert request["body"]["model"] == "m"
    finally:
        endpoint.close()


def test_http_500_retries_then_transport_error():
    endpoint = _Endpoint([(500, {"error": "down"})])
    try:
        config = LlmConfig(base_url=endpoint.base_url, model_name="m", max_retries=2, timeout=5)
        doc = make_doc(["x"])
        with pytest.raises(TransportError):
            retrieve_toc_text(doc, config, HttpTransport(config))
        assert len(endpoint.requests) == 1 + config.max_retries
    finally:
        endpoint.close()


def test_http_malformed_payload_is_transport_error():
    endpoint = _Endpoint([(200, {"unexpected": True})])
    try:
        config = LlmConfig(base_url=endpoint.base_url, model_name="m", max_retries=0, timeout=5)
        with pytest.raises(TransportError):
            HttpTransport(config).send({"model": "m", "temperature": 0.0, "messages": []})
    finally:
        endpoint.close()


def test_unreachable_endpoint_is_transport_error():
    config = LlmConfig(base_url="http://127.0.0.1:1", model_name="m", max_retries=0, timeout=1)
    with pytest.raises(TransportError):
        HttpTransport(config).send({"model": "m", "temperature": 0.0, "messages": []})


def test_few_shot_example_fields():
    example = FewShotExample(input_text="text", output_index=default_few_shot_example().output_index)
    assert example.input_text == "text"


def test_structuring_request_embeds_schema_and_example():
    body = build_structuring_request(TOC_LINES, default_few_shot_example(), DEFAULT_MOCK_CONFIG)
    user = body["messages"][1]["content"]
    assert '"required": ["toc"]' in user
    assert "DIVISION 03 - CONCRETE" in user
