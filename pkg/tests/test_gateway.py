import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from watertrav.dataset import DEFAULT_ROBOTS
from watertrav.gateway import (
    BACKOFF_JITTER,
    BackendConfig,
    GatewayError,
    MockBackend,
    MockRule,
    PermanentBackendError,
    RetriesExhaustedError,
    VlmGateway,
    VlmRequest,
    backoff_delay_s,
    build_chat_payload,
    encode_image_data_url,
)
from watertrav.prompts import PromptSpec, render_prompt

HUSKY = DEFAULT_ROBOTS[0]


def _request(config, key="instance_0", tag=""):
    spec = PromptSpec(robot=HUSKY, strategy="plain", query_mode="per_instance_crop", expected_keys=(key,))
    image = np.full((6, 8, 3), 40, dtype=np.uint8)
    return VlmRequest(prompt=render_prompt(spec), images=(image,), config=config, tag=tag or f"{key}:husky_a200")


def _mock_config(**kwargs):
    defaults = dict(kind="mock", model_tag="mock-vlm", max_retries=3, max_parallel=1)
    defaults.update(kwargs)
    return BackendConfig(**defaults)


def test_config_validation():
    with pytest.raises(ValueError):
        BackendConfig(kind="grpc", model_tag="x")
    with pytest.raises(ValueError):
        BackendConfig(kind="http_chat", model_tag="x")  # endpoint missing
    with pytest.raises(ValueError):
        BackendConfig(kind="mock", model_tag="x", temperature=float("nan"))
    with pytest.raises(ValueError):
        BackendConfig(kind="mock", model_tag="x", max_parallel=0)


def test_scripted_response_verbatim():
    config = _mock_config()
    backend = MockBackend(rules=[MockRule(match="instance_0", text='{"instance_0": 2}')])
    response = VlmGateway(config, backend=backend).send(_request(config))
    assert response.raw_text == '{"instance_0": 2}'
    assert response.attempt_count == 1


def test_raw_text_never_trimmed():
    config = _mock_config()
    text = "  {\"instance_0\": 2}\n\n"
    backend = MockBackend(default_text=text)
    assert VlmGateway(config, backend=backend).send(_request(config)).raw_text == text


def test_fail_twice_then_succeed():
    config = _mock_config(max_retries=3)
    backend = MockBackend(rules=[MockRule(match="instance_0", text="ok", fail_times=2)])
    sleeps = []
    response = VlmGateway(config, backend=backend, sleeper=sleeps.append).send(_request(config))
    assert response.attempt_count == 3
    assert len(sleeps) == 2
    # exponential backoff with +-20% jitter: attempt 1 ~1 s, attempt 2 ~2 s
    assert 0.8 <= sleeps[0] <= 1.2
    assert 1.6 <= sleeps[1] <= 2.4


def test_always_fail_exhausts_retries():
    config = _mock_config(max_retries=2)
    backend = MockBackend(rules=[MockRule(match="instance_0", always_fail=True)])
    sleeps = []
    with pytest.raises(RetriesExhaustedError) as err:
        VlmGateway(config, backend=backend, sleeper=sleeps.append).send(_request(config))
    assert err.value.attempts == 3
    assert len(sleeps) == 2  # no sleep after the final attempt


def test_permanent_error_not_retried():
    config = _mock_config(max_retries=5)
    backend = MockBackend(rules=[MockRule(match="instance_0", always_fail=True, permanent=True)])
    sleeps = []
    with pytest.raises(PermanentBackendError):
        VlmGateway(config, backend=backend, sleeper=sleeps.append).send(_request(config))
    assert sleeps == []


def test_mock_match_by_index():
    config = _mock_config()
    backend = MockBackend(rules=[MockRule(match=1, text="second")], default_text="other")
    gateway = VlmGateway(config, backend=backend)
    assert gateway.send(_request(config)).raw_text == "other"
    assert gateway.send(_request(config)).raw_text == "second"


def test_backoff_delay_bounds():
    import random

    rng = random.Random(0)
    for attempt in (1, 2, 3, 4):
        base = 1.0 * (2.0 ** (attempt - 1))
        for _ in range(50):
            delay = backoff_delay_s(attempt, rng)
            assert base * (1 - BACKOFF_JITTER) <= delay <= base * (1 + BACKOFF_JITTER)


def test_batch_order_preserved():
    config = _mock_config(max_parallel=3)
    backend = MockBackend(rules=[MockRule(match=i, text=f"r{i}") for i in range(10)])
    gateway = VlmGateway(config, backend=backend)
    requests_list = [_request(config) for _ in range(10)]
    results = gateway.send_batch(requests_list)
    assert [r.raw_text for r in results] == [f"r{i}" for i in range(10)]


def test_batch_of_one_matches_send():
    config = _mock_config()
    backend = MockBackend(default_text="only")
    gateway = VlmGateway(config, backend=backend)
    [result] = gateway.send_batch([_request(config)])
    assert result.raw_text == "only"


def test_batch_isolates_failures():
    config = _mock_config(max_retries=0, max_parallel=2)
    backend = MockBackend(
        rules=[MockRule(match="sinkhole", always_fail=True)],
        default_text="fine",
    )
    gateway = VlmGateway(config, backend=backend)
    requests_list = [_request(config) for _ in range(5)]
    requests_list[3] = _request(config, tag="sinkhole:husky_a200")
    results = gateway.send_batch(requests_list)
    assert [isinstance(r, GatewayError) for r in results] == [False, False, False, True, False]
    assert all(r.raw_text == "fine" for i, r in enumerate(results) if i != 3)


def test_batch_respects_max_parallel():
    config = _mock_config(max_parallel=3)
    backend = MockBackend(default_text="ok", hold_s=0.03)
    gateway = VlmGateway(config, backend=backend)
    gateway.send_batch([_request(config) for _ in range(12)])
    assert 2 <= backend.max_inflight_seen <= 3


def test_batch_rejects_empty():
    config = _mock_config()
    with pytest.raises(ValueError):
        VlmGateway(config, backend=MockBackend()).send_batch([])


def test_payload_shape_and_image_encoding():
    config = _mock_config(temperature=0.7, max_output_tokens=99)
    request = _request(config)
    payload = build_chat_payload(request)
    assert payload["model"] == "mock-vlm"
    assert payload["temperature"] == 0.7
    assert payload["max_tokens"] == 99
    [message] = payload["messages"]
    assert message["role"] == "user"
    kinds = [part["type"] for part in message["content"]]
    assert kinds == ["text", "image_url"]
    url = message["content"][1]["image_url"]["url"]
    assert url.startswith("data:image/png;base64,")
    png = base64.b64decode(url.split(",", 1)[1])
    assert png[:8] == b"\x89PNG\r\n\x1a\n"


def test_payload_attaches_images_to_first_user_turn():
    config = _mock_config()
    spec = PromptSpec(robot=HUSKY, strategy="role", query_mode="per_instance_crop", expected_keys=("k",))
    image = np.zeros((4, 4, 3), np.uint8)
    request = VlmRequest(prompt=render_prompt(spec), images=(image,), config=config)
    payload = build_chat_payload(request)
    assert [m["role"] for m in payload["messages"]] == ["system", "user"]
    assert all(part["type"] == "text" for part in payload["messages"][0]["content"])
    assert any(part["type"] == "image_url" for part in payload["messages"][1]["content"])


def test_request_image_slot_mismatch():
    config = _mock_config()
    spec = PromptSpec(robot=HUSKY, strategy="plain", query_mode="per_instance_crop", expected_keys=("k",))
    with pytest.raises(ValueError, match="image slot"):
        VlmRequest(prompt=render_prompt(spec), images=(), config=config)


def test_credentials_not_in_payload_or_config_repr(monkeypatch):
    secret = "sk-super-secret-value-123"
    monkeypatch.setenv("WT_TEST_KEY", secret)
    config = BackendConfig(
        kind="http_chat",
        model_tag="gpt-4o-2024-08-06",
        endpoint="http://localhost:1/v1/chat/completions",
        credentials_env="WT_TEST_KEY",
    )
    payload = build_chat_payload(_request(config))
    assert secret not in json.dumps(payload)
    assert secret not in repr(config)
    assert secret not in str(config)


class _ScriptedHandler(BaseHTTPRequestHandler):
    script = []
    requests_seen = []

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else {}
        type(self).requests_seen.append({"headers": dict(self.headers), "body": body})
        status, payload = self.script.pop(0) if self.script else (200, {"choices": [{"message": {"content": "ok"}}]})
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def http_stub():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _ScriptedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _ScriptedHandler.script = []
    _ScriptedHandler.requests_seen = []
    yield server, f"http://127.0.0.1:{server.server_address[1]}/v1/chat/completions"
    server.shutdown()


def _http_config(endpoint, **kwargs):
    defaults = dict(kind="http_chat", model_tag="test-model", endpoint=endpoint, max_retries=2)
    defaults.update(kwargs)
    return BackendConfig(**defaults)


def test_http_chat_success(http_stub):
    _, endpoint = http_stub
    _ScriptedHandler.script = [(200, {"choices": [{"message": {"content": '{"k": 2}'}}], "usage": {"total_tokens": 9}})]
    config = _http_config(endpoint)
    response = VlmGateway(config).send(_request(config, key="k"))
    assert response.raw_text == '{"k": 2}'
    assert response.metadata["usage"] == {"total_tokens": 9}


def test_http_chat_retries_429_and_5xx(http_stub):
    _, endpoint = http_stub
    _ScriptedHandler.script = [
        (429, {"error": "slow down"}),
        (503, {"error": "busy"}),
        (200, {"choices": [{"message": {"content": "done"}}]}),
    ]
    config = _http_config(endpoint, max_retries=3)
    sleeps = []
    response = VlmGateway(config, sleeper=sleeps.append).send(_request(config, key="k"))
    assert response.raw_text == "done"
    assert response.attempt_count == 3
    assert len(sleeps) == 2


def test_http_chat_4xx_is_permanent(http_stub):
    _, endpoint = http_stub
    _ScriptedHandler.script = [(401, {"error": "no auth"})]
    config = _http_config(endpoint, max_retries=5)
    with pytest.raises(PermanentBackendError, match="401"):
        VlmGateway(config, sleeper=lambda s: None).send(_request(config, key="k"))
    assert len(_ScriptedHandler.requests_seen) == 1


def test_http_chat_sends_bearer_credentials(http_stub, monkeypatch):
    _, endpoint = http_stub
    monkeypatch.setenv("WT_TEST_KEY2", "tok-abc")
    config = _http_config(endpoint, credentials_env="WT_TEST_KEY2")
    VlmGateway(config).send(_request(config, key="k"))
    headers = _ScriptedHandler.requests_seen[0]["headers"]
    assert headers.get("Authorization") == "Bearer tok-abc"


def test_http_chat_connection_error_is_transient():
    config = _http_config("http://127.0.0.1:9/v1/chat/completions", max_retries=1)
    sleeps = []
    with pytest.raises(RetriesExhaustedError):
        VlmGateway(config, sleeper=sleeps.append).send(_request(config, key="k"))
    assert len(sleeps) == 1
