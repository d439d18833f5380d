import http.server
import json
import threading
import time

import pytest

from adasolve.llmclient import (
    BACKOFF_CAP_S,
    ChatRequest,
    HttpEndpoint,
    LLMClient,
    ProtocolError,
    RetriesExhaustedError,
    ScriptEntry,
    ScriptedBackend,
    TokenUsage,
    backoff_delays,
    count_usage_fallback,
    scripted_client,
)


class TestChatRequest:
    def test_requires_messages(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=())

    def test_rejects_bad_role(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=(("narrator", "hi"),))

    def test_prompt_text_joins_contents(self):
        req = ChatRequest(messages=(("system", "a"), ("user", "b")))
        assert req.prompt_text == "a\nb"


class TestTokenUsage:
    def test_total_is_sum(self):
        usage = TokenUsage(10, 2)
        assert usage.total_tokens == 12

    def test_addition(self):
        assert TokenUsage(1, 2) + TokenUsage(3, 4) == TokenUsage(4, 6)


class TestFallbackCounter:
    def test_empty(self):
        assert count_usage_fallback("", "") == TokenUsage(0, 0)

    def test_hand_counted_rule(self):
        # "a b c" -> 3 word tokens, "d e" -> 2, total 5
        usage = count_usage_fallback("a b c", "d e")
        assert (usage.prompt_tokens, usage.completion_tokens, usage.total_tokens) == (3, 2, 5)

    def test_punctuation_counts(self):
        usage = count_usage_fallback("hello, world!", "")
        assert usage.prompt_tokens == 4

    def test_idempotent(self):
        assert count_usage_fallback("x y", "z") == count_usage_fallback("x y", "z")


class TestScriptedBackend:
    def test_scripted_echo(self):
        client = scripted_client([ScriptEntry(match="any", reply="hello", prompt_tokens=10, completion_tokens=2)])
        response = client.complete(ChatRequest.user("whatever"))
        assert response.text == "hello"
        assert response.usage.total_tokens == 12
        assert response.attempts == 1

    def test_two_transient_failures_then_success(self):
        client = scripted_client(
            [ScriptEntry(reply="ok", prompt_tokens=1, completion_tokens=1, transient_failures=2)]
        )
        response = client.complete(ChatRequest.user("x"))
        assert response.text == "ok"
        assert response.attempts == 3

    def test_retries_exhausted(self):
        client = scripted_client([ScriptEntry(reply="ok", transient_failures=5)], max_attempts=3)
        with pytest.raises(RetriesExhaustedError):
            client.complete(ChatRequest.user("x"))

    def test_strict_script_exhausted_is_protocol_error(self):
        client = scripted_client([ScriptEntry(reply="one")], strict=True)
        client.complete(ChatRequest.user("a"))
        with pytest.raises(ProtocolError):
            client.complete(ChatRequest.user("b"))

    def test_strict_mismatch(self):
        client = scripted_client([ScriptEntry(match="alpha", reply="one")], strict=True)
        with pytest.raises(ProtocolError):
            client.complete(ChatRequest.user("beta"))

    def test_loose_matching_picks_first_unconsumed(self):
        client = scripted_client(
            [
                ScriptEntry(match="alpha", reply="A"),
                ScriptEntry(match="beta", reply="B"),
            ]
        )
        assert client.complete(ChatRequest.user("ask beta")).text == "B"
        assert client.complete(ChatRequest.user("ask alpha")).text == "A"

    def test_repeat_entries_are_reusable(self):
        client = scripted_client([ScriptEntry(reply="again", repeat=True)])
        for _ in range(4):
            assert client.complete(ChatRequest.user("x")).text == "again"

    def test_omitted_usage_triggers_fallback(self):
        client = scripted_client([ScriptEntry(reply="two words", omit_usage=True)])
        response = client.complete(ChatRequest.user("three tokens here"))
        assert response.usage_is_approximate
        assert response.usage.completion_tokens == 2
        assert response.usage.prompt_tokens == 3

    def test_scripted_determinism(self):
        def run():
            client = scripted_client(
                [
                    ScriptEntry(match="q1", reply="r1", prompt_tokens=5, completion_tokens=1),
                    ScriptEntry(match="q2", reply="r2", prompt_tokens=6, completion_tokens=2),
                ]
            )
            out = []
            for q in ("q1", "q2"):
                response = client.complete(ChatRequest.user(q))
                out.append((response.text, response.usage))
            return out

        assert run() == run()

    def test_thread_safe_matching(self):
        entries = [ScriptEntry(reply=f"r{i}") for i in range(16)]
        client = scripted_client(entries)
        seen = []
        lock = threading.Lock()

        def worker():
            response = client.complete(ChatRequest.user("x"))
            with lock:
                seen.append(response.text)

        threads = [threading.Thread(target=worker) for _ in range(16)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(seen) == sorted(f"r{i}" for i in range(16))


class TestBackoff:
    def test_delays_capped(self):
        delays = backoff_delays(6)
        assert all(d <= BACKOFF_CAP_S for d in delays)
        assert sum(delays) <= (6 - 1) * BACKOFF_CAP_S

    def test_sleeps_between_attempts(self):
        slept = []
        client = LLMClient(
            ScriptedBackend([ScriptEntry(reply="ok", transient_failures=2)]),
            max_attempts=3,
            sleep=slept.append,
        )
        client.complete(ChatRequest.user("x"))
        assert slept == backoff_delays(3)[:2]


class _SlowTransport:
    def __init__(self):
        self.active = 0
        self.peak = 0
        self.lock = threading.Lock()

    def send(self, request):
        with self.lock:
            self.active += 1
            self.peak = max(self.peak, self.active)
        time.sleep(0.01)
        with self.lock:
            self.active -= 1
        return "ok", TokenUsage(1, 1)


class TestConcurrencyLimit:
    def test_in_flight_cap_respected(self):
        transport = _SlowTransport()
        client = LLMClient(transport, concurrency=2)
        threads = [
            threading.Thread(target=lambda: client.complete(ChatRequest.user("x")))
            for _ in range(8)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert transport.peak <= 2


class _ChatHandler(http.server.BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        body = json.loads(self.rfile.read(length) or b"{}")
        self.server.seen.append({"path": self.path, "headers": dict(self.headers), "body": body})
        status, payload = self.server.responder(len(self.server.seen), body)
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def chat_server():
    servers = []

    def start(responder):
        server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _ChatHandler)
        server.seen = []
        server.responder = responder
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        servers.append(server)
        return server, f"http://127.0.0.1:{server.server_address[1]}/v1"

    yield start
    for server in servers:
        server.shutdown()


def _ok_payload(content="hello", usage=True):
    payload = {"choices": [{"message": {"role": "assistant", "content": content}}]}
    if usage:
        payload["usage"] = {"prompt_tokens": 7, "completion_tokens": 2, "total_tokens": 9}
    return payload


class TestHttpEndpoint:
    def test_round_trip_with_usage_and_auth(self, chat_server, monkeypatch):
        monkeypatch.setenv("TEST_CHAT_KEY", "sk-secret")
        server, base_url = chat_server(lambda n, body: (200, _ok_payload()))
        client = LLMClient(HttpEndpoint(base_url, model="tiny-model", api_key_env="TEST_CHAT_KEY"))
        response = client.complete(
            ChatRequest.user("what is 2+2?", temperature=0.7, max_tokens=64, seed=5)
        )
        assert response.text == "hello"
        assert response.usage == TokenUsage(7, 2)
        assert not response.usage_is_approximate
        request = server.seen[0]
        assert request["path"] == "/v1/chat/completions"
        assert request["headers"]["Authorization"] == "Bearer sk-secret"
        assert request["body"]["model"] == "tiny-model"
        assert request["body"]["temperature"] == 0.7
        assert request["body"]["max_tokens"] == 64
        assert request["body"]["seed"] == 5
        assert request["body"]["messages"] == [{"role": "user", "content": "what is 2+2?"}]

    def test_missing_usage_falls_back(self, chat_server):
        _, base_url = chat_server(lambda n, body: (200, _ok_payload("two words", usage=False)))
        client = LLMClient(HttpEndpoint(base_url, model="m"))
        response = client.complete(ChatRequest.user("hi"))
        assert response.usage_is_approximate
        assert response.usage.completion_tokens == 2

    def test_transient_500_retried(self, chat_server):
        def responder(n, body):
            if n <= 2:
                return 500, {"error": "boom"}
            return 200, _ok_payload()

        _, base_url = chat_server(responder)
        client = LLMClient(HttpEndpoint(base_url, model="m"), max_attempts=3, sleep=lambda s: None)
        response = client.complete(ChatRequest.user("hi"))
        assert response.attempts == 3

    def test_client_error_is_protocol_error(self, chat_server):
        server, base_url = chat_server(lambda n, body: (404, {"error": "nope"}))
        client = LLMClient(HttpEndpoint(base_url, model="m"), sleep=lambda s: None)
        with pytest.raises(ProtocolError):
            client.complete(ChatRequest.user("hi"))
        assert len(server.seen) == 1  # not retried

    def test_unreachable_exhausts_retries(self):
        client = LLMClient(
            HttpEndpoint("http://127.0.0.1:1/v1", model="m"), max_attempts=2, sleep=lambda s: None
        )
        with pytest.raises(RetriesExhaustedError):
            client.complete(ChatRequest.user("hi"))
