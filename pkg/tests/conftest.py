import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from scenebgm.genstage import GenerationSettings, load_template


@pytest.fixture
def templates():
    return {name: load_template(name) for name in ("narrative", "music", "match")}


@pytest.fixture
def fast_settings():
    return GenerationSettings(seed=3, sleep=lambda _s: None)


class StubServer:
    """Tiny HTTP server whose responses are scripted per test.

    ``responses`` is a list of ``(status, body)`` consumed in order; the last
    entry repeats.  Every request body is recorded in ``requests``.
    """

    def __init__(self):
        self.responses = [(200, {"choices": [{"message": {"content": "canned completion"}}],
                                 "usage": {"completion_tokens": 2}})]
        self.requests = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                stub.requests.append({"path": self.path, "headers": dict(self.headers),
                                      "body": json.loads(raw) if raw else None})
                status, body = stub.responses[0] if len(stub.responses) == 1 else stub.responses.pop(0)
                data = body.encode() if isinstance(body, str) else json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self):
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_server():
    server = StubServer()
    yield server
    server.close()
