import http.server
import json
import socket
import threading

import numpy as np
import pytest

LOOPBACK = {"127.0.0.1", "::1", "localhost"}
_attempts = []  # every connect() seen while the guard is active


def _host(address):
    if isinstance(address, (tuple, list)) and address:
        return str(address[0])
    return None  # AF_UNIX paths and the like


_real_connect = socket.socket.connect
_real_connect_ex = socket.socket.connect_ex


def _guarded(real):
    def connect(self, address):
        host = _host(address)
        _attempts.append(host)
        if host is not None and host not in LOOPBACK:
            raise RuntimeError(f"network access blocked in tests: {address!r}")
        return real(self, address)
    return connect


@pytest.fixture(autouse=True, scope="session")
def no_network():
    """Only loopback connections are allowed for the whole suite."""
    socket.socket.connect = _guarded(_real_connect)
    socket.socket.connect_ex = _guarded(_real_connect_ex)
    yield
    socket.socket.connect = _real_connect
    socket.socket.connect_ex = _real_connect_ex


@pytest.fixture
def connection_log():
    """List of hosts connected to during the test, loopback included."""
    start = len(_attempts)

    class Log:
        @property
        def hosts(self):
            return _attempts[start:]
    return Log()


def completion(text):
    return json.dumps({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]})


class MockChat:
    """Loopback chat-completions server.

    ``script`` is consumed first, one ``(status, body)`` per request; after it
    runs out ``responder(request_json)`` produces the completion text.
    """

    def __init__(self):
        self.script = []
        self.requests = []
        self.headers = []
        self.responder = lambda req: "Final answer: [2/not specified in the text] \n\n Explanation: none."
        self.lock = threading.Lock()
        mock = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                raw = self.rfile.read(int(self.headers.get("Content-Length", 0)))
                with mock.lock:
                    mock.requests.append(raw)
                    mock.headers.append(dict(self.headers))
                    step = mock.script.pop(0) if mock.script else None
                if step is None:
                    status, body = 200, completion(mock.responder(json.loads(raw)))
                else:
                    status, body = step
                data = body.encode() if isinstance(body, str) else body
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self.server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, kwargs={"poll_interval": 0.02}, daemon=True)
        self.thread.start()
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/v1"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def mock_chat():
    m = MockChat()
    yield m
    m.close()


@pytest.fixture
def endpoint(mock_chat):
    from echoexplain.llm_gateway import EndpointConfig
    return EndpointConfig(base_url=mock_chat.url, model="mock", timeout=5, max_retries=3,
                          backoff_base=0.01, online=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}  # criterion number -> (passed, detail), filled by test_acceptance.py


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
