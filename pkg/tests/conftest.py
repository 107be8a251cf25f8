"""Shared fixtures: a live service instance on a real socket plus a tiny ws client."""

import json
import socket
import threading
import time

import pytest
import uvicorn
from websockets.sync.client import connect

from adaptive_exposure.service import create_app


class LiveService:
    """create_app served by uvicorn in a daemon thread on an ephemeral port."""

    def __init__(self, trace_root, allow_manual=True):
        self.trace_root = trace_root
        self.app = create_app(trace_root, allow_manual=allow_manual)
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.bind(("127.0.0.1", 0))
        sock.listen(128)
        self.port = sock.getsockname()[1]
        self.server = uvicorn.Server(uvicorn.Config(self.app, log_level="error"))
        self.thread = threading.Thread(
            target=self.server.run, kwargs={"sockets": [sock]}, daemon=True
        )
        self.thread.start()
        deadline = time.time() + 10
        while not self.server.started:
            if time.time() > deadline:
                raise RuntimeError("service did not start")
            time.sleep(0.01)

    @property
    def http(self):
        return f"http://127.0.0.1:{self.port}"

    @property
    def ws_url(self):
        return f"ws://127.0.0.1:{self.port}/ws"

    def stop(self):
        self.server.should_exit = True
        self.thread.join(timeout=10)


class WsClient:
    def __init__(self, url):
        self.ws = connect(url)

    def send(self, **frame):
        frame.setdefault("v", 1)
        frame.setdefault("type", "command")
        self.ws.send(json.dumps(frame) + "\n")

    def send_raw(self, text):
        self.ws.send(text)

    def recv(self, timeout=15.0):
        return json.loads(self.ws.recv(timeout=timeout).strip())

    def recv_until(self, predicate, timeout=30.0, collect=None):
        """Frames until predicate matches; returns the matching frame."""
        deadline = time.time() + timeout
        while time.time() < deadline:
            frame = self.recv(timeout=max(0.1, deadline - time.time()))
            if collect is not None:
                collect.append(frame)
            if predicate(frame):
                return frame
        raise TimeoutError("no matching frame before the deadline")

    def close(self):
        self.ws.close()


@pytest.fixture
def service(tmp_path):
    live = LiveService(tmp_path / "traces", allow_manual=True)
    yield live
    live.stop()


@pytest.fixture
def ws(service):
    client = WsClient(service.ws_url)
    yield client
    client.close()
