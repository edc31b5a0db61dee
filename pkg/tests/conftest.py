import socket
import threading
from datetime import datetime, timezone

import pytest

from adreplay import warcstore
from adreplay.cdx import build_index
from adreplay.server import Collection, ReplayServer, ServerConfig


def ts_to_date(ts14: str) -> datetime:
    return datetime.strptime(ts14, "%Y%m%d%H%M%S").replace(tzinfo=timezone.utc)


def response(url, ts14="20230101000000", payload=b"payload", mime="text/plain",
             status=200, extra_headers=()):
    return warcstore.response_record(url, ts_to_date(ts14), payload,
                                     content_type=mime, status=status,
                                     extra_headers=extra_headers)


@pytest.fixture
def write_warc(tmp_path):
    counter = [0]

    def _write(records, gzip_records=False):
        counter[0] += 1
        suffix = ".warc.gz" if gzip_records else ".warc"
        path = tmp_path / f"fixture{counter[0]}{suffix}"
        return warcstore.write_warc(records, str(path), gzip_records=gzip_records)

    return _write


@pytest.fixture
def make_index(write_warc):
    def _make(records, gzip_records=False):
        return build_index([write_warc(records, gzip_records)])

    return _make


class RunningServer:
    def __init__(self, server: ReplayServer):
        self.server = server
        self.thread = threading.Thread(target=server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def base_url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def get(self, path: str, headers: dict | None = None):
        """Plain HTTP GET against the running server; returns (status, headers, body)."""
        host, port = self.server.server_address[:2]
        import http.client
        conn = http.client.HTTPConnection(host, port, timeout=10)
        try:
            conn.request("GET", path, headers=headers or {})
            resp = conn.getresponse()
            body = resp.read()
            return resp.status, dict(resp.getheaders()), body
        finally:
            conn.close()

    def stop(self):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


@pytest.fixture
def run_server():
    running = []

    def _start(records_or_collection, write_warc=None, **config_kwargs):
        if isinstance(records_or_collection, Collection):
            collection = records_or_collection
        else:
            source = write_warc(records_or_collection)
            collection = Collection(build_index([source]))
        config = ServerConfig(listen="127.0.0.1:0", **config_kwargs)
        server = ReplayServer(config, collection)
        handle = RunningServer(server)
        running.append(handle)
        return handle

    yield _start
    for handle in running:
        handle.stop()


@pytest.fixture
def recorded_connections(monkeypatch):
    """Record every outbound socket connect made while the test runs."""
    calls: list = []
    real_connect = socket.socket.connect

    def spy(self, address):
        calls.append(address)
        return real_connect(self, address)

    monkeypatch.setattr(socket.socket, "connect", spy)
    return calls
