"""HTTP replay service over an immutable capture collection.

Endpoints:

* ``GET {replay_base}{ts}{mod}/{url}`` serves the resolved capture,
  rewritten per modifier, with Memento-Datetime and X-Archive-Rule
  headers. Misses answer 404 with a structured miss report.
* ``GET /api/search?prefix=&mime=`` lists matching index rows.
* ``GET /health`` reports entry and source counts.

The service never opens a connection to any other host: every byte it
serves comes from the loaded archives.
"""

from __future__ import annotations

import argparse
import gzip
import json
import re
import sys
import zlib
from dataclasses import dataclass, field
from email.utils import formatdate
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from urllib.parse import parse_qs, urlsplit

from . import cdx, fuzzy, rewrite, warcstore
from .errors import (
    AdReplayError,
    InvalidTimestamp,
    NotAUriM,
    NotFound,
    UnknownModifier,
)

HOP_BY_HOP = {
    b"connection", b"keep-alive", b"proxy-authenticate", b"proxy-authorization",
    b"te", b"trailer", b"trailers", b"transfer-encoding", b"upgrade",
}

DROPPED_HEADERS = HOP_BY_HOP | {
    b"content-security-policy", b"content-security-policy-report-only",
    b"content-length", b"strict-transport-security",
}


@dataclass
class ServerConfig:
    listen: str = "127.0.0.1:8080"
    replay_base: str = "/web/"
    rules_path: str | None = None
    shim_asset: str | None = None
    inject_shim: bool = True
    verbosity: int = 0

    def __post_init__(self):
        if not self.replay_base or not self.replay_base.endswith("/"):
            raise ValueError("replay_base must be non-empty and end with /")


@dataclass
class MissReport:
    requested_urir: str
    ts: str
    rules_tried: list[tuple[str, int]] = field(default_factory=list)
    nearest_keys: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "requested_urir": self.requested_urir,
            "ts": self.ts,
            "rules_tried": [[name, count] for name, count in self.rules_tried],
            "nearest_keys": self.nearest_keys,
        }, indent=2)


class Collection:
    """An index plus its sources and a resolver, swapped atomically on reload."""

    def __init__(self, index: cdx.CaptureIndex,
                 rules: tuple[fuzzy.FuzzyRule, ...] = fuzzy.DEFAULT_RULES):
        self.index = index
        self.resolver = fuzzy.FuzzyResolver(index, rules)

    @classmethod
    def from_paths(cls, warc_paths: list[str], wacz_paths: list[str],
                   rules_path: str | None = None) -> "Collection":
        sources = [warcstore.open_warc(p) for p in warc_paths]
        for path in wacz_paths:
            sources.extend(warcstore.open_wacz(path))
        rules = fuzzy.load_rules(rules_path) if rules_path else fuzzy.DEFAULT_RULES
        return cls(cdx.build_index(sources), rules)


class ReplayService:
    def __init__(self, collection: Collection, config: ServerConfig):
        self.collection = collection
        self.config = config

    def replace_collection(self, collection: Collection) -> None:
        # plain attribute swap: in-flight requests keep their snapshot
        self.collection = collection


def _memento_datetime(ts: str) -> str:
    epoch = int(cdx.parse_timestamp14(ts).timestamp())
    return formatdate(epoch, usegmt=True)


def _decode_body(payload: bytes, encoding: str) -> bytes:
    if encoding == "gzip":
        return gzip.decompress(payload)
    if encoding == "deflate":
        try:
            return zlib.decompress(payload)
        except zlib.error:
            return zlib.decompress(payload, -zlib.MAX_WBITS)
    return payload


_RANGE_RE = re.compile(r"^bytes=(\d*)-(\d*)$")


def _apply_range(payload: bytes, range_header: str):
    match = _RANGE_RE.match(range_header.strip())
    if not match:
        return None
    start_text, end_text = match.groups()
    size = len(payload)
    if start_text:
        start = int(start_text)
        end = int(end_text) if end_text else size - 1
    elif end_text:
        start, end = max(size - int(end_text), 0), size - 1
    else:
        return None
    if start >= size:
        return None
    end = min(end, size - 1)
    return payload[start:end + 1], start, end, size


class ReplayHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "adreplay"

    @property
    def service(self) -> ReplayService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):
        if self.service.config.verbosity:
            sys.stderr.write("%s - %s\n" % (self.address_string(), fmt % args))

    def do_GET(self):
        try:
            self._route()
        except BrokenPipeError:
            pass
        except Exception as exc:  # noqa: BLE001 - last-resort handler
            self._send_text(500, f"internal error: {exc}\n")

    def do_HEAD(self):
        self.do_GET()

    def _route(self):
        config = self.service.config
        collection = self.service.collection
        path = self.path
        if path == "/health":
            return self._serve_health(collection)
        if path.startswith("/api/search"):
            return self._serve_search(collection)
        if path == rewrite.DEFAULT_SHIM_SRC:
            return self._serve_shim(config)
        if path.startswith(config.replay_base):
            return self._serve_memento(collection, config)
        self._send_text(404, "not found\n")

    def _serve_health(self, collection: Collection):
        body = (f"ok\nentries: {len(collection.index)}\n"
                f"sources: {len(collection.index.sources)}\n")
        self._send_text(200, body)

    def _serve_search(self, collection: Collection):
        query = parse_qs(urlsplit(self.path).query)
        prefixes = query.get("prefix")
        if not prefixes or not prefixes[0]:
            return self._send_text(400, "missing prefix parameter\n")
        mime = query.get("mime", [None])[0]
        try:
            hits = cdx.prefix_search(collection.index, prefixes[0], mime)
        except AdReplayError as exc:
            return self._send_text(400, f"bad prefix: {exc}\n")
        rows = "".join(json.dumps({
            "urir": e.original_uri, "timestamp14": e.timestamp14,
            "mime": e.mime, "status": e.status,
        }) + "\n" for e in hits)
        self._send_body(200, rows.encode("utf-8"),
                        [("Content-Type", "application/x-ndjson")])

    def _serve_shim(self, config: ServerConfig):
        if config.shim_asset:
            with open(config.shim_asset, "rb") as fh:
                body = fh.read()
        else:
            body = resources.files("adreplay").joinpath("assets/shim-stub.js").read_bytes()
        self._send_body(200, body, [("Content-Type", "application/javascript")])

    def _referrer_urir(self, replay_base: str) -> str | None:
        referer = self.headers.get("Referer")
        if not referer:
            return None
        # the browser sends the memento URL it is on; recover the original
        target = urlsplit(referer)
        text = target.path + (f"?{target.query}" if target.query else "")
        try:
            return rewrite.parse_urim(text, replay_base).urir
        except AdReplayError:
            return None

    def _serve_memento(self, collection: Collection, config: ServerConfig):
        try:
            urim = rewrite.parse_urim(self.path, config.replay_base)
        except (NotAUriM, InvalidTimestamp, UnknownModifier) as exc:
            return self._send_text(400, f"not a memento URL: {exc}\n")

        referrer = self._referrer_urir(config.replay_base)
        try:
            resolution = collection.resolver.resolve(urim.urir, urim.timestamp14, referrer)
        except NotFound as exc:
            report = MissReport(
                requested_urir=urim.urir, ts=urim.timestamp14,
                rules_tried=exc.rules_tried,
                nearest_keys=collection.index.neighbor_keys(
                    _safe_key(urim.urir), count=5),
            )
            return self._send_body(404, report.to_json().encode("utf-8"),
                                   [("Content-Type", "application/json")])

        entry = resolution.entry
        source = collection.index.sources.get(entry.source_id) or warcstore.open_warc(entry.source_id)
        record = warcstore.read_record_at(source, entry.offset, entry.length)
        payload = bytes(record.payload)
        status = record.http_status or entry.status or 200

        headers: list[tuple[str, str]] = []
        declared_charset = ""
        content_encoding = (record.http_header("Content-Encoding") or b"").decode("latin-1").lower()
        for name, value in record.http_headers:
            lowered = name.lower()
            if lowered in DROPPED_HEADERS:
                continue
            if lowered == b"content-encoding" and urim.modifier != "id_":
                continue
            headers.append((name.decode("latin-1"), value.decode("latin-1")))
            if lowered == b"content-type":
                match = re.search(r"charset=([\w.-]+)", value.decode("latin-1"), re.I)
                if match:
                    declared_charset = match.group(1)

        if urim.modifier != "id_" and content_encoding in ("gzip", "deflate"):
            try:
                payload = _decode_body(payload, content_encoding)
            except (OSError, zlib.error):
                pass

        content_type = record.http_content_type()
        if urim.modifier != "id_":
            ctx = rewrite.RewriteContext.for_capture(
                config.replay_base, entry.timestamp14, entry.original_uri,
                inject_shim=config.inject_shim and urim.modifier in ("", "if_"))
            if content_type == "text/html":
                payload = rewrite.rewrite_html_bytes(payload, ctx, declared_charset)
            elif content_type == "text/css":
                payload = rewrite.rewrite_css_bytes(payload, ctx, declared_charset)

        headers.append(("Memento-Datetime", _memento_datetime(entry.timestamp14)))
        headers.append(("X-Archive-Rule", resolution.rule_used))

        if urim.modifier == "id_" and "Range" in self.headers:
            ranged = _apply_range(payload, self.headers["Range"])
            if ranged:
                body, start, end, size = ranged
                headers.append(("Content-Range", f"bytes {start}-{end}/{size}"))
                return self._send_body(206, body, headers)

        self._send_body(status, payload, headers)

    def _send_text(self, status: int, text: str):
        self._send_body(status, text.encode("utf-8"),
                        [("Content-Type", "text/plain; charset=utf-8")])

    def _send_body(self, status: int, body: bytes, headers: list[tuple[str, str]]):
        self.send_response(status)
        names = {name.lower() for name, _ in headers}
        for name, value in headers:
            self.send_header(name, value)
        if "content-type" not in names:
            self.send_header("Content-Type", "application/octet-stream")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(body)


def _safe_key(url: str) -> str:
    try:
        return cdx.canonicalize(url)
    except AdReplayError:
        return url


class ReplayServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, config: ServerConfig, collection: Collection):
        host, _, port = config.listen.rpartition(":")
        super().__init__((host or "127.0.0.1", int(port)), ReplayHandler)
        self.service = ReplayService(collection, config)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="adreplay-server",
        description="Replay archived captures with ad-aware fuzzy resolution.")
    parser.add_argument("--warc", action="append", default=[], metavar="PATH",
                        help="WARC file to serve (repeatable)")
    parser.add_argument("--wacz", action="append", default=[], metavar="PATH",
                        help="WACZ container to serve (repeatable)")
    parser.add_argument("--listen", default="127.0.0.1:8080", metavar="ADDR",
                        help="host:port to bind (port 0 picks a free port)")
    parser.add_argument("--rules", default=None, metavar="FILE",
                        help="fuzzy rule config file (defaults to built-ins)")
    parser.add_argument("--no-shim", action="store_true",
                        help="serve pages without injecting the client shim")
    parser.add_argument("--replay-base", default="/web/", metavar="PREFIX")
    parser.add_argument("--shim-asset", default=None, metavar="FILE",
                        help="JavaScript file to serve as the client shim")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    args = parser.parse_args(argv)

    if not args.warc and not args.wacz:
        parser.error("need at least one --warc or --wacz")

    config = ServerConfig(
        listen=args.listen, replay_base=args.replay_base,
        rules_path=args.rules, shim_asset=args.shim_asset,
        inject_shim=not args.no_shim, verbosity=args.verbose)
    try:
        collection = Collection.from_paths(args.warc, args.wacz, args.rules)
    except AdReplayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    server = ReplayServer(config, collection)
    for locator, reason in collection.index.skipped_sources:
        print(f"warning: skipped {locator}: {reason}", file=sys.stderr)
    print(f"listening on {server.url}{config.replay_base} "
          f"({len(collection.index)} entries)", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
