"""Read and write WARC files and open WACZ containers.

Plain WARC files hold records back to back; gzip WARC files hold one
independently decompressible gzip member per record, so a record can be
fetched later by (offset, length) alone. WACZ containers are ZIP files
with the WARC data under their ``archive/`` directory; any indexes they
carry are ignored because the engine rebuilds its own.

Serialization is bit-exact: CRLF line endings, a ``WARC/1.1`` version
line, and the mandatory WARC-Record-ID / WARC-Date / WARC-Type /
Content-Length headers on every record.
"""

from __future__ import annotations

import base64
import gzip
import hashlib
import io
import mmap
import os
import tempfile
import uuid
import zipfile
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import BinaryIO, Iterable, Iterator

from .errors import (
    BadGzipMember,
    BadVersionLine,
    IoFailure,
    NoArchiveMembers,
    NotAZip,
    TruncatedRecord,
)

RECORD_TYPES = ("warcinfo", "request", "response", "resource", "metadata", "revisit")

WARC_DATE_FORMAT = "%Y-%m-%dT%H:%M:%SZ"

# Payloads above this many bytes are parked in a spill file instead of RAM.
DEFAULT_SPILL_THRESHOLD = 64 * 1024 * 1024

_HTTP_RECORD_TYPES = ("request", "response")

_REASONS = {
    200: "OK", 204: "No Content", 206: "Partial Content", 301: "Moved Permanently",
    302: "Found", 304: "Not Modified", 307: "Temporary Redirect", 400: "Bad Request",
    403: "Forbidden", 404: "Not Found", 500: "Internal Server Error",
    502: "Bad Gateway", 503: "Service Unavailable",
}


class _SpillPayload:
    """Bytes-like view over an mmap'd spill file.

    Compares equal to any bytes-like object with the same content so
    records round-trip regardless of where the payload lives.
    """

    def __init__(self, fh, length: int, start: int = 0, _mm=None):
        self._fh = fh  # keep the temp file alive
        self._mm = _mm or mmap.mmap(fh.fileno(), 0, access=mmap.ACCESS_READ)
        self._start = start
        self._length = length

    def __len__(self):
        return self._length

    def __bytes__(self):
        return self._mm[self._start:self._start + self._length]

    def __getitem__(self, item):
        if isinstance(item, slice):
            start, stop, step = item.indices(self._length)
            return self._mm[self._start + start:self._start + stop:step]
        return self._mm[self._start + item]

    def view_from(self, offset: int) -> "_SpillPayload":
        return _SpillPayload(self._fh, self._length - offset,
                             self._start + offset, _mm=self._mm)

    def __eq__(self, other):
        if isinstance(other, (bytes, bytearray, memoryview, _SpillPayload)):
            return len(self) == len(other) and bytes(self) == bytes(other)
        return NotImplemented


@dataclass(frozen=True)
class CaptureRecord:
    """One archived transaction decoded from a WARC record."""

    record_type: str
    record_id: str
    warc_date: datetime
    content_type: str
    payload: bytes
    target_uri: str | None = None
    http_status: int | None = None
    http_start_line: bytes | None = None
    http_headers: tuple[tuple[bytes, bytes], ...] = ()
    payload_digest: str | None = None

    def __post_init__(self):
        if self.record_type not in RECORD_TYPES:
            raise ValueError(f"unknown record type {self.record_type!r}")
        if self.warc_date.tzinfo is None:
            raise ValueError("warc_date must be timezone-aware UTC")
        if self.record_type in ("request", "response", "resource") and not self.target_uri:
            raise ValueError(f"{self.record_type} record requires target_uri")

    def http_header(self, name: str) -> bytes | None:
        """First HTTP header value matching name, case-insensitively."""
        want = name.lower().encode("latin-1")
        for key, value in self.http_headers:
            if key.lower() == want:
                return value
        return None

    def http_content_type(self) -> str:
        value = self.http_header("Content-Type")
        if value is None:
            return ""
        return value.decode("latin-1").split(";")[0].strip().lower()


@dataclass
class ArchiveSource:
    """A WARC file on disk plus the byte location of every record in it."""

    kind: str  # warc_plain | warc_gzip
    locator: str
    member_offsets: list[tuple[int, int]] = field(default_factory=list)


def payload_sha1(payload) -> str:
    digest = hashlib.sha1(bytes(payload)).digest()
    return "sha1:" + base64.b32encode(digest).decode("ascii")


def utcnow_second() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def new_record_id() -> str:
    return f"<urn:uuid:{uuid.uuid4()}>"


# --- record builders -------------------------------------------------------

def response_record(uri: str, date: datetime, payload: bytes,
                    content_type: str = "text/html", status: int = 200,
                    extra_headers: Iterable[tuple[bytes, bytes]] = (),
                    record_id: str | None = None) -> CaptureRecord:
    """Build a response record with a canonical HTTP message."""
    headers = [(b"Content-Type", content_type.encode("latin-1")),
               (b"Content-Length", str(len(payload)).encode("ascii"))]
    headers.extend(extra_headers)
    reason = _REASONS.get(status, "Unknown")
    return CaptureRecord(
        record_type="response",
        record_id=record_id or new_record_id(),
        warc_date=date,
        content_type="application/http; msgtype=response",
        target_uri=uri,
        http_status=status,
        http_start_line=f"HTTP/1.1 {status} {reason}".encode("ascii"),
        http_headers=tuple(headers),
        payload=payload,
        payload_digest=payload_sha1(payload),
    )


def request_record(uri: str, date: datetime,
                   headers: Iterable[tuple[bytes, bytes]] = (),
                   record_id: str | None = None) -> CaptureRecord:
    from urllib.parse import urlsplit
    parts = urlsplit(uri)
    path = parts.path or "/"
    if parts.query:
        path += "?" + parts.query
    hdrs = [(b"Host", parts.netloc.encode("latin-1"))]
    hdrs.extend(headers)
    return CaptureRecord(
        record_type="request",
        record_id=record_id or new_record_id(),
        warc_date=date,
        content_type="application/http; msgtype=request",
        target_uri=uri,
        http_start_line=f"GET {path} HTTP/1.1".encode("latin-1"),
        http_headers=tuple(hdrs),
        payload=b"",
        payload_digest=payload_sha1(b""),
    )


def revisit_record(uri: str, date: datetime, original_digest: str,
                   record_id: str | None = None) -> CaptureRecord:
    return CaptureRecord(
        record_type="revisit",
        record_id=record_id or new_record_id(),
        warc_date=date,
        content_type="application/http; msgtype=response",
        target_uri=uri,
        payload=b"",
        payload_digest=original_digest,
    )


def warcinfo_record(date: datetime, fields: dict[str, str] | None = None,
                    record_id: str | None = None) -> CaptureRecord:
    body = "".join(f"{k}: {v}\r\n" for k, v in (fields or {"software": "adreplay"}).items())
    return CaptureRecord(
        record_type="warcinfo",
        record_id=record_id or new_record_id(),
        warc_date=date,
        content_type="application/warc-fields",
        payload=body.encode("utf-8"),
    )


# --- serialization ---------------------------------------------------------

def serialize_record(record: CaptureRecord) -> bytes:
    """Canonical on-disk bytes for one record, trailing separator included."""
    if record.http_start_line is not None:
        message = bytearray(record.http_start_line)
        message += b"\r\n"
        for name, value in record.http_headers:
            message += name + b": " + value + b"\r\n"
        message += b"\r\n"
        message += bytes(record.payload)
        block = bytes(message)
    else:
        block = bytes(record.payload)

    lines = [b"WARC/1.1"]
    lines.append(b"WARC-Type: " + record.record_type.encode("ascii"))
    lines.append(b"WARC-Record-ID: " + record.record_id.encode("ascii"))
    lines.append(b"WARC-Date: " + record.warc_date.strftime(WARC_DATE_FORMAT).encode("ascii"))
    if record.target_uri is not None:
        lines.append(b"WARC-Target-URI: " + record.target_uri.encode("latin-1"))
    if record.payload_digest is not None:
        lines.append(b"WARC-Payload-Digest: " + record.payload_digest.encode("ascii"))
    lines.append(b"Content-Type: " + record.content_type.encode("latin-1"))
    lines.append(b"Content-Length: " + str(len(block)).encode("ascii"))
    return b"\r\n".join(lines) + b"\r\n\r\n" + block + b"\r\n\r\n"


def write_warc(records: Iterable[CaptureRecord], path: str,
               gzip_records: bool = False) -> ArchiveSource:
    """Write records to path; with gzip_records each record is its own member."""
    kind = "warc_gzip" if gzip_records else "warc_plain"
    source = ArchiveSource(kind=kind, locator=str(path))
    try:
        with open(path, "wb") as out:
            offset = 0
            for record in records:
                raw = serialize_record(record)
                if gzip_records:
                    raw = gzip.compress(raw, mtime=0)
                out.write(raw)
                source.member_offsets.append((offset, len(raw)))
                offset += len(raw)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return source


# --- parsing ---------------------------------------------------------------

def open_warc(path: str) -> ArchiveSource:
    """Sniff a WARC file's compression and wrap it as a source."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    kind = "warc_gzip" if magic == b"\x1f\x8b" else "warc_plain"
    return ArchiveSource(kind=kind, locator=str(path))


def parse_warc(source: ArchiveSource,
               spill_threshold: int = DEFAULT_SPILL_THRESHOLD,
               ) -> Iterator[tuple[CaptureRecord, int, int]]:
    """Yield (record, offset, length) in file order.

    Offsets address the start of each record: the version line for plain
    files, the gzip member start for compressed ones. A malformed tail
    raises after everything before it was yielded.
    """
    if source.kind == "warc_gzip":
        yield from _parse_gzip(source.locator, spill_threshold)
    elif source.kind == "warc_plain":
        with open(source.locator, "rb") as fh:
            yield from _parse_plain(fh, spill_threshold)
    else:
        raise ValueError(f"cannot parse source of kind {source.kind}")


def read_record_at(source: ArchiveSource, offset: int, length: int) -> CaptureRecord:
    """Decode the single record stored at (offset, length)."""
    with open(source.locator, "rb") as fh:
        fh.seek(offset)
        raw = fh.read(length)
    if source.kind == "warc_gzip":
        try:
            raw = gzip.decompress(raw)
        except (OSError, zlib.error, EOFError) as exc:
            raise BadGzipMember(f"member at {offset} undecompressible: {exc}") from exc
    records = list(_parse_plain(io.BytesIO(raw), DEFAULT_SPILL_THRESHOLD))
    if not records:
        raise TruncatedRecord(f"no record at offset {offset}")
    return records[0][0]


def _read_exact(fh: BinaryIO, n: int, spill_threshold: int):
    if n <= spill_threshold:
        data = fh.read(n)
        if len(data) < n:
            raise TruncatedRecord(f"block shorter than declared length ({len(data)} < {n})")
        return data
    spill = tempfile.TemporaryFile()
    remaining = n
    while remaining:
        chunk = fh.read(min(remaining, 1 << 20))
        if not chunk:
            spill.close()
            raise TruncatedRecord(f"block shorter than declared length ({n - remaining} < {n})")
        spill.write(chunk)
        remaining -= len(chunk)
    spill.flush()
    return _SpillPayload(spill, n)


def _parse_http_block(block) -> tuple[bytes | None, tuple, int | None, bytes]:
    """Split an application/http block into (start line, headers, status, payload)."""
    raw = bytes(block[:1 << 20]) if isinstance(block, _SpillPayload) else bytes(block)
    sep = raw.find(b"\r\n\r\n")
    if sep < 0:
        return None, (), None, block
    head = raw[:sep]
    lines = head.split(b"\r\n")
    start_line = lines[0]
    headers = []
    for line in lines[1:]:
        name, _, value = line.partition(b":")
        if value.startswith(b" "):
            value = value[1:]
        headers.append((name, value))
    status = None
    parts = start_line.split(b" ", 2)
    if start_line.startswith(b"HTTP/") and len(parts) >= 2 and parts[1].isdigit():
        status = int(parts[1])
    if isinstance(block, _SpillPayload):
        payload = block.view_from(sep + 4)
    else:
        payload = bytes(block)[sep + 4:]
    return start_line, tuple(headers), status, payload


def _record_from_parts(warc_headers: dict[str, str], block) -> CaptureRecord:
    record_type = warc_headers.get("warc-type", "").lower()
    if record_type not in RECORD_TYPES:
        raise BadVersionLine(f"unknown WARC-Type {record_type!r}")
    target = warc_headers.get("warc-target-uri")
    if target and target.startswith("<") and target.endswith(">"):
        target = target[1:-1]
    date_text = warc_headers.get("warc-date", "")
    try:
        date = _parse_warc_date(date_text)
    except ValueError as exc:
        raise TruncatedRecord(f"bad WARC-Date {date_text!r}") from exc
    content_type = warc_headers.get("content-type", "")

    start_line = None
    headers: tuple = ()
    status = None
    payload = block
    if content_type.startswith("application/http") and record_type in _HTTP_RECORD_TYPES:
        start_line, headers, status, payload = _parse_http_block(block)
        if record_type == "request":
            status = None
    if record_type == "revisit":
        payload = b""

    if not isinstance(payload, (bytes, _SpillPayload)):
        payload = bytes(payload)
    return CaptureRecord(
        record_type=record_type,
        record_id=warc_headers.get("warc-record-id", ""),
        warc_date=date,
        content_type=content_type,
        target_uri=target,
        http_status=status if record_type == "response" else None,
        http_start_line=start_line,
        http_headers=headers,
        payload=payload,
        payload_digest=warc_headers.get("warc-payload-digest"),
    )


def _parse_warc_date(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1]
    if "." in text:  # second precision only
        text = text.split(".", 1)[0]
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%S").replace(tzinfo=timezone.utc)


def _parse_plain(fh: BinaryIO, spill_threshold: int,
                 base_offset: int = 0) -> Iterator[tuple[CaptureRecord, int, int]]:
    pos = base_offset
    while True:
        # skip inter-record blank lines
        line = fh.readline()
        while line in (b"\r\n", b"\n"):
            pos += len(line)
            line = fh.readline()
        if not line:
            return
        record_start = pos
        if line.rstrip(b"\r\n") not in (b"WARC/1.0", b"WARC/1.1"):
            raise BadVersionLine(f"expected WARC/1.x version line at offset {pos}")
        pos += len(line)

        warc_headers: dict[str, str] = {}
        while True:
            line = fh.readline()
            if not line:
                raise TruncatedRecord("EOF inside record headers")
            pos += len(line)
            if line in (b"\r\n", b"\n"):
                break
            name, _, value = line.rstrip(b"\r\n").partition(b":")
            warc_headers[name.decode("latin-1").strip().lower()] = \
                value.decode("latin-1").strip()

        if "content-length" not in warc_headers:
            raise TruncatedRecord("record missing Content-Length")
        try:
            length = int(warc_headers["content-length"])
        except ValueError:
            raise TruncatedRecord(f"bad Content-Length {warc_headers['content-length']!r}")

        block = _read_exact(fh, length, spill_threshold)
        pos += length
        # consume the two-CRLF record separator when present
        for _ in range(2):
            mark = fh.tell()
            line = fh.readline()
            if line in (b"\r\n", b"\n"):
                pos += len(line)
            else:
                fh.seek(mark)
                break

        record = _record_from_parts(warc_headers, block)
        yield record, record_start, pos - record_start


def _parse_gzip(path: str, spill_threshold: int) -> Iterator[tuple[CaptureRecord, int, int]]:
    with open(path, "rb") as fh:
        file_offset = 0
        pending = b""
        while True:
            member_start = file_offset - len(pending)
            decomp = zlib.decompressobj(31)
            buf = tempfile.SpooledTemporaryFile(max_size=spill_threshold)
            fed = 0
            try:
                while not decomp.eof:
                    if pending:
                        chunk, pending = pending, b""
                    else:
                        chunk = fh.read(1 << 20)
                        file_offset += len(chunk)
                    if not chunk:
                        if fed == 0:
                            return  # clean EOF between members
                        raise BadGzipMember(f"member at {member_start} is truncated")
                    fed += len(chunk)
                    buf.write(decomp.decompress(chunk))
            except zlib.error as exc:
                raise BadGzipMember(f"member at {member_start} undecompressible: {exc}") from exc
            pending = decomp.unused_data
            member_len = fed - len(pending)
            buf.seek(0)
            for record, _, _ in _parse_plain(buf, spill_threshold):
                yield record, member_start, member_len
            buf.close()


# --- WACZ ------------------------------------------------------------------

def open_wacz(path: str, extract_dir: str | None = None) -> list[ArchiveSource]:
    """Extract the WARC members of a WACZ container and wrap each as a source."""
    if not zipfile.is_zipfile(path):
        raise NotAZip(f"{path} is not a ZIP container")
    sources = []
    with zipfile.ZipFile(path) as zf:
        members = [name for name in zf.namelist()
                   if name.lstrip("./").startswith("archive/")
                   and name.endswith((".warc", ".warc.gz"))]
        if not members:
            raise NoArchiveMembers(f"{path} has no WARC members under archive/")
        out_dir = extract_dir or tempfile.mkdtemp(prefix="wacz-")
        os.makedirs(out_dir, exist_ok=True)
        for name in sorted(members):
            dest = os.path.join(out_dir, os.path.basename(name))
            with zf.open(name) as src, open(dest, "wb") as dst:
                while True:
                    chunk = src.read(1 << 20)
                    if not chunk:
                        break
                    dst.write(chunk)
            sources.append(open_warc(dest))
    return sources
