"""URL canonicalization and the sorted capture index.

A canonical key is the URL with its scheme dropped, host lowercased and
stripped of a leading ``www.`` and default port, fragment removed,
percent-escapes of unreserved characters decoded, and query parameters
sorted by name then value. Keys are what the index sorts and searches on,
so equivalent spellings of one URL land on one row.

The index persists as CDXJ-style text: one ``key timestamp14 {json}``
line per entry, sorted, and loads back to an identical index.
"""

from __future__ import annotations

import bisect
import json
import string
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable

from . import warcstore
from .errors import NotAbsoluteUrl, NotFound
from .warcstore import ArchiveSource, CaptureRecord

TIMESTAMP_FORMAT = "%Y%m%d%H%M%S"

_UNRESERVED = set(string.ascii_letters + string.digits + "-._~")
_DEFAULT_PORTS = {"http": "80", "https": "443"}


def timestamp14(date: datetime) -> str:
    return date.astimezone(timezone.utc).strftime(TIMESTAMP_FORMAT)


def parse_timestamp14(text: str) -> datetime:
    if len(text) != 14 or not text.isdigit():
        raise ValueError(f"not a 14-digit timestamp: {text!r}")
    return datetime.strptime(text, TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)


def _normalize_escapes(text: str) -> str:
    """Decode %XX escapes of unreserved characters, uppercase the rest."""
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "%" and i + 3 <= len(text) and _is_hex(text[i + 1:i + 3]):
            octet = chr(int(text[i + 1:i + 3], 16))
            if octet in _UNRESERVED:
                out.append(octet)
            else:
                out.append("%" + text[i + 1:i + 3].upper())
            i += 3
            continue
        if ch == " ":
            out.append("%20")
        else:
            out.append(ch)
        i += 1
    return "".join(out)


def _is_hex(pair: str) -> bool:
    return len(pair) == 2 and all(c in string.hexdigits for c in pair)


def _split_authority(rest: str) -> tuple[str, str]:
    for i, ch in enumerate(rest):
        if ch in "/?#":
            return rest[:i], rest[i:]
    return rest, ""


def canonicalize(url: str) -> str:
    """Deterministic index key for an absolute http(s) URL.

    Keys themselves canonicalize to themselves, so a key can be fed back
    in (useful when a stored key must be re-checked).
    """
    url = url.strip()
    if not url:
        raise NotAbsoluteUrl("empty URL")
    if "://" in url:
        scheme, _, rest = url.partition("://")
        if scheme.lower() not in ("http", "https"):
            raise NotAbsoluteUrl(f"unsupported scheme {scheme!r}")
    elif url.startswith(("/", ".", "#", "?")):
        raise NotAbsoluteUrl(f"not an absolute URL: {url!r}")
    else:
        rest = url  # already key-shaped: host[/path...]
        scheme = "http"

    authority, tail = _split_authority(rest)
    if not authority:
        raise NotAbsoluteUrl(f"no host in {url!r}")

    # userinfo is dropped; host lowercased; default/duplicate port stripped
    host = authority.rsplit("@", 1)[-1]
    port = ""
    if host.count(":") == 1:
        host, port = host.split(":")
    host = host.lower()
    if host.startswith("www."):
        host = host[4:]
    if port and port != _DEFAULT_PORTS.get(scheme.lower(), ""):
        host += ":" + port

    tail = tail.split("#", 1)[0]
    path, _, query = tail.partition("?")
    if not path:
        path = "/"
    path = _normalize_escapes(path)

    if query:
        pairs = []
        for piece in query.split("&"):
            if not piece:
                continue
            name, _, value = piece.partition("=")
            pairs.append((_normalize_escapes(name), _normalize_escapes(value)))
        pairs.sort()
        query = "&".join(f"{n}={v}" for n, v in pairs)
    if query:
        return f"{host}{path}?{query}"
    return f"{host}{path}"


def canonicalize_prefix(prefix: str) -> str:
    """Key prefix for range scans: host part normalized, rest kept literal."""
    prefix = prefix.strip()
    if "://" in prefix:
        scheme, _, rest = prefix.partition("://")
        if scheme.lower() not in ("http", "https"):
            raise NotAbsoluteUrl(f"unsupported scheme {scheme!r}")
    else:
        rest = prefix
    if "/" in rest:
        host, tail = rest.split("/", 1)
        host = host.lower()
        if host.startswith("www."):
            host = host[4:]
        return f"{host}/{tail}"
    return rest.lower()


@dataclass(frozen=True)
class CdxEntry:
    """One index row mapping a canonical key + instant to a capture location."""

    key: str
    timestamp14: str
    original_uri: str
    status: int
    mime: str
    source_id: str
    offset: int
    length: int
    digest: str
    nonpreferred: bool = False
    unresolved_revisit: bool = False

    def epoch(self) -> int:
        return int(parse_timestamp14(self.timestamp14).timestamp())

    def to_cdxj(self) -> str:
        payload = {
            "url": self.original_uri,
            "status": self.status,
            "mime": self.mime,
            "digest": self.digest,
            "source": self.source_id,
            "offset": self.offset,
            "length": self.length,
        }
        if self.nonpreferred:
            payload["nonpreferred"] = True
        if self.unresolved_revisit:
            payload["unresolved_revisit"] = True
        return f"{self.key} {self.timestamp14} {json.dumps(payload, sort_keys=True)}"

    @classmethod
    def from_cdxj(cls, line: str) -> "CdxEntry":
        key, ts, blob = line.split(" ", 2)
        data = json.loads(blob)
        return cls(
            key=key, timestamp14=ts, original_uri=data["url"],
            status=data["status"], mime=data["mime"], digest=data["digest"],
            source_id=data["source"], offset=data["offset"], length=data["length"],
            nonpreferred=data.get("nonpreferred", False),
            unresolved_revisit=data.get("unresolved_revisit", False),
        )


def _sort_key(entry: CdxEntry):
    return (entry.key, entry.timestamp14, entry.digest, entry.original_uri,
            entry.source_id, entry.offset)


@dataclass
class CaptureIndex:
    """Immutable-after-build sorted index over capture sources."""

    entries: list[CdxEntry] = field(default_factory=list)
    sources: dict[str, ArchiveSource] = field(default_factory=dict)
    skipped_sources: list[tuple[str, str]] = field(default_factory=list)
    _keys: list[str] = field(default_factory=list, repr=False)

    def _finish(self):
        self.entries.sort(key=_sort_key)
        deduped = []
        seen = set()
        for entry in self.entries:
            ident = (entry.key, entry.timestamp14, entry.digest)
            if ident in seen:
                continue
            seen.add(ident)
            deduped.append(entry)
        self.entries = deduped
        self._keys = [e.key for e in self.entries]

    def __len__(self):
        return len(self.entries)

    def entries_for_key(self, key: str) -> list[CdxEntry]:
        lo = bisect.bisect_left(self._keys, key)
        hi = bisect.bisect_right(self._keys, key)
        return self.entries[lo:hi]

    def scan_prefix(self, key_prefix: str) -> list[CdxEntry]:
        lo = bisect.bisect_left(self._keys, key_prefix)
        out = []
        for entry in self.entries[lo:]:
            if not entry.key.startswith(key_prefix):
                break
            out.append(entry)
        return out

    def neighbor_keys(self, key: str, count: int = 5) -> list[str]:
        """Distinct keys nearest the insertion point of key, for miss reports."""
        pos = bisect.bisect_left(self._keys, key)
        seen: list[str] = []
        lo, hi = pos - 1, pos
        while len(seen) < count and (lo >= 0 or hi < len(self._keys)):
            if hi < len(self._keys) and self._keys[hi] not in seen:
                seen.append(self._keys[hi])
            hi += 1
            if len(seen) >= count:
                break
            if lo >= 0 and self._keys[lo] not in seen:
                seen.append(self._keys[lo])
            lo -= 1
        return seen

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for entry in self.entries:
                fh.write(entry.to_cdxj() + "\n")

    @classmethod
    def load(cls, path: str, sources: dict[str, ArchiveSource] | None = None) -> "CaptureIndex":
        index = cls(sources=dict(sources or {}))
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line:
                    index.entries.append(CdxEntry.from_cdxj(line))
        index._finish()
        return index


def _entry_for_response(record: CaptureRecord, source: ArchiveSource,
                        offset: int, length: int) -> CdxEntry:
    status = record.http_status if record.http_status is not None else 200
    return CdxEntry(
        key=canonicalize(record.target_uri),
        timestamp14=timestamp14(record.warc_date),
        original_uri=record.target_uri,
        status=status,
        mime=record.http_content_type() or "unk",
        source_id=source.locator,
        offset=offset,
        length=length,
        digest=record.payload_digest or warcstore.payload_sha1(record.payload),
        nonpreferred=status >= 500,
    )


def build_index(sources: Iterable[ArchiveSource],
                report: list[str] | None = None) -> CaptureIndex:
    """Index every HTTP response in the sources.

    Revisit records are resolved by payload digest to the original response
    and inherit its location; unresolved ones are kept with a zero-length
    flag so replay still answers, just with nothing. A source that fails to
    parse is skipped and noted, the rest still index.
    """
    index = CaptureIndex()
    by_digest: dict[str, CdxEntry] = {}
    revisits: list[tuple[CaptureRecord, ArchiveSource, int, int]] = []

    for source in sources:
        index.sources[source.locator] = source
        try:
            for record, offset, length in warcstore.parse_warc(source):
                if record.record_type == "response" and record.target_uri:
                    try:
                        entry = _entry_for_response(record, source, offset, length)
                    except NotAbsoluteUrl:
                        continue
                    index.entries.append(entry)
                    by_digest.setdefault(entry.digest, entry)
                elif record.record_type == "revisit" and record.target_uri:
                    revisits.append((record, source, offset, length))
        except Exception as exc:  # noqa: BLE001 - per-source isolation
            index.skipped_sources.append((source.locator, str(exc)))
            if report is not None:
                report.append(f"skipped {source.locator}: {exc}")

    for record, source, offset, length in revisits:
        try:
            key = canonicalize(record.target_uri)
        except NotAbsoluteUrl:
            continue
        original = by_digest.get(record.payload_digest or "")
        if original is not None:
            index.entries.append(CdxEntry(
                key=key, timestamp14=timestamp14(record.warc_date),
                original_uri=record.target_uri, status=original.status,
                mime=original.mime, source_id=original.source_id,
                offset=original.offset, length=original.length,
                digest=original.digest))
        else:
            index.entries.append(CdxEntry(
                key=key, timestamp14=timestamp14(record.warc_date),
                original_uri=record.target_uri, status=200, mime="unk",
                source_id=source.locator, offset=offset, length=length,
                digest=record.payload_digest or "", nonpreferred=True,
                unresolved_revisit=True))

    index._finish()
    return index


def lookup(index: CaptureIndex, url: str, ts: str) -> CdxEntry:
    """Entry for url nearest in time to ts; earlier capture wins ties.

    Flagged captures (5xx, unresolved revisits) lose to any clean one.
    """
    key = canonicalize(url)
    candidates = index.entries_for_key(key)
    if not candidates:
        raise NotFound(f"no capture of {url}")
    return nearest_entry(candidates, ts)


def nearest_entry(candidates: list[CdxEntry], ts: str) -> CdxEntry:
    if not candidates:
        raise NotFound("no candidates")
    preferred = [c for c in candidates if not (c.nonpreferred or c.unresolved_revisit)]
    pool = preferred or candidates
    want = int(parse_timestamp14(ts).timestamp())
    return min(pool, key=lambda e: (abs(e.epoch() - want), e.timestamp14, e.original_uri))


def prefix_search(index: CaptureIndex, prefix: str,
                  mime_filter: str | None = None) -> list[CdxEntry]:
    key_prefix = canonicalize_prefix(prefix)
    hits = index.scan_prefix(key_prefix)
    if mime_filter:
        hits = [e for e in hits if e.mime == mime_filter.lower()]
    return hits
