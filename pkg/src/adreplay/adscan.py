"""Find and classify ad resources in archives; simulate crawl-time ad blocking.

The blocklist simulator models only observed behavior of the public
save-a-page service: specific ad file names are refused when they carry
an extension, specific directory names are refused anywhere in the path,
and known ad-service hosts are refused outright. It is a diagnostic, not
a claim about the service's actual (unpublished) rules, so every verdict
names the token that matched.
"""

from __future__ import annotations

import argparse
import json
import os
import struct
import sys
from dataclasses import dataclass
from urllib.parse import urlsplit

from . import cdx, warcstore
from .errors import AdReplayError, NotAbsoluteUrl
from .rewrite import make_urim

SERVICES = ("google_display", "google_safeframe", "amazon", "flashtalking",
            "innovid", "unknown")

AD_TYPES = ("image", "video", "embedded_web_page", "other")

SERVICE_HOSTS: tuple[tuple[str, str], ...] = (
    ("s0.2mdn.net", "google_display"),
    ("*.safeframe.googlesyndication.com", "google_safeframe"),
    ("securepubads.g.doubleclick.net", "google_display"),
    ("*.amazon-adsystem.com", "amazon"),
    ("cdn.flashtalking.com", "flashtalking"),
    ("s-static.innovid.com", "innovid"),
)

# file names the crawler refused when they had an extension
BLOCKED_FILE_TOKENS = ("imgad", "displayads", "videoad", "webad")

# directory names the crawler refused anywhere in the path
BLOCKED_DIR_TOKENS = ("advertisement_files", "displayads", "videoad", "webad", "ads")

# asset names that render as nothing during replay
INVISIBLE_NAMES = ("pixel.gif", "pixel.png", "pixel.jpg", "1x1.gif", "1x1.png",
                   "blank.gif", "spacer.gif", "transparent.gif")

_MAX_VISIBLE_DIM = 2


def _host_matches(host: str, pattern: str) -> bool:
    if pattern.startswith("*."):
        suffix = pattern[2:]
        return host == suffix or host.endswith("." + suffix)
    return host == pattern


def service_for_host(host: str) -> str:
    host = host.lower()
    for pattern, service in SERVICE_HOSTS:
        if _host_matches(host, pattern):
            return service
    return "unknown"


@dataclass(frozen=True)
class AdResource:
    entry: cdx.CdxEntry
    service: str
    ad_type: str
    visible: bool


@dataclass(frozen=True)
class BlockVerdict:
    url: str
    blocked: bool
    reason: str       # ad_file_name | ad_directory_name | ad_service_host | not_blocked
    matched_token: str


def image_dimensions(payload: bytes) -> tuple[int, int] | None:
    """Width and height from the image header alone; None when unreadable."""
    if payload[:6] in (b"GIF87a", b"GIF89a") and len(payload) >= 10:
        return struct.unpack("<HH", payload[6:10])
    if payload[:8] == b"\x89PNG\r\n\x1a\n" and len(payload) >= 24:
        width, height = struct.unpack(">II", payload[16:24])
        return width, height
    if payload[:2] == b"\xff\xd8":
        i = 2
        while i + 9 < len(payload):
            if payload[i] != 0xFF:
                break
            marker = payload[i + 1]
            if marker in (0xD8, 0x01) or 0xD0 <= marker <= 0xD7:
                i += 2
                continue
            length = struct.unpack(">H", payload[i + 2:i + 4])[0]
            if 0xC0 <= marker <= 0xCF and marker not in (0xC4, 0xC8, 0xCC):
                height, width = struct.unpack(">HH", payload[i + 5:i + 9])
                return width, height
            i += 2 + length
    return None


def _ad_type_for_mime(mime: str) -> str:
    if mime.startswith("image/"):
        return "image"
    if mime.startswith("video/"):
        return "video"
    if mime == "text/html":
        return "embedded_web_page"
    return "other"


def classify_resource(entry: cdx.CdxEntry, payload: bytes | None = None) -> AdResource:
    """Assign ad service and type; mark known tracking assets invisible."""
    host = entry.key.partition("/")[0].partition(":")[0]
    service = service_for_host(host)
    ad_type = _ad_type_for_mime(entry.mime)

    visible = True
    name = entry.key.partition("?")[0].rsplit("/", 1)[-1].lower()
    if ad_type == "image":
        if name in INVISIBLE_NAMES:
            visible = False
        elif payload:
            dims = image_dimensions(bytes(payload))
            if dims and dims[0] <= _MAX_VISIBLE_DIM and dims[1] <= _MAX_VISIBLE_DIM:
                visible = False
    return AdResource(entry=entry, service=service, ad_type=ad_type, visible=visible)


def spn_block_check(url: str,
                    file_tokens: tuple[str, ...] = BLOCKED_FILE_TOKENS,
                    dir_tokens: tuple[str, ...] = BLOCKED_DIR_TOKENS,
                    host_table: tuple[tuple[str, str], ...] = SERVICE_HOSTS,
                    ) -> BlockVerdict:
    """Would the save-a-page blocker have refused this URL?"""
    parts = urlsplit(url)
    if parts.scheme not in ("http", "https") or not parts.netloc:
        raise NotAbsoluteUrl(f"need an absolute http(s) URL, got {url!r}")

    segments = [s for s in parts.path.split("/") if s]
    if segments:
        final = segments[-1]
        stem, dot, ext = final.rpartition(".")
        if dot and stem and ext and stem.lower() in file_tokens:
            return BlockVerdict(url, True, "ad_file_name", stem.lower())
    for segment in segments[:-1]:
        if segment.lower() in dir_tokens:
            return BlockVerdict(url, True, "ad_directory_name", segment.lower())
    host = parts.netloc.partition(":")[0].lower()
    for pattern, _service in host_table:
        if _host_matches(host, pattern):
            return BlockVerdict(url, True, "ad_service_host", pattern)
    return BlockVerdict(url, False, "not_blocked", "")


# --- archive walking --------------------------------------------------------

def _sources_for(path: str) -> list[warcstore.ArchiveSource]:
    if path.endswith(".wacz"):
        return warcstore.open_wacz(path)
    import zipfile
    if zipfile.is_zipfile(path):
        return warcstore.open_wacz(path)
    return [warcstore.open_warc(path)]


def _iter_responses(sources):
    for source in sources:
        for record, offset, length in warcstore.parse_warc(source):
            if record.record_type == "response" and record.target_uri:
                yield source, record, offset, length


# --- gallery ----------------------------------------------------------------

_GALLERY_TYPES = ("embedded_web_page", "image", "video")

_ITEM_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>{title}</title></head>
<body>
<p><code>{urir}</code> ({mime}, captured {ts})</p>
{preview}
<p><a href="{urim}">open raw capture</a></p>
</body></html>
"""


def _preview_element(ad_type: str, urim: str) -> str:
    if ad_type == "image":
        return f'<img src="{urim}" alt="archived ad image">'
    if ad_type == "video":
        return f'<video src="{urim}" controls></video>'
    return f'<iframe src="{urim}" width="800" height="600"></iframe>'


def emit_gallery(warc_path: str, seed_url: str, out_dir: str,
                 replay_base: str = "http://localhost:8080/web/") -> dict:
    """Write a browsable report of every displayable capture except the seed.

    Each candidate links to its raw (id_) memento on a running replay
    server. Returns the manifest that was written.
    """
    source = warcstore.open_warc(warc_path)
    seed_key = cdx.canonicalize(seed_url)

    items = []
    for _source, record, offset, length in _iter_responses([source]):
        try:
            entry = cdx.CdxEntry(
                key=cdx.canonicalize(record.target_uri),
                timestamp14=cdx.timestamp14(record.warc_date),
                original_uri=record.target_uri,
                status=record.http_status or 200,
                mime=record.http_content_type() or "unk",
                source_id=source.locator, offset=offset, length=length,
                digest=record.payload_digest or "")
        except NotAbsoluteUrl:
            continue
        if entry.key == seed_key:
            continue
        resource = classify_resource(entry, bytes(record.payload))
        if resource.ad_type not in _GALLERY_TYPES or not resource.visible:
            continue
        items.append(resource)

    items.sort(key=lambda r: (_GALLERY_TYPES.index(r.ad_type), r.entry.key))
    os.makedirs(os.path.join(out_dir, "items"), exist_ok=True)
    manifest = {"warc": str(warc_path), "seed_url": seed_url, "items": []}
    for n, resource in enumerate(items):
        entry = resource.entry
        urim = make_urim(entry.original_uri, entry.timestamp14, "id_", replay_base)
        page = f"items/{n:03d}.html"
        manifest["items"].append({
            "urir": entry.original_uri,
            "timestamp14": entry.timestamp14,
            "mime": entry.mime,
            "ad_type": resource.ad_type,
            "service": resource.service,
            "urim": urim,
            "page": page,
        })
        with open(os.path.join(out_dir, page), "w", encoding="utf-8") as fh:
            fh.write(_ITEM_PAGE.format(
                title=f"candidate {n:03d}", urir=entry.original_uri,
                mime=entry.mime, ts=entry.timestamp14, urim=urim,
                preview=_preview_element(resource.ad_type, urim)))
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


# --- report -----------------------------------------------------------------

def scan_report(archive_path: str) -> dict:
    """Counts per service and ad type, plus a block verdict per captured URL."""
    sources = _sources_for(archive_path)
    service_counts = {name: 0 for name in SERVICES}
    ad_type_counts = {name: 0 for name in AD_TYPES}
    verdicts = []
    for source, record, offset, length in _iter_responses(sources):
        try:
            key = cdx.canonicalize(record.target_uri)
        except NotAbsoluteUrl:
            continue
        entry = cdx.CdxEntry(
            key=key, timestamp14=cdx.timestamp14(record.warc_date),
            original_uri=record.target_uri, status=record.http_status or 200,
            mime=record.http_content_type() or "unk",
            source_id=source.locator, offset=offset, length=length,
            digest=record.payload_digest or "")
        resource = classify_resource(entry, bytes(record.payload))
        service_counts[resource.service] += 1
        ad_type_counts[resource.ad_type] += 1
        verdict = spn_block_check(record.target_uri)
        verdicts.append({
            "url": verdict.url, "blocked": verdict.blocked,
            "reason": verdict.reason, "matched_token": verdict.matched_token,
        })
    return {
        "archive": str(archive_path),
        "service_counts": service_counts,
        "ad_type_counts": ad_type_counts,
        "verdicts": verdicts,
    }


def load_report(text: str) -> dict:
    return json.loads(text)


def format_report_text(report: dict) -> str:
    lines = [f"archive: {report['archive']}", "", "service counts:"]
    for name, count in report["service_counts"].items():
        lines.append(f"  {name}: {count}")
    lines.append("ad type counts:")
    for name, count in report["ad_type_counts"].items():
        lines.append(f"  {name}: {count}")
    lines.append("")
    lines.append("save-page-now verdicts:")
    for v in report["verdicts"]:
        state = f"BLOCKED ({v['reason']}: {v['matched_token']})" if v["blocked"] else "allowed"
        lines.append(f"  {state:48s} {v['url']}")
    return "\n".join(lines) + "\n"


# --- CLI --------------------------------------------------------------------

def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ad-scan",
        description="Discover and classify advertisement resources in archives.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gallery = sub.add_parser("gallery", help="write a browsable ad candidate report")
    p_gallery.add_argument("warc")
    p_gallery.add_argument("seed_url")
    p_gallery.add_argument("--out", default="ad-gallery", metavar="DIR")
    p_gallery.add_argument("--replay-base", default="http://localhost:8080/web/")

    p_report = sub.add_parser("report", help="summarize services, types, and blocklist verdicts")
    p_report.add_argument("archive")
    p_report.add_argument("--format", choices=("text", "json"), default="text")

    p_check = sub.add_parser("spn-check", help="simulate the save-a-page ad blocklist")
    p_check.add_argument("url", nargs="+")

    args = parser.parse_args(argv)

    if args.command == "gallery":
        try:
            manifest = emit_gallery(args.warc, args.seed_url, args.out,
                                    replay_base=args.replay_base)
        except (OSError, AdReplayError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"wrote {len(manifest['items'])} candidates to {args.out}/manifest.json")
        return 0

    if args.command == "report":
        try:
            report = scan_report(args.archive)
        except (OSError, AdReplayError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        if args.format == "json":
            print(json.dumps(report, indent=2))
        else:
            print(format_report_text(report), end="")
        return 0

    if args.command == "spn-check":
        for url in args.url:
            try:
                verdict = spn_block_check(url)
            except NotAbsoluteUrl as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2
            state = "BLOCKED" if verdict.blocked else "allowed"
            token = verdict.matched_token or "-"
            print(f"{state:8s} {verdict.reason:18s} {token:24s} {url}")
        return 0

    return 2


if __name__ == "__main__":
    raise SystemExit(main())
