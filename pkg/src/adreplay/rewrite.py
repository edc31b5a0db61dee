"""Memento URL grammar and server-side HTML/CSS rewriting.

A memento URL is ``{replay_base}{YYYYMMDDHHMMSS}[{modifier}]/{absolute-URL}``;
modifier tokens end in an underscore and select how the payload is served
(js_ script, cs_ stylesheet, im_ image, if_ frame, id_ raw bytes, oe_
object embed). Rewriting points every URL reference in an archived page
back into the archive so nothing escapes to the live web, and injects the
client shim plus its context block at the top of head.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from urllib.parse import urljoin

from .errors import InvalidTimestamp, NotAUriM, RelativeUrir, UnknownModifier

MODIFIERS = ("", "js_", "cs_", "im_", "if_", "id_", "oe_")

DEFAULT_SHIM_SRC = "/static/shim.js"

CONTEXT_BLOCK_ID = "__replay_context__"

_TS_RE = re.compile(r"^(\d+)([a-z]+_)?$")


def _validate_timestamp(ts: str) -> None:
    if len(ts) != 14 or not ts.isdigit():
        raise InvalidTimestamp(f"not a 14-digit timestamp: {ts!r}")
    try:
        datetime.strptime(ts, "%Y%m%d%H%M%S")
    except ValueError as exc:
        raise InvalidTimestamp(f"not a real datetime: {ts!r}") from exc


def compute_wombat_sec(ts: str) -> str:
    """Epoch seconds of a 14-digit UTC timestamp, as decimal text."""
    _validate_timestamp(ts)
    moment = datetime.strptime(ts, "%Y%m%d%H%M%S").replace(tzinfo=timezone.utc)
    return str(int(moment.timestamp()))


@dataclass(frozen=True)
class UriM:
    replay_base: str
    timestamp14: str
    modifier: str
    urir: str

    def render(self) -> str:
        return f"{self.replay_base}{self.timestamp14}{self.modifier}/{self.urir}"


def make_urim(urir: str, ts: str, modifier: str = "",
              replay_base: str = "/web/") -> str:
    _validate_timestamp(ts)
    if modifier not in MODIFIERS:
        raise UnknownModifier(f"unknown modifier {modifier!r}")
    if not urir.startswith(("http://", "https://")):
        raise RelativeUrir(f"target URL must be absolute: {urir!r}")
    return UriM(replay_base, ts, modifier, urir).render()


def parse_urim(text: str, replay_base: str = "/web/") -> UriM:
    if not text.startswith(replay_base):
        raise NotAUriM(f"does not start with {replay_base!r}")
    rest = text[len(replay_base):]
    head, sep, urir = rest.partition("/")
    if not sep:
        raise NotAUriM(f"no target URL in {text!r}")
    match = _TS_RE.match(head)
    if not match:
        raise NotAUriM(f"bad timestamp segment {head!r}")
    ts, modifier = match.group(1), match.group(2) or ""
    _validate_timestamp(ts)
    if modifier not in MODIFIERS:
        raise UnknownModifier(f"unknown modifier {modifier!r}")
    if not urir.startswith(("http://", "https://")):
        raise NotAUriM(f"target URL not absolute: {urir!r}")
    return UriM(replay_base, ts, modifier, urir)


@dataclass(frozen=True)
class RewriteContext:
    """Everything one document rewrite needs.

    wombat_sec is derived from the timestamp so the shim's seeded random
    stream matches the capture instant.
    """

    replay_base: str
    timestamp14: str
    base_urir: str
    wombat_sec: str = ""
    inject_shim: bool = True
    shim_src: str = DEFAULT_SHIM_SRC

    @classmethod
    def for_capture(cls, replay_base: str, ts: str, base_urir: str,
                    inject_shim: bool = True,
                    shim_src: str = DEFAULT_SHIM_SRC) -> "RewriteContext":
        return cls(replay_base=replay_base, timestamp14=ts, base_urir=base_urir,
                   wombat_sec=compute_wombat_sec(ts), inject_shim=inject_shim,
                   shim_src=shim_src)


_URL_ATTRS = {"src", "href", "srcset", "action", "poster", "data"}

_SKIP_PREFIXES = ("data:", "blob:", "javascript:", "mailto:", "tel:", "about:", "#")

_TAG_RE = re.compile(r"<([a-zA-Z][a-zA-Z0-9-]*)((?:\"[^\"]*\"|'[^']*'|[^>\"'])*)>")
_ATTR_RE = re.compile(
    r"""([a-zA-Z_:][-a-zA-Z0-9_:.]*)(\s*=\s*)("[^"]*"|'[^']*'|[^\s>]+)""")
_SCRIPT_RE = re.compile(
    r"(<script\b(?:\"[^\"]*\"|'[^']*'|[^>\"'])*>)(.*?)(</script\s*>)", re.I | re.S)
_HEAD_RE = re.compile(r"<head\b[^>]*>", re.I)
_HTML_RE = re.compile(r"<html\b[^>]*>", re.I)
_CHARSET_RE = re.compile(
    rb"""<meta[^>]+charset\s*=\s*["']?\s*([a-zA-Z0-9_./:-]+)""", re.I)


def _element_modifier(tag: str, rel: str) -> str:
    if tag == "script":
        return "js_"
    if tag == "img":
        return "im_"
    if tag == "iframe":
        return "if_"
    if tag == "link" and "stylesheet" in rel.lower():
        return "cs_"
    return ""


def _rewrite_url(value: str, modifier: str, ctx: RewriteContext) -> str:
    value = value.strip()
    if (not value or value.startswith(_SKIP_PREFIXES)
            or value.startswith(ctx.replay_base) or value == ctx.shim_src):
        return value
    if value.startswith("//"):
        base_scheme = "https" if ctx.base_urir.startswith("https") else "http"
        value = f"{base_scheme}:{value}"
    elif not value.startswith(("http://", "https://")):
        value = urljoin(ctx.base_urir, value)
    if not value.startswith(("http://", "https://")):
        return value
    return make_urim(value, ctx.timestamp14, modifier, ctx.replay_base)


def _rewrite_srcset(value: str, ctx: RewriteContext) -> str:
    parts = []
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        url, _, descriptor = item.partition(" ")
        url = _rewrite_url(url, "im_", ctx)
        parts.append(f"{url} {descriptor.strip()}".strip())
    return ", ".join(parts)


def rewrite_html(text: str, ctx: RewriteContext) -> str:
    """Rewrite every URL-bearing attribute to a memento URL.

    Script element bodies pass through untouched: URLs a script builds at
    run time belong to the shim and the fuzzy resolver, not to this pass.
    Best effort over malformed markup: anything the tag scanner cannot
    read passes through too. about:blank frame targets stay as is for the
    shim to repair at run time.
    """

    def rewrite_tag(match: re.Match) -> str:
        tag = match.group(1).lower()
        attrs_text = match.group(2)
        rel = ""
        for attr in _ATTR_RE.finditer(attrs_text):
            if attr.group(1).lower() == "rel":
                rel = attr.group(3).strip("\"'")
        modifier = _element_modifier(tag, rel)

        def rewrite_attr(attr: re.Match) -> str:
            name, eq, quoted = attr.group(1), attr.group(2), attr.group(3)
            if name.lower() not in _URL_ATTRS:
                return attr.group(0)
            quote = quoted[0] if quoted[0] in "\"'" else ""
            value = quoted.strip("\"'") if quote else quoted
            if name.lower() == "srcset":
                new = _rewrite_srcset(value, ctx)
            else:
                new = _rewrite_url(value, modifier, ctx)
            return f"{name}{eq}{quote}{new}{quote}"

        return f"<{match.group(1)}{_ATTR_RE.sub(rewrite_attr, attrs_text)}>"

    parts = []
    pos = 0
    for script in _SCRIPT_RE.finditer(text):
        parts.append(_TAG_RE.sub(rewrite_tag, text[pos:script.start()]))
        parts.append(_TAG_RE.sub(rewrite_tag, script.group(1)))
        parts.append(script.group(2))
        parts.append(script.group(3))
        pos = script.end()
    parts.append(_TAG_RE.sub(rewrite_tag, text[pos:]))
    out = "".join(parts)
    if ctx.inject_shim and CONTEXT_BLOCK_ID not in out:
        out = _inject_shim(out, ctx)
    return out


def _inject_shim(text: str, ctx: RewriteContext) -> str:
    context = json.dumps({
        "timestamp14": ctx.timestamp14,
        "wombat_sec": ctx.wombat_sec or compute_wombat_sec(ctx.timestamp14),
        "replay_base": ctx.replay_base,
    })
    snippet = (f'<script type="application/json" id="{CONTEXT_BLOCK_ID}">'
               f"{context}</script>"
               f'<script src="{ctx.shim_src}"></script>')
    head = _HEAD_RE.search(text)
    if head:
        return text[:head.end()] + snippet + text[head.end():]
    html = _HTML_RE.search(text)
    if html:
        return text[:html.end()] + snippet + text[html.end():]
    return snippet + text


_CSS_URL_RE = re.compile(r"url\(\s*(['\"]?)([^'\")]+)\1\s*\)", re.I)
_CSS_IMPORT_RE = re.compile(
    r"@import\s+(?:url\(\s*(['\"]?)([^'\")]+)\1\s*\)|(['\"])([^'\"]+)\3)", re.I)


def rewrite_css(text: str, ctx: RewriteContext) -> str:
    """Rewrite @import targets (as stylesheets) and url() values (as assets)."""

    def rewrite_import(match: re.Match) -> str:
        if match.group(2) is not None:
            quote, url = match.group(1), match.group(2)
            new = _rewrite_url(url, "cs_", ctx)
            return f"@import url({quote}{new}{quote})"
        quote, url = match.group(3), match.group(4)
        new = _rewrite_url(url, "cs_", ctx)
        return f"@import {quote}{new}{quote}"

    def rewrite_asset(match: re.Match) -> str:
        quote, url = match.group(1), match.group(2)
        new = _rewrite_url(url, "im_", ctx)
        return f"url({quote}{new}{quote})"

    out = _CSS_IMPORT_RE.sub(rewrite_import, text)
    return _CSS_URL_RE.sub(rewrite_asset, out)


def sniff_charset(payload: bytes, declared: str = "") -> str:
    """Charset from the HTTP header when given, else from a meta tag, else UTF-8."""
    if declared:
        return declared
    match = _CHARSET_RE.search(payload[:2048])
    if match:
        try:
            name = match.group(1).decode("ascii")
            b"x".decode(name)
            return name
        except (LookupError, UnicodeDecodeError):
            pass
    return "utf-8"


def rewrite_html_bytes(payload: bytes, ctx: RewriteContext,
                       declared_charset: str = "") -> bytes:
    charset = sniff_charset(payload, declared_charset)
    text = payload.decode(charset, errors="replace")
    return rewrite_html(text, ctx).encode(charset, errors="replace")


def rewrite_css_bytes(payload: bytes, ctx: RewriteContext,
                      declared_charset: str = "") -> bytes:
    charset = declared_charset or "utf-8"
    text = payload.decode(charset, errors="replace")
    return rewrite_css(text, ctx).encode(charset, errors="replace")
