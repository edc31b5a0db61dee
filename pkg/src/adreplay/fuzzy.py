"""Fuzzy resolution for requests whose URLs miss the index.

Ad scripts bake run-time random values into the URLs they request, so an
archived ad's replay request rarely matches its crawl-time capture
exactly. Each rule here maps such a request onto the capture that should
answer it:

* ``safeframe``: a 32-hex random subdomain of safeframe.googlesyndication.com
  is collapsed to a wildcard label, so every capture of the same container
  path answers any random subdomain.
* ``amazon_rnd``: the ``rnd`` query parameter on amazon-adsystem.com hosts
  is dropped, everything else kept.
* ``richload``: a request whose path mentions richload is matched to the
  capture on the same host whose path carries both the ad id (the first
  all-digit path segment of the referring ad page) and richload.
* ``generic``: last resort, the entire query string is dropped.

Rules run in priority order after the exact lookup; the first rule that
produces any candidate wins, and within a rule the pick is the nearest
timestamp, earlier on ties, then smallest original URL, so resolution is
a pure function of its inputs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .cdx import CaptureIndex, CdxEntry, canonicalize, lookup, nearest_entry
from .errors import (
    BadRuleConfig,
    NoAdIdInReferrer,
    NotAbsoluteUrl,
    NotFound,
    RuleNotApplicable,
)

_HEX32 = re.compile(r"^[0-9a-f]{32}$")

WILDCARD_LABEL = "*"

TRANSFORM_KINDS = ("strip_hex_subdomain", "strip_query_param", "referrer_ad_id",
                   "strip_query")


@dataclass(frozen=True)
class FuzzyRule:
    name: str
    priority: int
    transform: str           # one of TRANSFORM_KINDS
    host_pattern: str        # "*", exact host, or "*.suffix"
    param: str = ""          # query parameter for strip_query_param
    path_token: str = ""     # required path substring for referrer_ad_id


DEFAULT_RULES = (
    FuzzyRule("safeframe", 10, "strip_hex_subdomain", "*.safeframe.googlesyndication.com"),
    FuzzyRule("amazon_rnd", 20, "strip_query_param", "*.amazon-adsystem.com", param="rnd"),
    FuzzyRule("richload", 30, "referrer_ad_id", "*", path_token="richload"),
    FuzzyRule("generic", 40, "strip_query", "*"),
)


@dataclass(frozen=True)
class Resolution:
    entry: CdxEntry
    rule_used: str
    candidates_considered: int


def _host_matches(host: str, pattern: str) -> bool:
    host = host.split(":")[0]
    if pattern == "*":
        return True
    if pattern.startswith("*."):
        suffix = pattern[2:]
        return host == suffix or host.endswith("." + suffix)
    return host == pattern


def _split_key(key: str) -> tuple[str, str, str]:
    """Canonical key -> (host, path, query)."""
    host, slash, tail = key.partition("/")
    path, _, query = tail.partition("?")
    return host, slash + path, query


def _alternate_key(rule: FuzzyRule, url: str) -> str:
    """Alternate lookup key for a request or capture URL under this rule."""
    key = canonicalize(url)
    host, path, query = _split_key(key)
    if not _host_matches(host, rule.host_pattern):
        raise RuleNotApplicable(f"{rule.name}: host {host} out of scope")

    if rule.transform == "strip_hex_subdomain":
        label, dot, rest = host.partition(".")
        if not dot or not _HEX32.match(label):
            raise RuleNotApplicable(f"{rule.name}: no 32-hex subdomain in {host}")
        key = f"{WILDCARD_LABEL}.{rest}{path}"
        return key + ("?" + query if query else "")

    if rule.transform == "strip_query_param":
        pairs = [p for p in query.split("&") if p] if query else []
        kept = [p for p in pairs if p.partition("=")[0] != rule.param]
        if len(kept) == len(pairs):
            raise RuleNotApplicable(f"{rule.name}: no {rule.param} parameter")
        return f"{host}{path}" + ("?" + "&".join(kept) if kept else "")

    if rule.transform == "strip_query":
        if not query:
            raise RuleNotApplicable(f"{rule.name}: no query string")
        return f"{host}{path}"

    raise RuleNotApplicable(f"{rule.name}: transform derives no key")


def normalize_safeframe(url: str) -> str:
    return _alternate_key(DEFAULT_RULES[0], url)


def normalize_amazon_rnd(url: str) -> str:
    return _alternate_key(DEFAULT_RULES[1], url)


def generic_query_fuzzy(url: str) -> str:
    return _alternate_key(DEFAULT_RULES[3], url)


@dataclass(frozen=True)
class RichloadSpec:
    """Search constraints: same host, ad id path segment, token in path."""

    host: str
    ad_id: str
    path_token: str


def resolve_richload(url: str, referrer: str | None,
                     rule: FuzzyRule | None = None) -> RichloadSpec:
    rule = rule or DEFAULT_RULES[2]
    key = canonicalize(url)
    host, path, _ = _split_key(key)
    if not _host_matches(host, rule.host_pattern) or rule.path_token not in path.lower():
        raise RuleNotApplicable(f"{rule.name}: path lacks {rule.path_token!r}")
    if not referrer:
        raise NoAdIdInReferrer("no referrer to take an ad id from")
    try:
        ref_key = canonicalize(referrer)
    except NotAbsoluteUrl as exc:
        raise NoAdIdInReferrer(str(exc)) from exc
    _, ref_path, _ = _split_key(ref_key)
    for segment in ref_path.split("/"):
        if segment.isdigit():
            return RichloadSpec(host=host, ad_id=segment, path_token=rule.path_token)
    raise NoAdIdInReferrer(f"no all-digit path segment in {referrer}")


def _richload_candidates(index: CaptureIndex, spec: RichloadSpec) -> list[CdxEntry]:
    out = []
    for entry in index.scan_prefix(spec.host + "/"):
        _, path, _ = _split_key(entry.key)
        segments = path.split("/")
        if spec.ad_id in segments and spec.path_token in path.lower():
            out.append(entry)
    return out


class FuzzyResolver:
    """Resolver over one immutable index; safe to share between threads."""

    def __init__(self, index: CaptureIndex, rules: tuple[FuzzyRule, ...] = DEFAULT_RULES):
        self.index = index
        self.rules = tuple(sorted(rules, key=lambda r: r.priority))
        self._buckets: dict[str, dict[str, list[CdxEntry]]] = {}

    def _bucket(self, rule: FuzzyRule) -> dict[str, list[CdxEntry]]:
        cached = self._buckets.get(rule.name)
        if cached is not None:
            return cached
        bucket: dict[str, list[CdxEntry]] = {}
        for entry in self.index.entries:
            try:
                alt = _alternate_key(rule, entry.original_uri)
            except (RuleNotApplicable, NotAbsoluteUrl):
                continue
            bucket.setdefault(alt, []).append(entry)
        self._buckets[rule.name] = bucket
        return bucket

    def resolve(self, url: str, ts: str, referrer: str | None = None) -> Resolution:
        tried: list[tuple[str, int]] = []
        try:
            entry = lookup(self.index, url, ts)
            count = len(self.index.entries_for_key(canonicalize(url)))
            return Resolution(entry, "exact", count)
        except NotFound:
            tried.append(("exact", 0))

        for rule in self.rules:
            if rule.transform == "referrer_ad_id":
                try:
                    spec = resolve_richload(url, referrer, rule)
                except (RuleNotApplicable, NoAdIdInReferrer):
                    tried.append((rule.name, 0))
                    continue
                candidates = _richload_candidates(self.index, spec)
            else:
                try:
                    alt = _alternate_key(rule, url)
                except (RuleNotApplicable, NotAbsoluteUrl):
                    tried.append((rule.name, 0))
                    continue
                candidates = list(self._bucket(rule).get(alt, []))
                if rule.transform == "strip_query":
                    # the stripped key is a real key: a query-less capture
                    # answers a query-bearing request directly
                    candidates.extend(self.index.entries_for_key(alt))
            tried.append((rule.name, len(candidates)))
            if candidates:
                return Resolution(nearest_entry(candidates, ts), rule.name, len(candidates))

        raise NotFound(f"no capture resolves {url}", rules_tried=tried)


def resolve(index: CaptureIndex, url: str, ts: str, referrer: str | None = None,
            rules: tuple[FuzzyRule, ...] = DEFAULT_RULES) -> Resolution:
    """One-shot resolve; build a FuzzyResolver instead when serving."""
    return FuzzyResolver(index, rules).resolve(url, ts, referrer)


# --- rule config file -------------------------------------------------------
#
# One rule per non-comment line, whitespace separated:
#
#     name  priority  transform[:param]  host_pattern  [path_token]
#
# transform is one of strip_hex_subdomain, strip_query_param:<name>,
# referrer_ad_id, strip_query. host_pattern is "*", an exact host, or
# "*.suffix" (matching the bare suffix too). Priorities must be unique.

def load_rules(path: str) -> tuple[FuzzyRule, ...]:
    rules = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) not in (4, 5):
                raise BadRuleConfig(f"{path}:{lineno}: expected 4 or 5 fields")
            name, priority_text, transform_spec, host_pattern = fields[:4]
            path_token = fields[4] if len(fields) == 5 else ""
            try:
                priority = int(priority_text)
            except ValueError:
                raise BadRuleConfig(f"{path}:{lineno}: bad priority {priority_text!r}")
            transform, _, param = transform_spec.partition(":")
            if transform not in TRANSFORM_KINDS:
                raise BadRuleConfig(f"{path}:{lineno}: unknown transform {transform!r}")
            if transform == "strip_query_param" and not param:
                raise BadRuleConfig(f"{path}:{lineno}: strip_query_param needs :name")
            rules.append(FuzzyRule(name, priority, transform, host_pattern,
                                   param=param, path_token=path_token))
    priorities = [r.priority for r in rules]
    if len(set(priorities)) != len(priorities):
        raise BadRuleConfig(f"{path}: duplicate priorities")
    return tuple(rules)
