"""Exception types shared across the engine."""


class AdReplayError(Exception):
    """Base class for all errors raised by this package."""


# --- archive container errors ---

class TruncatedRecord(AdReplayError):
    """A record block ended before its declared Content-Length."""


class BadVersionLine(AdReplayError):
    """Input did not start with a WARC/1.x version line."""


class BadGzipMember(AdReplayError):
    """A compressed record member could not be decompressed."""


class IoFailure(AdReplayError):
    """Could not write archive output."""


class NotAZip(AdReplayError):
    """The given container is not a ZIP file."""


class NoArchiveMembers(AdReplayError):
    """The ZIP container holds no WARC members under its archive directory."""


# --- index errors ---

class NotAbsoluteUrl(AdReplayError):
    """URL is not an absolute http(s) URL."""


class NotFound(AdReplayError):
    """No capture satisfied the request, even after fuzzy rules.

    ``rules_tried`` holds (rule name, candidate count) pairs in the order
    the rules ran, for diagnostics.
    """

    def __init__(self, message: str, rules_tried: list[tuple[str, int]] | None = None):
        super().__init__(message)
        self.rules_tried = rules_tried or []


# --- fuzzy rule errors ---

class RuleNotApplicable(AdReplayError):
    """The rule's predicate does not hold for this URL."""


class NoAdIdInReferrer(AdReplayError):
    """The referrer has no all-digit path segment to use as an ad id."""


class BadRuleConfig(AdReplayError):
    """Rule config file is malformed or names an unknown transform."""


# --- rewriter errors ---

class InvalidTimestamp(AdReplayError):
    """Timestamp is not a valid 14-digit UTC datetime."""


class RelativeUrir(AdReplayError):
    """The target URL must be absolute."""


class NotAUriM(AdReplayError):
    """Text does not parse as a memento URL."""


class UnknownModifier(AdReplayError):
    """Memento URL carries an unrecognized modifier token."""
