import re
import string
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adreplay.errors import InvalidTimestamp, NotAUriM, RelativeUrir, UnknownModifier
from adreplay.rewrite import (
    MODIFIERS,
    RewriteContext,
    compute_wombat_sec,
    make_urim,
    parse_urim,
    rewrite_css,
    rewrite_html,
    rewrite_html_bytes,
    sniff_charset,
)

WAYBACK_BASE = "https://web.archive.org/web/"


def ctx_for(ts="20230822161544", base_urir="https://h.test/d/", **kwargs):
    return RewriteContext.for_capture("/web/", ts, base_urir, **kwargs)


class TestUriM:
    def test_wayback_example(self):
        urim = make_urim("https://www.google.com/", "20221220095518", "", WAYBACK_BASE)
        assert urim == "https://web.archive.org/web/20221220095518/https://www.google.com/"

    def test_script_modifier_example(self):
        urim = make_urim("https://treid003.github.io/displayAds.js",
                         "20240524092904", "js_", WAYBACK_BASE)
        assert urim == ("https://web.archive.org/web/20240524092904js_/"
                        "https://treid003.github.io/displayAds.js")

    def test_parse_wayback_example(self):
        parsed = parse_urim(
            "https://web.archive.org/web/20221220095518/https://www.google.com/",
            WAYBACK_BASE)
        assert (parsed.timestamp14, parsed.modifier, parsed.urir) == \
            ("20221220095518", "", "https://www.google.com/")

    def test_parse_raw_modifier(self):
        parsed = parse_urim(
            WAYBACK_BASE + "20230821142108id_/https://securepubads.g.doubleclick.net"
            "/pagead/managed/js/gpt/m202308210101/pubads_impl.js?cb=31077272",
            WAYBACK_BASE)
        assert parsed.modifier == "id_"
        assert parsed.timestamp14 == "20230821142108"

    def test_short_timestamp_rejected(self):
        with pytest.raises(InvalidTimestamp):
            parse_urim("/web/2023id_/http://x/", "/web/")

    def test_impossible_datetime_rejected(self):
        with pytest.raises(InvalidTimestamp):
            make_urim("https://x.test/", "20231399000000")

    def test_unknown_modifier_rejected(self):
        with pytest.raises(UnknownModifier):
            parse_urim("/web/20230101000000zz_/https://x.test/", "/web/")

    def test_not_a_urim(self):
        with pytest.raises(NotAUriM):
            parse_urim("/elsewhere/20230101000000/https://x.test/", "/web/")
        with pytest.raises(NotAUriM):
            parse_urim("/web/20230101000000/relative/path", "/web/")

    def test_relative_urir_rejected(self):
        with pytest.raises(RelativeUrir):
            make_urim("relative/path", "20230101000000")

    _ts = st.datetimes(
        min_value=datetime(1996, 1, 1), max_value=datetime(2035, 12, 31),
    ).map(lambda dt: dt.strftime("%Y%m%d%H%M%S"))
    _urir = st.builds(
        lambda host, path: f"https://{host}.test/{path}",
        st.text(string.ascii_lowercase, min_size=1, max_size=10),
        st.text(string.ascii_letters + string.digits + "/._-", max_size=20))

    @given(_urir, _ts, st.sampled_from(MODIFIERS))
    @settings(max_examples=100)
    def test_round_trip_property(self, urir, ts, modifier):
        text = make_urim(urir, ts, modifier, "/web/")
        parsed = parse_urim(text, "/web/")
        assert (parsed.urir, parsed.timestamp14, parsed.modifier) == (urir, ts, modifier)
        assert parsed.render() == text


class TestWombatSec:
    def test_epoch_origin(self):
        assert compute_wombat_sec("19700101000000") == "0"

    def test_capture_instant(self):
        # oracle: civil date to epoch via day-count arithmetic
        assert compute_wombat_sec("20230822161544") == str(_epoch_oracle(2023, 8, 22, 16, 15, 44))
        assert compute_wombat_sec("20230822161544") == "1692720944"

    def test_wayback_example_instant(self):
        assert compute_wombat_sec("20221220095518") == str(_epoch_oracle(2022, 12, 20, 9, 55, 18))

    def test_rejects_bad_timestamp(self):
        with pytest.raises(InvalidTimestamp):
            compute_wombat_sec("2023")


def _epoch_oracle(year, month, day, hour, minute, second):
    from datetime import date
    days = date(year, month, day).toordinal() - date(1970, 1, 1).toordinal()
    return days * 86400 + hour * 3600 + minute * 60 + second


def find_live_urls(html: str, replay_base: str = "/web/") -> list[str]:
    """Absolute http(s) URLs still sitting in attribute positions."""
    out = []
    for match in re.finditer(r"""(?:src|href|srcset|action|poster|data)\s*=\s*["']([^"']+)["']""",
                             html, re.I):
        for piece in match.group(1).split(","):
            url = piece.strip().split(" ")[0]
            if url.startswith(("http://", "https://")) and not url.startswith(replay_base):
                out.append(url)
    return out


class TestRewriteHtml:
    def test_script_element_rewrite(self):
        ctx = ctx_for("20240524092904", "https://treid003.github.io/")
        html = rewrite_html('<script src="https://treid003.github.io/displayAds.js"> </script>',
                            ctx)
        assert ('src="/web/20240524092904js_/https://treid003.github.io/displayAds.js"'
                in html)

    def test_document_without_urls_only_gains_shim(self):
        ctx = ctx_for()
        doc = "<html><head><title>t</title></head><body><p>text</p></body></html>"
        out = rewrite_html(doc, ctx)
        assert "<p>text</p>" in out and "<title>t</title>" in out
        assert "__replay_context__" in out
        stripped = re.sub(r"<script.*?</script>", "", out, flags=re.S)
        assert stripped == doc

    def test_relative_resolution(self):
        ctx = ctx_for(base_urir="https://h.test/d/")
        out = rewrite_html('<img src="a/b.png">', ctx)
        assert 'src="/web/20230822161544im_/https://h.test/d/a/b.png"' in out

    def test_root_relative_and_parent_relative(self):
        ctx = ctx_for(base_urir="https://h.test/d/e/page.html")
        out = rewrite_html('<a href="/top.html"></a><img src="../up.png">', ctx)
        assert "/web/20230822161544/https://h.test/top.html" in out
        assert "/web/20230822161544im_/https://h.test/d/up.png" in out

    def test_modifier_selection_by_element(self):
        ctx = ctx_for()
        out = rewrite_html(
            '<script src="https://x.test/a.js"></script>'
            '<link rel="stylesheet" href="https://x.test/a.css">'
            '<img src="https://x.test/a.png">'
            '<iframe src="https://x.test/frame.html"></iframe>'
            '<a href="https://x.test/page.html">go</a>'
            '<video poster="https://x.test/p.jpg"></video>', ctx)
        assert "js_/https://x.test/a.js" in out
        assert "cs_/https://x.test/a.css" in out
        assert "im_/https://x.test/a.png" in out
        assert "if_/https://x.test/frame.html" in out
        assert "/web/20230822161544/https://x.test/page.html" in out
        assert "/web/20230822161544/https://x.test/p.jpg" in out

    def test_about_blank_iframe_untouched(self):
        ctx = ctx_for()
        out = rewrite_html('<iframe src="about:blank"></iframe>', ctx)
        assert 'src="about:blank"' in out

    def test_shim_injected_first_in_head(self):
        ctx = ctx_for()
        out = rewrite_html("<html><head><meta charset=utf-8><title>x</title></head></html>", ctx)
        head_idx = out.index("<head>")
        ctx_idx = out.index("__replay_context__")
        meta_idx = out.index("<meta")
        assert head_idx < ctx_idx < meta_idx
        assert '"wombat_sec": "1692720944"' in out
        assert '"timestamp14": "20230822161544"' in out
        assert '"replay_base": "/web/"' in out

    def test_no_shim_when_disabled(self):
        ctx = ctx_for(inject_shim=False)
        out = rewrite_html("<html><head></head></html>", ctx)
        assert "__replay_context__" not in out

    def test_no_live_urls_remain(self):
        ctx = ctx_for()
        out = rewrite_html(
            '<img src="https://live.test/a.png" srcset="https://live.test/b.png 2x">'
            '<script src="//cdn.test/l.js"></script>'
            '<form action="https://live.test/submit"><object data="https://live.test/o.swf">'
            '</object></form>', ctx)
        assert find_live_urls(out) == []

    def test_idempotence(self):
        ctx = ctx_for()
        doc = ('<html><head><link rel="stylesheet" href="s.css"></head>'
               '<body><img src="https://live.test/a.png" srcset="x.png 1x, y.png 2x">'
               '<iframe src="about:blank"></iframe></body></html>')
        once = rewrite_html(doc, ctx)
        assert rewrite_html(once, ctx) == once

    def test_unparseable_regions_pass_through(self):
        ctx = ctx_for()
        doc = "<html><body><p>a < b and broken <img src='x.png'</p></body></html>"
        out = rewrite_html(doc, ctx)
        assert "a < b" in out

    def test_script_bodies_pass_through(self):
        ctx = ctx_for()
        doc = ('<html><head></head><body>'
               '<script src="https://cdn.test/ad.js">var ignored = 1;</script>'
               '<script>document.write(\'<img src="https://live.test/dyn.png">\');</script>'
               '</body></html>')
        out = rewrite_html(doc, ctx)
        # the element's own src is rewritten, the code inside is not
        assert 'src="/web/20230822161544js_/https://cdn.test/ad.js"' in out
        assert '<img src="https://live.test/dyn.png">' in out
        assert rewrite_html(out, ctx) == out

    def test_data_and_javascript_urls_untouched(self):
        ctx = ctx_for()
        doc = ('<img src="data:image/gif;base64,R0lGOD==">'
               '<a href="javascript:void(0)">x</a><a href="#anchor">y</a>')
        out = rewrite_html(doc, ctx)
        assert 'src="data:image/gif;base64,R0lGOD=="' in out
        assert 'href="javascript:void(0)"' in out
        assert 'href="#anchor"' in out


CSS_CASES = [
    ('url("x.png")', 'url("/web/20230822161544im_/https://h.test/x.png")'),
    ("url('x.png')", "url('/web/20230822161544im_/https://h.test/x.png')"),
    ("url(x.png)", "url(/web/20230822161544im_/https://h.test/x.png)"),
    ('url( "pad.png" )', 'url("/web/20230822161544im_/https://h.test/pad.png")'),
    ("url(/abs.png)", "url(/web/20230822161544im_/https://h.test/abs.png)"),
    ("url(https://live.test/f.woff2)",
     "url(/web/20230822161544im_/https://live.test/f.woff2)"),
    ("url(//cdn.test/c.png)", "url(/web/20230822161544im_/https://cdn.test/c.png)"),
    ("url(data:image/png;base64,AAAA)", "url(data:image/png;base64,AAAA)"),
    ('@import "t.css";', '@import "/web/20230822161544cs_/https://h.test/t.css";'),
    ("@import 't.css';", "@import '/web/20230822161544cs_/https://h.test/t.css';"),
    ('@import url("t.css");', '@import url("/web/20230822161544cs_/https://h.test/t.css");'),
    ("@import url(t.css);", "@import url(/web/20230822161544cs_/https://h.test/t.css);"),
    ('@import url( "deep/t.css" );',
     '@import url("/web/20230822161544cs_/https://h.test/deep/t.css");'),
    ("@IMPORT url(up.css);", "@import url(/web/20230822161544cs_/https://h.test/up.css);"),
    ("body { background: URL(bg.jpg); }",
     "body { background: url(/web/20230822161544im_/https://h.test/bg.jpg); }"),
    ("div{background:url('a b.png')}",
     "div{background:url('/web/20230822161544im_/https://h.test/a b.png')}"),
    (".x { mask: url(#svg-ref); }", ".x { mask: url(#svg-ref); }"),
    ("/* url(not-real.png) in comment */ p {color:red}",
     "/* url(/web/20230822161544im_/https://h.test/not-real.png) in comment */ p {color:red}"),
    ("", ""),
    ("p { color: blue }", "p { color: blue }"),
]


class TestRewriteCss:
    def test_simple_url(self):
        ctx = ctx_for(base_urir="https://h.test/")
        assert rewrite_css('url("x.png")', ctx) == \
            'url("/web/20230822161544im_/https://h.test/x.png")'

    def test_empty_stylesheet_unchanged(self):
        ctx = ctx_for(base_urir="https://h.test/")
        assert rewrite_css("", ctx) == ""

    @pytest.mark.parametrize("source,expected", CSS_CASES)
    def test_quoting_corpus(self, source, expected):
        ctx = ctx_for(base_urir="https://h.test/")
        assert rewrite_css(source, ctx) == expected

    def test_idempotence(self):
        ctx = ctx_for(base_urir="https://h.test/")
        once = rewrite_css("@import 'a.css'; body{background:url(b.png)}", ctx)
        assert rewrite_css(once, ctx) == once


class TestCharset:
    def test_meta_charset_honored(self):
        payload = '<html><head><meta charset="iso-8859-1"></head><body>caf\xe9</body></html>'.encode("iso-8859-1")
        assert sniff_charset(payload) == "iso-8859-1"
        out = rewrite_html_bytes(payload, ctx_for())
        assert b"caf\xe9" in out

    def test_header_charset_wins(self):
        payload = b"<html><body>x</body></html>"
        assert sniff_charset(payload, "utf-16") == "utf-16"

    def test_default_utf8_lossy(self):
        payload = b"<html><body>ok \xff\xfe broken</body></html>"
        out = rewrite_html_bytes(payload, ctx_for(inject_shim=False))
        assert b"ok" in out
