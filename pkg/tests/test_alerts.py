import json
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import CORPORA
from irplan.alerts import (AlertPair, extract_alert_pairs, parse_alert_log, parse_snort_alert_line,
                           render_alert_pairs, split_alert_records)
from irplan.errors import UnrecognizedLine
from irplan.parsing import payload_of

TROJAN = ("[1:31033:6]MALWARE Win.Trojan.Cryptodefence [Classification:A Network Trojan Detected] "
          "[Priority 1] {TCP}147.32.84.165:1057->222.88.205.195:443")


def test_pair_extraction_example():
    assert extract_alert_pairs("[Classification: A Network Trojan Detected] [Priority: 1]") == {
        AlertPair("a network trojan detected", "1")}


def test_pairs_deduplicated():
    line = "[Classification: Misc Attack] [Priority: 2]"
    assert len(extract_alert_pairs(line + "\n" + line.upper())) == 1


def test_no_pairs():
    assert extract_alert_pairs("nothing bracketed here [Priority: 1]") == frozenset()


def test_pair_normalisation():
    assert AlertPair("  A  Network Trojan ", " 1 ") == AlertPair("a network trojan", "1")
    with pytest.raises(ValueError):
        AlertPair("", "1")


def test_fig1_trojan_line():
    a = parse_snort_alert_line(TROJAN)
    assert a.rule_id == "1:31033:6"
    assert a.priority == 1
    assert a.protocol == "TCP"
    assert a.src == "147.32.84.165:1057"
    assert a.dst == "222.88.205.195:443"
    assert a.message == "MALWARE Win.Trojan.Cryptodefence"
    assert a.pair() == AlertPair("a network trojan detected", "1")
    assert a.raw == TROJAN


def test_fig1_http_inspect_line():
    a = parse_snort_alert_line("[120:3:2](http_inspect) NO CONTENT-LENGTH..")
    assert a.rule_id == "120:3:2"
    assert a.message.startswith("(http_inspect)")
    assert a.pair() is None


def test_fast_log_line():
    line = ("07/06-09:20:27.123456  [**] [1:2006445:14] ET WEB_SERVER Possible SQL Injection [**] "
            "[Classification: Web Application Attack] [Priority: 1] {TCP} 205.174.165.73:51234 -> 192.168.10.50:80")
    a = parse_snort_alert_line(line)
    assert a.message == "ET WEB_SERVER Possible SQL Injection"
    assert (a.src, a.dst, a.priority) == ("205.174.165.73:51234", "192.168.10.50:80", 1)


def test_unknown_protocol_is_other():
    a = parse_snort_alert_line("[1:1:1] test [Priority: 3] {IPV6-ICMP} fe80::1 -> ff02::1")
    assert a.protocol == "other"


def test_garbage_rejected():
    with pytest.raises(UnrecognizedLine):
        parse_snort_alert_line("hello world")


def test_fig1_multiline_record():
    text = (CORPORA / "fig1_compact.log").read_text()
    alerts = parse_alert_log(text)
    assert [a.rule_id for a in alerts] == ["120:3:2", "1:31033:6"]
    assert alerts[1].pair() == AlertPair("a network trojan detected", "1")
    assert alerts[1].src == "147.32.84.165:1057"


def test_corpus_lines_parse_and_round_trip():
    lines = (CORPORA / "snort_alerts.log").read_text().splitlines()
    assert split_alert_records("\n".join(lines)) == lines
    for line in lines:
        assert parse_snort_alert_line(line).raw == line


def test_render_alert_pairs_sorted():
    pairs = {AlertPair("b", "2"), AlertPair("a", "1")}
    assert render_alert_pairs(pairs) == "[Classification: a] [Priority: 1]\n[Classification: b] [Priority: 2]"
    assert extract_alert_pairs(render_alert_pairs(pairs)) == pairs


def test_generation_corpus():
    for rec in json.loads((CORPORA / "alert_pairs.json").read_text()):
        expected = frozenset(AlertPair(c, p) for c, p in rec["expected"])
        assert extract_alert_pairs(payload_of(rec["text"])) == expected, rec["text"]


words = st.text(alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd"), whitelist_characters=" -"),
                min_size=1, max_size=20).filter(lambda s: s.strip())


@given(st.sets(st.tuples(words, words), max_size=6))
def test_pairs_round_trip(raw):
    pairs = {AlertPair(c, p) for c, p in raw}
    assert extract_alert_pairs(render_alert_pairs(pairs)) == pairs
