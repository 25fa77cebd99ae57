from __future__ import annotations

import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cepfuse.engine import InvariantError, Match
from cepfuse.events import ComplexEvent, centroid, encode_event
from cepfuse.fusion import (
    EventRejected,
    FusionPipeline,
    PriorityConfig,
    TrustRegistry,
    encode_secure_event,
    merge,
    min_trust,
    noisy_or_trust,
    syntactic_check,
    trust_analysis,
)

from conftest import BASE, ev

NOW = BASE + 3_600_000


class FixedClock:
    def mono_ns(self):
        return 0

    def wall_ms(self):
        return NOW


def raw(**over):
    rec = {"id": "x1", "type": "ObjectRecognition", "ts_ms": BASE, "lat": 43.72, "lon": 10.39, "source": "cam-01", "attrs": {}, "text": ""}
    rec.update(over)
    return rec


def robbery(src1="cam-01", src2="mic-01"):
    e1 = ev("e1", 0, 43.7230, 10.3966, source=src1, personBehaviour="suspicious", object="gun")
    e2 = ev("e2", 10, 43.7233, 10.3966, source=src2, audio="wallet")
    return e1, e2


def pipeline(rules, weights=None, **kw):
    p = FusionPipeline(PriorityConfig({"bomb": 5, "weapon": 4}), TrustRegistry(weights or {}), clock=FixedClock(), **kw)
    p.register_rules(rules)
    return p


class TestSyntactic:
    cfg = PriorityConfig({"bomb": 5, "weapon": 4})

    def test_keyword_priority(self):
        e = syntactic_check(raw(text="suspicious bag, possible bomb"), self.cfg, NOW)
        assert e.priority == 5

    def test_max_of_keywords(self):
        assert syntactic_check(raw(text="weapon and BOMB"), self.cfg, NOW).priority == 5

    def test_attribute_values_searched(self):
        assert syntactic_check(raw(attrs={"object": "weapon"}), self.cfg, NOW).priority == 4

    def test_whole_words_only(self):
        assert syntactic_check(raw(text="bombastic weapons"), self.cfg, NOW).priority == 0

    def test_default_priority(self):
        assert syntactic_check(raw(text="nothing here"), self.cfg, NOW).priority == 0

    @pytest.mark.parametrize(
        "over,reason",
        [
            ({"lat": 123.0}, "lat out of range"),
            ({"lon": -181}, "lon out of range"),
            ({"type": "Teleport"}, "unknown event type"),
            ({"source": ""}, "missing field source"),
            ({"ts_ms": NOW + 60_001}, "timestamp in the future"),
            ({"ts_ms": 0}, "timestamp"),
            ({"ts_ms": "soon"}, "ts_ms must be an integer"),
            ({"attrs": {"a": 1.5}}, "attribute values"),
        ],
    )
    def test_rejections(self, over, reason):
        with pytest.raises(EventRejected) as ei:
            syntactic_check(raw(**over), self.cfg, NOW)
        assert ei.value.record.stage == "syntactic"
        assert reason in ei.value.record.reason

    def test_skew_bound_inclusive(self):
        assert syntactic_check(raw(ts_ms=NOW + 60_000), self.cfg, NOW).timestamp == NOW + 60_000


class TestPriorityConfig:
    def test_loads(self):
        cfg = PriorityConfig.loads("# c\n* 1\nbomb 10\nfire alarm 7\n")
        assert cfg.priority_of(["a FIRE  alarm"]) == 7
        assert cfg.priority_of(["calm"]) == 1

    def test_bad_line(self):
        with pytest.raises(ValueError):
            PriorityConfig.loads("bomb high\n")

    @settings(max_examples=100)
    @given(
        st.dictionaries(st.from_regex(r"[a-z]{1,6}", fullmatch=True), st.integers(0, 20), max_size=5),
        st.from_regex(r"[a-z]{1,6}", fullmatch=True),
        st.integers(0, 20),
        st.lists(st.from_regex(r"[a-z]{1,6}", fullmatch=True), max_size=6),
    )
    def test_adding_keyword_never_lowers(self, table, kw, p, words):
        text = " ".join(words)
        before = PriorityConfig(table).priority_of([text])
        after = PriorityConfig({**table, kw: max(p, table.get(kw, 0))}).priority_of([text])
        assert after >= before


class TestTrust:
    def _ce(self, rules_by_id, s1, s2):
        e1, e2 = robbery(s1, s2)
        m = Match("armed-robbery", {"event1": e1, "event2": e2}, ("e1", "e2"))
        return merge(m, rules_by_id["armed-robbery"], NOW)

    def test_full_trust(self, rules_by_id):
        se = trust_analysis(self._ce(rules_by_id, "a", "b"), TrustRegistry({"a": 1.0, "b": 1.0}))
        assert se.trust == 1.0
        assert se.source_trace == (("a", 1.0), ("b", 1.0))

    def test_mean(self, rules_by_id):
        se = trust_analysis(self._ce(rules_by_id, "a", "b"), TrustRegistry({"a": 0.9, "b": 0.3}))
        assert se.trust == pytest.approx(0.6)

    def test_single_source_rejected(self, rules_by_id):
        with pytest.raises(EventRejected) as ei:
            trust_analysis(self._ce(rules_by_id, "a", "a"), TrustRegistry({"a": 0.2}))
        assert ei.value.record.stage == "trust"
        assert ei.value.record.trust == pytest.approx(0.2)

    def test_unknown_source_default(self, rules_by_id):
        assert trust_analysis(self._ce(rules_by_id, "p", "q"), TrustRegistry()).trust == 0.5

    def test_alternative_aggregators(self):
        assert min_trust([0.9, 0.3]) == 0.3
        assert noisy_or_trust([0.5, 0.5]) == pytest.approx(0.75)

    def test_registry_validation(self):
        with pytest.raises(ValueError):
            TrustRegistry({"a": 1.5})
        reg = TrustRegistry.loads("* 0.2\ncam-01 0.9\n", threshold=0.7)
        assert (reg.weight("cam-01"), reg.weight("zzz"), reg.threshold) == (0.9, 0.2, 0.7)

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.sampled_from("abcdef"), st.floats(0, 1)), min_size=2, max_size=6), st.randoms())
    def test_permutation_invariant(self, pairs, rnd):
        weights = dict(pairs)
        evs = [ev(f"e{i}", i, source=s) for i, (s, _) in enumerate(pairs)]
        reg = TrustRegistry(weights, threshold=0.0)

        def score(order):
            names = tuple(f"b{i}" for i in range(len(order)))
            ce = ComplexEvent("T", "r", names, tuple(order), NOW, (BASE, BASE), centroid(order))
            return trust_analysis(ce, reg).trust

        shuffled = list(evs)
        rnd.shuffle(shuffled)
        assert score(evs) == score(shuffled)


def test_merge_armed_robbery(rules_by_id):
    e1, e2 = robbery()
    ce = merge(Match("armed-robbery", {"event2": e2, "event1": e1}, ("e1", "e2")), rules_by_id["armed-robbery"], NOW)
    assert ce.complex_type == "Armed Robbery"
    assert ce.constituents == (e1, e2)
    assert ce.span_ms == 10_000
    assert ce.detection_time == NOW


def test_centroid_of_identical_positions(rules_by_id):
    e1 = ev("e1", 0, 43.7, 10.4, personBehaviour="suspicious", object="gun")
    e2 = ev("e2", 1, 43.7, 10.4, audio="money")
    ce = merge(Match("armed-robbery", {"event1": e1, "event2": e2}, ("e1", "e2")), rules_by_id["armed-robbery"], NOW)
    assert (ce.centroid.lat, ce.centroid.lon) == (43.7, 10.4)


class TestProcess:
    def test_secure_event(self, rules_by_id):
        p = pipeline([rules_by_id["armed-robbery"]], {"cam-01": 0.9, "mic-01": 0.9})
        out = [se for e in robbery() for se in p.process(e)]
        assert len(out) == 1 and out[0].inner.fingerprint == ("e1", "e2")
        rec = json.loads(encode_secure_event(out[0]))
        assert rec["constituents"] == ["e1", "e2"] and rec["rule_id"] == "armed-robbery"
        p.audit()

    def test_low_trust(self, rules_by_id):
        p = pipeline([rules_by_id["armed-robbery"]], {"cam-01": 0.1, "mic-01": 0.1})
        assert [se for e in robbery() for se in p.process(e)] == []
        assert (p.counters.complex_events, p.counters.rejected_trust) == (1, 1)
        assert p.rejections[0].stage == "trust"
        p.audit()

    def test_malformed_line_isolated(self, rules_by_id):
        p = pipeline([rules_by_id["armed-robbery"]])
        e1, e2 = robbery()
        out = p.process_line(encode_event(e1))
        out += p.process_line("{broken")
        out += p.process(raw(id="bad", lat=123.0))
        out += p.process_line(encode_event(e2))
        assert len(out) == 1
        c = p.counters
        assert (c.received, c.accepted, c.rejected_syntactic) == (4, 2, 2)
        assert p.engine.ingested == 2
        p.audit()

    def test_audit_catches_drift(self, rules_by_id):
        p = pipeline([rules_by_id["armed-robbery"]])
        p.process(robbery()[0])
        p.counters.accepted += 1
        with pytest.raises(InvariantError):
            p.audit()

    def test_conservation_over_stream(self, corpus):
        p = pipeline(corpus, {"cam-01": 0.1, "mic-02": 0.9})
        e1, e2 = robbery()
        p.process(e1)
        for i, src in enumerate(itertools.islice(itertools.cycle(["cam-01", "mic-02"]), 12)):
            p.process(ev(f"w{i}", 1 + i, 43.7231, 10.3966, source=src, audio="money"))
        c = p.counters
        assert c.complex_events == 12
        assert c.complex_events == c.secure_events + c.rejected_trust
        assert c.rejected_trust == 6  # cam-01 with cam-01 scores 0.1; cam-01 with mic-02 scores 0.5
        p.audit()
