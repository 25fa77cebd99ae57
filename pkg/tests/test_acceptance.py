"""Acceptance gate: one test per criterion, each at its stated tolerance.

Run alone with ``pytest tests/test_acceptance.py -v`` (about ten minutes,
dominated by the real-time latency runs).  A PASS/FAIL line per criterion is
printed in the terminal summary.
"""

from __future__ import annotations

import random
import time

import pytest

from cepfuse.engine import CorrelationEngine, brute_force_matches
from cepfuse.events import distance_gps, encode_event, time_diff
from cepfuse.fusion import FusionPipeline, PriorityConfig, TrustRegistry
from cepfuse.generator import ADVERSARIAL, NoiseModel, ScenarioSpec, balanced_groups, generate
from cepfuse.harness import linear_fit, run_latency, run_scenario, summarize
from cepfuse.lang import RuleError, corpus, parse_rule, pretty_print, validate_rule
from cepfuse.lang.errors import RuleSemanticError

from conftest import ev
from test_events import oracle_haversine_km, random_pairs

LATENESS_MS = 10_000


@pytest.fixture()
def criterion(record_property):
    def note(name: str, detail: str) -> None:
        record_property("criterion", name)
        record_property("detail", detail)

    return note


def test_c1_corpus_parse(criterion):
    t0 = time.perf_counter()
    rules = corpus.load_corpus()
    errors = [d for r in rules for d in validate_rule(r) if d.severity == "error"]
    trips = [parse_rule(pretty_print(r), r.complex_type, r.rule_id) == r for r in rules]
    elapsed = time.perf_counter() - t0
    blocks = [b for b in corpus.corpus_text().split("\n\n") if "select" in b]
    noted = sum("# repair:" in b for b in blocks)
    criterion("1 corpus-parse", f"{len(rules)} rules, {len(errors)} errors, {sum(trips)} round-trips, {noted} with repair notes, {elapsed:.3f}s")
    assert len(rules) == 5 and not errors and all(trips)
    assert noted == len(blocks) == 5  # every rule states its repair, including "none"
    assert elapsed < 1.0


def test_c2_accuracy(criterion, corpus):
    rates, seeds = (0.0, 50.0, 200.0, 1000.0), range(10)
    groups = balanced_groups(corpus, 20)
    assert {g.rule_id for g in groups} == {r.rule_id for r in corpus}
    worst = (1.0, 1.0)
    runs = 0
    for rate in rates:
        for seed in seeds:
            spec = ScenarioSpec(60.0, groups, NoiseModel(rate), seed)
            scenario = generate(spec, corpus)
            report, _ = run_scenario(scenario, corpus, noise_rate=rate, seed=seed, lateness_ms=LATENESS_MS)
            assert report.n_expected >= 20
            worst = (min(worst[0], report.precision), min(worst[1], report.recall))
            runs += 1
            if worst != (1.0, 1.0):
                break
    criterion("2 accuracy", f"{runs} runs over rates {rates} x 10 seeds, min precision {worst[0]}, min recall {worst[1]}")
    assert worst == (1.0, 1.0)


def _permute_within(events, lateness_ms, rng):
    keyed = sorted((e.timestamp + rng.randint(0, lateness_ms), i, e) for i, e in enumerate(events))
    return [e for _, _, e in keyed]


def test_c3_oracle_equivalence(criterion, corpus):
    rng = random.Random(20240531)
    n_traces, total_matches, largest = 200, 0, 0
    for k in range(n_traces):
        duration = rng.uniform(10.0, 900.0)
        rate = rng.uniform(0.1, 450.0 / duration)
        spec = ScenarioSpec(
            duration,
            tuple(rng.choice(balanced_groups(corpus, 5)) for _ in range(rng.randint(0, 4))),
            NoiseModel(rate, vocabulary=ADVERSARIAL),
            seed=k,
        )
        trace = generate(spec, corpus).events[:500]
        largest = max(largest, len(trace))
        want = {(r.rule_id, m.fingerprint) for r in corpus for m in brute_force_matches(trace, r)}
        for _ in range(2):
            eng = CorrelationEngine(lateness_ms=LATENESS_MS)
            for r in corpus:
                eng.register_rule(r)
            got = [(m.rule_id, m.fingerprint) for e in _permute_within(trace, LATENESS_MS, rng) for m in eng.ingest(e)]
            assert len(got) == len(set(got)), f"trace {k}: duplicate emission"
            assert set(got) == want, f"trace {k}: streaming and oracle differ"
        total_matches += len(want)
    criterion("3 oracle-equivalence", f"{n_traces} traces (max {largest} events), 2 permutations each, {total_matches} oracle matches, all equal")
    assert total_matches > 0


def test_c4_latency_trend(criterion, corpus):
    rates = [0.0, 100.0, 200.0, 400.0, 800.0]
    template = ScenarioSpec(20.0, balanced_groups(corpus, 20), NoiseModel(0.0), seed=11)
    reports = run_latency(template, corpus, rates, repetitions=5, lateness_ms=LATENESS_MS)
    summary = summarize(reports)
    means = [s["mean_delay_ms"] for s in summary]
    slope, intercept, r2 = linear_fit(rates, means)
    monotone = all(b >= a for a, b in zip(means, means[1:]))
    recall = min(r.recall for r in reports)
    shown = ", ".join(f"{r:g}:{m:.3f}" for r, m in zip(rates, means))
    criterion("4 latency-trend", f"mean ms by rate {{{shown}}}, R^2 {r2:.3f}, slope {slope * 1000:.3f} us per event/s, min recall {recall}")
    assert recall == 1.0
    assert monotone, "mean delay decreases somewhere"
    assert r2 >= 0.8


def test_c5_noise_tolerance(criterion, corpus):
    out = []
    for rate in (0.0, 1000.0):
        spec = ScenarioSpec(60.0, balanced_groups(corpus, 20), NoiseModel(rate), seed=5)
        scenario = generate(spec, corpus)
        detected = []
        pipe = FusionPipeline(on_complex=lambda ce: detected.append(ce))
        pipe.register_rules(corpus)
        for e in scenario.events:
            pipe.process(e)
        manifest = set(scenario.manifest)
        fps = [ce for ce in detected if (ce.rule_id, ce.fingerprint) not in manifest]
        noisy = [ce for ce in detected if set(ce.fingerprint) & scenario.noise_ids]
        out.append((rate, len(detected), len(fps), len(noisy)))
    criterion("5 noise-tolerance", "; ".join(f"rate {r:g}: {d} detected, {f} false positives, {n} with noise" for r, d, f, n in out))
    assert all(f == 0 and n == 0 for _, _, f, n in out)
    assert out[0][1] == out[1][1] > 0


def test_c6_conservation(criterion, corpus):
    rng = random.Random(6)
    checked = []
    for seed, tau in ((1, 0.5), (2, 0.7), (3, 0.3)):
        spec = ScenarioSpec(30.0, balanced_groups(corpus, 20), NoiseModel(100.0, vocabulary=ADVERSARIAL), seed)
        scenario = generate(spec, corpus)
        weights = {f"{k}-0{i}": round(rng.random(), 2) for k in ("cam", "mic", "crowd", "social") for i in range(1, 9)}
        pipe = FusionPipeline(PriorityConfig({"knife": 3}), TrustRegistry(weights, threshold=tau))
        pipe.register_rules(corpus)
        for i, e in enumerate(scenario.events):
            line = encode_event(e)
            if i % 97 == 0:
                line = line[: len(line) // 2]  # truncated record
            pipe.process_line(line)
        pipe.audit()
        c = pipe.counters
        assert c.accepted == pipe.engine.ingested
        assert c.complex_events == c.secure_events + c.rejected_trust
        assert c.received == len(scenario.events)
        checked.append((c.accepted, c.complex_events, c.secure_events, c.rejected_trust))
    criterion("6 conservation", "; ".join(f"accepted {a}=ingested, complex {x}={s}+{t}" for a, x, s, t in checked))
    assert all(x > 0 and t > 0 and s > 0 for _, x, s, t in checked)


def test_c7_primitives(criterion):
    worst = 0.0
    for la1, lo1, la2, lo2 in random_pairs(1000, seed=77):
        a, b = ev("a", lat=la1, lon=lo1), ev("b", lat=la2, lon=lo2)
        want = oracle_haversine_km(la1, lo1, la2, lo2)
        got = distance_gps(a, b)
        worst = max(worst, abs(got - want) / want if want else abs(got))
    rng = random.Random(78)
    exact = True
    for _ in range(1000):
        a, b = ev("a", rng.uniform(0, 10**6)), ev("b", rng.uniform(0, 10**6))
        exact &= time_diff(a, b) == time_diff(b, a) == abs(a.timestamp - b.timestamp) / 1000
    criterion("7 geo-time", f"max relative haversine error {worst:.2e} over 1000 pairs, time_diff symmetric and exact: {exact}")
    assert worst <= 1e-9 and exact


def test_c8_parser_fuzz(criterion):
    rng = random.Random(8)
    seeds = [r.source_text for r in corpus.load_corpus()]
    budget, t0 = 60.0, time.perf_counter()
    n = parsed = 0
    while time.perf_counter() - t0 < budget:
        mode = n % 3
        if mode == 0:
            data = bytes(rng.getrandbits(8) for _ in range(rng.randint(0, 200)))
        else:
            b = bytearray(rng.choice(seeds).encode())
            for _ in range(rng.randint(1, 6)):
                i = rng.randrange(len(b) + 1)
                op = rng.random()
                if op < 0.4 and b:
                    del b[i : i + rng.randint(1, 8)]
                elif op < 0.7:
                    b[i:i] = bytes(rng.getrandbits(8) for _ in range(rng.randint(1, 4)))
                else:
                    b[i:i] = rng.choice(seeds).encode()[rng.randrange(50) :][: rng.randint(1, 30)]
            data = bytes(b)
        text = data.decode("latin-1")
        n += 1
        try:
            parse_rule(text, "Fuzz")
            parsed += 1
        except RuleSemanticError as exc:
            assert exc.diagnostics and all(isinstance(d.pos, int) for d in exc.diagnostics), text
        except RuleError as exc:
            assert isinstance(exc.pos, int) and 0 <= exc.pos <= len(text), text
    criterion("8 parser-fuzz", f"{n} inputs in {budget:.0f}s, {parsed} parsed, the rest positioned diagnostics, no crashes")
    assert n > 1000


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
