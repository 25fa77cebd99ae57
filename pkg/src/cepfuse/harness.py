"""Accuracy and latency experiments over generated scenarios.

Latency is the monotonic-clock time from the arrival of the last constituent
micro-event at the pipeline to the emission of the complex event.  In paced
runs a pacer thread releases events on their event-time schedule in ticks and
a consumer thread drives the pipeline; time spent queued counts as delay.
"""

from __future__ import annotations

import csv
import gc
import logging
import math
import queue
import statistics
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .engine import DEFAULT_LATENESS_MS, Fingerprint
from .events import DEFAULT_UNITS, ComplexEvent, MicroEvent, Units
from .fusion import FusionPipeline, PriorityConfig, TrustRegistry
from .generator import Scenario, ScenarioSpec, generate
from .lang.ast import Rule

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("noise_rate", "mean_delay_ms", "p99_delay_ms", "recall")
DEFAULT_TICK_MS = 10.0
OVERRUN_MS = 100.0


@dataclass(frozen=True)
class LatencySample:
    rule_id: str
    fingerprint: Fingerprint
    delay_ms: float


@dataclass
class RunReport:
    noise_rate: float
    n_expected: int
    n_detected: int
    n_false_positive: int
    precision: float
    recall: float
    mean_delay_ms: float
    p99_delay_ms: float
    throughput: float
    n_events: int = 0
    n_secure: int = 0
    n_trust_rejected: int = 0
    n_syntactic_rejected: int = 0
    seed: int | None = None
    paced: bool = False
    pacing_overrun: bool = False
    max_pacing_lag_ms: float = 0.0
    missed: list = field(default_factory=list)
    false_positives: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["missed"] = [[r, list(fp)] for r, fp in self.missed]
        d["false_positives"] = [[r, list(fp)] for r, fp in self.false_positives]
        return d


def p99(values: Sequence[float]) -> float:
    """99th percentile with linear interpolation between order statistics."""
    if not values:
        return math.nan
    xs = sorted(values)
    pos = 0.99 * (len(xs) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


def score(detected: Iterable[tuple[str, Fingerprint]], expected: Iterable[tuple[str, Fingerprint]]):
    """(n_detected, n_false_positive, precision, recall, missed, false_positives).

    Empty denominators score 1.0.
    """
    det, exp = set(detected), set(expected)
    tp = len(det & exp)
    fps = sorted(det - exp)
    missed = sorted(exp - det)
    precision = tp / len(det) if det else 1.0
    recall = tp / len(exp) if exp else 1.0
    return len(det), len(fps), precision, recall, missed, fps


def _make_pipeline(rules, trust, priorities, lateness_ms, units, on_complex) -> FusionPipeline:
    pipe = FusionPipeline(
        priorities or PriorityConfig(),
        trust or TrustRegistry(),
        lateness_ms=lateness_ms,
        units=units,
        on_complex=on_complex,
    )
    pipe.register_rules(rules)
    return pipe


def _report(scenario, noise_rate, detected, delays, pipe, elapsed_s, seed, **extra) -> RunReport:
    n_det, n_fp, precision, recall, missed, fps = score(detected, scenario.manifest)
    c = pipe.counters
    return RunReport(
        noise_rate=noise_rate,
        n_expected=len(set(scenario.manifest)),
        n_detected=n_det,
        n_false_positive=n_fp,
        precision=precision,
        recall=recall,
        mean_delay_ms=statistics.fmean(delays) if delays else math.nan,
        p99_delay_ms=p99(delays),
        throughput=len(scenario.events) / elapsed_s if elapsed_s > 0 else math.inf,
        n_events=len(scenario.events),
        n_secure=c.secure_events,
        n_trust_rejected=c.rejected_trust,
        n_syntactic_rejected=c.rejected_syntactic,
        seed=seed,
        missed=missed,
        false_positives=fps,
        **extra,
    )


def run_scenario(
    scenario: Scenario,
    rules: Sequence[Rule],
    trust: TrustRegistry | None = None,
    priorities: PriorityConfig | None = None,
    *,
    noise_rate: float = math.nan,
    seed: int | None = None,
    lateness_ms: int = DEFAULT_LATENESS_MS,
    units: Units = DEFAULT_UNITS,
    events: Sequence[MicroEvent] | None = None,
) -> tuple[RunReport, FusionPipeline]:
    """Push a scenario through a fresh pipeline as fast as possible.

    ``events`` overrides the arrival order (e.g. a permuted stream).
    """
    detected: list[tuple[str, Fingerprint]] = []
    delays: list[float] = []
    clock = time.perf_counter_ns
    arrived = [0]

    def on_complex(ce: ComplexEvent) -> None:
        detected.append((ce.rule_id, ce.fingerprint))
        delays.append((clock() - arrived[0]) / 1e6)

    pipe = _make_pipeline(rules, trust, priorities, lateness_ms, units, on_complex)
    stream = scenario.events if events is None else events
    t0 = clock()
    for e in stream:
        arrived[0] = clock()
        pipe.process(e)
    elapsed = (clock() - t0) / 1e9
    pipe.audit()
    return _report(scenario, noise_rate, detected, delays, pipe, elapsed, seed), pipe


def run_accuracy(
    spec: ScenarioSpec,
    rules: Sequence[Rule],
    trust: TrustRegistry | None = None,
    priorities: PriorityConfig | None = None,
    *,
    lateness_ms: int = DEFAULT_LATENESS_MS,
    units: Units = DEFAULT_UNITS,
) -> RunReport:
    scenario = generate(spec, rules, units)
    report, _ = run_scenario(
        scenario, rules, trust, priorities,
        noise_rate=spec.noise.rate, seed=spec.seed, lateness_ms=lateness_ms, units=units,
    )
    return report


def _pace(events, q, arrival, tick_ms, clock, start) -> int:
    """Release ``events`` into ``q`` on their event-time schedule; returns the worst tick lag in ns."""
    tick_ns = int(tick_ms * 1e6)
    t_first = events[0].timestamp if events else 0
    offsets = [(e.timestamp - t_first) * 1_000_000 for e in events]
    max_lag_ns = 0
    i, n = 0, len(events)
    next_tick = start
    while i < n:
        now = clock()
        if now < next_tick:
            time.sleep((next_tick - now) / 1e9)
            now = clock()
        max_lag_ns = max(max_lag_ns, now - next_tick)
        horizon = now - start
        j = i
        while j < n and offsets[j] <= horizon:
            j += 1
        if j > i:
            batch = events[i:j]
            stamp = clock()
            for e in batch:
                arrival[e.id] = stamp
            q.put(batch)
            i = j
        next_tick += tick_ns
        if i < n and start + offsets[i] > next_tick:
            # skip empty ticks; the next release is on the tick grid after the event is due
            next_tick += -(-(start + offsets[i] - next_tick) // tick_ns) * tick_ns
    return max_lag_ns


def run_paced(
    scenario: Scenario,
    rules: Sequence[Rule],
    trust: TrustRegistry | None = None,
    priorities: PriorityConfig | None = None,
    *,
    noise_rate: float = math.nan,
    seed: int | None = None,
    tick_ms: float = DEFAULT_TICK_MS,
    queue_size: int = 10_000,
    lateness_ms: int = DEFAULT_LATENESS_MS,
    units: Units = DEFAULT_UNITS,
) -> RunReport:
    """Replay a scenario in real time and measure arrival-to-emission delay.

    Objects alive before the replay (the generated scenario) are frozen out
    of the cyclic collector so its full passes do not rescan them; garbage
    produced while processing is still collected as usual.
    """
    clock = time.perf_counter_ns
    arrival: dict[str, int] = {}
    detected: list[tuple[str, Fingerprint]] = []
    delays: list[float] = []

    def on_complex(ce: ComplexEvent) -> None:
        now = clock()
        detected.append((ce.rule_id, ce.fingerprint))
        delays.append((now - max(arrival[e.id] for e in ce.constituents)) / 1e6)

    pipe = _make_pipeline(rules, trust, priorities, lateness_ms, units, on_complex)
    events = scenario.events
    q: queue.Queue = queue.Queue(maxsize=queue_size)
    failure: list[BaseException] = []

    def consume() -> None:
        try:
            while True:
                batch = q.get()
                if batch is None:
                    return
                for e in batch:
                    pipe.process(e)
        except BaseException as exc:  # surfaced to the caller below
            failure.append(exc)
            while q.get() is not None:
                pass

    gc.collect()
    gc.freeze()
    try:
        consumer = threading.Thread(target=consume, name="epm-consumer", daemon=True)
        consumer.start()
        start = clock()
        max_lag_ns = _pace(events, q, arrival, tick_ms, clock, start)
        q.put(None)
        consumer.join()
        elapsed = (clock() - start) / 1e9
    finally:
        gc.unfreeze()
    if failure:
        raise failure[0]
    pipe.audit()
    max_lag_ms = max_lag_ns / 1e6
    return _report(
        scenario, noise_rate, detected, delays, pipe, elapsed, seed,
        paced=True, pacing_overrun=max_lag_ms > OVERRUN_MS, max_pacing_lag_ms=max_lag_ms,
    )


def run_latency(
    template: ScenarioSpec,
    rules: Sequence[Rule],
    noise_rates: Sequence[float],
    repetitions: int = 5,
    trust: TrustRegistry | None = None,
    priorities: PriorityConfig | None = None,
    *,
    tick_ms: float = DEFAULT_TICK_MS,
    lateness_ms: int = DEFAULT_LATENESS_MS,
    units: Units = DEFAULT_UNITS,
    warmup_s: float = 5.0,
    progress=None,
) -> list[RunReport]:
    """One paced run per (rate, repetition); repetition ``r`` uses seed ``template.seed + r``.

    Rates are visited round-robin within each repetition so slow drift in
    the host does not line up with the rate.  A short unrecorded run at the
    highest rate warms the process first (skipped when ``warmup_s`` is 0).
    Reports come back ordered by rate, then repetition.
    """
    if not noise_rates:
        raise ValueError("noise_rates must be non-empty")
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    if warmup_s > 0:
        warm = ScenarioSpec(warmup_s, template.groups, template.noise, template.seed, template.base_time_ms)
        warm = warm.with_noise_rate(max(noise_rates))
        run_paced(generate(warm, rules, units), rules, trust, priorities, tick_ms=tick_ms, lateness_ms=lateness_ms, units=units)
    runs: dict[tuple[int, int], RunReport] = {}
    for rep in range(repetitions):
        for k, rate in enumerate(noise_rates):
            spec = template.with_noise_rate(rate, seed=template.seed + rep)
            scenario = generate(spec, rules, units)
            report = run_paced(
                scenario, rules, trust, priorities,
                noise_rate=rate, seed=spec.seed, tick_ms=tick_ms, lateness_ms=lateness_ms, units=units,
            )
            if report.pacing_overrun:
                logger.warning("pacing overrun at rate %s rep %d: lag %.1f ms", rate, rep, report.max_pacing_lag_ms)
            if progress is not None:
                progress(report)
            runs[k, rep] = report
    return [runs[key] for key in sorted(runs)]


def write_csv(reports: Iterable[RunReport], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([f"{r.noise_rate:g}", f"{r.mean_delay_ms:.6f}", f"{r.p99_delay_ms:.6f}", f"{r.recall:.6f}"])


def summarize(reports: Sequence[RunReport]) -> list[dict]:
    """Per-rate mean and sample standard deviation of the run mean delays."""
    by_rate: dict[float, list[RunReport]] = {}
    for r in reports:
        by_rate.setdefault(r.noise_rate, []).append(r)
    out = []
    for rate, rs in by_rate.items():
        means = [r.mean_delay_ms for r in rs]
        out.append(
            {
                "noise_rate": rate,
                "runs": len(rs),
                "mean_delay_ms": statistics.fmean(means),
                "std_delay_ms": statistics.stdev(means) if len(means) > 1 else 0.0,
                "min_recall": min(r.recall for r in rs),
                "overruns": sum(r.pacing_overrun for r in rs),
            }
        )
    return out


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares (slope, intercept, r_squared)."""
    n = len(xs)
    mx, my = math.fsum(xs) / n, math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    syy = math.fsum((y - my) ** 2 for y in ys)
    slope = sxy / sxx if sxx else 0.0
    intercept = my - slope * mx
    r2 = 1.0 - math.fsum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys)) / syy if syy else 1.0
    return slope, intercept, r2
