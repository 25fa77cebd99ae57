"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 input error, 3 invariant failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import kernels
from .engine import InvariantError, brute_force_matches
from .events import WireFormatError, parse_record, record_to_event
from .fusion import FusionPipeline, PriorityConfig, TrustRegistry, encode_secure_event
from .generator import (
    NoiseModel,
    ScenarioError,
    ScenarioSpec,
    balanced_groups,
    dumps_manifest,
    format_fingerprint,
    generate,
    load_spec,
    loads_manifest,
)
from .harness import linear_fit, run_accuracy, run_latency, score, summarize, write_csv
from .lang.analysis import validate_rule
from .lang.corpus import RuleFileError, load_corpus, load_rules

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("cepfuse")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _rules(path: str | None):
    if path is None:
        return load_corpus()
    try:
        return load_rules(path)
    except OSError as exc:
        raise InputError(f"cannot read rules: {exc}") from None
    except RuleFileError as exc:
        raise InputError(f"{path}: {exc}") from None


def _read(path: str) -> str:
    try:
        return sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _trust(args) -> TrustRegistry:
    try:
        if args.trust:
            return TrustRegistry.loads(_read(args.trust), threshold=args.tau)
        return TrustRegistry(threshold=args.tau)
    except ValueError as exc:
        raise InputError(f"trust config: {exc}") from None


def _priorities(args) -> PriorityConfig:
    try:
        return PriorityConfig.loads(_read(args.priorities)) if args.priorities else PriorityConfig()
    except ValueError as exc:
        raise InputError(f"priority config: {exc}") from None


def cmd_check(args) -> int:
    rules = _rules(args.ruleset)
    failed = False
    for r in rules:
        diags = validate_rule(r)
        status = "ok" if not any(d.severity == "error" for d in diags) else "FAIL"
        failed |= status == "FAIL"
        print(f"{r.rule_id}: {status} ({len(r.bindings)} bindings, window {r.window_minutes} min)")
        for d in diags:
            print(f"  {d}")
    print(f"{len(rules)} rule(s) checked")
    return EXIT_INPUT if failed else EXIT_OK


def cmd_gen(args) -> int:
    try:
        spec, rules = load_spec(args.spec)
    except (OSError, RuleFileError) as exc:
        raise InputError(str(exc)) from None
    if args.rules:
        rules = _rules(args.rules)
    if args.seed is not None:
        spec = ScenarioSpec(spec.duration, spec.groups, spec.noise, args.seed, spec.base_time_ms)
    scenario = generate(spec, rules)
    _write(args.output, "".join(line + "\n" for line in scenario.stream_lines()))
    if args.manifest:
        _write(args.manifest, dumps_manifest(scenario.manifest))
    log.info("generated %d events, %d expected matches", len(scenario.events), len(scenario.manifest))
    return EXIT_OK


def cmd_run(args) -> int:
    rules = _rules(args.rules)
    detected: list = []
    pipe = FusionPipeline(
        _priorities(args),
        _trust(args),
        lateness_ms=int(args.lateness * 1000),
        on_complex=lambda ce: detected.append((ce.rule_id, ce.fingerprint)),
    )
    pipe.register_rules(rules)
    secure_lines = []
    for line in _read(args.stream).splitlines():
        if line.strip():
            secure_lines.extend(encode_secure_event(se) for se in pipe.process_line(line))
    pipe.audit()
    c = pipe.counters
    report = {
        "events": c.received,
        "accepted": c.accepted,
        "rejected_syntactic": c.rejected_syntactic,
        "engine_ingested": pipe.engine.ingested,
        "dropped_late": pipe.engine.dropped_late,
        "complex_events": c.complex_events,
        "secure_events": c.secure_events,
        "rejected_trust": c.rejected_trust,
        "rejections": [vars(r) for r in pipe.rejections],
    }
    if args.manifest:
        try:
            expected = loads_manifest(_read(args.manifest))
        except ScenarioError as exc:
            raise InputError(str(exc)) from None
        n_det, n_fp, precision, recall, missed, fps = score(detected, expected)
        report.update(
            n_expected=len(set(expected)), n_detected=n_det, n_false_positive=n_fp,
            precision=precision, recall=recall,
            missed=[format_fingerprint(*m) for m in missed],
            false_positives=[format_fingerprint(*f) for f in fps],
        )
    _write(args.output, json.dumps(report, indent=2) + "\n")
    if args.fingerprints:
        _write(args.fingerprints, dumps_manifest(detected))
    if args.secure_out:
        _write(args.secure_out, "".join(s + "\n" for s in secure_lines))
    return EXIT_OK


def cmd_oracle(args) -> int:
    rules = _rules(args.rules)
    events = []
    for no, line in enumerate(_read(args.stream).splitlines(), 1):
        if not line.strip():
            continue
        try:
            events.append(record_to_event(parse_record(line)))
        except (WireFormatError, ValueError) as exc:
            log.warning("line %d skipped: %s", no, exc)
    found = [(r.rule_id, m.fingerprint) for r in rules for m in brute_force_matches(events, r)]
    _write(args.output, dumps_manifest(found))
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        rates = [float(x) for x in args.rates.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"bad --rates {args.rates!r}") from None
    if not rates or any(r < 0 for r in rates):
        raise InputError("--rates needs one or more non-negative numbers")
    if args.spec:
        try:
            template, rules = load_spec(args.spec)
        except (OSError, RuleFileError) as exc:
            raise InputError(str(exc)) from None
    else:
        rules = load_corpus()
        template = ScenarioSpec(args.duration, balanced_groups(rules, args.groups), NoiseModel(0.0))
    if args.rules:
        rules = _rules(args.rules)
    if args.seed is not None:
        template = ScenarioSpec(template.duration, template.groups, template.noise, args.seed, template.base_time_ms)

    def progress(r):
        flag = " OVERRUN" if r.pacing_overrun else ""
        print(
            f"rate={r.noise_rate:g} seed={r.seed} mean={r.mean_delay_ms:.3f}ms "
            f"p99={r.p99_delay_ms:.3f}ms recall={r.recall:.3f}{flag}",
            file=sys.stderr,
        )

    trust, priorities, lateness_ms = _trust(args), _priorities(args), int(args.lateness * 1000)
    if args.max_speed:
        reports = []
        for rate in rates:
            for rep in range(args.reps):
                spec = template.with_noise_rate(rate, seed=template.seed + rep)
                reports.append(run_accuracy(spec, rules, trust, priorities, lateness_ms=lateness_ms))
                progress(reports[-1])
    else:
        reports = run_latency(
            template, rules, rates, args.reps, trust, priorities,
            tick_ms=args.tick_ms, lateness_ms=lateness_ms, progress=progress,
        )
    if args.output in (None, "-"):
        write_csv(reports, sys.stdout)
    else:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            write_csv(reports, fh)
    summary = summarize(reports)
    for s in summary:
        print(
            f"rate={s['noise_rate']:g}: mean {s['mean_delay_ms']:.3f} ms "
            f"(sd {s['std_delay_ms']:.3f}, {s['runs']} runs), min recall {s['min_recall']:.3f}",
            file=sys.stderr,
        )
    if len(summary) > 1:
        slope, intercept, r2 = linear_fit([s["noise_rate"] for s in summary], [s["mean_delay_ms"] for s in summary])
        print(f"linear fit: {slope * 1000:.4f} us per event/s, intercept {intercept:.3f} ms, R^2 {r2:.3f}", file=sys.stderr)
    if args.summary:
        _write(args.summary, json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cepfuse", description="Complex event processing over crowd-sourced micro-events.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--lateness", type=float, default=10.0, help="out-of-order tolerance in seconds (default 10)")
        sp.add_argument("--tau", type=float, default=0.5, help="trust acceptance threshold (default 0.5)")

    sp = sub.add_parser("check", help="parse and validate a rule file")
    sp.add_argument("ruleset")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("gen", help="generate a scenario stream and its manifest")
    sp.add_argument("spec")
    sp.add_argument("-o", "--output", required=True, help="stream file ('-' for stdout)")
    sp.add_argument("-m", "--manifest", help="expected-match manifest file")
    sp.add_argument("--rules", help="rule file (default: the scenario's rules)")
    common(sp)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("run", help="run a stream through the fusion pipeline")
    sp.add_argument("stream")
    sp.add_argument("--rules", help="rule file (default: bundled corpus)")
    sp.add_argument("--trust", help="trust registry file")
    sp.add_argument("--priorities", help="keyword priority file")
    sp.add_argument("-o", "--output", help="JSON report (default stdout)")
    sp.add_argument("-m", "--manifest", help="score detections against this manifest")
    sp.add_argument("--fingerprints", help="write detected fingerprints, sorted")
    sp.add_argument("--secure-out", help="write secure events, one JSON line each")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("oracle", help="brute-force ground-truth fingerprints for a stream")
    sp.add_argument("stream")
    sp.add_argument("--rules", help="rule file (default: bundled corpus)")
    sp.add_argument("-o", "--output", help="output file (default stdout)")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("bench", help="paced latency runs over noise rates; writes CSV")
    sp.add_argument("--rates", required=True, help="comma-separated noise rates (events/s)")
    sp.add_argument("--reps", type=int, default=5)
    sp.add_argument("-o", "--output", help="CSV file (default stdout)")
    sp.add_argument("--spec", help="scenario file used as the template")
    sp.add_argument("--rules", help="rule file")
    sp.add_argument("--trust", help="trust registry file")
    sp.add_argument("--priorities", help="keyword priority file")
    sp.add_argument("--duration", type=float, default=20.0, help="seconds per run (default 20)")
    sp.add_argument("--groups", type=int, default=20, help="planted groups per run (default 20)")
    sp.add_argument("--tick-ms", type=float, default=10.0, help="pacer release tick (default 10 ms)")
    sp.add_argument("--summary", help="write per-rate summary JSON")
    sp.add_argument("--max-speed", action="store_true", help="skip real-time pacing (accuracy only; delays are not arrival-based)")
    common(sp)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    log.debug("kernel backend: %s", kernels.BACKEND)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"cepfuse: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ScenarioError as exc:
        print(f"cepfuse: scenario: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantError as exc:
        print(f"cepfuse: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
