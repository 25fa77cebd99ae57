"""Compiled versus pure-Python kernels.

Times the candidate scan in isolation and an end-to-end ingest of an
adversarial stream through the correlation engine with each backend.

    python3 benchmarks/bench_kernels.py [--events N] [--repeat R]
"""

from __future__ import annotations

import argparse
import random
import time
import timeit
from array import array

from cepfuse import kernels
from cepfuse.engine import CorrelationEngine
from cepfuse.generator import ADVERSARIAL, NoiseModel, ScenarioSpec, balanced_groups, generate
from cepfuse.lang import load_corpus


def scan_case(n: int, seed: int = 0):
    rng = random.Random(seed)
    ts = array("q", sorted(rng.randint(0, 3_600_000) for _ in range(n)))
    lat = array("d", (43.72 + rng.uniform(-0.004, 0.004) for _ in range(n)))
    lon = array("d", (10.396 + rng.uniform(-0.005, 0.005) for _ in range(n)))
    return (ts, lat, lon, 0, n, 1_800_000, 43.72, 10.396, 30.0, 0.1, 1000.0, 1.0)


def time_scan(backend, args, repeat: int) -> float:
    t = timeit.Timer(lambda: backend.scan(*args))
    loops, _ = t.autorange()
    return min(t.repeat(repeat, loops)) / loops


def time_ingest(backend, events, rules, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        eng = CorrelationEngine(kernels=backend)
        for r in rules:
            eng.register_rule(r)
        t0 = time.perf_counter()
        for e in events:
            eng.ingest(e)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--events", type=int, default=10_000, help="stream length for the ingest benchmark")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.insert(0, ("cython", kernels.compiled_backend))
    else:
        print("compiled kernels not built; timing the Python fallback only")

    print(f"{'case':<28}" + "".join(f"{name:>14}" for name, _ in backends) + ("   speedup" if len(backends) > 1 else ""))
    for n in (100, 1_000, 10_000):
        case = scan_case(n)
        results = [kernels.python_backend.scan(*case) == b.scan(*case) for _, b in backends]
        assert all(results), "backends disagree"
        ts = [time_scan(b, case, args.repeat) for _, b in backends]
        row = f"{'scan, ' + str(n) + ' buffered':<28}" + "".join(f"{t * 1e6:>11.1f} us" for t in ts)
        if len(ts) > 1:
            row += f"   {ts[1] / ts[0]:>6.1f}x"
        print(row)

    rules = load_corpus()
    duration = 120.0
    spec = ScenarioSpec(duration, balanced_groups(rules, 20), NoiseModel(args.events / duration, vocabulary=ADVERSARIAL), seed=1)
    events = generate(spec, rules).events
    ts = [time_ingest(b, events, rules, max(1, args.repeat // 2)) for _, b in backends]
    row = f"{'ingest, ' + str(len(events)) + ' events':<28}" + "".join(f"{t * 1e3:>11.1f} ms" for t in ts)
    if len(ts) > 1:
        row += f"   {ts[1] / ts[0]:>6.1f}x"
    print(row)
    print("per-event ingest: " + ", ".join(f"{name} {t / len(events) * 1e6:.1f} us" for (name, _), t in zip(backends, ts)))


if __name__ == "__main__":
    main()
