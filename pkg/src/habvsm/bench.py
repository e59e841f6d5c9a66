"""Synthetic isolation throughput benchmark at flight-model scale.

Builds a deterministic D-matrix of the requested size, drives it with
frames that mix nominal values and injected fault signatures, and measures
the per-frame cost of test evaluation plus isolation.
"""

from __future__ import annotations

import time

import numpy as np

from .isolation import DMatrix, ModeDef, TestDef, Verdict
from .simulation import SensorFrame


def synthetic_dmatrix(n_modes: int, n_tests: int) -> DMatrix:
    """Each mode is covered by 1-4 tests chosen by a fixed stride pattern."""
    modes = [ModeDef(f"m{i:05d}") for i in range(n_modes)]
    covers: list[set[str]] = [set() for _ in range(n_tests)]
    for mi in range(n_modes):
        n_cov = 1 + (mi % 4)
        for k in range(n_cov):
            ti = (mi * 7 + k * 131) % n_tests
            covers[ti].add(f"m{mi:05d}")
    tests = []
    for ti in range(n_tests):
        cov = covers[ti] or {f"m{ti % n_modes:05d}"}
        tests.append(TestDef(f"t{ti:05d}", f"p{ti:05d}", -1.0, 1.0, frozenset(cov)))
    return DMatrix(modes, tests)


def run_isolation_bench(n_modes: int, n_tests: int, n_frames: int) -> dict:
    dmatrix = synthetic_dmatrix(n_modes, n_tests)
    rng = np.random.default_rng(7)
    params = [t.parameter for t in dmatrix.tests]
    timings = []
    verdicts = {v: 0 for v in Verdict}
    for fi in range(n_frames):
        values = dict(zip(params, rng.uniform(-0.9, 0.9, size=n_tests)))
        if fi % 3 == 1:  # single-fault signature
            mode = dmatrix.mode_ids[(fi * 37) % n_modes]
            for t in dmatrix.tests:
                if mode in t.covers:
                    values[t.parameter] = 2.0
        elif fi % 3 == 2:  # double fault
            for mode in (dmatrix.mode_ids[(fi * 37) % n_modes],
                         dmatrix.mode_ids[(fi * 101 + 13) % n_modes]):
                for t in dmatrix.tests:
                    if mode in t.covers:
                        values[t.parameter] = 2.0
        frame = SensorFrame(fi, float(fi), values, {p: False for p in params})
        t0 = time.perf_counter()
        results = dmatrix.evaluate_tests(frame)
        isolation = dmatrix.isolate(results)
        if isolation.verdict == Verdict.INCONSISTENT:
            dmatrix.isolate_multi(results, max_cardinality=2)
        timings.append((time.perf_counter() - t0) * 1e3)
        verdicts[isolation.verdict] += 1
    timings.sort()
    return {
        "mean_ms": sum(timings) / len(timings),
        "p99_ms": timings[min(len(timings) - 1, int(0.99 * len(timings)))],
        "max_ms": timings[-1],
        "verdicts": {v.value: n for v, n in verdicts.items()},
    }
