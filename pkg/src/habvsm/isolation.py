"""Limit-test evaluation and dependency-matrix fault isolation.

Tests are closed-interval bounds on single telemetry parameters. Each test
covers the set of failure modes it can implicate. Isolation under the
single-fault assumption intersects the covers of failed tests and removes
everything exonerated by passing tests; when that comes up empty, a minimal
hitting-set search produces multi-fault diagnoses. Unknown test outcomes
constrain nothing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .simulation import SensorFrame

PASS = "PASS"
FAIL = "FAIL"
UNKNOWN_OUTCOME = "UNKNOWN"


class IsolationError(Exception):
    pass


class Verdict(Enum):
    NO_FAULT = "NO_FAULT"
    INCONSISTENT = "INCONSISTENT"
    GROUP = "GROUP"


@dataclass(frozen=True)
class TestDef:
    id: str
    parameter: str
    lo: float
    hi: float
    covers: frozenset[str]

    def __post_init__(self):
        if self.lo > self.hi:
            raise IsolationError(f"test {self.id}: lo > hi")
        if not self.covers:
            raise IsolationError(f"test {self.id}: covers must be non-empty")


@dataclass(frozen=True)
class TestResults:
    outcomes: dict[str, str]  # test id -> PASS|FAIL|UNKNOWN

    def failed(self) -> list[str]:
        return [t for t, o in self.outcomes.items() if o == FAIL]

    def passed(self) -> list[str]:
        return [t for t, o in self.outcomes.items() if o == PASS]


@dataclass(frozen=True)
class AmbiguityGroup:
    modes: frozenset[str]

    @property
    def exact(self) -> bool:
        return len(self.modes) == 1


@dataclass(frozen=True)
class IsolationResult:
    verdict: Verdict
    group: AmbiguityGroup | None = None


@dataclass(frozen=True)
class ModeDef:
    id: str
    metadata: dict = field(default_factory=dict, hash=False, compare=False)


class DMatrix:
    """Boolean incidence between tests and the failure modes they implicate."""

    def __init__(self, modes: list[ModeDef], tests: list[TestDef]):
        self.modes = list(modes)
        self.tests = list(tests)
        self.mode_ids = [m.id for m in modes]
        self.test_ids = [t.id for t in tests]
        if len(set(self.mode_ids)) != len(self.mode_ids):
            raise IsolationError("duplicate mode ids")
        if len(set(self.test_ids)) != len(self.test_ids):
            raise IsolationError("duplicate test ids")
        self._mode_index = {m: i for i, m in enumerate(self.mode_ids)}
        self._test_index = {t: i for i, t in enumerate(self.test_ids)}
        known = set(self.mode_ids)
        self.matrix = np.zeros((len(tests), len(modes)), dtype=bool)
        for ti, test in enumerate(tests):
            for mode in test.covers:
                if mode not in known:
                    raise IsolationError(f"test {test.id} covers unknown mode {mode!r}")
                self.matrix[ti, self._mode_index[mode]] = True
        covered = self.matrix.any(axis=0)
        self.undetectable = frozenset(
            m for i, m in enumerate(self.mode_ids) if not covered[i]
        )
        self._lo = np.array([t.lo for t in tests])
        self._hi = np.array([t.hi for t in tests])
        self._params = [t.parameter for t in tests]

    def metadata(self, mode_id: str) -> dict:
        return self.modes[self._mode_index[mode_id]].metadata

    def covers(self, test_id: str) -> frozenset[str]:
        return self.tests[self._test_index[test_id]].covers

    # -- operations -------------------------------------------------------

    def evaluate_tests(self, frame: SensorFrame) -> TestResults:
        """PASS iff value within closed bounds, FAIL outside, UNKNOWN if stale."""
        outcomes: dict[str, str] = {}
        values = frame.values
        stale = frame.staleness
        for i, test in enumerate(self.tests):
            param = self._params[i]
            if param not in values:
                outcomes[test.id] = UNKNOWN_OUTCOME
                continue
            if stale.get(param, False):
                outcomes[test.id] = UNKNOWN_OUTCOME
                continue
            v = values[param]
            outcomes[test.id] = PASS if self._lo[i] <= v <= self._hi[i] else FAIL
        return TestResults(outcomes)

    def missing_parameters(self, frame: SensorFrame) -> list[str]:
        """Configuration warning: tests referencing parameters absent from the frame."""
        return sorted({p for p in self._params if p not in frame.values})

    def isolate(self, results: TestResults) -> IsolationResult:
        fail_rows = [self._test_index[t] for t in results.failed()]
        pass_rows = [self._test_index[t] for t in results.passed()]
        if not fail_rows:
            return IsolationResult(Verdict.NO_FAULT)
        implicated = self.matrix[fail_rows].all(axis=0)
        if pass_rows:
            exonerated = self.matrix[pass_rows].any(axis=0)
            candidates = implicated & ~exonerated
        else:
            candidates = implicated
        idx = np.flatnonzero(candidates)
        if idx.size == 0:
            return IsolationResult(Verdict.INCONSISTENT)
        group = AmbiguityGroup(frozenset(self.mode_ids[i] for i in idx))
        return IsolationResult(Verdict.GROUP, group)

    def isolate_multi(self, results: TestResults, max_cardinality: int = 3) -> list[frozenset[str]]:
        """All minimum-cardinality hitting sets of the residual fail covers.

        Exonerated modes (covered by any passing test) are removed from every
        fail set first. An empty return means no diagnosis exists within the
        cardinality bound, which indicates a model/test conflict.
        """
        exonerated: set[str] = set()
        for t in results.passed():
            exonerated |= self.covers(t)
        residuals: list[frozenset[str]] = []
        for t in results.failed():
            residual = frozenset(self.covers(t) - exonerated)
            if not residual:
                return []  # a failed test with every cover exonerated is unexplainable
            residuals.append(residual)
        if not residuals:
            return []
        universe = sorted(set().union(*residuals))
        for k in range(1, max_cardinality + 1):
            hits = [
                frozenset(combo)
                for combo in itertools.combinations(universe, k)
                if all(set(combo) & r for r in residuals)
            ]
            if hits:
                return hits
        return []

    def signature(self, mode_id: str) -> TestResults:
        """Expected outcomes under the single-fault, perfect-test idealization."""
        if mode_id not in self._mode_index:
            raise IsolationError(f"unknown mode {mode_id!r}")
        col = self.matrix[:, self._mode_index[mode_id]]
        return TestResults(
            {t.id: (FAIL if col[i] else PASS) for i, t in enumerate(self.tests)}
        )


class DebouncedDetector:
    """Requires K consecutive FAIL frames before a test outcome is confirmed.

    Unconfirmed FAILs are reported as UNKNOWN so they neither implicate nor
    exonerate; a raw PASS resets the streak, a raw UNKNOWN freezes it.
    """

    def __init__(self, dmatrix: DMatrix, debounce_frames: int = 3):
        if debounce_frames < 1:
            raise IsolationError("debounce_frames must be >= 1")
        self.dmatrix = dmatrix
        self.k = debounce_frames
        self._streak: dict[str, int] = {t: 0 for t in dmatrix.test_ids}

    def update(self, frame: SensorFrame) -> tuple[TestResults, TestResults]:
        """Returns (raw, confirmed) results for this frame."""
        raw = self.dmatrix.evaluate_tests(frame)
        confirmed: dict[str, str] = {}
        for test_id, outcome in raw.outcomes.items():
            if outcome == FAIL:
                self._streak[test_id] += 1
            elif outcome == PASS:
                self._streak[test_id] = 0
            if outcome == FAIL and self._streak[test_id] < self.k:
                confirmed[test_id] = UNKNOWN_OUTCOME
            else:
                confirmed[test_id] = outcome
        return raw, TestResults(confirmed)


# -- model file parsing -----------------------------------------------------
#
# [modes] lines: mode_id [key=value ...]
# [tests] lines: id, parameter, lo, hi, covers=m1|m2|...
# A [graph] section, if present, is parsed by the impacts module.


def parse_dmatrix_sections(text: str, path: str = "") -> tuple[DMatrix, list[str]]:
    """Parses [modes] and [tests]; returns the matrix and raw [graph] lines."""
    from .simulation import ModelFileError

    modes: list[ModeDef] = []
    tests: list[TestDef] = []
    graph_lines: list[str] = []
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in ("modes", "tests", "graph"):
                raise ModelFileError(f"unknown section [{section}]", path, lineno)
            continue
        if section == "modes":
            parts = line.split()
            meta = {}
            for p in parts[1:]:
                k, _, v = p.partition("=")
                try:
                    meta[k] = float(v)
                except ValueError:
                    meta[k] = v
            modes.append(ModeDef(parts[0], meta))
        elif section == "tests":
            fields = [f.strip() for f in line.split(",")]
            if len(fields) != 5 or not fields[4].startswith("covers="):
                raise ModelFileError("test line must be: id, parameter, lo, hi, covers=m1|m2|...", path, lineno)
            covers = frozenset(m for m in fields[4][len("covers="):].split("|") if m)
            try:
                tests.append(TestDef(fields[0], fields[1], float(fields[2]), float(fields[3]), covers))
            except (ValueError, IsolationError) as exc:
                raise ModelFileError(f"malformed test line: {exc}", path, lineno) from exc
        elif section == "graph":
            graph_lines.append(line)
        else:
            raise ModelFileError("content before any section header", path, lineno)
    return DMatrix(modes, tests), graph_lines


def load_dmatrix(path: str) -> tuple[DMatrix, list[str]]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_dmatrix_sections(fh.read(), path)
