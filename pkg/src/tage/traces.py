"""Test sequences, timed traces, SUT execution and the trace file format."""
from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .rng import derive_rng, geometric0
from .ta import (
    ActionLabel,
    TimedAutomaton,
    TtsState,
    check_well_formed,
    delay,
    discrete_successors,
    earliest_output_enabling,
    initial_state,
    reset,
)

MAX_OUTPUTS_PER_TRACE = 100
MAX_REJECTIONS = 10_000


class TraceParseError(ValueError):
    pass


@dataclass(frozen=True)
class TestSequence:
    steps: tuple  # ((timestamp, input label), ...)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple((Fraction(t), a) for t, a in self.steps))
        _check_times(t for t, _ in self.steps)
        for _, a in self.steps:
            if not a.is_input:
                raise ValueError(f"test sequences contain inputs only, got {a}")

    def __len__(self):
        return len(self.steps)


@dataclass(frozen=True)
class TimedTrace:
    events: tuple  # ((timestamp, label), ...)

    def __post_init__(self):
        object.__setattr__(self, "events", tuple((Fraction(t), a) for t, a in self.events))
        _check_times(t for t, _ in self.events)

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __getitem__(self, i):
        return self.events[i]

    def test_sequence(self) -> TestSequence:
        return TestSequence(tuple((t, a) for t, a in self.events if a.is_input))

    @property
    def n_inputs(self) -> int:
        return sum(1 for _, a in self.events if a.is_input)

    @property
    def n_outputs(self) -> int:
        return sum(1 for _, a in self.events if a.is_output)

    def labels(self) -> set:
        return {a for _, a in self.events}

    def __str__(self):
        return format_trace(self)


def _check_times(times: Iterable):
    prev = Fraction(0)
    for t in times:
        if t < 0:
            raise ValueError(f"negative timestamp {t}")
        if t < prev:
            raise ValueError("timestamps must be non-decreasing")
        prev = t


@dataclass(frozen=True)
class TraceGenConfig:
    p_test: float = 0.15
    c_max: int = 10
    important_constants: frozenset = field(default_factory=frozenset)
    min_outputs: int = 1
    horizon_after_last_input: Optional[int] = None  # defaults to c_max

    def __post_init__(self):
        if not 0 < self.p_test < 1:
            raise ValueError("p_test must lie in (0, 1)")
        if self.c_max < 1:
            raise ValueError("c_max must be at least 1")
        object.__setattr__(self, "important_constants", frozenset(self.important_constants))

    @property
    def horizon(self) -> int:
        return self.c_max if self.horizon_after_last_input is None else self.horizon_after_last_input


def _draw_delay(cfg: TraceGenConfig, rng: random.Random) -> Fraction:
    scheme = rng.randrange(3)
    if scheme == 0:
        return Fraction(rng.choice(sorted(cfg.important_constants | {0})))
    if scheme == 1:
        return Fraction(rng.randint(0, cfg.c_max))
    return Fraction(rng.randint(0, 2 * (cfg.c_max + 1)), 2)


def generate_test_sequence(cfg: TraceGenConfig, inputs: Iterable[ActionLabel], rng: random.Random) -> TestSequence:
    inputs = sorted(inputs)
    if not inputs:
        raise ValueError("need at least one input action")
    n = 1 + geometric0(rng, cfg.p_test)
    t = Fraction(0)
    steps = []
    for _ in range(n):
        t += _draw_delay(cfg, rng)
        steps.append((t, rng.choice(inputs)))
    return TestSequence(tuple(steps))


def _fire(q: TtsState, d, edge) -> TtsState:
    return TtsState(edge.target, reset(delay(q.valuation, d), edge.resets))


def execute_on_sut(
    sut: TimedAutomaton,
    ts: TestSequence,
    horizon_after_last_input=None,
    check: bool = True,
) -> TimedTrace:
    """Response of a deterministic, output-urgent SUT to ``ts``.

    Outputs fire as soon as their guard holds; an output due at the same
    instant as an input is emitted first.  After the last input, outputs
    are observed for ``horizon_after_last_input`` time units, the window
    restarting after every emitted output.
    """
    if check:
        report = check_well_formed(sut)
        if not report.ok:
            raise ValueError(f"SUT violates testability assumptions: {report.witnesses}")
    if horizon_after_last_input is None:
        horizon_after_last_input = max(sut.max_constant(), 1)
    horizon = Fraction(horizon_after_last_input)
    q = initial_state(sut)
    now = Fraction(0)
    events = []
    budget = MAX_OUTPUTS_PER_TRACE
    for t, i in ts.steps:
        while budget:
            found = earliest_output_enabling(sut, q, t - now)
            if found is None:
                break
            d, edges = found
            q = _fire(q, d, edges[0])
            now += d
            events.append((now, edges[0].label))
            budget -= 1
        q = TtsState(q.location, delay(q.valuation, t - now))
        now = t
        succ = discrete_successors(sut, q, i)
        if succ:
            q = min(succ)
        events.append((t, i))
    while budget:
        found = earliest_output_enabling(sut, q, horizon)
        if found is None:
            break
        d, edges = found
        q = _fire(q, d, edges[0])
        now += d
        events.append((now, edges[0].label))
        budget -= 1
    return TimedTrace(tuple(events))


def generate_training_set(
    sut: TimedAutomaton,
    cfg: TraceGenConfig,
    n_test: int,
    seed: int,
    stream: int = 0,
) -> list[TimedTrace]:
    """``n_test`` traces with at least ``cfg.min_outputs`` outputs each.

    Trace ``j`` is drawn from its own stream ``(seed, stream, j)``, so
    disjoint ``stream`` values give independent sets.
    """
    report = check_well_formed(sut)
    if not report.ok:
        raise ValueError(f"SUT violates testability assumptions: {report.witnesses}")
    traces = []
    for j in range(n_test):
        rng = derive_rng(seed, stream, j)
        for _ in range(MAX_REJECTIONS):
            ts = generate_test_sequence(cfg, sut.inputs, rng)
            tt = execute_on_sut(sut, ts, cfg.horizon, check=False)
            if tt.n_outputs >= cfg.min_outputs:
                traces.append(tt)
                break
        else:
            raise RuntimeError(
                f"{MAX_REJECTIONS} consecutive test sequences produced fewer than "
                f"{cfg.min_outputs} outputs; does the SUT emit outputs at all?"
            )
    return traces


# -- file format -------------------------------------------------------------

_NUMBER = re.compile(r"^\d+(\.\d+)?$")


def format_time(t: Fraction) -> str:
    if t.denominator == 1:
        return str(t.numerator)
    den = t.denominator
    if den & (den - 1):
        raise ValueError(f"timestamp {t} is not dyadic")
    k = den.bit_length() - 1
    digits = t.numerator * 5**k  # t = digits / 10**k
    whole, frac = divmod(digits, 10**k)
    return f"{whole}.{str(frac).rjust(k, '0').rstrip('0')}"


def parse_time(text: str) -> Fraction:
    if not _NUMBER.match(text):
        raise ValueError(f"bad timestamp {text!r}")
    t = Fraction(text)
    if t.denominator & (t.denominator - 1):
        raise ValueError(f"timestamp {text!r} is not a dyadic rational")
    return t


def format_trace(tt: TimedTrace) -> str:
    return " ".join(f"{format_time(t)} {a}" for t, a in tt.events)


def parse_trace(line: str) -> TimedTrace:
    tokens = line.split()
    if len(tokens) % 2:
        raise ValueError("expected 'timestamp action' pairs")
    events = []
    for k in range(0, len(tokens), 2):
        events.append((parse_time(tokens[k]), ActionLabel.parse(tokens[k + 1])))
    return TimedTrace(tuple(events))


def write_traces(path, traces: Sequence[TimedTrace]) -> None:
    text = "".join(format_trace(tt) + "\n" for tt in traces)
    Path(path).write_text(text, encoding="utf-8")


def read_traces(path) -> list[TimedTrace]:
    traces = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if line.lstrip().startswith("#"):
            continue
        try:
            traces.append(parse_trace(line))
        except ValueError as exc:
            raise TraceParseError(f"{path}:{lineno}: {exc}") from None
    return traces
