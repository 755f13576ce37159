"""Multi-path simulation of candidate automata on timed traces, and fitness.

:func:`simulate` is the readable reference implementation working on exact
fractions.  Fitness evaluation of whole populations goes through the
compiled kernel in :mod:`tage.kernel`, which is checked against this module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional, Sequence

from .ta import (
    TimedAutomaton,
    TtsState,
    delay,
    delay_window,
    guard_satisfied,
    initial_state,
    reset,
    window_meets,
)
from .traces import TimedTrace

DEFAULT_STATE_CAP = 64


class Verdict(Enum):
    PASS = "PASS"
    NONDET = "NONDET"
    FAIL = "FAIL"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class ExploredTrace:
    events: tuple
    input_marks: tuple  # one flag per input event in ``events``; True = marked

    def __len__(self):
        return len(self.events)

    @property
    def unmarked_inputs(self) -> int:
        return sum(1 for m in self.input_marks if not m)

    @property
    def n_outputs(self) -> int:
        return sum(1 for _, a in self.events if a.is_output)


@dataclass(frozen=True)
class SimResult:
    traces: frozenset
    reference: TimedTrace

    def longest(self) -> int:
        return max(len(t) for t in self.traces)


def output_enabled_within(g: TimedAutomaton, q: TtsState, d, inclusive: bool) -> bool:
    """Some output edge of ``q``'s location is enabled after a delay in [0, d] (or [0, d))."""
    for e in g.edges:
        if e.source != q.location or not e.label.is_output:
            continue
        w = delay_window(e.guard, q.valuation)
        if w is not None and window_meets(w, d, inclusive):
            return True
    return False


def _successors(g: TimedAutomaton, q: TtsState, action) -> list[TtsState]:
    # distinct successor states in edge order
    seen = []
    for e in g.edges:
        if e.source == q.location and e.label == action and guard_satisfied(e.guard, q.valuation):
            s = TtsState(e.target, reset(q.valuation, e.resets))
            if s not in seen:
                seen.append(s)
    return seen


def simulate(g: TimedAutomaton, tt: TimedTrace, state_cap: int = DEFAULT_STATE_CAP) -> SimResult:
    """Explore every path of ``g`` consistent with ``tt``.

    Outputs are not urgent while simulating; instead inputs are marked when
    an output could have fired before them, and paths die when an expected
    output is late, missing, ambiguous or competing with another output.
    The frontier keeps at most ``state_cap`` paths; when it overflows, the
    paths with the lowest (location, valuation) survive and the rest are
    recorded as explored prefixes.
    """
    if state_cap < 1:
        raise ValueError("state_cap must be positive")
    events = tt.events
    finished = set()
    frontier = [(initial_state(g), ())]
    prev = Fraction(0)
    for i, (t, action) in enumerate(events):
        d = t - prev
        prev = t
        nxt = []
        seen = set()

        def push(state, marks):
            k = (state, marks)
            if k not in seen:
                seen.add(k)
                nxt.append(k)

        for q, marks in frontier:
            qd = TtsState(q.location, delay(q.valuation, d))
            if action.is_input:
                marked = output_enabled_within(g, q, d, inclusive=True)
                succ = _successors(g, qd, action)
                if len(succ) >= 2:
                    marked = True
                for s in succ or [qd]:
                    push(s, marks + (marked,))
            else:
                if output_enabled_within(g, q, d, inclusive=False):
                    finished.add(ExploredTrace(events[:i], marks))
                    continue
                succ = _successors(g, qd, action)
                rival = any(
                    e.source == q.location
                    and e.label.is_output
                    and e.label != action
                    and guard_satisfied(e.guard, qd.valuation)
                    for e in g.edges
                )
                if len(succ) != 1 or rival:
                    finished.add(ExploredTrace(events[:i], marks))
                    continue
                push(succ[0], marks)
        if len(nxt) > state_cap:
            ranked = sorted(nxt, key=lambda p: (p[0].location, p[0].valuation))
            for _, marks in ranked[state_cap:]:
                finished.add(ExploredTrace(events[: i + 1], marks))
            nxt = ranked[:state_cap]
        frontier = nxt
        if not frontier:
            break
    else:
        for _, marks in frontier:
            finished.add(ExploredTrace(events, marks))
    return SimResult(frozenset(finished), tt)


def verdict(sr: SimResult) -> Verdict:
    full = len(sr.reference)
    has_full = any(len(t) == full for t in sr.traces)
    if not has_full:
        return Verdict.FAIL
    if len(sr.traces) == 1:
        (only,) = sr.traces
        if not any(only.input_marks):
            return Verdict.PASS
    return Verdict.NONDET


def metrics(sr: SimResult, g: TimedAutomaton) -> tuple[int, int, int]:
    steps = max((t.unmarked_inputs for t in sr.traces), default=0)
    longest = sr.longest() if sr.traces else 0
    outs = sum(1 for _, a in sr.reference.events[:longest] if a.is_output)
    return steps, outs, g.size


@dataclass(frozen=True)
class FitnessWeights:
    w_pass: float
    w_nondet: float
    w_fail: float
    w_steps: float
    w_out: float
    w_size: float

    def __post_init__(self):
        if not self.w_size > 0:
            raise ValueError("w_size must be positive, otherwise trace-shaped trees win")

    def for_verdict(self, v: Verdict) -> float:
        return {Verdict.PASS: self.w_pass, Verdict.NONDET: self.w_nondet, Verdict.FAIL: self.w_fail}[v]


def default_weights(p_test: float = 0.15, w_out: float = 0.25, k: int = 4) -> FitnessWeights:
    """Weights from the usual guidelines; the average test length is ``1/p_test``."""
    if not 0 < p_test < 1:
        raise ValueError("p_test must lie in (0, 1)")
    w_steps = w_out / 2
    w_pass = k * w_out / p_test
    return FitnessWeights(
        w_pass=w_pass,
        w_nondet=w_pass / 2,
        w_fail=0.0,
        w_steps=w_steps,
        w_out=w_out,
        w_size=w_steps,
    )


def cas_weights(p_test: float = 0.15, w_steps: float = 0.125, k: int = 4) -> FitnessWeights:
    """Profile favouring deterministic steps and penalising nondeterminism."""
    w_out = w_steps / 2
    return FitnessWeights(
        w_pass=k * w_out / p_test,
        w_nondet=-0.5,
        w_fail=0.0,
        w_steps=w_steps,
        w_out=w_out,
        w_size=w_steps,
    )


def trace_score(w: FitnessWeights, v: Verdict, steps: int, outs: int) -> float:
    return w.for_verdict(v) + w.w_steps * steps + w.w_out * outs


def combine(per_trace: Sequence[float], size: int, w: FitnessWeights) -> float:
    # fsum is exact, so the result does not depend on summation order
    return math.fsum(per_trace) - w.w_size * size


@dataclass
class FitnessResult:
    value: float
    verdicts: list
    edge_faults: list = field(default_factory=list)
    location_faults: list = field(default_factory=list)

    @property
    def n_pass(self) -> int:
        return sum(1 for v in self.verdicts if v is Verdict.PASS)


def fitness(
    g: TimedAutomaton,
    traces: Sequence[TimedTrace],
    w: FitnessWeights,
    state_cap: int = DEFAULT_STATE_CAP,
    backend: str = "kernel",
) -> FitnessResult:
    """Fitness of ``g`` on ``traces``: per-trace rewards minus the size penalty.

    ``backend="reference"`` evaluates with :func:`simulate` and returns no
    fault diagnostics.
    """
    if not traces:
        raise ValueError("fitness needs at least one trace")
    if backend == "reference":
        scores, verdicts = [], []
        for tt in traces:
            sr = simulate(g, tt, state_cap)
            v = verdict(sr)
            steps, outs, _ = metrics(sr, g)
            verdicts.append(v)
            scores.append(trace_score(w, v, steps, outs))
        return FitnessResult(combine(scores, g.size, w), verdicts)
    from .kernel import Evaluator

    return Evaluator(traces, w, state_cap=state_cap, alphabet=g.alphabet).evaluate_one(g)


def max_fitness(traces: Sequence[TimedTrace], size: int, w: FitnessWeights) -> float:
    """Best achievable value on ``traces`` for an automaton with ``size`` edges."""
    scores = [trace_score(w, Verdict.PASS, tt.n_inputs, tt.n_outputs) for tt in traces]
    return combine(scores, size, w)
