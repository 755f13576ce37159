"""Reference SUTs, random SUT generation and the train/test experiment."""
from __future__ import annotations

import random
import statistics
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .ta import (
    OPS,
    OUTPUT_OPS,
    TRUE,
    ClockConstraint,
    Edge,
    Guard,
    TimedAutomaton,
    check_well_formed,
    guards_overlap,
    inp,
    out,
    reachable_locations,
)
from .traces import TraceGenConfig, TimedTrace, generate_training_set

MAX_SUT_REJECTIONS = 10_000
TRAIN_STREAM, TEST_STREAM = 0, 1


def build_train_ta() -> TimedAutomaton:
    start, stop, go = inp("start"), inp("stop"), inp("go")
    appr, enter, leave = out("appr"), out("enter"), out("leave")

    def ge(k):
        return Guard.of(ClockConstraint(0, ">=", k))

    c = {0}
    edges = (
        Edge(0, start, TRUE, c, 1),
        Edge(1, appr, ge(5), c, 2),
        Edge(2, stop, TRUE, c, 3),
        Edge(2, enter, ge(10), c, 5),
        Edge(3, go, TRUE, c, 4),
        Edge(4, enter, ge(7), c, 5),
        Edge(5, leave, ge(3), (), 0),
    )
    return TimedAutomaton(
        inputs={start, stop, go}, outputs={appr, enter, leave}, n_clock=1, n_locations=6, initial=0, edges=edges
    )


BUILTIN_SUTS = {"train": build_train_ta}


# -- random SUTs ---------------------------------------------------------------


@dataclass(frozen=True)
class RandomSutSpec:
    n_locations: int
    n_clock: int
    n_inputs: int
    n_outputs: int
    c_max: int
    edge_factor: float = 2.0  # edges per location
    p_atom: float = 0.5  # chance of a constraint per clock and edge
    p_reset: float = 0.5  # chance of resetting each clock

    def __post_init__(self):
        if self.n_locations < 1 or self.n_inputs < 1 or self.n_outputs < 1:
            raise ValueError("a random SUT needs locations, inputs and outputs")
        if self.n_clock < 0 or self.c_max < 0:
            raise ValueError("clock count and c_max must be non-negative")

    @property
    def n_edges(self) -> int:
        return max(self.n_locations, round(self.edge_factor * self.n_locations))


PRESETS = {
    "C15/1": RandomSutSpec(15, 1, 5, 5, 15),
    "C20/1": RandomSutSpec(20, 1, 5, 5, 15),
    "C6/2": RandomSutSpec(6, 2, 4, 4, 15),
    "C10/2": RandomSutSpec(10, 2, 4, 4, 15),
}


def _random_sut_edge(spec: RandomSutSpec, rng: random.Random, labels, source: int, target: int) -> Edge:
    label = rng.choice(labels)
    ops = OUTPUT_OPS if label.is_output else OPS
    atoms = []
    for c in range(spec.n_clock):
        if rng.random() < spec.p_atom:
            op = rng.choice(ops)
            lo = 1 if op in ("<", "<=") else 0  # c < 0 can never hold
            atoms.append(ClockConstraint(c, op, rng.randint(lo, max(lo, spec.c_max))))
    resets = {c for c in range(spec.n_clock) if rng.random() < spec.p_reset}
    return Edge(source, label, Guard(tuple(atoms)), resets, target)


def _closes_output_cycle(e: Edge, edges: Sequence[Edge]) -> bool:
    # outputs alone must not loop, or the SUT would emit forever without input
    if not e.label.is_output:
        return False
    succ = {}
    for f in edges:
        if f.label.is_output:
            succ.setdefault(f.source, []).append(f.target)
    stack, seen = [e.target], set()
    while stack:
        loc = stack.pop()
        if loc == e.source:
            return True
        if loc not in seen:
            seen.add(loc)
            stack.extend(succ.get(loc, ()))
    return False


def _conflicts(e: Edge, edges: Sequence[Edge], n_clock: int) -> bool:
    if _closes_output_cycle(e, edges):
        return True
    for f in edges:
        if f.source != e.source:
            continue
        if f.label == e.label or (f.label.is_output and e.label.is_output):
            if guards_overlap(f.guard, e.guard, n_clock) is not None:
                return True
    return False


def _outputs_reachable_everywhere(ta: TimedAutomaton) -> bool:
    # backward closure from the sources of output edges
    good = {e.source for e in ta.edges if e.label.is_output}
    changed = True
    while changed:
        changed = False
        for e in ta.edges:
            if e.target in good and e.source not in good:
                good.add(e.source)
                changed = True
    return len(good) == ta.n_locations


def generate_random_sut(spec: RandomSutSpec, rng: random.Random) -> TimedAutomaton:
    """A connected, well-formed random SUT shaped by ``spec``.

    A random spanning tree rooted at location 0 guarantees connectivity;
    further random edges follow.  Edges that would break determinism or
    output isolation, or close a cycle of outputs, are redrawn, and
    automata in which some location cannot reach an output are discarded.
    Every redraw counts as one rejection.
    """
    inputs = [inp(f"i{k}") for k in range(spec.n_inputs)]
    outputs = [out(f"o{k}") for k in range(spec.n_outputs)]
    labels = inputs + outputs
    rejections = 0

    def draw(edges, endpoints):
        nonlocal rejections
        while True:
            e = _random_sut_edge(spec, rng, labels, *endpoints())
            if not _conflicts(e, edges, spec.n_clock):
                return e
            rejections += 1
            if rejections >= MAX_SUT_REJECTIONS:
                raise RuntimeError(
                    f"no well-formed SUT for {spec} after {MAX_SUT_REJECTIONS} rejections"
                )

    while True:
        edges: list[Edge] = []
        for loc in range(1, spec.n_locations):
            # any earlier location may be the parent, so a saturated one is avoided
            edges.append(draw(edges, lambda: (rng.randrange(loc), loc)))
        while len(edges) < spec.n_edges:
            edges.append(draw(edges, lambda: (rng.randrange(spec.n_locations), rng.randrange(spec.n_locations))))
        ta = TimedAutomaton(
            inputs=frozenset(inputs),
            outputs=frozenset(outputs),
            n_clock=spec.n_clock,
            n_locations=spec.n_locations,
            initial=0,
            edges=tuple(edges),
        )
        if _outputs_reachable_everywhere(ta):
            break
        rejections += 1
        if rejections >= MAX_SUT_REJECTIONS:
            raise RuntimeError(f"no SUT for {spec} with outputs reachable everywhere")
    assert check_well_formed(ta).ok
    assert len(reachable_locations(ta)) == ta.n_locations
    return ta


def trace_config_for(sut: TimedAutomaton, p_test: float = 0.15, c_max: Optional[int] = None) -> TraceGenConfig:
    """Trace generation settings using the SUT's guard constants as important delays."""
    c_max = max(sut.max_constant(), 1) if c_max is None else c_max
    return TraceGenConfig(p_test=p_test, c_max=c_max, important_constants=frozenset(sut.constants()))


# -- experiments ---------------------------------------------------------------


@dataclass
class ExperimentReport:
    training_errors: int
    test_errors: int
    generations: int
    wall_time: float
    learned: TimedAutomaton
    run: object = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "training_errors": self.training_errors,
            "test_errors": self.test_errors,
            "generations": self.generations,
            "wall_time": self.wall_time,
            "learned_size": self.learned.size,
            "learned_locations": self.learned.n_locations,
        }


def count_errors(ta: TimedAutomaton, traces: Sequence[TimedTrace], weights, state_cap: int) -> int:
    """Traces whose verdict is not PASS."""
    from .kernel import Evaluator

    ev = Evaluator(traces, weights, state_cap, alphabet=ta.alphabet, n_clock=ta.n_clock)
    return len(traces) - ev.evaluate([ta])[0].n_pass


def run_experiment(
    sut: TimedAutomaton,
    cfg,
    trace_cfg: TraceGenConfig,
    seed: int,
    n_test: int = 2000,
    progress_sink=None,
) -> ExperimentReport:
    """Learn from a training set of ``sut`` and count errors on a fresh test set."""
    from .evolution import evolve

    training = generate_training_set(sut, trace_cfg, n_test, seed, TRAIN_STREAM)
    test = generate_training_set(sut, trace_cfg, n_test, seed, TEST_STREAM)
    learned, report = evolve(cfg, training, progress_sink, inputs=sut.inputs, outputs=sut.outputs)
    return ExperimentReport(
        training_errors=n_test - report.training_pass,
        test_errors=count_errors(learned, test, cfg.weights, cfg.state_cap),
        generations=report.generations,
        wall_time=report.wall_time,
        learned=learned,
        run=report,
    )


def summarize(values: Sequence[float], fmt: str = "{:g}") -> str:
    """``min / median, mean / max`` as in the usual results tables."""
    if not values:
        return "-"
    parts = (min(values), statistics.median(values), statistics.fmean(values), max(values))
    lo, med, mean, hi = (fmt.format(v) for v in parts)
    return f"{lo} / {med}, {mean} / {hi}"
