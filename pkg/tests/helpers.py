"""Shared builders for the test-suite."""
import random
from fractions import Fraction

from tage.evolution import Alphabet, Mutator, Shape, create_random_ta
from tage.ta import TRUE, ClockConstraint, Edge, Guard, TimedAutomaton, inp, out
from tage.traces import TestSequence, TimedTrace, execute_on_sut

I, J = inp("i"), inp("j")
O, P = out("o"), out("p")
SMALL_ALPHABET = Alphabet({I, J}, {O, P})


def ge(k, clock=0):
    return Guard.of(ClockConstraint(clock, ">=", k))


def small_ta(edges, n_locations=2, n_clock=1, initial=0):
    return TimedAutomaton(
        inputs=frozenset({I, J}),
        outputs=frozenset({O, P}),
        n_clock=n_clock,
        n_locations=n_locations,
        initial=initial,
        edges=tuple(edges),
    )


def random_small_ta(rng: random.Random, max_locations=3, c_max=3) -> TimedAutomaton:
    """A random one-clock candidate with at most ``max_locations`` locations and constants up to ``c_max``."""
    shape = Shape(SMALL_ALPHABET, 1, c_max)
    mut = Mutator(shape)
    while True:
        ta = create_random_ta(shape, rng)
        for _ in range(rng.randrange(4)):
            ta = mut.mutate(ta, 0.5, rng)
        if ta.n_locations <= max_locations and ta.max_constant() <= c_max:
            return ta


def random_events(rng: random.Random, max_len=4, c_max=3) -> TimedTrace:
    t = Fraction(0)
    events = []
    for _ in range(rng.randint(1, max_len)):
        t += Fraction(rng.randint(0, 2 * (c_max + 1)), 2)
        events.append((t, rng.choice((I, J, O, P))))
    return TimedTrace(tuple(events))


def random_run(rng: random.Random, ta: TimedAutomaton, max_len=4, c_max=3) -> TimedTrace:
    """A trace produced by running ``ta`` itself, truncated to ``max_len`` events."""
    t = Fraction(0)
    steps = []
    for _ in range(rng.randint(1, max_len)):
        t += Fraction(rng.randint(0, 2 * (c_max + 1)), 2)
        steps.append((t, rng.choice((I, J))))
    tt = execute_on_sut(ta, TestSequence(tuple(steps)), c_max, check=False)
    return TimedTrace(tt.events[:max_len])


def random_trace_for(rng: random.Random, ta: TimedAutomaton, max_len=4, c_max=3) -> TimedTrace:
    if rng.random() < 0.5:
        return random_run(rng, ta, max_len, c_max)
    return random_events(rng, max_len, c_max)


def loop_ta():
    """Outputs o! at c>=2 then waits for i?; used in several hand examples."""
    return small_ta([Edge(0, O, ge(2), {0}, 1), Edge(1, I, TRUE, {0}, 0)])
