"""Genetic programming of timed automata with urgent outputs from timed traces."""
from .ta import (
    ActionLabel,
    ClockConstraint,
    Edge,
    Guard,
    TimedAutomaton,
    TtsState,
    check_well_formed,
    discrete_successors,
    earliest_output_enabling,
    guard_satisfied,
    inp,
    out,
    simplify,
)
from .traces import TestSequence, TimedTrace, TraceGenConfig, execute_on_sut, read_traces, write_traces
from .sim import FitnessWeights, Verdict, default_weights, fitness, metrics, simulate, verdict

__version__ = "0.1.0"
