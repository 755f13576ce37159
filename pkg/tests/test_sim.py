import random
from fractions import Fraction

import pytest

from helpers import I, O, P, ge, random_small_ta, random_trace_for, small_ta
from oracles import enumerate_paths, oracle_verdict
from tage.benchmarks import build_train_ta
from tage.kernel import Evaluator
from tage.sim import (
    ExploredTrace,
    FitnessWeights,
    SimResult,
    Verdict,
    cas_weights,
    combine,
    default_weights,
    fitness,
    max_fitness,
    metrics,
    simulate,
    trace_score,
    verdict,
)
from tage.ta import TRUE, Edge, inp, out, simplify
from tage.traces import TimedTrace, TraceGenConfig, generate_training_set, parse_trace

W = default_weights()


@pytest.fixture(scope="module")
def train():
    return build_train_ta()


@pytest.fixture(scope="module")
def train_traces(train):
    return generate_training_set(train, TraceGenConfig(0.15, 10, frozenset(train.constants())), 300, 11)


def test_sut_simulates_its_own_traces_deterministically(train, train_traces):
    for tt in train_traces:
        sr = simulate(train, tt)
        assert sr.traces == {ExploredTrace(tt.events, tuple(False for _ in range(tt.n_inputs)))}
        assert verdict(sr) is Verdict.PASS


def test_retargeted_enter_fails_at_leave(train):
    edges = [Edge(e.source, e.label, e.guard, e.resets, 0) if (e.source, e.label) == (2, out("enter")) else e
             for e in train.edges]
    g = train.replace(edges=tuple(edges))
    tt = parse_trace("0 start? 5 appr! 15 enter! 18 leave!")
    sr = simulate(g, tt)
    assert sr.longest() == 3
    assert verdict(sr) is Verdict.FAIL


def test_two_successors_mark_input_and_give_nondet():
    g = small_ta([Edge(0, I, TRUE, (), 1), Edge(0, I, TRUE, {0}, 2), Edge(1, O, ge(1), (), 1)], n_locations=3)
    tt = TimedTrace(((0, I), (1, O)))
    sr = simulate(g, tt)
    assert len(sr.traces) == 2
    assert all(t.input_marks == (True,) for t in sr.traces)
    assert sorted(len(t) for t in sr.traces) == [1, 2]
    assert verdict(sr) is Verdict.NONDET


def test_input_marked_when_output_enabled_at_input_time():
    # o! enabled at exactly the input's time: marked (d_o <= d)
    g = small_ta([Edge(0, O, ge(2), (), 1)])
    sr = simulate(g, TimedTrace(((2, I),)))
    (only,) = sr.traces
    assert only.input_marks == (True,)
    assert verdict(sr) is Verdict.NONDET


def test_output_killed_only_when_enabled_strictly_earlier():
    g = small_ta([Edge(0, O, ge(2), (), 1)])
    assert verdict(simulate(g, TimedTrace(((2, O),)))) is Verdict.PASS
    assert verdict(simulate(g, TimedTrace(((3, O),)))) is Verdict.FAIL


def test_rival_output_kills_path():
    g = small_ta([Edge(0, O, ge(2), (), 1), Edge(0, P, ge(2), (), 1)])
    sr = simulate(g, TimedTrace(((2, O),)))
    assert sr.longest() == 0
    assert verdict(sr) is Verdict.FAIL


def test_identical_successors_count_once():
    g = small_ta([Edge(0, I, TRUE, {0}, 1), Edge(0, I, ge(0), {0}, 1)])
    (only,) = simulate(g, TimedTrace(((1, I),))).traces
    assert only.input_marks == (False,)


def test_state_cap_prunes_to_prefixes():
    # each i? doubles the frontier: reset or not, into the same location
    g = small_ta([Edge(0, I, TRUE, (), 0), Edge(0, I, TRUE, {0}, 0)], n_locations=1)
    tt = TimedTrace(tuple((Fraction(k, 2), I) for k in range(1, 9)))
    sr = simulate(g, tt, state_cap=3)
    assert verdict(sr) is Verdict.NONDET
    assert any(len(t) < len(tt) for t in sr.traces)
    with pytest.raises(ValueError):
        simulate(g, tt, state_cap=0)


def test_verdict_table():
    tt = parse_trace("0 i? 1 o!")
    full = ExploredTrace(tt.events, (False,))
    marked = ExploredTrace(tt.events, (True,))
    short = ExploredTrace(tt.events[:1], (False,))
    assert verdict(SimResult(frozenset({full}), tt)) is Verdict.PASS
    assert verdict(SimResult(frozenset({full, short}), tt)) is Verdict.NONDET
    assert verdict(SimResult(frozenset({marked}), tt)) is Verdict.NONDET
    assert verdict(SimResult(frozenset({short}), tt)) is Verdict.FAIL


def test_metrics(train):
    tt = parse_trace("0 start? 5 appr! 7 stop? 9 go? 16 enter! 19 leave!")
    assert metrics(simulate(train, tt), train) == (3, 3, 7)
    empty = SimResult(frozenset({ExploredTrace((), ())}), tt)
    assert metrics(empty, train)[:2] == (0, 0)


def test_fitness_arithmetic_example():
    w = default_weights(0.15, 0.25, 4)
    value = combine([trace_score(w, Verdict.PASS, 3, 2)], 7, w)
    assert value == pytest.approx(20 / 3 + 0.375 + 0.5 - 0.875, abs=1e-12)
    assert value == pytest.approx(20 / 3, abs=1e-12)


def test_all_fail_value_is_minus_size_penalty(train):
    w = default_weights()
    g = small_ta([Edge(0, O, TRUE, (), 1)])
    traces = [parse_trace("1 p!"), parse_trace("2 p!")]
    res = fitness(g, traces, w, backend="reference")
    assert res.verdicts == [Verdict.FAIL, Verdict.FAIL]
    assert res.value == -w.w_size * g.size


def test_default_and_cas_weights():
    w = default_weights(0.15, 0.25, 4)
    assert abs(w.w_pass - 20 / 3) <= 1e-9
    assert w.w_nondet == w.w_pass / 2
    assert w.w_steps == w.w_size == 0.125
    assert w.w_fail == 0
    c = cas_weights()
    assert c.w_out == c.w_steps / 2 and c.w_nondet == -0.5
    z = default_weights(0.15, 0.25, 0)
    assert z.w_pass == z.w_nondet == 0
    with pytest.raises(ValueError):
        default_weights(1.0)
    with pytest.raises(ValueError):
        FitnessWeights(1, 0.5, 0, 0.1, 0.2, 0.0)


def test_unreachable_edge_costs_exactly_w_size(train, train_traces):
    extra = train.replace(n_locations=7, edges=train.edges + (Edge(6, inp("go"), TRUE, (), 6),))
    a = fitness(train, train_traces, W)
    b = fitness(extra, train_traces, W)
    assert a.value - b.value == W.w_size
    assert a.verdicts == b.verdicts
    assert simplify(extra) == simplify(train)


def test_sut_reaches_max_fitness(train, train_traces):
    res = fitness(train, train_traces, W)
    assert all(v is Verdict.PASS for v in res.verdicts)
    assert res.value == max_fitness(train_traces, train.size, W)


def test_failing_suffix_never_increases_steps_or_outs(train):
    tt = parse_trace("0 start? 5 appr! 7 stop? 9 go? 16 enter! 19 leave!")
    longer = TimedTrace(tt.events + ((20, out("appr")), (21, inp("go"))))
    s1 = metrics(simulate(train, tt), train)
    s2 = metrics(simulate(train, longer), train)
    assert s2[0] <= s1[0] and s2[1] <= s1[1]


def test_simulate_matches_brute_force_enumeration():
    for n in range(300):
        rng = random.Random(n)
        ta = random_small_ta(rng)
        tt = random_trace_for(rng, ta)
        sr = simulate(ta, tt)
        explored = {(len(t), t.input_marks) for t in sr.traces}
        paths = enumerate_paths(ta, tt.events)
        assert explored == paths, (ta.to_text(), tt)
        assert str(verdict(sr)) == oracle_verdict(paths, len(tt))


def test_kernel_matches_reference_exactly():
    rng = random.Random(5)
    cands = [random_small_ta(rng, max_locations=4, c_max=4) for _ in range(60)]
    traces = []
    for k in range(80):
        traces.append(random_trace_for(rng, cands[k % len(cands)], max_len=7, c_max=4))
    ev = Evaluator(traces, W, alphabet=cands[0].alphabet, n_clock=1)
    for g, res in zip(cands, ev.evaluate(cands)):
        ref = fitness(g, traces, W, backend="reference")
        assert res.value == ref.value
        assert res.to_result().verdicts == ref.verdicts


def test_kernel_matches_reference_on_subsets(train, train_traces):
    ev = Evaluator(train_traces, W, alphabet=train.alphabet, n_clock=1)
    subset = list(range(0, 300, 7))
    res = ev.evaluate([train], subset)[0]
    ref = fitness(train, [train_traces[i] for i in subset], W, backend="reference")
    assert res.value == ref.value
    assert len(res.verdicts) == len(subset)


def test_kernel_fault_counters_point_at_the_culprit(train, train_traces):
    # dropping enter! from l2 kills paths right after appr!
    edges = tuple(e for e in train.edges if not (e.source == 2 and e.label == out("enter")))
    g = train.replace(edges=edges)
    res = Evaluator(train_traces, W, alphabet=train.alphabet, n_clock=1).evaluate([g])[0]
    appr = next(j for j, e in enumerate(g.edges) if e.label == out("appr"))
    assert res.edge_faults[appr] == max(res.edge_faults) > 0
    assert res.location_faults.argmax() == 2


def test_fitness_needs_traces(train):
    with pytest.raises(ValueError):
        fitness(train, [], W)
