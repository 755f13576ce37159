"""Acceptance suite: one logged pass/fail line per criterion.

The two learning criteria are marked ``slow`` and take hours on one core;
everything else finishes in a couple of minutes.
"""
import math
import random
from collections import Counter

import pytest

from helpers import SMALL_ALPHABET, random_small_ta, random_trace_for
from oracles import enumerate_paths, oracle_verdict
from tage.benchmarks import (
    PRESETS,
    build_train_ta,
    generate_random_sut,
    run_experiment,
    trace_config_for,
)
from tage.evolution import Candidate, EvolutionConfig, Mutator, Search, Shape, adapt_p_mut, create_random_ta, crossover, evolve
from tage.evolution.engine import P_MUT_RANGE
from tage.evolution.selection import rank_probabilities, tournament_rank
from tage.kernel import Evaluator
from tage.rng import derive_rng
from tage.sim import default_weights, fitness, max_fitness, simulate, verdict
from tage.ta import simplify
from tage.traces import generate_training_set

TRAIN_SEEDS = range(1, 11)
TRAIN_LIMIT = 30 * 60
C62_SEEDS = range(1, 6)
C62_LIMIT = 2 * 60 * 60


def test_fitness_arithmetic(criterion):
    w = default_weights(0.15, 0.25, 4)
    ok = (
        abs(w.w_pass - 20 / 3) <= 1e-9
        and w.w_nondet == w.w_pass / 2
        and w.w_steps == w.w_size == 0.125
        and w.w_fail == 0
    )
    criterion("fitness arithmetic", ok, f"w_pass={w.w_pass!r} w_nondet={w.w_nondet!r} w_steps={w.w_steps} "
              f"w_size={w.w_size} w_fail={w.w_fail}")
    assert ok


def test_tournament_distribution(criterion):
    rng = random.Random(20240601)
    n = 100_000
    counts = Counter(tournament_rank(rng, 10, 0.5) for _ in range(n))
    expected = [0.5 ** (i + 1) for i in range(9)] + [0.5 ** 9]
    assert expected == rank_probabilities(10, 0.5)
    worst = max(abs(counts[i] / n - p) for i, p in enumerate(expected))
    ok = worst <= 0.01
    criterion("tournament distribution", ok, f"max |freq - p_i| = {worst:.5f} over {n} draws")
    assert ok


def test_oracle_equivalence(criterion):
    w = default_weights()
    details, ok = [], True
    suts = [("train", build_train_ta()), ("C6/2", generate_random_sut(PRESETS["C6/2"], derive_rng(1, 99)))]
    for name, sut in suts:
        traces = generate_training_set(sut, trace_config_for(sut), 2000, 1)
        best = max_fitness(traces, sut.size, w)
        kern = Evaluator(traces, w, alphabet=sut.alphabet, n_clock=sut.n_clock).evaluate([sut])[0]
        ref = fitness(sut, traces, w, backend="reference")
        good = (
            kern.n_pass == 2000
            and all(str(v) == "PASS" for v in ref.verdicts)
            and kern.value == ref.value == best
        )
        ok &= good
        details.append(f"{name}: pass {kern.n_pass}/2000, fitness {kern.value!r} vs max {best!r}")
    criterion("oracle equivalence", ok, "; ".join(details))
    assert ok


def test_verdict_brute_force(criterion):
    mismatches = checked = 0
    for n in range(200):
        rng = random.Random(1000 + n)
        ta = random_small_ta(rng, max_locations=3, c_max=3)
        assert ta.n_locations <= 3 and ta.n_clock == 1 and ta.max_constant() <= 3
        for _ in range(10):
            tt = random_trace_for(rng, ta, max_len=4, c_max=3)
            sr = simulate(ta, tt)
            paths = enumerate_paths(ta, tt.events)
            checked += 1
            if {(len(t), t.input_marks) for t in sr.traces} != paths or str(verdict(sr)) != oracle_verdict(paths, len(tt)):
                mismatches += 1
    ok = mismatches == 0
    criterion("verdict brute force", ok, f"{mismatches} mismatches over 200 candidates x 10 traces ({checked})")
    assert ok


@pytest.fixture(scope="module")
def small_run():
    sut = build_train_ta()
    traces = generate_training_set(sut, trace_config_for(sut), 500, 2)
    cfg = EvolutionConfig(n_pop=100, g_max=25, seed=4)
    a = evolve(cfg, traces)
    b = evolve(cfg, traces)
    return traces, a, b


def test_structural_suite(criterion, small_run):
    checks = {}
    rng = random.Random(77)
    shape = Shape(SMALL_ALPHABET, 2, 6)
    mut = Mutator(shape)

    # crossover cap over 1000 random pairs
    cap_ok = True
    for _ in range(1000):
        a = mut.mutate(create_random_ta(shape, rng), rng.uniform(0.1, 0.9), rng)
        b = mut.mutate(create_random_ta(shape, rng), rng.uniform(0.1, 0.9), rng)
        cap_ok &= crossover(a, b, rng).n_locations <= max(a.n_locations, b.n_locations)
    checks["crossover cap"] = cap_ok

    # p_mut clamping, on long random walks and on whole offspring populations
    lo, hi = P_MUT_RANGE
    clamp_ok = (lo, hi) == (0.1, 0.9)
    p = 0.33
    for _ in range(20_000):
        p = adapt_p_mut(p, rng)
        clamp_ok &= lo <= p <= hi
    traces, (learned, report), (learned2, report2) = small_run
    s = Search(EvolutionConfig(n_pop=200, seed=8), traces)
    pop = s.initial_population(0)
    for _ in range(4):
        s.evaluate_global(pop)
        pop = sorted(pop, key=Candidate.order_key)
        pop = s.offspring(pop, pop, 0)
        s.generation += 1
        clamp_ok &= all(lo <= c.p_mut <= hi for c in pop)
    checks["p_mut in [0.1, 0.9]"] = clamp_ok

    checks["|t_fail| >= n_test/100"] = min(report.t_fail_sizes) >= math.ceil(len(traces) / 100)
    series = report.best_fitness_series
    checks["elitism"] = all(y >= x for x, y in zip(series, series[1:]))

    # simplify: idempotence, and equal verdicts over 1000 traces
    simp_ok, n_traces = True, 0
    while n_traces < 1000:
        ta = mut.mutate(create_random_ta(shape, rng), 0.3, rng)
        st = simplify(ta)
        simp_ok &= simplify(st) == st
        for _ in range(10):
            tt = random_trace_for(rng, ta, max_len=6, c_max=6)
            simp_ok &= verdict(simulate(ta, tt)) is verdict(simulate(st, tt))
            n_traces += 1
    checks["simplify"] = simp_ok

    strict_ok, seen = True, 0
    ta = create_random_ta(shape, rng)
    while seen < 10_000:
        ta = mut.mutate(ta, 0.5, rng) if ta.size < 40 else create_random_ta(shape, rng)
        seen += 1
        strict_ok &= all(a.op != ">" for e in ta.edges if e.label.is_output for a in e.guard)
    checks["no '>' on outputs"] = strict_ok

    checks["equal seeds, equal reports"] = (
        learned == learned2 and report.deterministic_view() == report2.deterministic_view()
    )

    ok = all(checks.values())
    criterion("structural suite", ok, ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok


def _train_run(seed):
    sut = build_train_ta()
    cfg = EvolutionConfig(n_pop=500, seed=seed, c_max=sut.max_constant(), time_limit=TRAIN_LIMIT)
    return run_experiment(sut, cfg, trace_config_for(sut, p_test=0.15), seed=seed, n_test=2000)


@pytest.mark.slow
def test_train_end_to_end(criterion):
    good, lines = 0, []
    for seed in TRAIN_SEEDS:
        r = _train_run(seed)
        ok = r.training_errors == 0 and r.test_errors == 0 and r.wall_time <= TRAIN_LIMIT
        good += ok
        lines.append(f"seed {seed}: {'ok' if ok else 'no'} gen {r.generations} train err {r.training_errors} "
                     f"test err {r.test_errors} {r.wall_time / 60:.1f} min")
        print(lines[-1], flush=True)
    ok = good >= 8
    criterion("Train end-to-end", ok, f"{good}/10 runs converged with 0 test errors within 30 min; " + "; ".join(lines))
    assert ok


@pytest.mark.slow
def test_small_random_suts(criterion):
    good, lines = 0, []
    for seed in C62_SEEDS:
        sut = generate_random_sut(PRESETS["C6/2"], derive_rng(seed, 99))
        cfg = EvolutionConfig(seed=seed, n_clock=sut.n_clock, c_max=sut.max_constant(), time_limit=C62_LIMIT)
        r = run_experiment(sut, cfg, trace_config_for(sut, p_test=0.15), seed=seed, n_test=2000)
        ok = r.training_errors == 0 and r.test_errors <= 3 and r.wall_time <= C62_LIMIT
        good += ok
        lines.append(f"SUT {seed}: {'ok' if ok else 'no'} gen {r.generations} train err {r.training_errors} "
                     f"test err {r.test_errors} {r.wall_time / 60:.1f} min")
        print(lines[-1], flush=True)
    ok = good >= 4
    criterion("small random SUTs (C6/2)", ok, f"{good}/5 converged with <= 3 test errors within 2 h; " + "; ".join(lines))
    assert ok
