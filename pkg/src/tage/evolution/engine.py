"""Two-population genetic programming loop."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..kernel import PASS, Evaluation, Evaluator
from ..rng import derive_rng
from ..sim import DEFAULT_STATE_CAP, FitnessWeights, default_weights
from ..ta import TimedAutomaton, simplify
from ..traces import TimedTrace
from .operators import Alphabet, Mutator, Shape, create_random_ta, crossover
from .selection import select

P_MUT_RANGE = (0.1, 0.9)
_GLOBAL, _LOCAL, _TFAIL = 0, 1, 2
_NS = 7  # stream namespace of the search


@dataclass
class EvolutionConfig:
    n_pop: int = 2000
    g_max: int = 3000
    g_change: int = 10
    g_simp: int = 10
    p_cr: float = 0.25
    p_mut_init: float = 0.33
    n_sel_init: Optional[int] = None  # default n_pop // 10
    n_sel_ramp: int = 200  # generations until no truncation is left
    n_t: int = 10
    p_t: float = 0.5
    n_clock: int = 1
    c_max: int = 10
    state_cap: int = DEFAULT_STATE_CAP
    seed: int = 0
    weights: FitnessWeights = field(default_factory=default_weights)
    geo_guard: float = 0.5
    geo_reset: float = 0.5
    geo_edges: float = 0.5
    time_limit: Optional[float] = None  # wall seconds; runs cut short by it are not reproducible

    def __post_init__(self):
        if self.n_pop < 1:
            raise ValueError("n_pop must be positive")
        if self.n_sel_init is None:
            self.n_sel_init = max(1, self.n_pop // 10)
        if not 1 <= self.n_sel_init <= self.n_pop:
            raise ValueError("n_sel_init must lie in [1, n_pop]")
        if not 0 <= self.p_cr <= 1:
            raise ValueError("p_cr must be a probability")
        if self.g_max < 0:
            raise ValueError("g_max must be non-negative")

    @property
    def n_mig(self) -> int:
        return math.ceil(5 * self.n_pop / 100)

    def n_sel(self, generation: int) -> int:
        grow = math.ceil(generation * (self.n_pop - self.n_sel_init) / max(self.n_sel_ramp, 1))
        return min(self.n_pop, self.n_sel_init + grow)


@dataclass
class Candidate:
    ta: TimedAutomaton
    p_mut: float
    fitness: Optional[float] = None
    verdicts: Optional[np.ndarray] = None
    edge_faults: Optional[np.ndarray] = None
    location_faults: Optional[np.ndarray] = None
    migrated: bool = False

    def assign(self, ev: Evaluation):
        self.fitness = ev.value
        self.verdicts = ev.verdicts
        self.edge_faults = ev.edge_faults
        self.location_faults = ev.location_faults

    def clear(self) -> "Candidate":
        return Candidate(self.ta, self.p_mut, migrated=self.migrated)

    def order_key(self):
        return (-self.fitness, self.ta.size, self.ta.key())


def adapt_p_mut(p: float, rng) -> float:
    factor = rng.choice((1.0, 10 / 9, 9 / 10))
    lo, hi = P_MUT_RANGE
    return min(hi, max(lo, p * factor))


@dataclass
class RunReport:
    generations: int
    wall_time: float
    final_fitness: float
    converged: bool
    training_pass: int
    best_fitness_series: list
    local_fitness_series: list
    t_fail_sizes: list
    learned_text: str

    def deterministic_view(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        return d


def _sorted(cands: Iterable[Candidate]) -> list[Candidate]:
    return sorted(cands, key=Candidate.order_key)


class Search:
    """State of one learning run; :func:`evolve` drives it."""

    def __init__(self, cfg: EvolutionConfig, training: Sequence[TimedTrace], inputs=None, outputs=None):
        if not training:
            raise ValueError("training set is empty")
        self.cfg = cfg
        self.training = list(training)
        labels = set()
        for tt in self.training:
            labels |= tt.labels()
        ins = set(inputs or ()) | {a for a in labels if a.is_input}
        outs = set(outputs or ()) | {a for a in labels if a.is_output}
        self.alphabet = Alphabet(ins, outs)
        self.shape = Shape(self.alphabet, cfg.n_clock, cfg.c_max, cfg.geo_guard, cfg.geo_reset)
        self.mutator = Mutator(self.shape)
        self.evaluator = Evaluator(
            self.training, cfg.weights, cfg.state_cap, alphabet=self.alphabet.labels, n_clock=cfg.n_clock
        )
        self.n_test = len(self.training)
        self.t_fail_min = math.ceil(self.n_test / 100)
        self.generation = 0
        self._global_cache: dict = {}
        self._local_cache: dict = {}
        self._local_key: Optional[tuple] = None
        self.t_fail: list[int] = []

    def rng(self, population: int, slot: int):
        return derive_rng(self.cfg.seed, _NS, self.generation, population, slot)

    def initial_population(self, population: int) -> list[Candidate]:
        return [
            Candidate(create_random_ta(self.shape, self.rng(population, i), self.cfg.geo_edges), self.cfg.p_mut_init)
            for i in range(self.cfg.n_pop)
        ]

    def _evaluate(self, cands: list[Candidate], cache: dict, subset) -> None:
        todo = {}
        for c in cands:
            if c.ta not in cache and c.ta not in todo:
                todo[c.ta] = None
        if todo:
            tas = list(todo)
            for ta, ev in zip(tas, self.evaluator.evaluate(tas, subset)):
                cache[ta] = ev
        for c in cands:
            c.assign(cache[c.ta])

    def evaluate_global(self, cands: list[Candidate]) -> None:
        self._evaluate(cands, self._global_cache, None)
        live = {c.ta for c in cands}
        self._global_cache = {ta: ev for ta, ev in self._global_cache.items() if ta in live}

    def evaluate_local(self, cands: list[Candidate]) -> None:
        key = tuple(self.t_fail)
        if key != self._local_key:
            self._local_cache = {}
            self._local_key = key
        self._evaluate(cands, self._local_cache, self.t_fail)
        live = {c.ta for c in cands}
        self._local_cache = {ta: ev for ta, ev in self._local_cache.items() if ta in live}

    def compute_t_fail(self, best: Candidate) -> list[int]:
        failing = [int(i) for i in np.flatnonzero(best.verdicts != PASS)]
        if len(failing) < self.t_fail_min:
            rng = self.rng(_TFAIL, 0)
            rest = sorted(set(range(self.n_test)) - set(failing))
            failing += rng.sample(rest, self.t_fail_min - len(failing))
        return sorted(failing)

    def offspring(self, pool: list[Candidate], partners: list[Candidate], population: int) -> list[Candidate]:
        cfg = self.cfg
        children = []
        for slot in range(cfg.n_pop):
            rng = self.rng(population, slot)
            r = rng.random()
            if r < 1 - cfg.p_cr or len(pool) + len(partners) < 2:
                parent = select(pool, rng, cfg.n_t, cfg.p_t)
                ta = self.mutator.mutate(
                    parent.ta, parent.p_mut, rng, parent.edge_faults, parent.location_faults
                )
                children.append(Candidate(ta, adapt_p_mut(parent.p_mut, rng)))
                continue
            a = select(pool, rng, cfg.n_t, cfg.p_t)
            if r < 1 - cfg.p_cr / 2 or not partners:
                b = a
                for _ in range(20):
                    if len(pool) < 2:
                        break
                    b = select(pool, rng, cfg.n_t, cfg.p_t)
                    if b is not a:
                        break
            else:
                b = select(partners, rng, cfg.n_t, cfg.p_t)
            ta = crossover(a.ta, b.ta, rng)
            children.append(Candidate(ta, (a.p_mut + b.p_mut) / 2))
        return children


def evolve(
    cfg: EvolutionConfig,
    training: Sequence[TimedTrace],
    progress_sink: Optional[Callable[[dict], None]] = None,
    inputs=None,
    outputs=None,
) -> tuple[TimedAutomaton, RunReport]:
    """Learn an automaton reproducing ``training``.

    Stops after ``g_max`` generations or once the fittest global candidate
    passes every trace and has stayed the same for ``g_change`` generations,
    or when the optional ``time_limit`` has elapsed.
    """
    start = time.perf_counter()
    s = Search(cfg, training, inputs, outputs)
    glob = s.initial_population(_GLOBAL)
    local = s.initial_population(_LOCAL)
    best_local: Optional[Candidate] = None
    series, local_series, t_fail_sizes = [], [], []
    last_sig, unchanged = None, 0
    while True:
        s.evaluate_global(glob)
        glob = _sorted(glob)
        best = glob[0]
        sig = (best.fitness, best.ta.key())
        unchanged = unchanged + 1 if sig == last_sig else 0
        last_sig = sig
        series.append(best.fitness)
        all_pass = bool(np.all(best.verdicts == PASS))

        s.t_fail = s.compute_t_fail(best)
        t_fail_sizes.append(len(s.t_fail))
        if best_local is not None:
            local.append(best_local.clear())
        s.evaluate_local(local)
        local = _sorted(local)
        best_local = local[0]
        local_series.append(best_local.fitness)

        if progress_sink is not None:
            progress_sink(
                {
                    "generation": s.generation,
                    "best_global": best.fitness,
                    "best_local": best_local.fitness,
                    "t_fail": len(s.t_fail),
                    "pass_rate": float(np.mean(best.verdicts == PASS)),
                    "size": best.ta.size,
                    "locations": best.ta.n_locations,
                    "wall_time": time.perf_counter() - start,
                }
            )
        if s.generation >= cfg.g_max:
            break
        if all_pass and unchanged >= cfg.g_change:
            break
        if cfg.time_limit is not None and time.perf_counter() - start >= cfg.time_limit:
            break

        n_sel = cfg.n_sel(s.generation)
        migrants = []
        for c in local[: cfg.n_mig]:
            if np.any(c.verdicts == PASS):
                migrants.append(Candidate(c.ta, c.p_mut, c.fitness, c.verdicts, c.edge_faults, c.location_faults, True))
        resident = [c for c in glob if not c.migrated]
        pool = _sorted(resident[:n_sel] + [c for c in glob if c.migrated])
        local_pool = local[:n_sel]
        partners = migrants if migrants else local_pool

        new_glob = s.offspring(pool, partners, _GLOBAL)
        new_local = s.offspring(local_pool, local_pool, _LOCAL)
        new_glob.extend(Candidate(m.ta, m.p_mut, migrated=True) for m in migrants)
        new_glob.append(Candidate(best.ta, best.p_mut))

        s.generation += 1
        if cfg.g_simp and s.generation % cfg.g_simp == 0:
            new_glob = [replace(c, ta=simplify(c.ta)) for c in new_glob]
            new_local = [replace(c, ta=simplify(c.ta)) for c in new_local]
            best_local = replace(best_local, ta=simplify(best_local.ta))
        glob, local = new_glob, new_local

    learned = simplify(best.ta)
    final = s.evaluator.evaluate([learned])[0]
    report = RunReport(
        generations=s.generation,
        wall_time=time.perf_counter() - start,
        final_fitness=final.value,
        converged=final.all_pass,
        training_pass=final.n_pass,
        best_fitness_series=series,
        local_fitness_series=local_series,
        t_fail_sizes=t_fail_sizes,
        learned_text=learned.to_text(),
    )
    return learned, report
