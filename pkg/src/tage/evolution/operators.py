"""Random creation, mutation and crossover of timed automata."""
from __future__ import annotations

import random
from collections import deque
from typing import Optional, Sequence

from ..rng import geometric0
from ..ta import OPS, OUTPUT_OPS, ClockConstraint, Edge, Guard, TimedAutomaton

OPERATORS = (
    "add_constraint",
    "change_guard",
    "change_target",
    "remove_guard",
    "change_resets",
    "remove_edge",
    "add_edge",
    "sink_location",
    "merge_location",
    "split_location",
    "add_location",
    "split_edge",
)

MAX_OPERATOR_RESAMPLES = 20


class Alphabet:
    """Inputs and outputs in a fixed order, for reproducible uniform draws."""

    def __init__(self, inputs, outputs):
        self.inputs = sorted(inputs)
        self.outputs = sorted(outputs)
        self.labels = self.inputs + self.outputs
        if not self.labels:
            raise ValueError("empty alphabet")

    @classmethod
    def of(cls, ta: TimedAutomaton) -> "Alphabet":
        return cls(ta.inputs, ta.outputs)


class Shape:
    """The knobs shared by every random construction."""

    def __init__(self, alphabet: Alphabet, n_clock: int, c_max: int, geo_guard: float = 0.5, geo_reset: float = 0.5):
        self.alphabet = alphabet
        self.n_clock = n_clock
        self.c_max = c_max
        self.geo_guard = geo_guard
        self.geo_reset = geo_reset


def random_constraint(shape: Shape, rng: random.Random, output: bool) -> ClockConstraint:
    ops = OUTPUT_OPS if output else OPS
    return ClockConstraint(rng.randrange(shape.n_clock), rng.choice(ops), rng.randint(0, shape.c_max))


def random_guard(shape: Shape, rng: random.Random, output: bool, min_atoms: int = 0) -> Guard:
    if shape.n_clock == 0:
        return Guard()
    n = min_atoms + geometric0(rng, shape.geo_guard)
    return Guard(tuple(random_constraint(shape, rng, output) for _ in range(n)))


def random_resets(shape: Shape, rng: random.Random) -> frozenset:
    # mass beyond n_clock folds onto "reset everything"
    k = min(geometric0(rng, shape.geo_reset), shape.n_clock)
    return frozenset(rng.sample(range(shape.n_clock), k))


def random_edge(shape: Shape, rng: random.Random, source: int, target: int) -> Edge:
    label = rng.choice(shape.alphabet.labels)
    guard = random_guard(shape, rng, label.is_output)
    return Edge(source, label, guard, random_resets(shape, rng), target)


def _build(shape: Shape, n_locations: int, initial: int, edges) -> TimedAutomaton:
    return TimedAutomaton(
        inputs=frozenset(shape.alphabet.inputs),
        outputs=frozenset(shape.alphabet.outputs),
        n_clock=shape.n_clock,
        n_locations=n_locations,
        initial=initial,
        edges=tuple(edges),
    )


def create_random_ta(shape: Shape, rng: random.Random, edge_geo: float = 0.5) -> TimedAutomaton:
    """Two locations, ``1 + Geometric(edge_geo)`` random edges, the first from l0 to l1."""
    n_edges = 1 + geometric0(rng, edge_geo)
    edges = [random_edge(shape, rng, 0, 1)]
    for _ in range(n_edges - 1):
        edges.append(random_edge(shape, rng, rng.randrange(2), rng.randrange(2)))
    return _build(shape, 2, 0, edges)


class _Draft:
    """Mutable working copy; selection weights travel with their edge or location."""

    def __init__(self, ta: TimedAutomaton, edge_faults=None, location_faults=None):
        self.n_locations = ta.n_locations
        self.initial = ta.initial
        self.edges = list(ta.edges)
        if edge_faults is not None and len(edge_faults) == len(self.edges):
            self.edge_w = [1.0 + float(f) for f in edge_faults]
        else:
            self.edge_w = [1.0] * len(self.edges)
        if location_faults is not None and len(location_faults) == ta.n_locations:
            self.loc_w = [1.0 + float(f) for f in location_faults]
        else:
            self.loc_w = [1.0] * ta.n_locations

    def pick_edge(self, rng, indices: Optional[Sequence[int]] = None) -> int:
        if indices is None:
            indices = range(len(self.edges))
        indices = list(indices)
        return rng.choices(indices, weights=[self.edge_w[i] for i in indices])[0]

    def pick_location(self, rng, exclude: Optional[int] = None) -> int:
        locs = [l for l in range(self.n_locations) if l != exclude]
        return rng.choices(locs, weights=[self.loc_w[l] for l in locs])[0]

    def add_location(self) -> int:
        self.n_locations += 1
        self.loc_w.append(1.0)
        return self.n_locations - 1

    def add_edge(self, e: Edge, weight: float = 1.0):
        self.edges.append(e)
        self.edge_w.append(weight)

    def set_edge(self, i: int, **changes):
        e = self.edges[i]
        fields = dict(source=e.source, label=e.label, guard=e.guard, resets=e.resets, target=e.target)
        fields.update(changes)
        self.edges[i] = Edge(**fields)

    def remove_edge(self, i: int):
        del self.edges[i]
        del self.edge_w[i]


class Mutator:
    def __init__(self, shape: Shape):
        self.shape = shape

    # each operator returns False when it cannot apply to the draft

    def add_constraint(self, dr: _Draft, rng) -> bool:
        if not dr.edges or self.shape.n_clock == 0:
            return False
        i = dr.pick_edge(rng)
        e = dr.edges[i]
        atom = random_constraint(self.shape, rng, e.label.is_output)
        dr.set_edge(i, guard=Guard(e.guard.constraints + (atom,)))
        return True

    def change_guard(self, dr: _Draft, rng) -> bool:
        if not dr.edges or self.shape.n_clock == 0:
            return False
        i = dr.pick_edge(rng)
        e = dr.edges[i]
        output = e.label.is_output
        if not e.guard:
            dr.set_edge(i, guard=random_guard(self.shape, rng, output, min_atoms=1))
            return True
        atoms = list(e.guard.constraints)
        j = rng.randrange(len(atoms))
        a = atoms[j]
        move = rng.randrange(3)
        if move == 0:
            flipped = {"<": "<=", "<=": "<", ">=": ">", ">": ">="}[a.op]
            if output and flipped == ">":
                move = 1
            else:
                atoms[j] = ClockConstraint(a.clock, flipped, a.bound)
        if move == 1:
            step = rng.randint(1, 3) * rng.choice((-1, 1))
            atoms[j] = ClockConstraint(a.clock, a.op, max(0, a.bound + step))
        elif move == 2:
            atoms[j] = random_constraint(self.shape, rng, output)
        dr.set_edge(i, guard=Guard(tuple(atoms)))
        return True

    def change_target(self, dr: _Draft, rng) -> bool:
        if not dr.edges or dr.n_locations < 2:
            return False
        i = dr.pick_edge(rng)
        choices = [l for l in range(dr.n_locations) if l != dr.edges[i].target]
        dr.set_edge(i, target=rng.choice(choices))
        return True

    def remove_guard(self, dr: _Draft, rng) -> bool:
        guarded = [i for i, e in enumerate(dr.edges) if e.guard]
        if not guarded:
            return False
        i = dr.pick_edge(rng, guarded)
        atoms = list(dr.edges[i].guard.constraints)
        if rng.random() < 0.5 or len(atoms) == 1:
            atoms = []
        else:
            del atoms[rng.randrange(len(atoms))]
        dr.set_edge(i, guard=Guard(tuple(atoms)))
        return True

    def change_resets(self, dr: _Draft, rng) -> bool:
        if not dr.edges or self.shape.n_clock == 0:
            return False
        i = dr.pick_edge(rng)
        c = rng.randrange(self.shape.n_clock)
        dr.set_edge(i, resets=dr.edges[i].resets ^ {c})
        return True

    def remove_edge(self, dr: _Draft, rng) -> bool:
        if not dr.edges:
            return False
        dr.remove_edge(dr.pick_edge(rng))
        return True

    def add_edge(self, dr: _Draft, rng) -> bool:
        src = dr.pick_location(rng)
        dr.add_edge(random_edge(self.shape, rng, src, rng.randrange(dr.n_locations)))
        return True

    def sink_location(self, dr: _Draft, rng) -> bool:
        src = dr.pick_location(rng)
        new = dr.add_location()
        dr.add_edge(random_edge(self.shape, rng, src, new))
        return True

    def merge_location(self, dr: _Draft, rng) -> bool:
        if dr.n_locations < 2:
            return False
        keep = dr.pick_location(rng)
        gone = dr.pick_location(rng, exclude=keep)

        def rename(l):
            l = keep if l == gone else l
            return l - 1 if l > gone else l

        if dr.initial == gone:
            dr.initial = keep
        dr.initial = rename(dr.initial)
        dr.edges = [
            Edge(rename(e.source), e.label, e.guard, e.resets, rename(e.target)) for e in dr.edges
        ]
        dr.loc_w[keep] += dr.loc_w[gone] - 1.0
        del dr.loc_w[gone]
        dr.n_locations -= 1
        return True

    def split_location(self, dr: _Draft, rng) -> bool:
        if not dr.edges:
            return False
        i = dr.pick_edge(rng)
        old = dr.edges[i].target
        new = dr.add_location()
        for j, e in enumerate(list(dr.edges)):
            if e.source == old:
                dr.add_edge(Edge(new, e.label, e.guard, e.resets, e.target), dr.edge_w[j])
        dr.set_edge(i, target=new)
        return True

    def add_location(self, dr: _Draft, rng) -> bool:
        src = dr.pick_location(rng)
        dst = rng.randrange(dr.n_locations)
        new = dr.add_location()
        dr.add_edge(random_edge(self.shape, rng, src, new))
        dr.add_edge(random_edge(self.shape, rng, new, dst))
        return True

    def split_edge(self, dr: _Draft, rng) -> bool:
        if not dr.edges:
            return False
        i = dr.pick_edge(rng)
        e = dr.edges[i]
        mid = dr.add_location()
        if rng.random() < 0.5:
            # e' . e
            dr.add_edge(random_edge(self.shape, rng, e.source, mid))
            dr.set_edge(i, source=mid)
        else:
            # e . e'
            dr.add_edge(random_edge(self.shape, rng, mid, e.target))
            dr.set_edge(i, target=mid)
        return True

    def mutate(
        self,
        ta: TimedAutomaton,
        p_stop: float,
        rng: random.Random,
        edge_faults=None,
        location_faults=None,
        trace: Optional[list] = None,
    ) -> TimedAutomaton:
        """Iterated mutation: after every operator, stop with probability ``p_stop``.

        ``trace``, when given, collects the names of the applied operators.
        """
        dr = _Draft(ta, edge_faults, location_faults)
        while True:
            for _ in range(MAX_OPERATOR_RESAMPLES):
                name = rng.choice(OPERATORS)
                if getattr(self, name)(dr, rng):
                    if trace is not None:
                        trace.append(name)
                    break
            else:
                break
            if rng.random() < p_stop:
                break
        return _build(self.shape, dr.n_locations, dr.initial, dr.edges)


def crossover(a: TimedAutomaton, b: TimedAutomaton, rng: random.Random) -> TimedAutomaton:
    """Randomised product of two parents, explored breadth-first from the initial pair.

    No more than ``max(|L_a|, |L_b|)`` product locations are created; edges
    that would need a further one are dropped.
    """
    if a.alphabet != b.alphabet or a.n_clock != b.n_clock:
        raise ValueError("crossover parents must share alphabet and clocks")
    cap = max(a.n_locations, b.n_locations)
    out_a = [[] for _ in range(a.n_locations)]
    for e in a.edges:
        out_a[e.source].append(e)
    by_label_b = [{} for _ in range(b.n_locations)]
    for e in b.edges:
        by_label_b[e.source].setdefault(e.label, []).append(e)

    ids = {(a.initial, b.initial): 0}
    queue = deque([(a.initial, b.initial)])
    edges = []

    def link(src, label, guard, resets, pair):
        if pair not in ids:
            if len(ids) >= cap:
                return
            ids[pair] = len(ids)
            queue.append(pair)
        edges.append(Edge(src, label, guard, resets, ids[pair]))

    while queue:
        l1, l2 = queue.popleft()
        src = ids[(l1, l2)]
        labels_a = set()
        for e1 in out_a[l1]:
            labels_a.add(e1.label)
            partners = by_label_b[l2].get(e1.label)
            if partners:
                e2 = rng.choice(partners)
                guard = e1.guard if rng.random() < 0.5 else e2.guard
                resets = e1.resets if rng.random() < 0.5 else e2.resets
                link(src, e1.label, guard, resets, (e1.target, e2.target))
            else:
                link(src, e1.label, e1.guard, e1.resets, (e1.target, rng.randrange(b.n_locations)))
        for label in sorted(by_label_b[l2]):
            if label in labels_a:
                continue
            for e2 in by_label_b[l2][label]:
                link(src, e2.label, e2.guard, e2.resets, (rng.randrange(a.n_locations), e2.target))
    return a.replace(n_locations=len(ids), initial=0, edges=tuple(edges))
