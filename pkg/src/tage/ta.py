"""Timed automata with eager (urgent) outputs.

Locations are dense integers ``0..n_locations-1``.  Time is exact: clock
values and delays are :class:`fractions.Fraction` instances, guard bounds
are natural numbers.  Input-enabledness is implicit; an input without an
enabled edge leaves the state unchanged, and such self-loops are never
stored in the automaton.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, NamedTuple, Optional, Sequence

INPUT = "input"
OUTPUT = "output"

OPS = ("<", "<=", ">=", ">")
OUTPUT_OPS = ("<", "<=", ">=")


class StructureError(ValueError):
    """Raised for automata that violate structural invariants."""


@dataclass(frozen=True, order=True)
class ActionLabel:
    name: str
    kind: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("action name must be nonempty")
        if self.kind not in (INPUT, OUTPUT):
            raise ValueError(f"unknown action kind {self.kind!r}")

    @property
    def is_input(self) -> bool:
        return self.kind == INPUT

    @property
    def is_output(self) -> bool:
        return self.kind == OUTPUT

    def __str__(self):
        return self.name + ("?" if self.kind == INPUT else "!")

    @classmethod
    def parse(cls, text: str) -> "ActionLabel":
        if len(text) < 2 or text[-1] not in "?!":
            raise ValueError(f"action {text!r} needs a '?' or '!' suffix")
        return cls(text[:-1], INPUT if text[-1] == "?" else OUTPUT)


def inp(name: str) -> ActionLabel:
    return ActionLabel(name, INPUT)


def out(name: str) -> ActionLabel:
    return ActionLabel(name, OUTPUT)


@dataclass(frozen=True, order=True)
class ClockConstraint:
    clock: int
    op: str
    bound: int

    def __post_init__(self):
        if self.op not in OPS:
            raise ValueError(f"unknown relation {self.op!r}")
        if not isinstance(self.bound, int) or self.bound < 0:
            raise ValueError(f"bound must be a natural number, got {self.bound!r}")
        if self.clock < 0:
            raise ValueError("clock index must be non-negative")

    def holds(self, value) -> bool:
        op = self.op
        if op == ">=":
            return value >= self.bound
        if op == "<=":
            return value <= self.bound
        if op == "<":
            return value < self.bound
        return value > self.bound

    @property
    def is_lower(self) -> bool:
        return self.op in (">=", ">")

    def __str__(self):
        return f"c{self.clock}{self.op}{self.bound}"


@dataclass(frozen=True)
class Guard:
    """Conjunction of clock constraints; the empty guard is true."""

    constraints: tuple[ClockConstraint, ...] = ()

    def __post_init__(self):
        # canonical form: sorted, duplicate atoms dropped
        atoms = tuple(sorted(set(self.constraints)))
        object.__setattr__(self, "constraints", atoms)

    @classmethod
    def of(cls, *atoms: ClockConstraint) -> "Guard":
        return cls(tuple(atoms))

    def __bool__(self):
        return bool(self.constraints)

    def __len__(self):
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def __str__(self):
        if not self.constraints:
            return "true"
        return " & ".join(str(a) for a in self.constraints)

    @classmethod
    def parse(cls, text: str) -> "Guard":
        text = text.strip()
        if text in ("true", "⊤", ""):
            return cls()
        atoms = []
        for part in text.split("&"):
            part = part.strip()
            if not part.startswith("c"):
                raise ValueError(f"bad clock constraint {part!r}")
            for op in ("<=", ">=", "<", ">"):
                if op in part:
                    clock, bound = part[1:].split(op)
                    atoms.append(ClockConstraint(int(clock), op, int(bound)))
                    break
            else:
                raise ValueError(f"bad clock constraint {part!r}")
        return cls(tuple(atoms))


TRUE = Guard()


@dataclass(frozen=True)
class Edge:
    source: int
    label: ActionLabel
    guard: Guard
    resets: frozenset = frozenset()
    target: int = 0

    def __post_init__(self):
        if not isinstance(self.resets, frozenset):
            object.__setattr__(self, "resets", frozenset(self.resets))
        if self.label.is_output and any(a.op == ">" for a in self.guard):
            raise StructureError(f"output edge with strict lower bound: {self}")

    def sort_key(self):
        return (self.source, str(self.label), self.target, str(self.guard), tuple(sorted(self.resets)))

    def resets_text(self) -> str:
        return "{" + ",".join(f"c{c}" for c in sorted(self.resets)) + "}"

    def __str__(self):
        return f"{self.source} -- {self.guard} / {self.label} / {self.resets_text()} --> {self.target}"


@dataclass(frozen=True)
class TimedAutomaton:
    inputs: frozenset
    outputs: frozenset
    n_clock: int
    n_locations: int
    initial: int
    edges: tuple[Edge, ...]
    _key: Optional[tuple] = field(default=None, compare=False, repr=False, hash=False)
    _hash: Optional[int] = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "inputs", frozenset(self.inputs))
        object.__setattr__(self, "outputs", frozenset(self.outputs))
        if self.n_locations < 1:
            raise StructureError("an automaton needs at least one location")
        if not 0 <= self.initial < self.n_locations:
            raise StructureError(f"initial location {self.initial} out of range")
        if self.n_clock < 0:
            raise StructureError("negative clock count")
        for a in self.inputs:
            if not a.is_input:
                raise StructureError(f"{a} listed as input")
        for a in self.outputs:
            if not a.is_output:
                raise StructureError(f"{a} listed as output")
        alphabet = self.inputs | self.outputs
        for e in self.edges:
            if not (0 <= e.source < self.n_locations and 0 <= e.target < self.n_locations):
                raise StructureError(f"edge endpoint out of range: {e}")
            if e.label not in alphabet:
                raise StructureError(f"edge label {e.label} not in alphabet")
            for c in e.resets:
                if not 0 <= c < self.n_clock:
                    raise StructureError(f"reset of unknown clock c{c}")
            for a in e.guard:
                if a.clock >= self.n_clock:
                    raise StructureError(f"guard on unknown clock c{a.clock}")
        edges = tuple(sorted(self.edges, key=Edge.sort_key))
        object.__setattr__(self, "edges", edges)

    @property
    def locations(self) -> range:
        return range(self.n_locations)

    @property
    def alphabet(self) -> frozenset:
        return self.inputs | self.outputs

    def key(self) -> tuple:
        """Structural identity, cheap to hash and compare after first use."""
        if self._key is None:
            k = (
                self.n_locations,
                self.initial,
                self.n_clock,
                tuple(sorted(map(str, self.alphabet))),
                tuple(
                    (e.source, str(e.label), e.target, e.guard.constraints, tuple(sorted(e.resets)))
                    for e in self.edges
                ),
            )
            object.__setattr__(self, "_key", k)
        return self._key

    def __eq__(self, other):
        if not isinstance(other, TimedAutomaton):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(self, "_hash", hash(self.key()))
        return self._hash

    def __getstate__(self):
        # string hashes differ between processes
        return {k: v for k, v in self.__dict__.items() if k != "_hash"} | {"_hash": None}

    def outgoing(self, location: int) -> list[Edge]:
        return [e for e in self.edges if e.source == location]

    def replace(self, **changes) -> "TimedAutomaton":
        fields = dict(
            inputs=self.inputs,
            outputs=self.outputs,
            n_clock=self.n_clock,
            n_locations=self.n_locations,
            initial=self.initial,
            edges=self.edges,
        )
        fields.update(changes)
        return TimedAutomaton(**fields)

    @property
    def size(self) -> int:
        return len(self.edges)

    def max_constant(self) -> int:
        return max((a.bound for e in self.edges for a in e.guard), default=0)

    def constants(self) -> set[int]:
        return {a.bound for e in self.edges for a in e.guard}

    # -- text and DOT serialization ---------------------------------------

    def to_text(self) -> str:
        lines = [
            "inputs: " + " ".join(sorted(map(str, self.inputs))),
            "outputs: " + " ".join(sorted(map(str, self.outputs))),
            f"clocks: {self.n_clock}",
            f"locations: {self.n_locations}",
            f"initial: {self.initial}",
        ]
        lines.extend(str(e) for e in self.edges)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TimedAutomaton":
        header = {}
        edges = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                if " -- " in line:
                    edges.append(_parse_edge_line(line))
                else:
                    key, _, value = line.partition(":")
                    header[key.strip()] = value.strip()
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        try:
            inputs = frozenset(ActionLabel.parse(a) for a in header.get("inputs", "").split())
            outputs = frozenset(ActionLabel.parse(a) for a in header.get("outputs", "").split())
            return cls(
                inputs=inputs,
                outputs=outputs,
                n_clock=int(header["clocks"]),
                n_locations=int(header["locations"]),
                initial=int(header["initial"]),
                edges=tuple(edges),
            )
        except KeyError as exc:
            raise ValueError(f"missing header field {exc.args[0]!r}") from None

    def to_dot(self, name: str = "TA") -> str:
        out_lines = [f"digraph {name} {{", "  rankdir=LR;", "  __start [shape=point];"]
        for l in self.locations:
            out_lines.append(f'  l{l} [shape=circle, label="l{l}"];')
        out_lines.append(f"  __start -> l{self.initial};")
        for e in self.edges:
            guard = "⊤" if not e.guard else " ∧ ".join(str(a).replace("<=", "≤").replace(">=", "≥") for a in e.guard)
            label = f"{guard} / {e.label} / {e.resets_text()}"
            out_lines.append(f'  l{e.source} -> l{e.target} [label="{label}"];')
        out_lines.append("}")
        return "\n".join(out_lines) + "\n"


def _parse_edge_line(line: str) -> Edge:
    left, _, rest = line.partition(" -- ")
    body, sep, target = rest.rpartition(" --> ")
    if not sep:
        raise ValueError(f"malformed edge {line!r}")
    parts = [p.strip() for p in body.split(" / ")]
    if len(parts) != 3:
        raise ValueError(f"malformed edge {line!r}")
    guard_text, label_text, reset_text = parts
    if not (reset_text.startswith("{") and reset_text.endswith("}")):
        raise ValueError(f"malformed reset set {reset_text!r}")
    resets = frozenset(int(c.strip()[1:]) for c in reset_text[1:-1].split(",") if c.strip())
    return Edge(int(left), ActionLabel.parse(label_text), Guard.parse(guard_text), resets, int(target))


# -- valuations and TTS states ---------------------------------------------


def zero(n_clock: int) -> tuple:
    return (Fraction(0),) * n_clock


def delay(valuation: Sequence, d) -> tuple:
    if d < 0:
        raise ValueError("negative delay")
    return tuple(v + d for v in valuation)


def reset(valuation: Sequence, clocks: Iterable[int]) -> tuple:
    clocks = set(clocks)
    return tuple(Fraction(0) if i in clocks else v for i, v in enumerate(valuation))


class TtsState(NamedTuple):
    location: int
    valuation: tuple


def initial_state(ta: TimedAutomaton) -> TtsState:
    return TtsState(ta.initial, zero(ta.n_clock))


def guard_satisfied(guard: Guard, valuation: Sequence) -> bool:
    for atom in guard.constraints:
        if atom.clock >= len(valuation):
            raise StructureError(f"guard refers to clock c{atom.clock} of a {len(valuation)}-clock valuation")
        if not atom.holds(valuation[atom.clock]):
            return False
    return True


def discrete_successors(ta: TimedAutomaton, q: TtsState, action: ActionLabel) -> set[TtsState]:
    """Explicit successors only; the implicit input self-loop is the caller's business."""
    return {
        TtsState(e.target, reset(q.valuation, e.resets))
        for e in ta.edges
        if e.source == q.location and e.label == action and guard_satisfied(e.guard, q.valuation)
    }


class DelayWindow(NamedTuple):
    """Set of delays ``d >= 0`` after which a guard holds: an interval."""

    lo: Fraction
    lo_strict: bool
    hi: Optional[Fraction]  # None means unbounded
    hi_strict: bool

    def contains(self, d) -> bool:
        if d < self.lo or (self.lo_strict and d == self.lo):
            return False
        if self.hi is None:
            return True
        return d < self.hi or (not self.hi_strict and d == self.hi)


def delay_window(guard: Guard, valuation: Sequence) -> Optional[DelayWindow]:
    lo, lo_strict = Fraction(0), False
    hi, hi_strict = None, False
    for atom in guard.constraints:
        a = atom.bound - valuation[atom.clock]
        if atom.op in (">=", ">"):
            strict = atom.op == ">"
            if a > lo or (a == lo and strict):
                lo, lo_strict = a, strict
        else:
            strict = atom.op == "<"
            if hi is None or a < hi or (a == hi and strict):
                hi, hi_strict = a, strict
    if hi is not None and (hi < lo or (hi == lo and (lo_strict or hi_strict))):
        return None
    return DelayWindow(lo, lo_strict, hi, hi_strict)


def window_meets(w: DelayWindow, limit, inclusive: bool) -> bool:
    """Whether the window intersects ``[0, limit]`` (or ``[0, limit)``)."""
    if w.lo > limit:
        return False
    if w.lo == limit:
        return inclusive and not w.lo_strict
    return True


def earliest_output_enabling(ta: TimedAutomaton, q: TtsState, horizon) -> Optional[tuple]:
    """Smallest delay within ``horizon`` after which an output edge is enabled.

    Returns ``(d, edges)`` with every output edge enabled at exactly ``d``,
    or ``None``.  Edges whose guard has a strict lower bound never attain a
    minimum and are ignored; well-formed automata have none on outputs.
    """
    if horizon < 0:
        raise ValueError("negative horizon")
    best = None
    candidates = []
    for e in ta.edges:
        if e.source != q.location or not e.label.is_output:
            continue
        w = delay_window(e.guard, q.valuation)
        if w is None or w.lo_strict or w.lo > horizon:
            continue
        candidates.append((e, w))
        if best is None or w.lo < best:
            best = w.lo
    if best is None:
        return None
    enabled = tuple(e for e, w in candidates if w.contains(best))
    return best, enabled


# -- well-formedness ----------------------------------------------------------


def _box(guard: Guard, n_clock: int):
    # per-clock interval (lo, lo_strict, hi, hi_strict); hi None = unbounded
    box = [[0, False, None, False] for _ in range(n_clock)]
    for atom in guard.constraints:
        iv = box[atom.clock]
        k = atom.bound
        if atom.is_lower:
            strict = atom.op == ">"
            if k > iv[0] or (k == iv[0] and strict):
                iv[0], iv[1] = k, strict
        else:
            strict = atom.op == "<"
            if iv[2] is None or k < iv[2] or (k == iv[2] and strict):
                iv[2], iv[3] = k, strict
    return box


def guards_overlap(g1: Guard, g2: Guard, n_clock: int) -> Optional[tuple]:
    """A witness valuation satisfying both guards, or ``None``.

    Bounds are integers, so a nonempty box always contains a point whose
    coordinates are integers or half-integers; the least such point is
    returned.
    """
    point = []
    for iv1, iv2 in zip(_box(g1, n_clock), _box(g2, n_clock)):
        lo, lo_s = iv1[0], iv1[1]
        if iv2[0] > lo or (iv2[0] == lo and iv2[1]):
            lo, lo_s = iv2[0], iv2[1]
        hi, hi_s = iv1[2], iv1[3]
        if iv2[2] is not None and (hi is None or iv2[2] < hi or (iv2[2] == hi and iv2[3])):
            hi, hi_s = iv2[2], iv2[3]
        x = Fraction(lo) + (Fraction(1, 2) if lo_s else 0)
        if hi is not None and (x > hi or (x == hi and hi_s)):
            return None
        point.append(x)
    return tuple(point)


@dataclass
class WellFormednessReport:
    output_guard_strictness_ok: bool = True
    deterministic: bool = True
    input_enabled_implicitly: bool = True
    isolated_outputs: bool = True
    witnesses: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return (
            self.output_guard_strictness_ok
            and self.deterministic
            and self.input_enabled_implicitly
            and self.isolated_outputs
        )


def check_well_formed(ta: TimedAutomaton) -> WellFormednessReport:
    """Static testability check.

    Determinism and output isolation are decided per location by exact
    pairwise intersection of guard boxes; this over-approximates the
    reachable valuations, so a violation may be unreachable but a clean
    report is always sound.
    """
    report = WellFormednessReport()
    for e in ta.edges:
        if e.label.is_output and any(a.op == ">" for a in e.guard):
            report.output_guard_strictness_ok = False
            report.witnesses.setdefault("output_guard_strictness_ok", e)
    for loc in ta.locations:
        edges = ta.outgoing(loc)
        for i, e1 in enumerate(edges):
            for e2 in edges[i + 1:]:
                same_label = e1.label == e2.label
                if same_label and (e1.target, e1.resets) == (e2.target, e2.resets):
                    continue
                if not same_label and not (e1.label.is_output and e2.label.is_output):
                    continue
                point = guards_overlap(e1.guard, e2.guard, ta.n_clock)
                if point is None:
                    continue
                prop = "deterministic" if same_label else "isolated_outputs"
                setattr(report, prop, False)
                report.witnesses.setdefault(prop, (TtsState(loc, point), e1, e2))
    return report


# -- simplification -------------------------------------------------------------


def reachable_locations(ta: TimedAutomaton) -> list[int]:
    """Locations reachable in the underlying graph, in breadth-first order."""
    succ = {}
    for e in ta.edges:
        succ.setdefault(e.source, []).append(e.target)
    order = [ta.initial]
    seen = {ta.initial}
    queue = deque(order)
    while queue:
        l = queue.popleft()
        for t in succ.get(l, ()):
            if t not in seen:
                seen.add(t)
                order.append(t)
                queue.append(t)
    return order


def _redundant_self_loop(e: Edge, edges: list[Edge], n_clock: int) -> bool:
    # dropping it must not remove a successor next to an overlapping edge
    if not (e.label.is_input and e.source == e.target and not e.resets):
        return False
    for other in edges:
        if other is e or other.label != e.label:
            continue
        if other.source == other.target and not other.resets:
            continue
        if guards_overlap(e.guard, other.guard, n_clock) is not None:
            return False
    return True


def simplify(ta: TimedAutomaton) -> TimedAutomaton:
    order = reachable_locations(ta)
    renumber = {old: new for new, old in enumerate(order)}
    by_source: dict[int, list[Edge]] = {}
    for e in ta.edges:
        if e.source in renumber:
            by_source.setdefault(e.source, []).append(e)
    kept = []
    seen = set()
    for l in order:
        edges = by_source.get(l, [])
        for e in edges:
            if _redundant_self_loop(e, edges, ta.n_clock):
                continue
            ne = Edge(renumber[e.source], e.label, e.guard, e.resets, renumber[e.target])
            k = ne.sort_key()
            if k in seen:
                continue
            seen.add(k)
            kept.append(ne)
    return ta.replace(n_locations=len(order), initial=0, edges=tuple(kept))
