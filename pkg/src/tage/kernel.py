"""Compiled batch simulation for fitness evaluation.

Time is mapped to integer ticks: with every timestamp a dyadic rational,
one tick is ``1/scale`` time units where ``scale`` is the largest
denominator in the trace set, so all clock arithmetic is exact.  Paths are
deduplicated by (state, hash of mark vector) where the reference simulator
uses the mark vector itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import os

import numpy as np
import numba
from numba import njit, prange

from .sim import DEFAULT_STATE_CAP, FitnessResult, FitnessWeights, Verdict
from .ta import OPS, TimedAutomaton
from .traces import TimedTrace

# an outdated system TBB makes numba warn on every process start; the
# portable workqueue layer needs no shared library
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

PASS, NONDET, FAIL = 0, 1, 2
VERDICTS = (Verdict.PASS, Verdict.NONDET, Verdict.FAIL)
_OP_CODE = {op: i for i, op in enumerate(OPS)}  # < <= >= >

_HASH_MULT = np.uint64(1000003)
_MARK = np.uint64(2)
_NOMARK = np.uint64(1)


@njit(cache=True)
def _window_meets(val, p, e, d, inclusive, e_atom_start, a_clock, a_op, a_bound):
    lo = 0
    lo_s = False
    hi = 0
    has_hi = False
    hi_s = False
    for a in range(e_atom_start[e], e_atom_start[e + 1]):
        x = a_bound[a] - val[p, a_clock[a]]
        op = a_op[a]
        if op >= 2:
            strict = op == 3
            if x > lo or (x == lo and strict):
                lo = x
                lo_s = strict
        else:
            strict = op == 0
            if (not has_hi) or x < hi or (x == hi and strict):
                hi = x
                hi_s = strict
                has_hi = True
    if has_hi and (hi < lo or (hi == lo and (lo_s or hi_s))):
        return False
    if lo > d:
        return False
    if lo == d:
        return inclusive and not lo_s
    return True


@njit(cache=True)
def _sat(val, p, d, e, e_atom_start, a_clock, a_op, a_bound):
    for a in range(e_atom_start[e], e_atom_start[e + 1]):
        x = val[p, a_clock[a]] + d
        k = a_bound[a]
        op = a_op[a]
        if op == 0:
            if not x < k:
                return False
        elif op == 1:
            if not x <= k:
                return False
        elif op == 2:
            if not x >= k:
                return False
        else:
            if not x > k:
                return False
    return True


@njit(cache=True)
def _less(loc, val, i, j, n_clock):
    if loc[i] != loc[j]:
        return loc[i] < loc[j]
    for c in range(n_clock):
        if val[i, c] != val[j, c]:
            return val[i, c] < val[j, c]
    return False


@njit(cache=True)
def _eval_candidate(
    k, tr_time, tr_label, tr_off, tr_idx, label_is_out,
    c_init, c_loc_ptr, c_maxdeg, loc_edge_start, e_label, e_tgt, e_reset,
    e_atom_start, a_clock, a_op, a_bound, n_clock, cap,
    out_verdict, out_steps, out_outs, edge_fault, loc_term,
):
    base = c_loc_ptr[k]
    init = c_init[k]
    width = cap * max(c_maxdeg[k], 1)
    fl = np.empty(width, np.int64)
    fv = np.zeros((width, max(n_clock, 1)), np.int64)
    fh = np.empty(width, np.uint64)
    fu = np.empty(width, np.int64)
    fe = np.empty(width, np.int64)
    fm = np.empty(width, np.bool_)
    nl = np.empty(width, np.int64)
    nv = np.zeros((width, max(n_clock, 1)), np.int64)
    nh = np.empty(width, np.uint64)
    nu = np.empty(width, np.int64)
    ne = np.empty(width, np.int64)
    nm = np.empty(width, np.bool_)
    deg = max(c_maxdeg[k], 1)
    sl = np.empty(deg, np.int64)
    sv = np.zeros((deg, max(n_clock, 1)), np.int64)
    se = np.empty(deg, np.int64)
    order = np.empty(width, np.int64)

    for ti in range(tr_idx.shape[0]):
        tr = tr_idx[ti]
        s0 = tr_off[tr]
        L = tr_off[tr + 1] - s0
        n = 1
        fl[0] = init
        for c in range(n_clock):
            fv[0, c] = 0
        fh[0] = np.uint64(0)
        fu[0] = 0
        fe[0] = -1
        fm[0] = False
        all_pass = True
        any_full = False
        best_len = 0
        steps = 0
        prev = 0
        died = False
        for i in range(L):
            t = tr_time[s0 + i]
            lab = tr_label[s0 + i]
            d = t - prev
            prev = t
            m = 0
            is_out = label_is_out[lab]
            for p in range(n):
                loc = fl[p]
                e0 = loc_edge_start[base + loc]
                e1 = loc_edge_start[base + loc + 1]
                kill = False
                marked = False
                if is_out:
                    for e in range(e0, e1):
                        if label_is_out[e_label[e]] and _window_meets(
                            fv, p, e, d, False, e_atom_start, a_clock, a_op, a_bound
                        ):
                            kill = True
                            break
                else:
                    for e in range(e0, e1):
                        if label_is_out[e_label[e]] and _window_meets(
                            fv, p, e, d, True, e_atom_start, a_clock, a_op, a_bound
                        ):
                            marked = True
                            break
                cnt = 0
                rival = False
                if not kill:
                    for e in range(e0, e1):
                        el = e_label[e]
                        if el != lab:
                            if is_out and label_is_out[el] and not rival:
                                if _sat(fv, p, d, e, e_atom_start, a_clock, a_op, a_bound):
                                    rival = True
                            continue
                        if not _sat(fv, p, d, e, e_atom_start, a_clock, a_op, a_bound):
                            continue
                        tgt = e_tgt[e]
                        mask = e_reset[e]
                        for c in range(n_clock):
                            if (mask >> c) & 1:
                                sv[cnt, c] = 0
                            else:
                                sv[cnt, c] = fv[p, c] + d
                        dup = False
                        for j in range(cnt):
                            if sl[j] == tgt:
                                same = True
                                for c in range(n_clock):
                                    if sv[j, c] != sv[cnt, c]:
                                        same = False
                                        break
                                if same:
                                    dup = True
                                    break
                        if not dup:
                            sl[cnt] = tgt
                            se[cnt] = e
                            cnt += 1
                if is_out:
                    if kill or rival or cnt != 1:
                        # path ends before this output
                        if fe[p] >= 0:
                            edge_fault[fe[p]] += 1
                        loc_term[base + loc] += 1
                        if fu[p] > steps:
                            steps = fu[p]
                        if i > best_len:
                            best_len = i
                        all_pass = False
                        continue
                    h = fh[p]
                    unm = fu[p]
                    anym = fm[p]
                else:
                    if cnt >= 2:
                        marked = True
                    if cnt == 0:
                        sl[0] = loc
                        se[0] = fe[p]
                        for c in range(n_clock):
                            sv[0, c] = fv[p, c] + d
                        if marked:
                            loc_term[base + loc] += 1
                        cnt = 1
                    elif marked:
                        for j in range(cnt):
                            edge_fault[se[j]] += 1
                    h = fh[p] * _HASH_MULT + (_MARK if marked else _NOMARK)
                    unm = fu[p] + (0 if marked else 1)
                    anym = fm[p] or marked
                for j in range(cnt):
                    dup = False
                    for q in range(m):
                        if nl[q] == sl[j] and nh[q] == h:
                            same = True
                            for c in range(n_clock):
                                if nv[q, c] != sv[j, c]:
                                    same = False
                                    break
                            if same:
                                dup = True
                                break
                    if dup:
                        continue
                    nl[m] = sl[j]
                    for c in range(n_clock):
                        nv[m, c] = sv[j, c]
                    nh[m] = h
                    nu[m] = unm
                    ne[m] = se[j]
                    nm[m] = anym
                    m += 1
            if m > cap:
                # stable insertion sort by (location, valuation)
                for q in range(m):
                    order[q] = q
                for q in range(1, m):
                    cur = order[q]
                    r = q - 1
                    while r >= 0 and _less(nl, nv, cur, order[r], n_clock):
                        order[r + 1] = order[r]
                        r -= 1
                    order[r + 1] = cur
                for q in range(cap, m):
                    o = order[q]
                    all_pass = False
                    if nu[o] > steps:
                        steps = nu[o]
                    if i + 1 > best_len:
                        best_len = i + 1
                    if i + 1 == L:
                        any_full = True
                for q in range(cap):
                    o = order[q]
                    fl[q] = nl[o]
                    for c in range(n_clock):
                        fv[q, c] = nv[o, c]
                    fh[q] = nh[o]
                    fu[q] = nu[o]
                    fe[q] = ne[o]
                    fm[q] = nm[o]
                n = cap
            else:
                for q in range(m):
                    fl[q] = nl[q]
                    for c in range(n_clock):
                        fv[q, c] = nv[q, c]
                    fh[q] = nh[q]
                    fu[q] = nu[q]
                    fe[q] = ne[q]
                    fm[q] = nm[q]
                n = m
            if n == 0:
                died = True
                break
        if not died:
            for p in range(n):
                any_full = True
                if fm[p]:
                    all_pass = False
                if fu[p] > steps:
                    steps = fu[p]
            best_len = L
        if any_full:
            out_verdict[k, ti] = PASS if all_pass else NONDET
        else:
            out_verdict[k, ti] = FAIL
        outs = 0
        for i in range(best_len):
            if label_is_out[tr_label[s0 + i]]:
                outs += 1
        out_steps[k, ti] = steps
        out_outs[k, ti] = outs


@njit(parallel=True, cache=True)
def _eval_batch(
    tr_time, tr_label, tr_off, tr_idx, label_is_out,
    c_init, c_loc_ptr, c_maxdeg, loc_edge_start, e_label, e_tgt, e_reset,
    e_atom_start, a_clock, a_op, a_bound, n_clock, cap,
    out_verdict, out_steps, out_outs, edge_fault, loc_term,
):
    for k in prange(c_init.shape[0]):
        _eval_candidate(
            k, tr_time, tr_label, tr_off, tr_idx, label_is_out,
            c_init, c_loc_ptr, c_maxdeg, loc_edge_start, e_label, e_tgt, e_reset,
            e_atom_start, a_clock, a_op, a_bound, n_clock, cap,
            out_verdict, out_steps, out_outs, edge_fault, loc_term,
        )


@dataclass
class Evaluation:
    """Per-candidate outcome on a trace subset, as compact arrays."""

    value: float
    verdicts: np.ndarray  # int8 codes, PASS=0 NONDET=1 FAIL=2
    steps: np.ndarray
    outs: np.ndarray
    edge_faults: np.ndarray
    location_faults: np.ndarray

    @property
    def n_pass(self) -> int:
        return int(np.count_nonzero(self.verdicts == PASS))

    @property
    def all_pass(self) -> bool:
        return bool(np.all(self.verdicts == PASS))

    def to_result(self) -> FitnessResult:
        return FitnessResult(
            self.value,
            [VERDICTS[c] for c in self.verdicts],
            self.edge_faults.tolist(),
            self.location_faults.tolist(),
        )


def _pow2_scale(times: Iterable[Fraction]) -> int:
    scale = 1
    for t in times:
        den = t.denominator
        if den & (den - 1):
            raise ValueError(f"timestamp {t} is not dyadic")
        scale = max(scale, den)
    return scale


class Evaluator:
    """Evaluates many candidates on a fixed trace collection."""

    def __init__(
        self,
        traces: Sequence[TimedTrace],
        weights: FitnessWeights,
        state_cap: int = DEFAULT_STATE_CAP,
        alphabet: Optional[Iterable] = None,
        n_clock: Optional[int] = None,
    ):
        if state_cap < 1:
            raise ValueError("state_cap must be positive")
        self.traces = list(traces)
        self.weights = weights
        self.state_cap = state_cap
        self.n_clock = n_clock
        labels = set(alphabet or ())
        for tt in self.traces:
            labels |= tt.labels()
        self.labels = sorted(labels, key=lambda a: (a.kind, a.name))
        self.label_index = {a: i for i, a in enumerate(self.labels)}
        self.label_is_out = np.array([a.is_output for a in self.labels] or [False], dtype=np.bool_)
        self.scale = _pow2_scale(t for tt in self.traces for t, _ in tt.events)
        times, labs, off = [], [], [0]
        for tt in self.traces:
            for t, a in tt.events:
                times.append(int(t * self.scale))
                labs.append(self.label_index[a])
            off.append(len(times))
        self.tr_time = np.array(times, dtype=np.int64)
        self.tr_label = np.array(labs, dtype=np.int32)
        self.tr_off = np.array(off, dtype=np.int64)
        self.all_indices = np.arange(len(self.traces), dtype=np.int64)
        self._w_verdict = np.array([weights.w_pass, weights.w_nondet, weights.w_fail])

    def _pack(self, cands: Sequence[TimedAutomaton]):
        scale = self.scale
        idx = self.label_index
        c_init, c_loc_ptr, c_maxdeg = [], [], []
        loc_edge_start = []
        e_label, e_tgt, e_reset, e_atom_start = [], [], [], [0]
        a_clock, a_op, a_bound = [], [], []
        edge_base = []
        n_clock = self.n_clock if self.n_clock is not None else max((g.n_clock for g in cands), default=0)
        for g in cands:
            if g.n_clock > n_clock:
                raise ValueError("candidate has more clocks than the evaluator")
            c_init.append(g.initial)
            c_loc_ptr.append(len(loc_edge_start))
            edge_base.append(len(e_label))
            counts = [0] * g.n_locations
            for e in g.edges:
                counts[e.source] += 1
            start = len(e_label)
            for c in counts:
                loc_edge_start.append(start)
                start += c
            loc_edge_start.append(start)
            c_maxdeg.append(max(counts, default=0))
            for e in g.edges:  # already sorted by source
                try:
                    e_label.append(idx[e.label])
                except KeyError:
                    raise ValueError(f"label {e.label} unknown to the evaluator") from None
                e_tgt.append(e.target)
                mask = 0
                for c in e.resets:
                    mask |= 1 << c
                e_reset.append(mask)
                for atom in e.guard.constraints:
                    a_clock.append(atom.clock)
                    a_op.append(_OP_CODE[atom.op])
                    a_bound.append(atom.bound * scale)
                e_atom_start.append(len(a_clock))
        i64 = np.int64
        arrays = (
            np.array(c_init, i64), np.array(c_loc_ptr, i64), np.array(c_maxdeg, i64),
            np.array(loc_edge_start, i64), np.array(e_label, np.int32), np.array(e_tgt, i64),
            np.array(e_reset, i64), np.array(e_atom_start, i64), np.array(a_clock, i64),
            np.array(a_op, np.int8), np.array(a_bound, i64),
        )
        return arrays, edge_base, n_clock

    def evaluate(self, cands: Sequence[TimedAutomaton], subset: Optional[Sequence[int]] = None) -> list[Evaluation]:
        if not cands:
            return []
        tr_idx = self.all_indices if subset is None else np.asarray(subset, dtype=np.int64)
        arrays, edge_base, n_clock = self._pack(cands)
        (c_init, c_loc_ptr, c_maxdeg, loc_edge_start, e_label, e_tgt, e_reset,
         e_atom_start, a_clock, a_op, a_bound) = arrays
        n_c, n_t = len(cands), len(tr_idx)
        verdicts = np.empty((n_c, n_t), np.int8)
        steps = np.empty((n_c, n_t), np.int64)
        outs = np.empty((n_c, n_t), np.int64)
        edge_fault = np.zeros(max(len(e_label), 1), np.int64)
        loc_term = np.zeros(max(len(loc_edge_start), 1), np.int64)
        _eval_batch(
            self.tr_time, self.tr_label, self.tr_off, tr_idx, self.label_is_out,
            c_init, c_loc_ptr, c_maxdeg, loc_edge_start, e_label, e_tgt, e_reset,
            e_atom_start, a_clock, a_op, a_bound, n_clock, self.state_cap,
            verdicts, steps, outs, edge_fault, loc_term,
        )
        w = self.weights
        results = []
        for k, g in enumerate(cands):
            per_trace = self._w_verdict[verdicts[k]] + w.w_steps * steps[k] + w.w_out * outs[k]
            value = math.fsum(per_trace.tolist()) - w.w_size * g.size
            eb = edge_base[k]
            ef = edge_fault[eb: eb + g.size].copy()
            lp = c_loc_ptr[k]
            lf = loc_term[lp: lp + g.n_locations].copy()
            for j, e in enumerate(g.edges):
                lf[e.source] += ef[j]
                if e.target != e.source:
                    lf[e.target] += ef[j]
            results.append(Evaluation(value, verdicts[k], steps[k], outs[k], ef, lf))
        return results

    def evaluate_one(self, g: TimedAutomaton, subset=None) -> FitnessResult:
        return self.evaluate([g], subset)[0].to_result()
