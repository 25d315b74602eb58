"""Constraint encoding of 802.1Qbv window schedules.

The encoder produces a solver-agnostic :class:`ConstraintIR`.  Expressions are
plain nested tuples ``(op, *args)`` whose leaves are ``int`` constants,
``bool`` constants or variable names (``str``); operator spellings follow
SMT-LIB so that emission is a direct walk.

Two arithmetic flavours are supported.  In *linearized* mode every assignment
variable is a Bool and products ``eps * term`` become ``ite``/implications, so
the IR stays inside linear integer arithmetic.  In *nonlinear* mode assignment
variables are 0/1 Ints and the products are kept as written, which needs a
nonlinear integer arithmetic solver.

Isolation and queue-order constraints use the guarded reading: the two frames
either share their egress window, or one of them has left the egress port
before the other one starts entering the device.  The literal product form of
the isolation constraint is available as ``isolation_form="verbatim"``; note
that it is satisfied by every assignment because a product with an unassigned
indicator collapses to 0.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any

from .netmodel import FrameInstance, Link, ModelError, Problem, Stream

ORDERINGS = ("sequential", "pairwise")
ARITHMETICS = ("linearized", "nonlinear")
OBJECTIVES = ("none", "min-e2e-sum", "min-jitter-sum")

CATEGORIES = (
    "bounds", "open_le_close", "epsilon_domain", "ordering", "assignment",
    "window_size", "precedence", "isolation", "queue_order", "e2e", "jitter",
    "period_slot", "symmetry",
)

_ALIASES = {
    "seq": "sequential", "pairwise-disjunction": "pairwise",
    "lin": "linearized", "nia": "nonlinear",
    "e2e": "min-e2e-sum", "jitter": "min-jitter-sum",
}


class UnsupportedFeature(ModelError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    delta: int = 0
    ordering: str = "sequential"
    arithmetic: str = "linearized"
    multi_period: bool | None = None  # None: enabled when some link mixes periods
    objective: str = "none"
    isolation_form: str = "guarded"
    symmetry_breaking: bool | None = None  # None: off only for linearized sequential

    def __post_init__(self):
        for name, allowed in (("ordering", ORDERINGS), ("arithmetic", ARITHMETICS),
                              ("objective", OBJECTIVES), ("isolation_form", ("guarded", "verbatim"))):
            value = _ALIASES.get(getattr(self, name), getattr(self, name))
            if value not in allowed:
                raise ModelError(f"{name} must be one of {allowed}, got {value!r}")
            object.__setattr__(self, name, value)
        if self.delta < 0:
            raise ModelError("delta must be >= 0")
        if self.isolation_form == "verbatim" and self.arithmetic != "nonlinear":
            raise ModelError("verbatim isolation needs nonlinear arithmetic")

    @property
    def breaks_symmetry(self) -> bool:
        # refuting tight instances is factorially slow without a canonical
        # labeling for pairwise windows and for nonlinear products; linearized
        # sequential ordering is already canonical up to empty windows and
        # runs faster without the extra clauses
        if self.symmetry_breaking is None:
            return self.ordering == "pairwise" or self.arithmetic == "nonlinear"
        return bool(self.symmetry_breaking)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        known = {"delta_ns": "delta", "delta": "delta", "ordering": "ordering",
                 "arithmetic": "arithmetic", "multi_period": "multi_period",
                 "objective": "objective", "isolation_form": "isolation_form",
                 "symmetry_breaking": "symmetry_breaking"}
        kwargs = {}
        for k, v in d.items():
            if k not in known:
                raise ModelError(f"unknown config key {k!r}")
            kwargs[known[k]] = int(v) if known[k] == "delta" else v
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {"delta_ns": self.delta, "ordering": self.ordering, "arithmetic": self.arithmetic,
                "multi_period": self.multi_period, "objective": self.objective,
                "symmetry_breaking": self.breaks_symmetry}


@dataclass(frozen=True)
class VarInfo:
    link: str
    window: int
    role: str  # open | close | epsilon
    frame: tuple | None = None  # FrameInstance.key for epsilon variables


@dataclass
class ConstraintIR:
    variables: dict = field(default_factory=dict)  # name -> "Int" | "Bool"
    assertions: list = field(default_factory=list)  # (category, expr)
    objective: Any = None
    metadata: dict = field(default_factory=dict)  # name -> VarInfo
    arithmetic: str = "linearized"
    config: Any = None
    ports: dict = field(default_factory=dict)  # link id -> (Link, hyperperiod)

    def declare(self, name: str, sort: str, info: VarInfo | None = None) -> str:
        if name in self.variables:
            raise ModelError(f"variable {name} declared twice")
        self.variables[name] = sort
        if info is not None:
            self.metadata[name] = info
        return name

    def add(self, category: str, expr) -> None:
        self.assertions.append((category, expr))

    def is_linear(self) -> bool:
        return all(_linear(e) for _, e in self.assertions) and (
            self.objective is None or _linear(self.objective))


# ---------------------------------------------------------------------------
# expression helpers


def Sum(*terms):
    terms = [t for t in terms if not (isinstance(t, int) and not isinstance(t, bool) and t == 0)]
    if not terms:
        return 0
    if len(terms) == 1:
        return terms[0]
    return ("+", *terms)


def Sub(a, b):
    if isinstance(b, int) and b == 0:
        return a
    return ("-", a, b)


def Mul(a, b):
    return ("*", a, b)


def Le(a, b):
    return ("<=", a, b)


def Lt(a, b):
    return ("<", a, b)


def Ge(a, b):
    return (">=", a, b)


def Eq(a, b):
    return ("=", a, b)


def And(*xs):
    return xs[0] if len(xs) == 1 else ("and", *xs)


def Or(*xs):
    return xs[0] if len(xs) == 1 else ("or", *xs)


def Not(x):
    return ("not", x)


def Implies(a, b):
    return ("=>", a, b)


def Ite(c, a, b):
    return ("ite", c, a, b)


def _has_var(e) -> bool:
    if isinstance(e, str):
        return True
    if isinstance(e, tuple):
        return any(_has_var(a) for a in e[1:])
    return False


def _linear(e) -> bool:
    if not isinstance(e, tuple):
        return True
    if e[0] == "*" and sum(_has_var(a) for a in e[1:]) > 1:
        return False
    return all(_linear(a) for a in e[1:])


def evaluate(e, env: dict):
    """Evaluate an IR expression under a variable valuation."""
    if isinstance(e, bool) or isinstance(e, int):
        return e
    if isinstance(e, str):
        return env[e]
    op, *args = e
    if op == "ite":
        return evaluate(args[1], env) if evaluate(args[0], env) else evaluate(args[2], env)
    if op == "and":
        return all(evaluate(a, env) for a in args)
    if op == "or":
        return any(evaluate(a, env) for a in args)
    if op == "=>":
        return (not evaluate(args[0], env)) or bool(evaluate(args[1], env))
    vals = [evaluate(a, env) for a in args]
    if op == "+":
        return sum(vals)
    if op == "-":
        return -vals[0] if len(vals) == 1 else vals[0] - sum(vals[1:])
    if op == "*":
        return math.prod(vals)
    if op == "not":
        return not vals[0]
    if op == "<=":
        return vals[0] <= vals[1]
    if op == "<":
        return vals[0] < vals[1]
    if op == ">=":
        return vals[0] >= vals[1]
    if op == ">":
        return vals[0] > vals[1]
    if op == "=":
        return vals[0] == vals[1]
    raise ValueError(f"unknown operator {op!r}")


# ---------------------------------------------------------------------------
# encoding state


class EncodingModel:
    """Problem plus the symbolic window/assignment variables of every port."""

    def __init__(self, problem: Problem, config: EncoderConfig | None = None):
        self.problem = problem
        self.config = config or problem.config
        self.links = problem.active_links()
        self.hp = {l.id: problem.link_hyperperiod(l) for l in self.links}
        self.frames = {l.id: [] for l in self.links}
        self._frame = {}
        for f in problem.frames:
            self.frames[f.link_id].append(f)
            self._frame[f.key] = f
        needs_multi = any(f.period != self.hp[f.link_id] for f in problem.frames)
        mp = self.config.multi_period
        if mp is None:
            self.config = replace(self.config, multi_period=needs_multi)
        elif not mp and needs_multi:
            raise ModelError("some link carries several periods; enable multi_period")
        self.linear = self.config.arithmetic == "linearized"
        self.ir = ConstraintIR(arithmetic=self.config.arithmetic)
        self._eps = {}
        for l in self.links:
            for k in range(1, l.wmax + 1):
                self.ir.declare(self.open(l, k), "Int", VarInfo(l.id, k, "open"))
                self.ir.declare(self.close(l, k), "Int", VarInfo(l.id, k, "close"))
        for l in self.links:
            for k in range(1, l.wmax + 1):
                for f in self.frames[l.id]:
                    name = f"e_{l.id}_{k}_{f.stream}_{f.repetition}"
                    sort = "Bool" if self.linear else "Int"
                    self.ir.declare(name, sort, VarInfo(l.id, k, "epsilon", f.key))
                    self._eps[(f.key, k)] = name

    # names -----------------------------------------------------------------
    @staticmethod
    def open(link: Link, k: int) -> str:
        return f"w_{link.id}_{k}_open"

    @staticmethod
    def close(link: Link, k: int) -> str:
        return f"w_{link.id}_{k}_close"

    def eps(self, f: FrameInstance, k: int) -> str:
        return self._eps[(f.key, k)]

    def windows(self, link: Link) -> range:
        return range(1, link.wmax + 1)

    def frame(self, stream: Stream, link: Link, rep: int) -> FrameInstance:
        return self._frame[(stream.id, link.id, rep)]

    def reps(self, stream: Stream, link: Link) -> int:
        return self.hp[link.id] // stream.period

    # ε-dependent terms ------------------------------------------------------
    def is_set(self, name: str):
        return name if self.linear else Eq(name, 1)

    def indicator(self, name: str):
        return Ite(name, 1, 0) if self.linear else name

    def weighted(self, name: str, term):
        """``eps * term``: ite in linearized mode, a product otherwise."""
        return Ite(name, term, 0) if self.linear else Mul(name, term)

    def selected(self, f: FrameInstance, role: str):
        """Open or close time of the window that ``f`` is assigned to."""
        pick = self.open if role == "open" else self.close
        return Sum(*(self.weighted(self.eps(f, k), pick(f.link, k)) for k in self.windows(f.link)))

    def absolute(self, stream: Stream, link: Link, J: int, role: str):
        """Time of global repetition J on ``link`` relative to the cycle start
        of repetition 0: local window time shifted to the repetition's slot."""
        a = J % self.reps(stream, link)
        return Sum(self.selected(self.frame(stream, link, a), role), (J - a) * stream.period)


# ---------------------------------------------------------------------------
# constraint families


def encode_well_defined(ir: ConstraintIR, m: EncodingModel) -> ConstraintIR:
    seq = m.config.ordering == "sequential"
    for l in m.links:
        ks = list(m.windows(l))
        hp = m.hp[l.id]
        if seq:
            ir.add("bounds", Ge(m.open(l, ks[0]), 0))
            ir.add("bounds", Lt(m.close(l, ks[-1]), hp))
        else:
            for k in ks:
                ir.add("bounds", Ge(m.open(l, k), 0))
                ir.add("bounds", Lt(m.close(l, k), hp))
        for k in ks:
            ir.add("open_le_close", Le(m.open(l, k), m.close(l, k)))
        if not m.linear:
            for f in m.frames[l.id]:
                for k in ks:
                    e = m.eps(f, k)
                    ir.add("epsilon_domain", And(Ge(e, 0), Le(e, 1)))
    return ir


def encode_ordering(ir: ConstraintIR, m: EncodingModel) -> ConstraintIR:
    for l in m.links:
        ks = list(m.windows(l))
        if m.config.ordering == "sequential":
            for k in ks[:-1]:
                ir.add("ordering", Le(m.close(l, k), m.open(l, k + 1)))
        else:
            for i, k in enumerate(ks):
                for q in ks[i + 1:]:
                    ir.add("ordering", Or(Le(m.close(l, k), m.open(l, q)),
                                          Le(m.close(l, q), m.open(l, k))))
    return ir


def encode_assignment(ir: ConstraintIR, m: EncodingModel) -> ConstraintIR:
    for l in m.links:
        for f in m.frames[l.id]:
            ir.add("assignment", Eq(Sum(*(m.indicator(m.eps(f, k)) for k in m.windows(l))), 1))
    return ir


def encode_window_size(ir: ConstraintIR, m: EncodingModel) -> ConstraintIR:
    for l in m.links:
        for k in m.windows(l):
            size = Sum(*(m.weighted(m.eps(f, k), f.duration) for f in m.frames[l.id]))
            ir.add("window_size", Eq(m.close(l, k), Sum(m.open(l, k), size)))
    return ir


def _rep_pairs(n1: int, n2: int) -> list[tuple[int, int]]:
    return sorted({(J % n1, J % n2) for J in range(math.lcm(n1, n2))})


def encode_stream_precedence(ir: ConstraintIR, m: EncodingModel) -> ConstraintIR:
    delta = m.config.delta
    for s in m.problem.streams:
        T = s.period
        for hop, nxt in zip(s.route, s.route[1:]):
            for a, b in _rep_pairs(m.reps(s, hop), m.reps(s, nxt)):
                f1, f2 = m.frame(s, hop, a), m.frame(s, nxt, b)
                shift = delta + (b - a) * T
                for k in m.windows(hop):
                    for l in m.windows(nxt):
                        e1, e2 = m.eps(f1, k), m.eps(f2, l)
                        lhs, rhs = Sum(m.close(hop, k), shift), m.open(nxt, l)
                        if m.linear:
                            ir.add("precedence", Implies(And(e1, e2), Le(lhs, rhs)))
                        else:
                            chi = Mul(e1, e2)
                            ir.add("precedence", Le(Mul(chi, lhs), Mul(chi, rhs)))
    return ir


def _pairs_at_egress(m: EncodingModel, link: Link):
    """Stream pairs sharing ``link`` as egress, classified by ingress."""
    members = sorted({f.stream for f in m.frames[link.id]})
    streams = [m.problem.stream(sid) for sid in members]
    for x, si in enumerate(streams):
        for sj in streams[x + 1:]:
            hi, hj = si.hop_of(link), sj.hop_of(link)
            in_i = si.route[hi - 1] if hi > 0 else None
            in_j = sj.route[hj - 1] if hj > 0 else None
            if in_i is None and in_j is None:
                continue
            kind = "isolation" if (in_i and in_j and in_i.key != in_j.key) else "queue_order"
            yield kind, si, in_i, sj, in_j


def _overlapping_reps(m: EncodingModel, link: Link, si: Stream, in_i, sj: Stream, in_j):
    hps = [m.hp[link.id]] + [m.hp[l.id] for l in (in_i, in_j) if l is not None]
    horizon = math.lcm(*hps)
    for Ji in range(horizon // si.period):
        for Jj in range(horizon // sj.period):
            if Ji * si.period < (Jj + 1) * sj.period and Jj * sj.period < (Ji + 1) * si.period:
                yield Ji, Jj


def _encode_separation(ir: ConstraintIR, m: EncodingModel, kind: str) -> ConstraintIR:
    verbatim = kind == "isolation" and m.config.isolation_form == "verbatim"
    for link in m.links:
        seen = set()
        for k_, si, in_i, sj, in_j in _pairs_at_egress(m, link):
            if k_ != kind:
                continue
            for Ji, Jj in _overlapping_reps(m, link, si, in_i, sj, in_j):
                fi = m.frame(si, link, Ji % m.reps(si, link))
                fj = m.frame(sj, link, Jj % m.reps(sj, link))
                if verbatim:
                    exprs = _verbatim_isolation(m, link, fi, fj, si, in_i, sj, in_j, Ji, Jj)
                else:
                    same = And(*(Eq(m.eps(fi, k), m.eps(fj, k)) for k in m.windows(link)))
                    entry_j = m.absolute(sj, in_j or link, Jj, "open")
                    entry_i = m.absolute(si, in_i or link, Ji, "open")
                    exprs = [Or(same,
                                Le(m.absolute(si, link, Ji, "close"), entry_j),
                                Le(m.absolute(sj, link, Jj, "close"), entry_i))]
                for e in exprs:
                    if e not in seen:
                        seen.add(e)
                        ir.add(kind, e)
    return ir


def _verbatim_isolation(m, link, fi, fj, si, in_i, sj, in_j, Ji, Jj):
    if m.config.multi_period:
        raise UnsupportedFeature("verbatim isolation is single-period only")
    gi = m.frame(si, in_i, 0)
    gj = m.frame(sj, in_j, 0)
    out = []
    for k in m.windows(link):
        for l in m.windows(in_i):
            for q in m.windows(in_j):
                out.append(Or(
                    Le(Mul(m.close(link, k), m.eps(fi, k)), Mul(m.open(in_j, q), m.eps(gj, q))),
                    Le(Mul(m.close(link, k), m.eps(fj, k)), Mul(m.open(in_i, l), m.eps(gi, l))),
                    Eq(m.eps(fj, k), m.eps(fi, k)),
                ))
    return out


def encode_isolation(ir: ConstraintIR, m: EncodingModel) -> ConstraintIR:
    """Streams entering a device on different links and leaving on the same
    egress port share a window or are separated in time."""
    return _encode_separation(ir, m, "isolation")


def encode_queue_order(ir: ConstraintIR, m: EncodingModel) -> ConstraintIR:
    """Same separation for the remaining pairs sharing an egress queue: common
    ingress link, or one frame sourced by the device itself (entering the
    queue at its own window open)."""
    return _encode_separation(ir, m, "queue_order")


def _e2e_terms(m: EncodingModel, s: Stream):
    first, last = s.route[0], s.route[-1]
    for a, b in _rep_pairs(m.reps(s, first), m.reps(s, last)):
        f_first, f_last = m.frame(s, first, a), m.frame(s, last, b)
        yield (Sub(m.selected(f_last, "close"), m.selected(f_first, "open")),
               (b - a) * s.period, f_last)


def encode_e2e(ir: ConstraintIR, m: EncodingModel) -> ConstraintIR:
    delta = m.config.delta
    for s in m.problem.streams:
        for lhs, shift, f_last in _e2e_terms(m, s):
            ir.add("e2e", Le(lhs, s.e2e - f_last.duration - delta + shift))
    return ir


def _psi(m: EncodingModel, s: Stream):
    last = s.route[-1]
    f = m.frame(s, last, 0)
    return Sum(*(m.weighted(m.eps(f, k), Sub(m.close(last, k), m.open(last, k)))
                 for k in m.windows(last))), f


def encode_jitter(ir: ConstraintIR, m: EncodingModel) -> ConstraintIR:
    if m.config.multi_period:
        raise UnsupportedFeature("receiver jitter constraint is single-period only")
    for s in m.problem.streams:
        psi, f = _psi(m, s)
        ir.add("jitter", Le(psi, s.jitter + f.duration))
    return ir


def encode_multi_period(ir: ConstraintIR, m: EncodingModel) -> ConstraintIR:
    for l in m.links:
        for f in m.frames[l.id]:
            lo, hi = f.repetition * f.period, (f.repetition + 1) * f.period
            for k in m.windows(l):
                e = m.eps(f, k)
                if m.linear:
                    ir.add("period_slot", Implies(e, Ge(m.open(l, k), lo)))
                    ir.add("period_slot", Implies(e, Le(m.close(l, k), hi)))
                else:
                    ir.add("period_slot", Ge(Mul(e, m.open(l, k)), Mul(e, lo)))
                    ir.add("period_slot", Le(Mul(e, m.close(l, k)), Mul(e, hi)))
    return ir


def encode_symmetry_breaking(ir: ConstraintIR, m: EncodingModel) -> ConstraintIR:
    """Sequential: empty windows sort last.  Pairwise: window indices are
    interchangeable labels, so frames claim them in first-use order (the
    first frame takes window 1; window k > 1 only if an earlier frame uses
    k - 1).  Both keep every schedule up to relabeling."""
    for l in m.links:
        fs = m.frames[l.id]
        if not fs:
            continue
        ks = list(m.windows(l))
        if m.config.ordering == "sequential":
            for k in ks[:-1]:
                used_k = Or(*(m.is_set(m.eps(f, k)) for f in fs))
                used_next = Or(*(m.is_set(m.eps(f, k + 1)) for f in fs))
                ir.add("symmetry", Implies(Not(used_k), Not(used_next)))
            continue
        for i, f in enumerate(fs):
            for k in ks[1:]:
                if i < k - 1:
                    ir.add("symmetry", Not(m.is_set(m.eps(f, k))))
                else:
                    ir.add("symmetry", Implies(m.is_set(m.eps(f, k)),
                                               Or(*(m.is_set(m.eps(g, k - 1)) for g in fs[:i]))))
    return ir


def encode_objective(ir: ConstraintIR, m: EncodingModel, kind: str | None = None) -> ConstraintIR:
    kind = _ALIASES.get(kind, kind) or m.config.objective
    if kind == "none":
        ir.objective = None
    elif kind == "min-e2e-sum":
        ir.objective = Sum(*(Sub(lhs, shift) if shift else lhs
                             for s in m.problem.streams for lhs, shift, _ in _e2e_terms(m, s)))
    elif kind == "min-jitter-sum":
        if m.config.multi_period:
            raise UnsupportedFeature("jitter objective is single-period only")
        ir.objective = Sum(*(_psi(m, s)[0] for s in m.problem.streams))
    else:
        raise ModelError(f"unknown objective {kind!r}")
    return ir


def encode(problem: Problem, config: EncoderConfig | None = None) -> ConstraintIR:
    """Full constraint system for ``problem`` under ``config``."""
    m = EncodingModel(problem, config)
    ir = m.ir
    encode_well_defined(ir, m)
    encode_ordering(ir, m)
    encode_assignment(ir, m)
    encode_window_size(ir, m)
    encode_stream_precedence(ir, m)
    encode_isolation(ir, m)
    encode_queue_order(ir, m)
    encode_e2e(ir, m)
    if m.config.multi_period:
        encode_multi_period(ir, m)
    else:
        encode_jitter(ir, m)
    if m.config.breaks_symmetry:
        encode_symmetry_breaking(ir, m)
    encode_objective(ir, m)
    ir.config = m.config
    ir.ports = {l.id: (l, m.hp[l.id]) for l in m.links}
    return ir


def assertion_count(ir: ConstraintIR) -> dict[str, int]:
    counts = Counter(c for c, _ in ir.assertions)
    return {c: counts.get(c, 0) for c in CATEGORIES}
