"""Independent schedule checker and brute-force feasibility oracle.

Nothing here reuses the encoder's expression code: every constraint family is
re-derived from the schedule with plain integer arithmetic, so a bug in the
encoder or the SMT emitter shows up as a violation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

from . import gridsearch
from .netmodel import FrameInstance, Link, PortSchedule, Problem, Schedule, Stream, Window

FAMILIES = (
    "bounds", "open_le_close", "ordering", "assignment", "window_size",
    "precedence", "isolation", "queue_order", "e2e", "jitter", "period_slot",
)


class MalformedSchedule(ValueError):
    pass


class InstanceTooLarge(ValueError):
    pass


@dataclass
class Violation:
    family: str
    link: str | None = None
    window: int | None = None
    stream: str | None = None
    detail: str = ""

    def to_json(self) -> dict:
        return asdict(self)


def _settings(problem: Problem, config):
    config = config or problem.config
    hp = {}
    for f in problem.frames:
        hp[f.link_id] = math.lcm(hp.get(f.link_id, 1), f.period)
    multi = config.multi_period
    if multi is None:
        multi = any(hp[f.link_id] != f.period for f in problem.frames)
    return config, hp, multi


def _egress_pairs(problem: Problem, link_id: str):
    """(family, stream_i, ingress_i, stream_j, ingress_j) for streams that leave
    through ``link_id``.  Ingress is None for frames sourced at the device."""
    users = []
    for s in sorted(problem.streams, key=lambda s: s.id):
        for h, l in enumerate(s.route):
            if l.id == link_id:
                users.append((s, s.route[h - 1] if h else None))
    for (si, gi), (sj, gj) in itertools.combinations(users, 2):
        if gi is None and gj is None:
            continue
        if gi is not None and gj is not None and gi.id != gj.id:
            yield "isolation", si, gi, sj, gj
        else:
            yield "queue_order", si, gi, sj, gj


class _Timeline:
    """Absolute window times of frame repetitions on a decoded schedule."""

    def __init__(self, problem, schedule, hp):
        self.problem = problem
        self.schedule = schedule
        self.hp = hp

    def window(self, stream: Stream, link: Link, rep: int) -> Window:
        k = self.schedule.assignment[(stream.id, link.id, rep)]
        for w in self.schedule.ports[link.id].windows:
            if w.index == k:
                return w
        raise MalformedSchedule(f"window {k} missing on {link.id}")

    def locate(self, stream: Stream, link: Link, J: int):
        """(cycle, window) carrying global repetition ``J`` on ``link``."""
        n = self.hp[link.id] // stream.period
        return J // n, self.window(stream, link, J % n)

    def at(self, stream: Stream, link: Link, J: int, edge: str) -> int:
        cycle, w = self.locate(stream, link, J)
        return cycle * self.hp[link.id] + (w.open if edge == "open" else w.close)


def check_schedule(problem: Problem, schedule: Schedule, config=None,
                   isolation: str = "guarded") -> list[Violation]:
    """All constraint violations of ``schedule``; empty means valid."""
    config, hp, multi = _settings(problem, config)
    out: list[Violation] = []
    frames = {f.key: f for f in problem.frames}
    active = sorted(hp)

    # structure
    for key, k in schedule.assignment.items():
        port = schedule.ports.get(key[1])
        if port is None or all(w.index != k for w in port.windows):
            raise MalformedSchedule(f"frame {key} assigned to nonexistent window {k}")
    for lid in active:
        if lid not in schedule.ports:
            out.append(Violation("assignment", lid, detail="no port schedule for active link"))
    if any(v.family == "assignment" for v in out):
        return out
    for key in frames:
        if key not in schedule.assignment:
            out.append(Violation("assignment", key[1], stream=key[0], detail=f"frame {key} unassigned"))
    for key in schedule.assignment:
        if key not in frames:
            out.append(Violation("assignment", key[1], stream=key[0], detail=f"unknown frame {key}"))
    if out:
        return out

    for lid in active:
        port = schedule.ports[lid]
        link = port.link
        windows = sorted(port.windows, key=lambda w: w.index)
        if port.hyperperiod != hp[lid]:
            out.append(Violation("bounds", lid, detail=f"hyperperiod {port.hyperperiod} != {hp[lid]}"))
        if len(windows) > link.wmax or len({w.index for w in windows}) != len(windows):
            out.append(Violation("assignment", lid, detail="window indices exceed wmax or repeat"))
        for w in windows:
            if w.open < 0 or w.close >= hp[lid]:
                out.append(Violation("bounds", lid, w.index, detail=f"[{w.open},{w.close}] outside [0,{hp[lid]})"))
            if w.open > w.close:
                out.append(Violation("open_le_close", lid, w.index))
            listed = set(w.frames)
            mapped = {key for key, k in schedule.assignment.items() if key[1] == lid and k == w.index}
            if listed != mapped:
                out.append(Violation("assignment", lid, w.index, detail="window frame list disagrees with assignment"))
            load = sum(frames[key].duration for key in mapped)
            if w.close - w.open != load:
                out.append(Violation("window_size", lid, w.index,
                                     detail=f"size {w.close - w.open} != assigned load {load}"))
        if config.ordering == "sequential":
            for a, b in zip(windows, windows[1:]):
                if a.close > b.open:
                    out.append(Violation("ordering", lid, b.index, detail=f"window {a.index} closes after {b.index} opens"))
        else:
            for a, b in itertools.combinations(windows, 2):
                if not (a.close <= b.open or b.close <= a.open):
                    out.append(Violation("ordering", lid, b.index, detail=f"windows {a.index} and {b.index} overlap"))
        if multi:
            for key, k in schedule.assignment.items():
                if key[1] != lid:
                    continue
                f = frames[key]
                w = next(w for w in windows if w.index == k)
                if w.open < f.repetition * f.period or w.close > (f.repetition + 1) * f.period:
                    out.append(Violation("period_slot", lid, k, key[0],
                                         f"repetition {f.repetition} outside its period slot"))

    tl = _Timeline(problem, schedule, hp)
    delta = config.delta
    for s in problem.streams:
        horizon = math.lcm(*(hp[l.id] for l in s.route))
        reps = horizon // s.period
        last_len = frames[(s.id, s.route[-1].id, 0)].duration
        for J in range(reps):
            for h, (l1, l2) in enumerate(zip(s.route, s.route[1:])):
                if tl.at(s, l1, J, "close") + delta > tl.at(s, l2, J, "open"):
                    out.append(Violation("precedence", l2.id, tl.locate(s, l2, J)[1].index, s.id,
                                         f"repetition {J}: hop {h + 1} opens before hop {h} closes + delta"))
            latency = tl.at(s, s.route[-1], J, "close") - tl.at(s, s.route[0], J, "open")
            if latency > s.e2e - last_len - delta:
                out.append(Violation("e2e", s.route[-1].id, None, s.id,
                                     f"repetition {J}: {latency} > {s.e2e} - {last_len} - {delta}"))
        if not multi:
            w = tl.window(s, s.route[-1], 0)
            if w.close - w.open > s.jitter + last_len:
                out.append(Violation("jitter", s.route[-1].id, w.index, s.id,
                                     f"window size {w.close - w.open} > {s.jitter} + {last_len}"))

    for lid in active:
        for fam, si, gi, sj, gj in _egress_pairs(problem, lid):
            if fam == "isolation" and isolation == "verbatim":
                out.extend(_verbatim_isolation(problem, schedule, lid, si, gi, sj, gj))
                continue
            out.extend(_separation(tl, hp, fam, lid, si, gi, sj, gj))
    return out


def _separation(tl: _Timeline, hp, fam, lid, si, gi, sj, gj):
    egress = tl.schedule.ports[lid].link
    horizon = math.lcm(hp[lid], *(hp[g.id] for g in (gi, gj) if g is not None))
    out = []
    for Ji in range(horizon // si.period):
        for Jj in range(horizon // sj.period):
            ci, wi = tl.locate(si, egress, Ji)
            cj, wj = tl.locate(sj, egress, Jj)
            if ci == cj and wi.index == wj.index:
                continue
            enter_i = tl.at(si, gi or egress, Ji, "open")
            enter_j = tl.at(sj, gj or egress, Jj, "open")
            if tl.at(si, egress, Ji, "close") <= enter_j or tl.at(sj, egress, Jj, "close") <= enter_i:
                continue
            out.append(Violation(fam, lid, wi.index, f"{si.id},{sj.id}",
                                 f"repetitions {Ji},{Jj}: queue state depends on arrival order"))
    return out


def _verbatim_isolation(problem, schedule, lid, si, gi, sj, gj):
    def eps(stream, link, k):
        return 1 if schedule.assignment.get((stream.id, link.id, 0)) == k else 0

    def win(link_id, k):
        return next(w for w in schedule.ports[link_id].windows if w.index == k)

    egress = schedule.ports[lid]
    out = []
    for we in egress.windows:
        k = we.index
        for wl in schedule.ports[gi.id].windows:
            for wm in schedule.ports[gj.id].windows:
                ok = (we.close * eps(si, egress.link, k) <= wm.open * eps(sj, gj, wm.index)
                      or we.close * eps(sj, egress.link, k) <= wl.open * eps(si, gi, wl.index)
                      or eps(sj, egress.link, k) == eps(si, egress.link, k))
                if not ok:
                    out.append(Violation("isolation", lid, k, f"{si.id},{sj.id}", "verbatim form violated"))
    return out


# ---------------------------------------------------------------------------
# brute-force oracle


@dataclass
class BruteForceResult:
    feasible: bool
    witness: Schedule | None = None
    objective: int | None = None
    combinations: int = 0
    backend: str = field(default_factory=lambda: gridsearch.BACKEND)


def _ordered_partitions(items, max_blocks):
    """Every split of ``items`` into at most ``max_blocks`` non-empty, ordered blocks."""
    n = len(items)
    if n == 0:
        yield []
        return
    for labels in itertools.product(range(min(n, max_blocks)), repeat=n):
        used = sorted(set(labels))
        if used != list(range(len(used))):
            continue
        blocks = [[items[i] for i in range(n) if labels[i] == b] for b in used]
        yield blocks


def _check_bounds(problem: Problem, hp, grid):
    links = sorted(hp)
    if len(links) > 3:
        raise InstanceTooLarge(f"{len(links)} links carry frames (max 3)")
    for lid in links:
        count = sum(1 for f in problem.frames if f.link_id == lid)
        if count > 3:
            raise InstanceTooLarge(f"{count} frame instances on {lid} (max 3)")
        if hp[lid] // grid > 64:
            raise InstanceTooLarge(f"hyperperiod/grid = {hp[lid] // grid} on {lid} (max 64)")


class _Blocks:
    """Difference-constraint view of one choice of frame-to-window blocks."""

    def __init__(self, problem, config, hp, multi, choice):
        self.problem, self.config, self.hp, self.multi = problem, config, hp, multi
        self.frames = {f.key: f for f in problem.frames}
        self.var_of = {}  # frame key -> block var
        self.blocks = []  # (link id, position, [keys], size)
        for lid in sorted(choice):
            for pos, keys in enumerate(choice[lid]):
                v = len(self.blocks)
                size = sum(self.frames[k].duration for k in keys)
                self.blocks.append((lid, pos, keys, size))
                for k in keys:
                    self.var_of[k] = v
        self.clauses = []
        self.ok = True

    def time(self, stream, link, J, edge):
        n = self.hp[link.id] // stream.period
        v = self.var_of[(stream.id, link.id, J % n)]
        const = (J // n) * self.hp[link.id] + (self.blocks[v][3] if edge == "close" else 0)
        return v, const

    def require(self, *pairs):
        """Clause: some ``t1 <= t2`` holds, for (t1, t2) in ``pairs``."""
        atoms = []
        for (v1, c1), (v2, c2) in pairs:
            if v1 == v2:
                if c1 <= c2:
                    return
                continue
            atoms.append((v1, v2, c2 - c1))
        if not atoms:
            self.ok = False
        else:
            self.clauses.append(atoms)

    def domains(self, grid):
        lo, hi = [], []
        for lid, _, keys, size in self.blocks:
            a, b = 0, self.hp[lid] - 1 - size
            if self.multi:
                for k in keys:
                    f = self.frames[k]
                    a = max(a, f.repetition * f.period)
                    b = min(b, (f.repetition + 1) * f.period - size)
            if a > b:
                self.ok = False
            lo.append(a)
            hi.append(b)
        return lo, hi


def _block_constraints(bl: _Blocks):
    problem, hp, delta = bl.problem, bl.hp, bl.config.delta
    for i, (lid, pos, _, _) in enumerate(bl.blocks):
        if pos > 0:
            bl.require(((i - 1, bl.blocks[i - 1][3]), (i, 0)))
    for s in problem.streams:
        horizon = math.lcm(*(hp[l.id] for l in s.route))
        last_len = bl.frames[(s.id, s.route[-1].id, 0)].duration
        for J in range(horizon // s.period):
            for l1, l2 in zip(s.route, s.route[1:]):
                v, c = bl.time(s, l1, J, "close")
                bl.require(((v, c + delta), bl.time(s, l2, J, "open")))
            v, c = bl.time(s, s.route[0], J, "open")
            bl.require((bl.time(s, s.route[-1], J, "close"), (v, c + s.e2e - last_len - delta)))
        if not bl.multi:
            v = bl.var_of[(s.id, s.route[-1].id, 0)]
            if bl.blocks[v][3] > s.jitter + last_len:
                bl.ok = False
    for lid in sorted(hp):
        link = next(l for l in problem.graph if l.id == lid)
        for _, si, gi, sj, gj in _egress_pairs(problem, lid):
            horizon = math.lcm(hp[lid], *(hp[g.id] for g in (gi, gj) if g is not None))
            for Ji in range(horizon // si.period):
                for Jj in range(horizon // sj.period):
                    ni, nj = hp[lid] // si.period, hp[lid] // sj.period
                    same_cycle = Ji // ni == Jj // nj
                    if same_cycle and bl.var_of[(si.id, lid, Ji % ni)] == bl.var_of[(sj.id, lid, Jj % nj)]:
                        continue
                    bl.require((bl.time(si, link, Ji, "close"), bl.time(sj, gj or link, Jj, "open")),
                               (bl.time(sj, link, Jj, "close"), bl.time(si, gi or link, Ji, "open")))
                    if not bl.ok:
                        return


def _objective(bl: _Blocks, kind):
    coef = [0] * len(bl.blocks)
    const = 0
    for s in bl.problem.streams:
        if kind == "min-e2e-sum":
            first, last = s.route[0], s.route[-1]
            horizon = math.lcm(*(bl.hp[l.id] for l in s.route))
            seen = set()
            for J in range(horizon // s.period):
                pair = (J % (bl.hp[first.id] // s.period), J % (bl.hp[last.id] // s.period))
                if pair in seen:
                    continue
                seen.add(pair)
                v2, c2 = bl.time(s, last, J, "close")
                v1, c1 = bl.time(s, first, J, "open")
                coef[v2] += 1
                coef[v1] -= 1
                const += c2 - c1
        elif kind == "min-jitter-sum":
            const += bl.blocks[bl.var_of[(s.id, s.route[-1].id, 0)]][3]
    return coef, const


def _witness(problem: Problem, bl: _Blocks, values) -> Schedule:
    ports = {}
    assignment = {}
    for lid in sorted(bl.hp):
        link = next(l for l in problem.graph if l.id == lid)
        mine = [(pos, keys, size, values[i]) for i, (l, pos, keys, size) in enumerate(bl.blocks) if l == lid]
        windows = [Window(pos + 1, o, o + size, sorted(keys)) for pos, keys, size, o in mine]
        tail = windows[-1].close if windows else 0
        for k in range(len(windows) + 1, link.wmax + 1):
            windows.append(Window(k, tail, tail, []))
        for w in windows:
            for key in w.frames:
                assignment[key] = w.index
        ports[lid] = PortSchedule(link, windows, bl.hp[lid])
    return Schedule(ports, assignment)


def _enumerate(problem: Problem, grid: int, config, objective: str | None):
    config, hp, multi = _settings(problem, config)
    _check_bounds(problem, hp, grid)
    per_link = {}
    for lid in sorted(hp):
        link = next(l for l in problem.graph if l.id == lid)
        keys = sorted(f.key for f in problem.frames if f.link_id == lid)
        per_link[lid] = list(_ordered_partitions(keys, link.wmax))
    lids = sorted(per_link)
    best = BruteForceResult(False)
    count = 0
    for combo in itertools.product(*(per_link[l] for l in lids)):
        count += 1
        bl = _Blocks(problem, config, hp, multi, dict(zip(lids, combo)))
        lo, hi = bl.domains(grid)
        if not bl.ok:
            continue
        _block_constraints(bl)
        if not bl.ok:
            continue
        if objective is None:
            found, values, _ = gridsearch.search(lo, hi, grid, bl.clauses)
            if found:
                return BruteForceResult(True, _witness(problem, bl, values), combinations=count)
            continue
        coef, const = _objective(bl, objective)
        found, values, val = gridsearch.search(lo, hi, grid, bl.clauses, coef)
        if found and (best.objective is None or val + const < best.objective):
            best = BruteForceResult(True, _witness(problem, bl, values), val + const)
    best.combinations = count
    return best


def brute_force_feasible(problem: Problem, grid: int = 1, config=None) -> BruteForceResult:
    """Exhaustive search for a schedule with window opens on multiples of
    ``grid``.  Bounded to <= 3 active links, <= 3 frame instances per link and
    hyperperiod/grid <= 64."""
    return _enumerate(problem, grid, config, None)


def brute_force_minimum(problem: Problem, objective: str, grid: int = 1, config=None) -> BruteForceResult:
    """Like :func:`brute_force_feasible` but returns the schedule minimizing
    ``objective`` (``min-e2e-sum`` or ``min-jitter-sum``)."""
    return _enumerate(problem, grid, config, objective)
