"""Discrete-event simulation of 802.1Qbv egress ports.

Every egress port has one FIFO queue for scheduled traffic whose gate follows
the port's window list, repeated every link hyperperiod and shifted by the
owning node's clock offset.  The frame at the head of the queue starts
transmitting only while the gate is open and only if it completes before the
gate closes; there is no preemption.  A talker hands each frame to its egress
queue at the open of the frame's assigned first-hop window (``release="period"``
injects at the period start instead).

Times in the trace are global (reference clock) nanoseconds.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
import random
from collections import deque
from dataclasses import dataclass, field, replace

from .netmodel import Problem, Schedule, frame_duration

# event priorities at equal timestamps: deliveries before gate openings
_TX_END, _RELEASE, _GATE = 0, 1, 2


class SimulationError(ValueError):
    pass


@dataclass
class SimConfig:
    cycles: int = 1  # number of global hyperperiods simulated
    offsets: dict | None = None  # node -> clock offset; None draws from seed
    delta: int = 0
    loss: frozenset = frozenset()  # (stream, repetition, hop)
    seed: int = 0
    propagation: int = 0
    release: str = "window"  # "window": at the first-hop window open; "period": at period start

    def clock_offsets(self, vertices) -> dict:
        if self.offsets is not None:
            return {v: self.offsets.get(v, 0) for v in vertices}
        rng = random.Random(self.seed)
        half = self.delta // 2
        return {v: rng.randint(-half, half) for v in sorted(vertices)}


@dataclass
class Hop:
    stream: str
    repetition: int
    hop: int
    link: str
    assigned: tuple  # (cycle, window index)
    enqueue: int | None = None
    start: int | None = None
    end: int | None = None
    used: tuple | None = None
    lost: bool = False


@dataclass
class SimTrace:
    hops: list
    e2e: dict  # stream -> {repetition: observed latency}
    jitter: dict  # stream -> spread of listener arrival offsets within the period
    violations: list = field(default_factory=list)
    offsets: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "streams": {
                s: {"max_e2e_ns": max(v.values()) if v else None,
                    "received": len(v), "jitter_ns": self.jitter.get(s)}
                for s, v in sorted(self.e2e.items())
            },
            "violations": self.violations,
            "offsets": self.offsets,
        }

    def to_jsonl(self) -> str:
        lines = []
        for h in self.hops:
            lines.append(json.dumps({
                "stream": h.stream, "repetition": h.repetition, "hop": h.hop, "link": h.link,
                "assigned": list(h.assigned), "used": list(h.used) if h.used else None,
                "enqueue": h.enqueue, "start": h.start, "end": h.end, "lost": h.lost,
            }, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")


class _Port:
    def __init__(self, link, windows, hp, offset, cycles):
        self.link = link
        self.queue = deque()
        self.busy = False
        self.gates = []  # (start, end, cycle, index), sorted
        for c in range(cycles):
            for w in windows:
                if w.close > w.open:
                    base = c * hp + offset
                    self.gates.append((base + w.open, base + w.close, c, w.index))
        self.gates.sort()

    def gate_at(self, t):
        for g in self.gates:
            if g[0] <= t < g[1]:
                return g
            if g[0] > t:
                break
        return None


def _check_gcl(schedule: Schedule):
    for lid, port in schedule.ports.items():
        ws = sorted((w for w in port.windows if w.close > w.open), key=lambda w: w.open)
        for a, b in zip(ws, ws[1:]):
            if a.close > b.open:
                raise SimulationError(f"overlapping windows {a.index},{b.index} on {lid}")
        for w in port.windows:
            if w.open > w.close or w.open < 0 or w.close > port.hyperperiod:
                raise SimulationError(f"window {w.index} on {lid} is not inside the cycle")


def simulate(problem: Problem, schedule: Schedule, config: SimConfig | None = None) -> SimTrace:
    config = config or SimConfig(delta=problem.config.delta)
    if config.release not in ("window", "period"):
        raise SimulationError(f"unknown release mode {config.release!r}")
    _check_gcl(schedule)
    hp = {lid: p.hyperperiod for lid, p in schedule.ports.items()}
    used_links = sorted({l.id for s in problem.streams for l in s.route})
    missing = [l for l in used_links if l not in hp]
    if missing:
        raise SimulationError(f"no gate control list for {missing}")
    horizon = math.lcm(*(hp[l] for l in used_links)) if used_links else 0
    offsets = config.clock_offsets(problem.graph.vertices)
    ports = {}
    for lid, p in schedule.ports.items():
        n_cycles = config.cycles * (horizon // p.hyperperiod) if horizon else 0
        ports[lid] = _Port(p.link, p.windows, p.hyperperiod, offsets[p.link.src], n_cycles)

    seq = itertools.count()
    events = []
    records = {}

    def push(t, kind, payload):
        heapq.heappush(events, (t, kind, next(seq), payload))

    for s in problem.streams:
        for J in range(config.cycles * horizon // s.period):
            for h, l in enumerate(s.route):
                n = hp[l.id] // s.period
                k = schedule.assignment[(s.id, l.id, J % n)]
                records[(s.id, J, h)] = Hop(s.id, J, h, l.id, (J // n, k))
            if config.release == "period":
                t = J * s.period + offsets[s.talker]
            else:
                first = records[(s.id, J, 0)]
                w = next(w for w in schedule.ports[s.route[0].id].windows if w.index == first.assigned[1])
                t = first.assigned[0] * hp[s.route[0].id] + w.open + offsets[s.talker]
            push(t, _RELEASE, (s, J, 0))
    for lid, port in sorted(ports.items()):
        for g in port.gates:
            push(g[0], _GATE, lid)

    streams = {s.id: s for s in problem.streams}

    def try_send(lid, now):
        port = ports[lid]
        if port.busy or not port.queue:
            return
        g = port.gate_at(now)
        if g is None:
            return
        s, J, h = port.queue[0]
        f_len = frame_duration(s.size, s.route[h])
        if now + f_len > g[1]:
            return
        port.queue.popleft()
        port.busy = True
        rec = records[(s.id, J, h)]
        rec.start, rec.end, rec.used = now, now + f_len, (g[2], g[3])
        push(now + f_len, _TX_END, (s, J, h))

    def enqueue(s, J, h, now):
        rec = records[(s.id, J, h)]
        rec.enqueue = now
        lid = s.route[h].id
        ports[lid].queue.append((s, J, h))
        try_send(lid, now)

    delivered = {}
    while events:
        now, kind, _, payload = heapq.heappop(events)
        if kind == _GATE:
            try_send(payload, now)
        elif kind == _RELEASE:
            s, J, h = payload
            enqueue(s, J, h, now)
        else:
            s, J, h = payload
            lid = s.route[h].id
            ports[lid].busy = False
            if (s.id, J, h) in config.loss:
                records[(s.id, J, h)].lost = True
            elif h + 1 < len(s.route):
                enqueue(s, J, h + 1, now + config.propagation)
            else:
                delivered[(s.id, J)] = now + config.propagation
            try_send(lid, now)

    violations = []
    e2e = {s.id: {} for s in problem.streams}
    jitter = {}
    for (sid, J), t in sorted(delivered.items()):
        released = records[(sid, J, 0)].enqueue
        e2e[sid][J] = t - released
    for rec in records.values():
        if rec.start is None:
            upstream_lost = any(records[(rec.stream, rec.repetition, h)].lost for h in range(rec.hop))
            if not upstream_lost:
                violations.append({"kind": "stranded", "stream": rec.stream, "repetition": rec.repetition,
                                   "hop": rec.hop})
        elif rec.used != rec.assigned:
            violations.append({"kind": "window", "stream": rec.stream, "repetition": rec.repetition,
                               "hop": rec.hop, "assigned": list(rec.assigned), "used": list(rec.used)})
    for sid, lat in e2e.items():
        s = streams[sid]
        for J, v in lat.items():
            if v > s.e2e:
                violations.append({"kind": "e2e", "stream": sid, "repetition": J, "observed": v, "bound": s.e2e})
        phases = [delivered[(sid, J)] - J * s.period for J in lat]
        jitter[sid] = (max(phases) - min(phases)) if phases else None
    return SimTrace(sorted(records.values(), key=lambda r: (r.stream, r.repetition, r.hop)),
                    e2e, jitter, violations, offsets)


def jitter_violations(problem: Problem, trace: SimTrace) -> list:
    """Observed receiver jitter above the stream bound (single-period use)."""
    out = []
    for s in problem.streams:
        j = trace.jitter.get(s.id)
        if j is not None and j > s.jitter:
            out.append({"kind": "jitter", "stream": s.id, "observed": j, "bound": s.jitter})
    return out


def isolation_probe(problem: Problem, schedule: Schedule, base: SimConfig | None = None) -> dict:
    """Replay the schedule once per single-frame loss and compare window usage.

    Deterministic means every frame that is still transmitted uses the same
    window occurrence as in the loss-free run (and the assigned one), and no
    run reports a violation.
    """
    base = base or SimConfig(delta=problem.config.delta)
    ref = simulate(problem, schedule, base)
    ref_used = {(h.stream, h.repetition, h.hop): h.used for h in ref.hops}
    shifts = []
    loss_violations = []
    scenarios = 0
    for h in ref.hops:
        scenarios += 1
        lost = [h.stream, h.repetition, h.hop]
        cfg = replace(base, loss=frozenset({(h.stream, h.repetition, h.hop)}), offsets=ref.offsets)
        run = simulate(problem, schedule, cfg)
        loss_violations.extend(dict(v, lost=lost) for v in run.violations)
        for r in run.hops:
            key = (r.stream, r.repetition, r.hop)
            if r.start is None:
                continue
            if r.used != ref_used[key] or r.used != r.assigned:
                shifts.append({"lost": lost, "frame": list(key),
                               "expected": list(r.assigned), "used": list(r.used)})
    return {"scenarios": scenarios, "deterministic": not (shifts or ref.violations or loss_violations),
            "shifts": shifts, "baseline_violations": ref.violations, "loss_violations": loss_violations}
