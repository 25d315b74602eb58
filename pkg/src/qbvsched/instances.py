"""Problem documents for tests, benchmarks and the acceptance runs.

Everything here produces plain problem dicts (the CLI file layout) so the
same generators feed the library API and the command line.
"""

from __future__ import annotations

import math
import random
from collections import deque

GIGABIT = 1_000_000_000
PERIODS_NS = (250_000, 500_000, 1_000_000)


def line_topology(n_switches: int = 3):
    """Switch chain SW1..SWn with one end station ESi on each switch."""
    vertices = [f"SW{i}" for i in range(1, n_switches + 1)] + [f"ES{i}" for i in range(1, n_switches + 1)]
    edges = [(f"SW{i}", f"SW{i + 1}") for i in range(1, n_switches)]
    edges += [(f"ES{i}", f"SW{i}") for i in range(1, n_switches + 1)]
    return vertices, edges


def star_topology(n_stations: int = 4):
    vertices = ["SW1"] + [f"ES{i}" for i in range(1, n_stations + 1)]
    return vertices, [(f"ES{i}", "SW1") for i in range(1, n_stations + 1)]


def fig1_topology():
    """Three switches in a row, five end stations (two, one and two per switch)."""
    vertices = ["SW1", "SW2", "SW3", "ES1", "ES2", "ES3", "ES4", "ES5"]
    edges = [("SW1", "SW2"), ("SW2", "SW3"), ("ES1", "SW1"), ("ES2", "SW1"),
             ("ES3", "SW2"), ("ES4", "SW3"), ("ES5", "SW3")]
    return vertices, edges


# five streams that together use every directed link of fig1_topology
FIG1_STREAMS = (("ES1", "ES4"), ("ES5", "ES2"), ("ES2", "ES3"), ("ES3", "ES1"), ("ES4", "ES5"))

TOPOLOGIES = {"line": line_topology, "star": star_topology, "fig1": fig1_topology}


def shortest_route(edges, src, dst):
    adj = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    prev = {src: None}
    todo = deque([src])
    while todo:
        v = todo.popleft()
        if v == dst:
            break
        for w in sorted(adj.get(v, ())):
            if w not in prev:
                prev[w] = v
                todo.append(w)
    if dst not in prev:
        raise ValueError(f"no route {src} -> {dst}")
    route = [dst]
    while route[-1] != src:
        route.append(prev[route[-1]])
    return route[::-1]


def _edge_docs(edges, speed, wmax=None, overhead=None):
    out = []
    for a, b in edges:
        e = {"endpoints": [a, b], "speed_bps": speed}
        if wmax is not None:
            e["wmax"] = wmax
        if overhead is not None:
            e["overhead_bytes"] = overhead
        out.append(e)
    return out


def duration_ns(size, speed=GIGABIT, overhead=20):
    return math.ceil((size + overhead) * 8 * 1_000_000_000 / speed)


def random_problem(rng: random.Random, topology: str = "line", n_streams: int = 4,
                   delta: int = 0, periods=PERIODS_NS, wmax_slack: int = 2, **config) -> dict:
    """Random gigabit instance; bounds are loose enough that most are feasible.

    ``wmax`` is set on every edge to the largest repetition count on the
    network plus ``wmax_slack`` (capped by what the link could ever use).
    """
    if topology == "star":
        vertices, edges = star_topology(rng.randint(3, 5))
    elif topology == "line":
        vertices, edges = line_topology(rng.randint(2, 4))
    else:
        vertices, edges = fig1_topology()
    stations = sorted(v for v in vertices if v.startswith("ES"))
    streams = []
    for i in range(n_streams):
        if topology == "fig1" and i < len(FIG1_STREAMS):
            src, dst = FIG1_STREAMS[i]
        else:
            src, dst = rng.sample(stations, 2)
        route = shortest_route(edges, src, dst)
        period = rng.choice(periods)
        size = rng.randint(64, 1500)
        hops = len(route) - 1
        floor = hops * duration_ns(size) + (hops - 1) * delta
        streams.append({
            "id": f"s{i}", "route": route, "size_bytes": size, "period_ns": period,
            "e2e_ns": rng.randint(floor + delta + 20_000, max(floor + delta + 20_000, period)),
            "jitter_ns": rng.randint(duration_ns(1500) * 2, period),
        })
    reps = max(max(periods) // s["period_ns"] for s in streams)
    wmax = reps + wmax_slack
    cfg = {"delta_ns": delta}
    cfg.update(config)
    return {"vertices": vertices, "edges": _edge_docs(edges, GIGABIT, wmax=wmax),
            "streams": streams, "config": cfg}


TINY_SPEED = 8_000_000_000  # one byte per ns


def tiny_problem(rng: random.Random, **config) -> dict:
    """Instance inside the brute-force bounds: <= 3 links on a chain A-B-C-D,
    <= 3 frame instances per link, hyperperiod <= 24, durations in ns equal
    the frame size (8 Gbit/s, no overhead)."""
    n_links = rng.randint(1, 3)
    vertices = ["A", "B", "C", "D"][: n_links + 1]
    edges = list(zip(vertices, vertices[1:]))
    delta = rng.choice((0, 0, 1, 2))
    mixed = rng.random() < 0.25
    periods = (6, 12) if mixed else (rng.choice((8, 10, 12, 16, 20, 24)),)
    streams = []
    load = {e: 0 for e in edges}
    for i in range(rng.randint(1, 3)):
        a = rng.randrange(n_links)
        b = rng.randrange(a, n_links) + 1
        route = vertices[a: b + 1]
        period = rng.choice(periods)
        hp = max(periods)
        path = list(zip(route, route[1:]))
        if any(load[e] + hp // period > 3 for e in path):
            continue
        for e in path:
            load[e] += hp // period
        size = rng.randint(1, 4)
        hops = len(path)
        floor = hops * size + (hops - 1) * delta
        streams.append({
            "id": f"t{i}", "route": list(route), "size_bytes": size, "period_ns": period,
            "e2e_ns": rng.randint(floor, floor + size + delta + 8),
            "jitter_ns": rng.randint(0, 4),
        })
    edge_docs = [{"endpoints": list(e), "speed_bps": TINY_SPEED, "overhead_bytes": 0,
                  "wmax": rng.randint(1, 3)} for e in edges]
    cfg = {"delta_ns": delta}
    cfg.update(config)
    return {"vertices": vertices, "edges": edge_docs, "streams": streams, "config": cfg}


def single_stream_problem(size=2, hops=2, period=16, e2e=None, jitter=None, delta=0, wmax=1,
                          speed=TINY_SPEED, overhead=0, **config) -> dict:
    vertices = [chr(ord("A") + i) for i in range(hops + 1)]
    length = duration_ns(size, speed, overhead)
    e2e = e2e if e2e is not None else hops * length + (hops - 1) * delta + period
    jitter = jitter if jitter is not None else period
    cfg = {"delta_ns": delta}
    cfg.update(config)
    return {
        "vertices": vertices,
        "edges": _edge_docs(zip(vertices, vertices[1:]), speed, wmax=wmax, overhead=overhead),
        "streams": [{"id": "s", "route": vertices, "size_bytes": size, "period_ns": period,
                     "e2e_ns": e2e, "jitter_ns": jitter}],
        "config": cfg,
    }
