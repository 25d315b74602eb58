"""Network, stream, frame and window model for 802.1Qbv scheduling.

All times are integer nanoseconds.  A :class:`Problem` bundles the graph, the
stream set and the encoder configuration; :func:`load_problem` builds one from
the JSON problem document used by the command line tool.
"""

from __future__ import annotations

import json
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

NS_PER_SECOND = 1_000_000_000
DEFAULT_OVERHEAD_BYTES = 20  # preamble + SFD (8) and inter-frame gap (12)

_ID_RE = re.compile(r"^[A-Za-z0-9_.]+$")


class ModelError(ValueError):
    """Raised for malformed topologies, streams or problem documents."""


def _check_id(kind: str, value: str) -> str:
    if not isinstance(value, str) or not _ID_RE.match(value):
        raise ModelError(f"{kind} id {value!r} must match {_ID_RE.pattern}")
    return value


@dataclass(frozen=True)
class Link:
    """Directed edge ``[src, dst]`` with its egress port parameters."""

    src: str
    dst: str
    speed: int
    wmax: int
    overhead_bytes: int = DEFAULT_OVERHEAD_BYTES

    def __post_init__(self):
        if self.src == self.dst:
            raise ModelError(f"self-link on {self.src!r}")
        if self.speed <= 0:
            raise ModelError(f"link {self.src}-{self.dst}: speed must be positive")
        if self.wmax < 1:
            raise ModelError(f"link {self.src}-{self.dst}: wmax must be >= 1")
        if self.overhead_bytes < 0:
            raise ModelError(f"link {self.src}-{self.dst}: negative overhead")

    @property
    def key(self) -> tuple[str, str]:
        return (self.src, self.dst)

    @property
    def id(self) -> str:
        return f"{self.src}-{self.dst}"

    def __str__(self):
        return f"[{self.src},{self.dst}]"


@dataclass(frozen=True)
class NetworkGraph:
    vertices: frozenset
    links: Mapping[tuple[str, str], Link]

    def link(self, src: str, dst: str) -> Link:
        try:
            return self.links[(src, dst)]
        except KeyError:
            raise ModelError(f"no link [{src},{dst}] in graph") from None

    def __contains__(self, key):
        return key in self.links

    def __iter__(self):
        return iter(self.links[k] for k in sorted(self.links))

    def __len__(self):
        return len(self.links)


@dataclass(frozen=True)
class EdgeSpec:
    """One undirected edge of a topology description."""

    a: str
    b: str
    speed: int
    wmax: int | None = None
    overhead_bytes: int = DEFAULT_OVERHEAD_BYTES


@dataclass(frozen=True)
class TopologyDescription:
    vertices: tuple
    edges: tuple


def build_graph(topology: TopologyDescription, default_wmax: Mapping | None = None) -> NetworkGraph:
    """Expand every undirected edge into its two directed links.

    ``default_wmax`` maps ``(src, dst)`` to the window budget used when an
    edge does not specify ``wmax``; missing entries fall back to 1.
    """
    vertices = set()
    for v in topology.vertices:
        _check_id("vertex", v)
        if v in vertices:
            raise ModelError(f"duplicate vertex {v!r}")
        vertices.add(v)
    default_wmax = default_wmax or {}
    links = {}
    seen = set()
    for e in topology.edges:
        for v in (e.a, e.b):
            if v not in vertices:
                raise ModelError(f"edge ({e.a},{e.b}) references unknown vertex {v!r}")
        pair = frozenset((e.a, e.b))
        if pair in seen:
            raise ModelError(f"duplicate edge ({e.a},{e.b})")
        seen.add(pair)
        if e.speed <= 0:
            raise ModelError(f"edge ({e.a},{e.b}): speed must be positive")
        for src, dst in ((e.a, e.b), (e.b, e.a)):
            wmax = e.wmax if e.wmax is not None else max(1, default_wmax.get((src, dst), 1))
            links[(src, dst)] = Link(src, dst, int(e.speed), int(wmax), int(e.overhead_bytes))
    return NetworkGraph(frozenset(vertices), links)


def frame_duration(size: int, link: Link) -> int:
    """Transmission time in ns of a ``size``-byte frame on ``link``."""
    if size <= 0:
        raise ModelError("frame size must be positive")
    bits = (size + link.overhead_bytes) * 8
    return -(-bits * NS_PER_SECOND // link.speed)


def hyperperiod(periods: Iterable[int]) -> int:
    """Least common multiple of the given periods (or frame instances)."""
    values = [p.period if isinstance(p, FrameInstance) else p for p in periods]
    if not values:
        raise ModelError("hyperperiod of an empty set")
    if any(p <= 0 for p in values):
        raise ModelError("periods must be positive")
    return math.lcm(*values)


@dataclass(frozen=True)
class Stream:
    id: str
    route: tuple  # of Link, talker first
    e2e: int
    jitter: int
    size: int
    period: int

    def __post_init__(self):
        _check_id("stream", self.id)
        if not self.route:
            raise ModelError(f"stream {self.id}: empty route")
        for prev, nxt in zip(self.route, self.route[1:]):
            if prev.dst != nxt.src:
                raise ModelError(f"stream {self.id}: route is not a connected path")
        path = [self.route[0].src] + [l.dst for l in self.route]
        if len(set(path)) != len(path):
            raise ModelError(f"stream {self.id}: route repeats a vertex")
        if self.period <= 0 or self.size <= 0 or self.e2e <= 0 or self.jitter < 0:
            raise ModelError(f"stream {self.id}: period, size, e2e must be > 0 and jitter >= 0")

    @property
    def talker(self) -> str:
        return self.route[0].src

    @property
    def listener(self) -> str:
        return self.route[-1].dst

    def hop_of(self, link: Link) -> int:
        for h, l in enumerate(self.route):
            if l.key == link.key:
                return h
        raise ModelError(f"stream {self.id} does not traverse {link}")


@dataclass(frozen=True, order=True)
class FrameInstance:
    """Repetition ``repetition`` of a stream's frame on one link."""

    link_id: str
    stream: str
    repetition: int
    link: Link = field(compare=False)
    duration: int = field(compare=False)
    period: int = field(compare=False)

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.stream, self.link.id, self.repetition)


def unroll_streams(streams: Iterable[Stream], graph: NetworkGraph) -> list[FrameInstance]:
    """Frame instances of every stream on every route link.

    A stream with period T on a link of hyperperiod hp yields hp/T instances
    there, repetitions 0..hp/T-1.  The result is sorted by (link, stream, j).
    """
    streams = list(streams)
    on_link = defaultdict(list)
    for s in streams:
        for l in s.route:
            if l.key not in graph:
                raise ModelError(f"stream {s.id}: route link {l} missing from graph")
            on_link[l.key].append(s)
    frames = []
    for key, members in on_link.items():
        link = graph.link(*key)
        hp = hyperperiod(s.period for s in members)
        for s in members:
            duration = frame_duration(s.size, link)
            for j in range(hp // s.period):
                frames.append(FrameInstance(link.id, s.id, j, link, duration, s.period))
    frames.sort()
    return frames


def frames_by_link(frames: Iterable[FrameInstance]) -> dict[str, list[FrameInstance]]:
    out = defaultdict(list)
    for f in frames:
        out[f.link_id].append(f)
    return dict(out)


# ---------------------------------------------------------------------------
# concrete schedules


@dataclass
class Window:
    """A solved window: gate open during [open, close)."""

    index: int
    open: int
    close: int
    frames: list = field(default_factory=list)  # FrameInstance keys

    @property
    def size(self) -> int:
        return self.close - self.open


@dataclass
class PortSchedule:
    link: Link
    windows: list
    hyperperiod: int

    def gate_control_list(self) -> list[dict]:
        """Gate state entries covering exactly one hyperperiod.

        Windows are emitted in time order; empty windows are dropped.
        """
        entries = []
        t = 0
        for w in sorted((w for w in self.windows if w.close > w.open), key=lambda w: w.open):
            if w.open > t:
                entries.append({"offset_ns": t, "gate_state": "closed", "duration_ns": w.open - t})
            entries.append({"offset_ns": w.open, "gate_state": "open", "duration_ns": w.size})
            t = w.close
        if t < self.hyperperiod:
            entries.append({"offset_ns": t, "gate_state": "closed", "duration_ns": self.hyperperiod - t})
        return entries


@dataclass
class Schedule:
    """Decoded schedule: per-port windows and the frame-to-window map."""

    ports: dict  # link id -> PortSchedule
    assignment: dict  # FrameInstance.key -> window index

    def to_json(self) -> dict:
        ports = []
        for lid in sorted(self.ports):
            p = self.ports[lid]
            ports.append({
                "link": [p.link.src, p.link.dst],
                "hyperperiod_ns": p.hyperperiod,
                "windows": [
                    {"index": w.index, "open": w.open, "close": w.close,
                     "frames": [{"stream": s, "repetition": j} for s, _, j in w.frames]}
                    for w in p.windows
                ],
            })
        return {"ports": ports}

    @classmethod
    def from_json(cls, data: Mapping[str, Any], problem: "Problem") -> "Schedule":
        stream_ids = {s.id for s in problem.streams}
        ports = {}
        assignment = {}
        try:
            for p in data["ports"]:
                link = problem.graph.link(*p["link"])
                windows = []
                for w in p["windows"]:
                    keys = []
                    for fr in w.get("frames", []):
                        if fr["stream"] not in stream_ids:
                            raise ModelError(f"schedule references unknown stream {fr['stream']!r}")
                        key = (fr["stream"], link.id, int(fr["repetition"]))
                        if key in assignment:
                            raise ModelError(f"frame {key} assigned twice")
                        assignment[key] = int(w["index"])
                        keys.append(key)
                    windows.append(Window(int(w["index"]), int(w["open"]), int(w["close"]), keys))
                ports[link.id] = PortSchedule(link, windows, int(p["hyperperiod_ns"]))
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed schedule document: {exc}") from None
        return cls(ports, assignment)

    def gcl_json(self) -> dict:
        return {
            "ports": [
                {"link": [p.link.src, p.link.dst], "hyperperiod_ns": p.hyperperiod,
                 "entries": p.gate_control_list()}
                for p in (self.ports[k] for k in sorted(self.ports))
            ]
        }


# ---------------------------------------------------------------------------
# problem documents


@dataclass
class Problem:
    graph: NetworkGraph
    streams: tuple
    config: Any  # encoder.EncoderConfig

    def __post_init__(self):
        ids = [s.id for s in self.streams]
        if len(set(ids)) != len(ids):
            raise ModelError("duplicate stream id")
        self._frames = unroll_streams(self.streams, self.graph)

    @property
    def frames(self) -> list[FrameInstance]:
        return self._frames

    def stream(self, sid: str) -> Stream:
        for s in self.streams:
            if s.id == sid:
                return s
        raise ModelError(f"unknown stream {sid!r}")

    def active_links(self) -> list[Link]:
        """Links carrying at least one frame, sorted by id."""
        ids = sorted({f.link_id for f in self._frames})
        by_id = {l.id: l for l in self.graph}
        return [by_id[i] for i in ids]

    def link_hyperperiod(self, link: Link) -> int:
        return hyperperiod(f.period for f in self._frames if f.link_id == link.id)


def problem_from_dict(doc: Mapping[str, Any], **config_overrides) -> Problem:
    """Build a :class:`Problem` from the JSON problem document layout."""
    from .encoder import EncoderConfig

    try:
        vertices = tuple(doc["vertices"])
        edges = []
        for e in doc["edges"]:
            a, b = e["endpoints"]
            edges.append(EdgeSpec(a, b, int(e["speed_bps"]), e.get("wmax"),
                                  int(e.get("overhead_bytes", DEFAULT_OVERHEAD_BYTES))))
        raw_streams = doc.get("streams", [])
        # default wmax: number of frame instances routed through each link
        topo = TopologyDescription(vertices, tuple(edges))
        probe = build_graph(topo)
        routes = {}
        for s in raw_streams:
            route = s["route"]
            if len(route) < 2:
                raise ModelError(f"stream {s.get('id')!r}: route needs at least two vertices")
            routes[s["id"]] = [probe.link(a, b) for a, b in zip(route, route[1:])]
        counts = defaultdict(int)
        periods = defaultdict(list)
        for s in raw_streams:
            for l in routes[s["id"]]:
                periods[l.key].append(int(s["period_ns"]))
        for key, ps in periods.items():
            hp = math.lcm(*ps)
            counts[key] = sum(hp // p for p in ps)
        graph = build_graph(topo, counts)
        streams = tuple(
            Stream(s["id"], tuple(graph.link(l.src, l.dst) for l in routes[s["id"]]),
                   int(s["e2e_ns"]), int(s["jitter_ns"]), int(s["size_bytes"]), int(s["period_ns"]))
            for s in raw_streams
        )
        cfg = dict(doc.get("config", {}))
        cfg.update({k: v for k, v in config_overrides.items() if v is not None})
        config = EncoderConfig.from_dict(cfg)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"malformed problem document: {exc!r}") from None
    return Problem(graph, streams, config)


def load_problem(path: str | Path, **config_overrides) -> Problem:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON: {exc}") from None
    return problem_from_dict(doc, **config_overrides)
