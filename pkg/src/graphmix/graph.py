"""Undirected loopless graphs, generators, BFS distances and power graphs."""

from __future__ import annotations

import json
import math
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ParameterError, ParseError, SizeGuardError
from .rng import keyed_uniform

UNREACHABLE = math.inf
"""Distance to a vertex in another component. Compares greater than every int."""

MAX_ALL_PAIRS = 20_000


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    adjacency: tuple[tuple[int, ...], ...]
    label: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 0 or len(self.adjacency) != self.n:
            raise ParameterError("adjacency must have one entry per vertex")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], label: str = "") -> "Graph":
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise ParameterError(f"edge ({u}, {v}) out of range for n={n}")
            if u == v:
                raise ParameterError(f"self-loop at vertex {u}")
            nbrs[u].add(v)
            nbrs[v].add(u)
        return cls(n, tuple(tuple(sorted(s)) for s in nbrs), label)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and self.adjacency == other.adjacency

    def __hash__(self):
        return hash((self.n, self.adjacency))

    @property
    def num_edges(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in self.adjacency[u] if u < v]

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    @property
    def max_degree(self) -> int:
        return max((len(a) for a in self.adjacency), default=0)

    def components(self) -> list[list[int]]:
        seen = [False] * self.n
        comps = []
        for s in range(self.n):
            if seen[s]:
                continue
            seen[s] = True
            comp, queue = [s], deque([s])
            while queue:
                u = queue.popleft()
                for w in self.adjacency[u]:
                    if not seen[w]:
                        seen[w] = True
                        comp.append(w)
                        queue.append(w)
            comps.append(sorted(comp))
        return comps

    def is_vertex_transitive_family(self) -> bool:
        """True if the graph came from a generator known to be vertex-transitive."""
        kind = self.label.split(":", 1)[0]
        if kind in ("cycle", "torus", "edgeless"):
            return True
        if kind == "clique_union":
            return len({len(c) for c in self.components()}) <= 1
        return self.num_edges == 0

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) arrays of the adjacency lists."""
        with self._lock:
            if "csr" not in self._cache:
                indptr = np.zeros(self.n + 1, dtype=np.int64)
                indptr[1:] = np.cumsum([len(a) for a in self.adjacency])
                indices = np.fromiter(
                    (w for a in self.adjacency for w in a), dtype=np.int64, count=int(indptr[-1])
                )
                self._cache["csr"] = (indptr, indices)
            return self._cache["csr"]


@dataclass(frozen=True)
class DistanceRow:
    source: int
    dist: tuple  # ints, or UNREACHABLE

    def __getitem__(self, v: int):
        return self.dist[v]

    def __len__(self):
        return len(self.dist)


# --------------------------------------------------------------------------
# generators


def _check_count(name: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise ParameterError(f"{name} must be an integer >= 1, got {value!r}")
    return int(value)


def path(n: int) -> Graph:
    n = _check_count("n", n)
    return Graph.from_edges(n, ((i, i + 1) for i in range(n - 1)), f"path:{n}")


def cycle(n: int) -> Graph:
    n = _check_count("n", n)
    edges = [(i, (i + 1) % n) for i in range(n)] if n > 1 else []
    return Graph.from_edges(n, [(u, v) for u, v in edges if u != v], f"cycle:{n}")


def grid(rows: int, cols: int, wrap: bool = False) -> Graph:
    rows, cols = _check_count("rows", rows), _check_count("cols", cols)
    edges = []
    for i in range(rows):
        for j in range(cols):
            v = i * cols + j
            if i + 1 < rows or (wrap and rows > 1):
                edges.append((v, ((i + 1) % rows) * cols + j))
            if j + 1 < cols or (wrap and cols > 1):
                edges.append((v, i * cols + (j + 1) % cols))
    kind = "torus" if wrap else "grid"
    return Graph.from_edges(rows * cols, [(u, v) for u, v in edges if u != v], f"{kind}:{rows}x{cols}")


def clique_union(sizes: Sequence[int]) -> Graph:
    if not sizes:
        raise ParameterError("clique_union needs at least one clique")
    sizes = [_check_count("clique size", s) for s in sizes]
    edges, offset = [], 0
    for s in sizes:
        edges.extend((offset + a, offset + b) for a in range(s) for b in range(a + 1, s))
        offset += s
    return Graph.from_edges(offset, edges, "clique_union:" + ",".join(map(str, sizes)))


def edgeless(n: int) -> Graph:
    n = _check_count("n", n)
    return Graph.from_edges(n, [], f"edgeless:{n}")


def erdos_renyi(n: int, p: float, seed: int) -> Graph:
    n = _check_count("n", n)
    if not (0.0 <= p <= 1.0):
        raise ParameterError(f"p must lie in [0, 1], got {p}")
    u, v = np.triu_indices(n, k=1)
    keep = keyed_uniform(seed, u, v) < p
    return Graph.from_edges(n, zip(u[keep].tolist(), v[keep].tolist()), f"erdos_renyi:{n},{p},{seed}")


_GENERATORS = {
    "path": (path, ("n",)),
    "cycle": (cycle, ("n",)),
    "grid": (grid, ("rows", "cols", "wrap")),
    "torus": (lambda rows, cols: grid(rows, cols, wrap=True), ("rows", "cols")),
    "clique_union": (clique_union, ("sizes",)),
    "edgeless": (edgeless, ("n",)),
    "erdos_renyi": (erdos_renyi, ("n", "p", "seed")),
}


def normalize_spec(spec: dict | str) -> dict:
    """Canonical JSON-ready descriptor ``{"kind": ..., params...}``.

    Accepts the descriptor dict or a shorthand such as ``path:10``,
    ``torus:20x20``, ``grid:3x4``, ``clique_union:2,3``, ``erdos_renyi:10,0.3,7``.
    """
    if isinstance(spec, str):
        spec = parse_shorthand(spec)
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ParameterError(f"graph descriptor must be an object with a 'kind': {spec!r}")
    kind = spec["kind"]
    if kind not in _GENERATORS:
        raise ParameterError(f"unknown graph kind {kind!r}; expected one of {sorted(_GENERATORS)}")
    out: dict[str, Any] = {"kind": kind}
    for name in _GENERATORS[kind][1]:
        if name == "wrap":
            out["wrap"] = bool(spec.get("wrap", False))
        elif name not in spec:
            raise ParameterError(f"graph kind {kind!r} requires parameter {name!r}")
        elif name == "sizes":
            out["sizes"] = [int(s) for s in spec["sizes"]]
        elif name == "p":
            out["p"] = float(spec["p"])
        else:
            out[name] = int(spec[name])
    if kind == "grid" and out["wrap"]:
        out = {"kind": "torus", "rows": out["rows"], "cols": out["cols"]}
    return out


def parse_shorthand(text: str) -> dict:
    kind, _, arg = text.partition(":")
    kind = kind.strip()
    try:
        if kind in ("path", "cycle", "edgeless"):
            return {"kind": kind, "n": int(arg)}
        if kind in ("grid", "torus"):
            rows, cols = arg.lower().split("x")
            return {"kind": kind, "rows": int(rows), "cols": int(cols)}
        if kind == "clique_union":
            return {"kind": kind, "sizes": [int(s) for s in arg.split(",")]}
        if kind == "erdos_renyi":
            n, p, seed = arg.split(",")
            return {"kind": kind, "n": int(n), "p": float(p), "seed": int(seed)}
    except ValueError as exc:
        raise ParameterError(f"bad graph shorthand {text!r}: {exc}") from None
    raise ParameterError(f"unknown graph shorthand {text!r}")


def generate_graph(spec: dict | str) -> Graph:
    spec = normalize_spec(spec)
    fn, names = _GENERATORS[spec["kind"]]
    return fn(**{k: spec[k] for k in names})


# --------------------------------------------------------------------------
# edge-list IO


def load_graph(text: str) -> Graph:
    """Parse an edge list: header ``n m`` followed by ``m`` lines ``u v``."""
    lines = [(i + 1, ln.split()) for i, ln in enumerate(text.splitlines())]
    lines = [(no, toks) for no, toks in lines if toks]
    if not lines:
        raise ParseError("empty document", 1)
    no, header = lines[0]
    if len(header) != 2:
        raise ParseError("header must be 'n m'", no)
    try:
        n, m = int(header[0]), int(header[1])
    except ValueError:
        raise ParseError("header must contain two integers", no) from None
    if n < 1 or m < 0:
        raise ParseError("need n >= 1 and m >= 0", no)
    body = lines[1:]
    if len(body) != m:
        raise ParseError(f"expected {m} edge lines, found {len(body)}", body[-1][0] if body else no)
    edges = []
    for no, toks in body:
        if len(toks) != 2:
            raise ParseError("edge line must be 'u v'", no)
        try:
            u, v = int(toks[0]), int(toks[1])
        except ValueError:
            raise ParseError("edge endpoints must be integers", no) from None
        if not (0 <= u < n and 0 <= v < n):
            raise ParseError(f"vertex out of range [0, {n})", no)
        if u == v:
            raise ParseError(f"self-loop at vertex {u}", no)
        edges.append((u, v))
    return Graph.from_edges(n, edges, "edgelist")


def dump_graph(g: Graph) -> str:
    edges = g.edges()
    return "\n".join([f"{g.n} {len(edges)}"] + [f"{u} {v}" for u, v in edges]) + "\n"


def spec_to_json(spec: dict | str) -> str:
    return json.dumps(normalize_spec(spec), sort_keys=True)


# --------------------------------------------------------------------------
# distances


def _bfs(g: Graph, source: int, limit: int | None = None) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    adj = g.adjacency
    while queue:
        u = queue.popleft()
        du = dist[u]
        if limit is not None and du >= limit:
            continue
        for w in adj[u]:
            if w not in dist:
                dist[w] = du + 1
                queue.append(w)
    return dist


def distances_from(g: Graph, v: int) -> DistanceRow:
    if not (0 <= v < g.n):
        raise ParameterError(f"vertex {v} out of range [0, {g.n})")
    with g._lock:
        rows = g._cache.setdefault("bfs", {})
        row = rows.get(v)
    if row is None:
        found = _bfs(g, v)
        row = DistanceRow(v, tuple(found.get(u, UNREACHABLE) for u in range(g.n)))
        with g._lock:
            rows[v] = row
    return row


def distance(g: Graph, u: int, v: int):
    return distances_from(g, u)[v]


def ball(g: Graph, v: int, radius: int) -> list[int]:
    """Sorted vertices within graph distance ``radius`` of ``v``."""
    return sorted(_bfs(g, v, radius))


def all_pairs_distances(g: Graph) -> np.ndarray:
    """Dense distance matrix (float, ``inf`` for unreachable)."""
    if g.n > MAX_ALL_PAIRS:
        raise SizeGuardError(f"all-pairs distances refused above {MAX_ALL_PAIRS} vertices (n={g.n})")
    out = np.empty((g.n, g.n))
    for v in range(g.n):
        out[v] = distances_from(g, v).dist
    return out


def power_graph(g: Graph, p: int) -> Graph:
    if isinstance(p, bool) or not isinstance(p, (int, np.integer)) or p < 1:
        raise ParameterError(f"power must be a positive integer, got {p!r}")
    if p == 1:
        return g
    adjacency = []
    for v in range(g.n):
        reach = _bfs(g, v, p)
        del reach[v]
        adjacency.append(tuple(sorted(reach)))
    return Graph(g.n, tuple(adjacency), f"{g.label}^{p}" if g.label else "")
