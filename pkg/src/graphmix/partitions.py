"""d-stable fractional partitions: construction, exact validation, weight sums.

A family ``{(w_k, S_k)}`` is a d-stable fractional partition of G when every
S_k has pairwise graph distance >= d and every vertex is covered with total
weight exactly 1. All weights are :class:`fractions.Fraction`.
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Sequence

import networkx as nx

from .errors import ParameterError, SizeGuardError
from .graph import Graph, normalize_spec, power_graph
from .lp import solve_covering_lp

MAX_EXACT_SETS = 200


@dataclass(frozen=True)
class WeightedStableFamily:
    d: int
    subsets: tuple[tuple[int, ...], ...]
    weights: tuple[Fraction, ...]
    graph_n: int

    @classmethod
    def build(cls, d: int, subsets, weights, graph_n: int) -> "WeightedStableFamily":
        """Normalize: sort members, coerce weights to Fraction, drop zero-weight and empty sets."""
        if isinstance(d, bool) or not isinstance(d, int) or d < 1:
            raise ParameterError(f"d must be a positive integer, got {d!r}")
        subsets = list(subsets)
        weights = [Fraction(w) for w in weights]
        if len(subsets) != len(weights):
            raise ParameterError("need exactly one weight per subset")
        kept_s, kept_w = [], []
        for s, w in zip(subsets, weights):
            if w < 0:
                raise ParameterError(f"negative weight {w}")
            s = tuple(sorted(set(int(v) for v in s)))
            if w > 0 and s:
                kept_s.append(s)
                kept_w.append(w)
        return cls(d, tuple(kept_s), tuple(kept_w), int(graph_n))

    def membership(self) -> list[list[int]]:
        """``kappa[v]``: indices of the subsets containing v."""
        kappa: list[list[int]] = [[] for _ in range(self.graph_n)]
        for k, s in enumerate(self.subsets):
            for v in s:
                if 0 <= v < self.graph_n:
                    kappa[v].append(k)
        return kappa

    def to_dict(self) -> dict[str, Any]:
        return {
            "d": self.d,
            "graph_n": self.graph_n,
            "subsets": [list(s) for s in self.subsets],
            "weights": [f"{w.numerator}/{w.denominator}" for w in self.weights],
        }

    @classmethod
    def from_dict(cls, data: dict, graph_n: int | None = None) -> "WeightedStableFamily":
        try:
            n = data.get("graph_n", graph_n)
            if n is None:
                n = 1 + max((v for s in data["subsets"] for v in s), default=-1)
            return cls.build(int(data["d"]), data["subsets"], [Fraction(w) for w in data["weights"]], n)
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise ParameterError(f"malformed family document: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def weight_sum(fam: WeightedStableFamily) -> Fraction:
    return sum(fam.weights, Fraction(0))


@dataclass
class ValidationReport:
    valid: bool
    violations: list[tuple[str, Any]]
    weight_sum: Fraction
    per_vertex_coverage: Fraction
    """Largest |coverage(v) - 1| over all vertices."""

    def to_dict(self) -> dict[str, Any]:
        return {
            "valid": self.valid,
            "violations": [[kind, detail] for kind, detail in self.violations],
            "weight_sum": str(self.weight_sum),
            "per_vertex_coverage": str(self.per_vertex_coverage),
        }


def _close_pair(g: Graph, members: Sequence[int], max_dist: int) -> tuple[int, int] | None:
    """Some pair of distinct members within ``max_dist`` of each other, or None.

    Multi-source BFS to depth ``max_dist - 1``; an edge whose endpoints have
    different nearest members at depths a, b certifies a pair at distance
    <= a + b + 1, and the closest pair always produces such an edge.
    """
    if max_dist < 1 or len(members) < 2:
        return None
    depth = {v: 0 for v in members}
    owner = {v: v for v in members}
    queue = deque(members)
    adj = g.adjacency
    while queue:
        x = queue.popleft()
        dx, ox = depth[x], owner[x]
        for y in adj[x]:
            dy = depth.get(y)
            if dy is None:
                if dx + 1 <= max_dist - 1:
                    depth[y] = dx + 1
                    owner[y] = ox
                    queue.append(y)
            elif owner[y] != ox and dx + dy + 1 <= max_dist:
                return (min(ox, owner[y]), max(ox, owner[y]))
    return None


def is_d_stable(g: Graph, members: Sequence[int], d: int) -> bool:
    return _close_pair(g, list(members), d - 1) is None


def is_stable(g: Graph, members: Sequence[int]) -> bool:
    inside = set(members)
    return not any(w in inside for v in members for w in g.adjacency[v])


def validate_partition(g: Graph, fam: WeightedStableFamily, cross_check: bool = True) -> ValidationReport:
    """Check d-stability of every subset and exact unit coverage of every vertex.

    With ``cross_check`` each subset is also tested for plain stability in the
    power graph G^(d-1); any disagreement between the two routes is reported.
    """
    if fam.graph_n != g.n:
        raise ParameterError(f"family refers to {fam.graph_n} vertices, graph has {g.n}")
    violations: list[tuple[str, Any]] = []
    power = power_graph(g, fam.d - 1) if cross_check and fam.d >= 2 else None
    for k, (s, w) in enumerate(zip(fam.subsets, fam.weights)):
        if w <= 0:
            violations.append(("nonpositive_weight", {"subset": k}))
        bad = [v for v in s if not 0 <= v < g.n]
        if bad:
            violations.append(("vertex_out_of_range", {"subset": k, "vertices": bad}))
            continue
        pair = _close_pair(g, list(s), fam.d - 1)
        if pair is not None:
            violations.append(("not_d_stable", {"subset": k, "vertices": list(pair)}))
        if power is not None and is_stable(power, s) != (pair is None):
            violations.append(("cross_check_mismatch", {"subset": k}))
    cover = [Fraction(0)] * g.n
    for s, w in zip(fam.subsets, fam.weights):
        for v in s:
            if 0 <= v < g.n:
                cover[v] += w
    worst = max((abs(c - 1) for c in cover), default=Fraction(0))
    off = [v for v, c in enumerate(cover) if c != 1]
    if off:
        violations.append(("coverage", {"vertices": off[:20], "count": len(off)}))
    total = weight_sum(fam)
    if total < 1 and g.n > 0:
        violations.append(("weight_sum_below_one", {"weight_sum": str(total)}))
    if not off and sum((w * len(s) for s, w in zip(fam.subsets, fam.weights)), Fraction(0)) != g.n:
        violations.append(("sum_identity", {}))
    return ValidationReport(not violations, violations, total, worst)


# --------------------------------------------------------------------------
# constructions


def residue_partition(spec: dict | str, d: int) -> WeightedStableFamily:
    """Residue-class partition for path, cycle, grid and torus graphs."""
    spec = normalize_spec(spec)
    if isinstance(d, bool) or not isinstance(d, int) or d < 1:
        raise ParameterError(f"d must be a positive integer, got {d!r}")
    kind = spec["kind"]
    hint = "; use greedy_power_coloring instead"
    if kind in ("path", "cycle"):
        n = spec["n"]
        if kind == "cycle" and n % d:
            raise ParameterError(f"residue partition of cycle({n}) needs d | n, got d={d}{hint}")
        classes = [tuple(range(r, n, d)) for r in range(min(d, n))]
    elif kind in ("grid", "torus"):
        rows, cols = spec["rows"], spec["cols"]
        if kind == "torus" and (rows % d or cols % d):
            raise ParameterError(f"residue partition of torus {rows}x{cols} needs d to divide both sides{hint}")
        classes = [
            tuple(i * cols + j for i in range(a, rows, d) for j in range(b, cols, d))
            for a in range(min(d, rows))
            for b in range(min(d, cols))
        ]
        n = rows * cols
    else:
        raise ParameterError(f"no residue construction for graph kind {kind!r}{hint}")
    return WeightedStableFamily.build(d, classes, [1] * len(classes), n)


def greedy_power_coloring(g: Graph, d: int, strategy: str = "dsatur") -> WeightedStableFamily:
    """Proper coloring of G^(d-1); each color class is a d-stable set of weight 1."""
    if isinstance(d, bool) or not isinstance(d, int) or d < 1:
        raise ParameterError(f"d must be a positive integer, got {d!r}")
    if strategy not in ("dsatur", "largest_first"):
        raise ParameterError(f"unknown strategy {strategy!r}")
    if d == 1 or g.n == 0:
        return WeightedStableFamily.build(d, [range(g.n)], [1], g.n)
    adj = power_graph(g, d - 1).adjacency
    color = [-1] * g.n
    if strategy == "largest_first":
        for v in sorted(range(g.n), key=lambda v: (-len(adj[v]), v)):
            used = {color[w] for w in adj[v]}
            c = 0
            while c in used:
                c += 1
            color[v] = c
    else:
        seen: list[set[int]] = [set() for _ in range(g.n)]
        heap = [(0, -len(adj[v]), v) for v in range(g.n)]
        heapq.heapify(heap)
        while heap:
            neg_sat, _, v = heapq.heappop(heap)
            if color[v] >= 0 or -neg_sat != len(seen[v]):
                continue
            c = 0
            while c in seen[v]:
                c += 1
            color[v] = c
            for w in adj[v]:
                if color[w] < 0 and c not in seen[w]:
                    seen[w].add(c)
                    heapq.heappush(heap, (-len(seen[w]), -len(adj[w]), w))
    classes: dict[int, list[int]] = {}
    for v, c in enumerate(color):
        classes.setdefault(c, []).append(v)
    return WeightedStableFamily.build(d, [classes[c] for c in sorted(classes)], [1] * len(classes), g.n)


def maximal_stable_sets(g: Graph, d: int) -> list[tuple[int, ...]]:
    """All maximal d-stable subsets, sorted."""
    if d == 1:
        return [tuple(range(g.n))]
    h = power_graph(g, d - 1)
    comp = nx.Graph()
    comp.add_nodes_from(range(g.n))
    for v in range(g.n):
        nbrs = set(h.adjacency[v])
        comp.add_edges_from((v, w) for w in range(v + 1, g.n) if w not in nbrs)
    return sorted(tuple(sorted(c)) for c in nx.find_cliques(comp))


def shrink_to_partition(n: int, d: int, subsets, weights) -> WeightedStableFamily:
    """Turn a fractional cover into a partition without increasing the weight sum.

    Over-covered vertices are removed from the lowest-weight sets first; a set
    is split in two when only part of its weight has to give the vertex up.
    Subsets of d-stable sets stay d-stable.
    """
    entries = [[Fraction(w), set(s)] for s, w in zip(subsets, weights) if w > 0]
    cover = [Fraction(0)] * n
    for w, s in entries:
        for v in s:
            cover[v] += w
    for v in range(n):
        excess = cover[v] - 1
        if excess <= 0:
            continue
        holders = sorted((i for i, (w, s) in enumerate(entries) if v in s), key=lambda i: (entries[i][0], i))
        for i in holders:
            if excess == 0:
                break
            w, s = entries[i]
            take = min(w, excess)
            if take == w:
                s.discard(v)
            else:
                entries[i][0] = w - take
                entries.append([take, s - {v}])
            excess -= take
        cover[v] = Fraction(1)
    merged: dict[tuple[int, ...], Fraction] = {}
    for w, s in entries:
        if s:
            key = tuple(sorted(s))
            merged[key] = merged.get(key, Fraction(0)) + w
    keys = sorted(merged)
    return WeightedStableFamily.build(d, keys, [merged[k] for k in keys], n)


def exact_fractional_chromatic(
    g: Graph, d: int, max_vertices: int = 16
) -> tuple[Fraction, WeightedStableFamily]:
    """Exact fractional d-chromatic number with an optimal partition as witness."""
    if g.n > max_vertices:
        raise SizeGuardError(f"exact fractional chromatic number limited to {max_vertices} vertices (n={g.n})")
    if isinstance(d, bool) or not isinstance(d, int) or d < 1:
        raise ParameterError(f"d must be a positive integer, got {d!r}")
    sets = maximal_stable_sets(g, d)
    if len(sets) > MAX_EXACT_SETS:
        raise SizeGuardError(f"{len(sets)} maximal stable sets exceeds the limit of {MAX_EXACT_SETS}")
    value, x, _ = solve_covering_lp(g.n, sets)
    witness = shrink_to_partition(g.n, d, sets, x)
    return value, witness


def family_for(g: Graph, d: int, source: str = "residue", spec: dict | str | None = None,
               strategy: str = "dsatur") -> tuple[WeightedStableFamily, str]:
    """Best-effort family for experiments: residue when it applies, greedy otherwise.

    Returns the family and the name of the construction actually used.
    """
    if source == "residue" and spec is not None:
        try:
            return residue_partition(spec, d), "residue"
        except ParameterError:
            pass
    elif source == "exact":
        return exact_fractional_chromatic(g, d)[1], "exact"
    return greedy_power_coloring(g, d, strategy), f"greedy:{strategy}"

