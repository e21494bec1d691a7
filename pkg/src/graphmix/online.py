"""Sequential learning on graphs: game engine, base learners, sheltered composite.

Round t visits vertex ``ordering[t]``. The learner commits to a distribution
over the m hypotheses, the adversary's outcome is ``g_t(w) = L(w) - loss(w, Z_t)``,
the learner pays ``-<pi_t, g_t>``, and only then is the outcome revealed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import ParameterError, ShelterViolation
from .graph import Graph, _bfs
from .partitions import WeightedStableFamily, validate_partition


def as_distribution(probs, tol: float = 1e-12) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ParameterError("a distribution must be a non-empty vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)) or abs(p.sum() - 1.0) > tol:
        raise ParameterError("a distribution must be non-negative and sum to 1")
    return p


def uniform_prior(m: int) -> np.ndarray:
    return np.full(m, 1.0 / m)


@dataclass
class FiniteHypothesisSetting:
    """Loss table ``loss[w, z]`` in [0, 1] over hypotheses w and instance ids z."""

    loss: np.ndarray
    population_loss: np.ndarray
    provenance: str = "exact"
    stderr: float = 0.0

    def __post_init__(self):
        self.loss = np.asarray(self.loss, dtype=float)
        self.population_loss = np.asarray(self.population_loss, dtype=float)
        if self.loss.ndim != 2:
            raise ParameterError("loss table must be 2-D (hypotheses x instances)")
        if np.any(self.loss < 0) or np.any(self.loss > 1):
            raise ParameterError("losses must lie in [0, 1]")
        if self.population_loss.shape != (self.loss.shape[0],):
            raise ParameterError("population_loss needs one entry per hypothesis")

    @property
    def m(self) -> int:
        return self.loss.shape[0]

    def empirical_loss(self, data: Sequence[int]) -> np.ndarray:
        return self.loss[:, np.asarray(data)].mean(axis=1)


@dataclass
class GameConfig:
    graph: Graph
    ordering: tuple[int, ...] | None = None
    shelter_d: int = 1
    family: WeightedStableFamily | None = None

    def __post_init__(self):
        n = self.graph.n
        if self.ordering is None:
            self.ordering = tuple(range(n))
        self.ordering = tuple(int(v) for v in self.ordering)
        if sorted(self.ordering) != list(range(n)):
            raise ParameterError("ordering must be a permutation of the vertices (no repeats)")
        if self.shelter_d < 1:
            raise ParameterError("shelter_d must be >= 1")
        if self.family is not None:
            if self.family.d != self.shelter_d:
                raise ParameterError(f"family has d={self.family.d}, config has shelter_d={self.shelter_d}")
            report = validate_partition(self.graph, self.family, cross_check=False)
            if not report.valid:
                raise ParameterError(f"family is not a valid partition: {report.violations[:3]}")
        elif self.shelter_d > 1:
            raise ParameterError("a sheltered game (shelter_d > 1) needs a partition family")

    @property
    def round_of(self) -> list[int]:
        inv = [0] * len(self.ordering)
        for t, v in enumerate(self.ordering):
            inv[v] = t
        return inv


class Learner(Protocol):
    def next_action(self, t: int, vertex: int) -> np.ndarray: ...

    def observe(self, t: int, vertex: int, outcome: np.ndarray) -> None: ...

    def access(self) -> tuple[int, ...]:
        """Rounds whose outcomes the most recent action depended on."""
        ...


class EWALearner:
    """Exponentially weighted averaging over a finite class.

    Expert cost per round is ``-g(w)``; the action is proportional to
    ``prior * exp(-eta * cumulative cost)``.
    """

    def __init__(self, prior, eta: float):
        if eta < 0:
            raise ParameterError("eta must be non-negative")
        self.prior = as_distribution(prior)
        self.eta = float(eta)
        self.log_prior = np.log(np.where(self.prior > 0, self.prior, 1.0))
        self.log_prior[self.prior == 0] = -np.inf
        self.cum_cost = np.zeros_like(self.prior)
        self.observed: list[int] = []

    def next_action(self, t: int = 0, vertex: int = 0) -> np.ndarray:
        if self.eta == 0 or not self.observed:
            return self.prior.copy()
        logits = self.log_prior - self.eta * self.cum_cost
        logits -= logits[np.isfinite(logits)].max()
        w = np.exp(logits)
        return w / w.sum()

    def observe(self, t: int, vertex: int, outcome) -> None:
        self.cum_cost -= np.asarray(outcome, dtype=float)
        self.observed.append(t)

    def access(self) -> tuple[int, ...]:
        return tuple(self.observed)


def make_ewa(prior, eta: float) -> EWALearner:
    return EWALearner(prior, eta)


class ShelteredLearner:
    """One independent base learner per subset, mixed with the partition weights.

    At vertex v the action is ``sum_{k: v in S_k} w_k * a_k`` where ``a_k`` is
    copy k's current action; outcome at v goes only to the copies whose subset
    contains v. Every copy therefore reads only vertices of its own d-stable
    set, all at distance >= d from v.
    """

    def __init__(self, base_factory: Callable[[], Learner], fam: WeightedStableFamily, config: GameConfig):
        if config.family is not None and config.family != fam:
            raise ParameterError("family differs from the one declared in the game config")
        if fam.d != config.shelter_d:
            raise ParameterError(f"family has d={fam.d}, config has shelter_d={config.shelter_d}")
        report = validate_partition(config.graph, fam, cross_check=False)
        if not report.valid:
            raise ParameterError(f"family is not a valid d-stable partition: {report.violations[:3]}")
        self.family = fam
        self.kappa = fam.membership()
        self.weights = [float(w) for w in fam.weights]
        self.copies = [base_factory() for _ in fam.subsets]
        self.copy_actions: list[list[tuple[int, np.ndarray]]] = [[] for _ in fam.subsets]
        self._access: tuple[int, ...] = ()

    def next_action(self, t: int, vertex: int) -> np.ndarray:
        action = None
        read: set[int] = set()
        for k in self.kappa[vertex]:
            a = np.asarray(self.copies[k].next_action(t, vertex), dtype=float)
            self.copy_actions[k].append((t, a))
            read.update(self.copies[k].access())
            action = self.weights[k] * a if action is None else action + self.weights[k] * a
        self._access = tuple(sorted(read))
        return action / action.sum()

    def observe(self, t: int, vertex: int, outcome) -> None:
        for k in self.kappa[vertex]:
            self.copies[k].observe(t, vertex, outcome)

    def access(self) -> tuple[int, ...]:
        return self._access

    def subplayer_regrets(self, transcript: "Transcript", comparator) -> list[float]:
        """Regret of each copy on its own subsequence of rounds."""
        q = as_distribution(comparator, tol=1e-9)
        out = []
        for records in self.copy_actions:
            r = 0.0
            for t, a in records:
                g = transcript.outcomes[t]
                r += float(q @ g - a @ g)
            out.append(r)
        return out


def make_sheltered(base_factory: Callable[[], Learner], fam: WeightedStableFamily,
                   config: GameConfig) -> ShelteredLearner:
    return ShelteredLearner(base_factory, fam, config)


@dataclass
class Transcript:
    vertices: np.ndarray
    actions: np.ndarray  # (n, m)
    outcomes: np.ndarray  # (n, m)
    access_log: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def costs(self) -> np.ndarray:
        return -np.einsum("tm,tm->t", self.actions, self.outcomes)

    @property
    def M(self) -> float:
        return float(np.einsum("tm,tm->", self.actions, self.outcomes))

    def to_dict(self) -> dict:
        costs = self.costs
        return {
            "M": self.M,
            "rounds": [
                {
                    "round": t,
                    "vertex": int(self.vertices[t]),
                    "action": self.actions[t].tolist(),
                    "outcome": self.outcomes[t].tolist(),
                    "cost": float(costs[t]),
                    "access": list(self.access_log[t]) if self.access_log else [],
                }
                for t in range(self.n)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "vertex", "cost", "cumulative_M"])
        cum = 0.0
        for t, c in enumerate(self.costs):
            cum -= float(c)
            w.writerow([t, int(self.vertices[t]), repr(float(c)), repr(cum)])
        return buf.getvalue()


def _audit_round(graph: Graph, vertices: Sequence[int], t: int, reads: Sequence[int], d: int) -> list[dict]:
    bad = []
    if not reads:
        return bad
    future = [s for s in reads if s >= t]
    if future:
        bad.append({"round": t, "reason": "future", "rounds": future})
    if d > 1:
        near = _bfs(graph, int(vertices[t]), d - 1)
        close = [s for s in reads if s < t and int(vertices[s]) in near]
        if close:
            bad.append({"round": t, "reason": "inside exterior", "rounds": close})
    return bad


def audit_access(graph: Graph, vertices: Sequence[int], access_log: Sequence[Sequence[int]], d: int) -> list[dict]:
    """Every read must be of an earlier round at graph distance >= d from the current vertex."""
    bad = []
    for t, reads in enumerate(access_log):
        bad.extend(_audit_round(graph, vertices, t, reads, d))
    return bad


def play_game(setting: FiniteHypothesisSetting, config: GameConfig, learner: Learner,
              data: Sequence[int]) -> Transcript:
    """Run the n-round game in ``config.ordering``; ``data[v]`` is the instance id at vertex v."""
    g = config.graph
    data = np.asarray(data)
    if len(data) != g.n:
        raise ParameterError(f"need one instance per vertex ({g.n}), got {len(data)}")
    n, m = g.n, setting.m
    L = setting.population_loss
    actions = np.empty((n, m))
    outcomes = np.empty((n, m))
    vertices = np.asarray(config.ordering, dtype=np.int64)
    log: list[tuple[int, ...]] = []
    for t, v in enumerate(config.ordering):
        a = as_distribution(learner.next_action(t, v), tol=1e-9)
        if a.shape != (m,):
            raise ParameterError(f"learner returned an action of shape {a.shape}, expected ({m},)")
        reads = tuple(learner.access())
        bad = _audit_round(g, vertices, t, reads, config.shelter_d)
        if bad:
            raise ShelterViolation(f"round {t} (vertex {v}) read forbidden outcomes: {bad[0]}")
        outcome = L - setting.loss[:, data[v]]
        actions[t] = a
        outcomes[t] = outcome
        log.append(reads)
        learner.observe(t, v, outcome.copy())
    return Transcript(vertices, actions, outcomes, log)


def regret_of(transcript: Transcript, comparator) -> float:
    """``sum_t <Q, g_t> - <pi_t, g_t>``."""
    q = as_distribution(comparator, tol=1e-9)
    return float(np.sum(transcript.outcomes @ q) - np.einsum("tm,tm->", transcript.actions, transcript.outcomes))


# --------------------------------------------------------------------------
# regret bounds of base strategies and their sheltered versions


@dataclass(frozen=True)
class SqrtScaled:
    c: float = 1.0

    def __call__(self, T: float) -> float:
        return self.c * math.sqrt(T)


@dataclass(frozen=True)
class EwaBound:
    """Regret of exponential weights with costs in [-1, 1]: ``KL/eta + eta T / 2``."""

    kl: float
    eta: float

    def __call__(self, T: float) -> float:
        return self.kl / self.eta + self.eta * T / 2


@dataclass(frozen=True)
class ParamFreeBound:
    """Coin-betting expert regret ``sqrt(3 (3 + KL) T)``."""

    kl: float

    def __call__(self, T: float) -> float:
        return math.sqrt(3 * (3 + self.kl) * T)


def base_bound_from_dict(data: dict):
    kind = data.get("kind")
    if kind == "sqrt_scaled":
        return SqrtScaled(float(data.get("c", 1.0)))
    if kind == "ewa":
        return EwaBound(float(data["kl"]), float(data["eta"]))
    if kind == "param_free":
        return ParamFreeBound(float(data["kl"]))
    raise ParameterError(f"unknown base bound {kind!r}")


def sheltered_regret_bound(W: float, base_bound: Callable[[float], float], n: int) -> float:
    """``W * F(n / W)``: regret of the sheltered composite given the base regret F."""
    if not W >= 1:
        raise ParameterError(f"weight sum must be >= 1, got {W}")
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    return float(W) * base_bound(n / float(W))
