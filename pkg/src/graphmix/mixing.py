"""Mixing profiles and graph-indexed random fields with known dependence structure."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import NoCertifiedProfile, ParameterError, SizeGuardError
from .graph import Graph, all_pairs_distances, ball, distance
from .rng import keyed_uniform, stream

INFINITE = math.inf
MAX_ENUMERATION = 2**20
MC_ORACLE_DRAWS = 10**6


def _fmt_value(x: float) -> float | str:
    return "inf" if x == math.inf else x


def _read_value(x) -> float:
    return math.inf if x in ("inf", "INFINITE", "Infinity") else float(x)


# --------------------------------------------------------------------------
# mixing profiles


@dataclass(frozen=True)
class MixingProfile:
    """A non-negative non-increasing sequence ``phi_d``, d = 1, 2, ...

    Build with the named constructors rather than directly.
    """

    kind: str
    d_star: int = 0
    cap: float = INFINITE
    C: float = 0.0
    tau: float = 0.0
    r: float = 0.0
    values: tuple[float, ...] = ()

    @classmethod
    def zero(cls) -> "MixingProfile":
        return cls("zero")

    @classmethod
    def threshold(cls, d_star: int, cap: float = INFINITE) -> "MixingProfile":
        if d_star < 0 or cap < 0:
            raise ParameterError("threshold profile needs d_star >= 0 and cap >= 0")
        return cls("threshold", d_star=int(d_star), cap=float(cap))

    @classmethod
    def geometric(cls, C: float, tau: float) -> "MixingProfile":
        if C <= 0 or tau <= 0:
            raise ParameterError("geometric profile needs C > 0 and tau > 0")
        return cls("geometric", C=float(C), tau=float(tau))

    @classmethod
    def algebraic(cls, C: float, r: float) -> "MixingProfile":
        if C <= 0 or r <= 0:
            raise ParameterError("algebraic profile needs C > 0 and r > 0")
        return cls("algebraic", C=float(C), r=float(r))

    @classmethod
    def table(cls, values: Sequence[float]) -> "MixingProfile":
        vals = tuple(float(v) for v in values)
        if not vals:
            raise ParameterError("table profile needs at least one value")
        if any(v < 0 or math.isnan(v) for v in vals):
            raise ParameterError("profile values must be non-negative")
        if any(b > a for a, b in zip(vals, vals[1:])):
            raise ParameterError("profile values must be non-increasing in d")
        return cls("table", values=vals)

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "zero":
            return {"kind": "zero"}
        if self.kind == "threshold":
            return {"kind": "threshold", "d_star": self.d_star, "cap": _fmt_value(self.cap)}
        if self.kind == "geometric":
            return {"kind": "geometric", "C": self.C, "tau": self.tau}
        if self.kind == "algebraic":
            return {"kind": "algebraic", "C": self.C, "r": self.r}
        return {"kind": "table", "values": [_fmt_value(v) for v in self.values]}

    @classmethod
    def from_dict(cls, data: dict) -> "MixingProfile":
        kind = data.get("kind")
        try:
            if kind == "zero":
                return cls.zero()
            if kind == "threshold":
                return cls.threshold(int(data["d_star"]), _read_value(data.get("cap", "inf")))
            if kind == "geometric":
                return cls.geometric(float(data["C"]), float(data["tau"]))
            if kind == "algebraic":
                return cls.algebraic(float(data["C"]), float(data["r"]))
            if kind == "table":
                return cls.table([_read_value(v) for v in data["values"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"malformed mixing profile: {exc}") from None
        raise ParameterError(f"unknown mixing profile kind {kind!r}")


def phi_value(profile: MixingProfile, d: int) -> float:
    """``phi_d``; may be ``INFINITE`` for threshold profiles."""
    if d < 1:
        raise ParameterError(f"d must be >= 1, got {d}")
    kind = profile.kind
    if kind == "zero":
        return 0.0
    if kind == "threshold":
        return profile.cap if d <= profile.d_star else 0.0
    if kind == "geometric":
        return profile.C * math.exp(-d / profile.tau)
    if kind == "algebraic":
        return profile.C * d ** (-profile.r)
    # table entries past the end repeat the last value
    return profile.values[min(d, len(profile.values)) - 1]


# --------------------------------------------------------------------------
# bounded distributions and post-maps


@dataclass(frozen=True)
class Distribution:
    """Bounded scalar distribution: ``uniform(lo, hi)``, ``bernoulli(p)`` or ``discrete(values, probs)``."""

    kind: str
    lo: float = 0.0
    hi: float = 1.0
    atoms: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()

    @classmethod
    def uniform(cls, lo: float = 0.0, hi: float = 1.0) -> "Distribution":
        if not hi > lo:
            raise ParameterError("uniform needs hi > lo")
        return cls("uniform", float(lo), float(hi))

    @classmethod
    def discrete(cls, atoms: Sequence[float], probs: Sequence[float] | None = None) -> "Distribution":
        atoms = tuple(float(a) for a in atoms)
        if not atoms:
            raise ParameterError("discrete distribution needs at least one atom")
        if probs is None:
            probs = [1.0 / len(atoms)] * len(atoms)
        probs = tuple(float(p) for p in probs)
        if len(probs) != len(atoms) or any(p < 0 for p in probs) or abs(sum(probs) - 1) > 1e-12:
            raise ParameterError("discrete probabilities must be non-negative and sum to 1")
        return cls("discrete", min(atoms), max(atoms), atoms, probs)

    @classmethod
    def bernoulli(cls, p: float) -> "Distribution":
        if not 0 <= p <= 1:
            raise ParameterError("bernoulli needs p in [0, 1]")
        return cls.discrete((0.0, 1.0), (1 - p, p))

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    @property
    def mean(self) -> float:
        if self.is_discrete:
            return float(sum(a * p for a, p in zip(self.atoms, self.probs)))
        return 0.5 * (self.lo + self.hi)

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF transform of uniform [0, 1) draws."""
        if not self.is_discrete:
            return self.lo + (self.hi - self.lo) * u
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, u, side="right")
        return np.asarray(self.atoms)[np.minimum(idx, len(self.atoms) - 1)]

    def to_dict(self) -> dict[str, Any]:
        if self.is_discrete:
            return {"kind": "discrete", "values": list(self.atoms), "probs": list(self.probs)}
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, data: dict) -> "Distribution":
        kind = data.get("kind")
        if kind == "uniform":
            return cls.uniform(data.get("lo", 0.0), data.get("hi", 1.0))
        if kind == "bernoulli":
            return cls.bernoulli(data["p"])
        if kind == "discrete":
            return cls.discrete(data["values"], data.get("probs"))
        if kind == "grid":
            # evenly spaced atoms on [lo, hi], uniform weights
            k = int(data["levels"])
            if k < 2:
                raise ParameterError("grid distribution needs at least 2 levels")
            lo, hi = float(data.get("lo", 0.0)), float(data.get("hi", 1.0))
            return cls.discrete([lo + (hi - lo) * i / (k - 1) for i in range(k)])
        raise ParameterError(f"unknown distribution kind {kind!r}")


@dataclass(frozen=True)
class Transform:
    """Bounded post-map applied to a local average: identity, clip or threshold."""

    kind: str = "identity"
    lo: float = 0.0
    hi: float = 1.0
    theta: float = 0.5

    def __call__(self, x):
        if self.kind == "identity":
            return x
        if self.kind == "clip":
            return np.clip(x, self.lo, self.hi)
        return (np.asarray(x) >= self.theta).astype(float)

    def out_range(self, lo: float, hi: float) -> tuple[float, float]:
        if self.kind == "identity":
            return lo, hi
        if self.kind == "clip":
            return max(lo, self.lo), min(hi, self.hi)
        return 0.0, 1.0

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "identity":
            return {"kind": "identity"}
        if self.kind == "clip":
            return {"kind": "clip", "lo": self.lo, "hi": self.hi}
        return {"kind": "threshold", "theta": self.theta}

    @classmethod
    def from_dict(cls, data: dict | None) -> "Transform":
        if not data or data.get("kind", "identity") == "identity":
            return cls()
        if data["kind"] == "clip":
            lo, hi = float(data["lo"]), float(data["hi"])
            if not hi > lo:
                raise ParameterError("clip needs hi > lo")
            return cls("clip", lo=lo, hi=hi)
        if data["kind"] == "threshold":
            return cls("threshold", theta=float(data["theta"]))
        raise ParameterError(f"unknown transform kind {data['kind']!r}")


# --------------------------------------------------------------------------
# field models


@dataclass(frozen=True)
class FieldModel:
    """Generative model for per-vertex values.

    ``iid``: independent draws from ``noise``.
    ``local_average``: ``transform(mean of noise over the radius-r ball)``.
    ``distance_weighted``: ``clip(sum_u alpha^dist(u,v) xi_u / sum_u alpha^dist(u,v))``.
    """

    kind: str
    noise: Distribution = field(default_factory=Distribution.uniform)
    radius: int = 0
    transform: Transform = field(default_factory=Transform)
    alpha: float = 0.5
    clip: tuple[float, float] = (0.0, 1.0)

    @classmethod
    def iid(cls, marginal: Distribution | None = None) -> "FieldModel":
        return cls("iid", marginal or Distribution.uniform())

    @classmethod
    def local_average(cls, radius: int, noise: Distribution | None = None,
                      transform: Transform | None = None) -> "FieldModel":
        if radius < 0:
            raise ParameterError("local_average radius must be >= 0")
        return cls("local_average", noise or Distribution.uniform(), int(radius), transform or Transform())

    @classmethod
    def distance_weighted(cls, alpha: float, clip: tuple[float, float] = (0.0, 1.0),
                          noise: Distribution | None = None) -> "FieldModel":
        if not 0 < alpha < 1:
            raise ParameterError("distance_weighted needs alpha in (0, 1)")
        if not clip[1] > clip[0]:
            raise ParameterError("clip interval must have hi > lo")
        return cls("distance_weighted", noise or Distribution.uniform(), alpha=float(alpha),
                   clip=(float(clip[0]), float(clip[1])))

    @property
    def value_range(self) -> tuple[float, float]:
        if self.kind == "iid":
            return self.noise.lo, self.noise.hi
        if self.kind == "local_average":
            return self.transform.out_range(self.noise.lo, self.noise.hi)
        return max(self.clip[0], self.noise.lo), min(self.clip[1], self.noise.hi)

    @property
    def range_length(self) -> float:
        lo, hi = self.value_range
        return hi - lo

    @property
    def tag(self) -> str:
        if self.kind == "local_average":
            return f"local_average(r={self.radius})"
        if self.kind == "distance_weighted":
            return f"distance_weighted(alpha={self.alpha})"
        return "iid"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "noise": self.noise.to_dict()}
        if self.kind == "local_average":
            out["radius"] = self.radius
            out["transform"] = self.transform.to_dict()
        elif self.kind == "distance_weighted":
            out["alpha"] = self.alpha
            out["clip"] = list(self.clip)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FieldModel":
        kind = data.get("kind")
        noise_doc = data.get("noise", data.get("marginal"))
        noise = Distribution.from_dict(noise_doc) if noise_doc else None
        try:
            if kind == "iid":
                return cls.iid(noise)
            if kind == "local_average":
                return cls.local_average(int(data["radius"]), noise, Transform.from_dict(data.get("transform")))
            if kind == "distance_weighted":
                return cls.distance_weighted(float(data["alpha"]), tuple(data.get("clip", (0.0, 1.0))), noise)
        except KeyError as exc:
            raise ParameterError(f"field model {kind!r} missing {exc}") from None
        raise ParameterError(f"unknown field model kind {kind!r}")


@dataclass
class Sample:
    values: np.ndarray
    model_tag: str
    seed: int
    trial: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("vertex,value\n")
        for v, x in enumerate(self.values):
            buf.write(f"{v},{x!r}\n")
        return buf.getvalue()


def ball_matrix(g: Graph, radius: int) -> tuple[sp.csr_matrix, np.ndarray]:
    """0/1 matrix with row v marking the radius-r ball of v, and the ball sizes."""
    key = ("ball", radius)
    with g._lock:
        cached = g._cache.get(key)
    if cached is not None:
        return cached
    rows, cols = [], []
    for v in range(g.n):
        b = ball(g, v, radius)
        rows.extend([v] * len(b))
        cols.extend(b)
    mat = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(g.n, g.n))
    sizes = np.asarray(mat.sum(axis=1)).ravel()
    with g._lock:
        g._cache[key] = (mat, sizes)
    return mat, sizes


def _decay_matrix(g: Graph, alpha: float) -> np.ndarray:
    if g.n > 5000:
        raise SizeGuardError("distance_weighted fields are limited to 5000 vertices")
    with g._lock:
        cached = g._cache.get(("decay", alpha))
    if cached is not None:
        return cached
    dist = all_pairs_distances(g)
    w = np.where(np.isinf(dist), 0.0, alpha ** np.where(np.isinf(dist), 0, dist))
    w /= w.sum(axis=1, keepdims=True)
    with g._lock:
        g._cache[("decay", alpha)] = w
    return w


def noise_block(n: int, model: FieldModel, seed: int, trials: Sequence[int], stream_id: int = 0) -> np.ndarray:
    """Noise for each trial, shape (len(trials), n); row i depends only on (seed, trials[i])."""
    out = np.empty((len(trials), n))
    for i, t in enumerate(trials):
        out[i] = stream(seed, t, stream_id).random(n)
    return model.noise.from_uniform(out)


def field_from_noise(g: Graph, model: FieldModel, noise: np.ndarray) -> np.ndarray:
    """Apply the model's deterministic map to a (trials, n) noise block."""
    if model.kind == "iid":
        return noise
    if model.kind == "local_average":
        mat, sizes = ball_matrix(g, model.radius)
        sums = (mat @ noise.T).T
        return model.transform(sums / sizes)
    w = _decay_matrix(g, model.alpha)
    return np.clip(noise @ w.T, *model.value_range)


def sample_fields(g: Graph, model: FieldModel, seed: int, trials: Sequence[int]) -> np.ndarray:
    return field_from_noise(g, model, noise_block(g.n, model, seed, trials))


def sample_field(g: Graph, model: FieldModel, seed: int, trial: int) -> Sample:
    values = sample_fields(g, model, seed, [trial])[0]
    lo, hi = model.value_range
    assert np.all((values >= lo - 1e-12) & (values <= hi + 1e-12)), "sampled value outside declared range"
    return Sample(values, model.tag, seed, trial)


def theoretical_profile(model: FieldModel) -> MixingProfile:
    """Certified profile of the *centered* field.

    For radius r, two values whose vertices are at distance >= 2r + 1 read
    disjoint noise sets, so conditioning on everything at distance >= d > 2r
    leaves the centered mean at exactly 0. Below that the range length caps it.
    """
    if model.kind == "iid" or (model.kind == "local_average" and model.radius == 0):
        return MixingProfile.zero()
    if model.kind == "local_average":
        return MixingProfile.threshold(2 * model.radius, model.range_length)
    raise NoCertifiedProfile(
        f"{model.tag} has no certified mixing profile; use empirical_max_cov for diagnostics"
    )


# --------------------------------------------------------------------------
# exact means


def sum_distribution(noise: Distribution, k: int) -> list[tuple[float, float]]:
    """Exact law of the sum of k iid draws of a discrete distribution, as (value, prob)."""
    dist = {0.0: 1.0}
    for _ in range(k):
        nxt: dict[float, float] = {}
        for s, p in dist.items():
            for a, q in zip(noise.atoms, noise.probs):
                if q > 0:
                    nxt[s + a] = nxt.get(s + a, 0.0) + p * q
        dist = nxt
    return sorted(dist.items())


@dataclass
class MeanOracle:
    """Per-vertex means with provenance (``exact`` or ``mc``) and a standard error."""

    means: np.ndarray
    method: str
    stderr: float = 0.0


def enumerable(noise: Distribution, k: int) -> bool:
    return noise.is_discrete and len(noise.atoms) ** k <= MAX_ENUMERATION


def field_means(g: Graph, model: FieldModel, seed: int = 0) -> MeanOracle:
    """Mean of each X_v, exact whenever the local noise law can be enumerated."""
    if model.kind == "iid":
        return MeanOracle(np.full(g.n, model.noise.mean), "exact")
    if model.kind == "local_average":
        if model.transform.kind == "identity":
            return MeanOracle(np.full(g.n, model.noise.mean), "exact")
        _, sizes = ball_matrix(g, model.radius)
        sizes = sizes.astype(int)
        means = np.empty(g.n)
        worst_se, method = 0.0, "exact"
        for k in sorted(set(sizes.tolist())):
            if enumerable(model.noise, k):
                law = sum_distribution(model.noise, k)
                mu = float(sum(p * model.transform(s / k) for s, p in law))
            else:
                rng = stream(seed, k, 7)
                draws = model.noise.from_uniform(rng.random((MC_ORACLE_DRAWS, k))).sum(axis=1) / k
                vals = model.transform(draws)
                mu = float(vals.mean())
                worst_se = max(worst_se, float(vals.std(ddof=1) / math.sqrt(MC_ORACLE_DRAWS)))
                method = "mc"
            means[sizes == k] = mu
        return MeanOracle(means, method, worst_se)
    # distance-weighted fields: unclipped mean is linear in the noise mean
    lo, hi = model.value_range
    if model.noise.lo >= lo and model.noise.hi <= hi:
        return MeanOracle(np.full(g.n, model.noise.mean), "exact")
    trials = range(10_000)
    x = sample_fields(g, model, seed + 1_000_003, trials)
    return MeanOracle(x.mean(axis=0), "mc", float(x.std(axis=0, ddof=1).max() / math.sqrt(len(trials))))


# --------------------------------------------------------------------------
# diagnostics


@dataclass
class CovDiagnostic:
    qualifying: bool
    value: float | None = None
    stderr: float | None = None
    pair: tuple[int, int] | None = None
    n_pairs: int = 0

    def to_dict(self) -> dict[str, Any]:
        if not self.qualifying:
            return {"result": "no qualifying pair"}
        return {"value": self.value, "stderr": self.stderr, "pair": list(self.pair), "n_pairs": self.n_pairs}


def qualifying_pairs(g: Graph, d: int, seed: int, limit: int = 1000) -> np.ndarray:
    """Up to ``limit`` vertex pairs at distance >= d, chosen deterministically from ``seed``."""
    if g.n <= 2000:
        dist = all_pairs_distances(g)
        u, v = np.triu_indices(g.n, k=1)
        keep = dist[u, v] >= d
        u, v = u[keep], v[keep]
    else:
        rng = stream(seed, 0, 11)
        u = rng.integers(0, g.n, 20 * limit)
        v = rng.integers(0, g.n, 20 * limit)
        u, v = np.minimum(u, v), np.maximum(u, v)
        pairs = np.unique(np.stack([u, v], axis=1)[u != v], axis=0)
        u, v = pairs[:, 0], pairs[:, 1]
        keep = np.fromiter((distance(g, a, b) >= d for a, b in zip(u, v)), bool, len(u))
        u, v = u[keep], v[keep]
    if len(u) > limit:
        order = np.argsort(keyed_uniform(seed, u, v, 99), kind="stable")[:limit]
        order.sort()
        u, v = u[order], v[order]
    return np.stack([u, v], axis=1)


def empirical_max_cov(g: Graph, model: FieldModel, d: int, trials: int, seed: int) -> CovDiagnostic:
    """Largest |empirical covariance| over sampled pairs at distance >= d."""
    if trials < 100:
        raise ParameterError("empirical_max_cov needs at least 100 trials")
    if d < 1:
        raise ParameterError("d must be >= 1")
    pairs = qualifying_pairs(g, d, seed)
    if len(pairs) == 0:
        return CovDiagnostic(False)
    x = sample_fields(g, model, seed, range(trials))
    x = x - x.mean(axis=0)
    prod = x[:, pairs[:, 0]] * x[:, pairs[:, 1]]
    cov = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / math.sqrt(trials)
    i = int(np.argmax(np.abs(cov)))
    return CovDiagnostic(True, float(abs(cov[i])), float(se[i]), (int(pairs[i, 0]), int(pairs[i, 1])), len(pairs))
