"""Monte Carlo certification of the concentration and PAC-Bayes bounds.

Both pipelines are deterministic functions of the configuration: trial ``i``
draws its noise from streams keyed by ``(seed, i)``, blocks of trials may run
on worker threads, and results are merged in trial order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .bounds import best_concentration_bound, pacbayes_bound_graph, tune_d_geometric
from .errors import ConfigError, NoCertifiedProfile, ParameterError
from .graph import Graph, generate_graph, normalize_spec
from .mixing import (
    MC_ORACLE_DRAWS,
    FieldModel,
    MixingProfile,
    ball_matrix,
    enumerable,
    field_from_noise,
    field_means,
    noise_block,
    phi_value,
    sum_distribution,
    theoretical_profile,
)
from .online import (
    FiniteHypothesisSetting,
    GameConfig,
    as_distribution,
    make_ewa,
    make_sheltered,
    play_game,
    regret_of,
)
from .partitions import WeightedStableFamily, family_for, weight_sum
from .rng import stream
from .svg import histogram_svg

log = logging.getLogger(__name__)

WILSON_Z = 1.959963984540054
BLOCK = 250


# --------------------------------------------------------------------------
# posterior and divergence


def gibbs_posterior(prior, empirical_losses, beta: float, n: int = 1) -> np.ndarray:
    """``prior * exp(-beta * n * losses)``, normalized.

    ``beta = inf`` gives the uniform distribution over the minimizers of the
    empirical loss among hypotheses the prior charges.
    """
    p = as_distribution(prior, tol=1e-9)
    losses = np.asarray(empirical_losses, dtype=float)
    if beta < 0 or math.isnan(beta):
        raise ParameterError("beta must be non-negative")
    if beta == 0:
        return p.copy()
    support = p > 0
    if math.isinf(beta):
        best = losses[support].min()
        mask = support & (losses == best)
        return mask / mask.sum()
    logits = np.full(p.shape, -np.inf)
    logits[support] = np.log(p[support]) - beta * n * losses[support]
    logits -= logits[support].max()
    w = np.exp(logits)
    return w / w.sum()


def gibbs_batch(prior: np.ndarray, losses: np.ndarray, beta_n: float) -> np.ndarray:
    """Row-wise :func:`gibbs_posterior` for a (trials, m) loss matrix."""
    if beta_n == 0:
        return np.broadcast_to(prior, losses.shape).copy()
    support = prior > 0
    if math.isinf(beta_n):
        masked = np.where(support, losses, np.inf)
        mask = masked == masked.min(axis=1, keepdims=True)
        return mask / mask.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        logits = np.where(support, np.log(prior) - beta_n * losses, -np.inf)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


def kl_divergence(p, q) -> float:
    """``sum p log(p/q)`` with ``0 log 0 = 0``; ``inf`` if p charges a zero of q."""
    p = as_distribution(p, tol=1e-9)
    q = as_distribution(q, tol=1e-9)
    on = p > 0
    if np.any(q[on] == 0):
        return math.inf
    return float(max(np.sum(p[on] * np.log(p[on] / q[on])), 0.0))


def kl_batch(P: np.ndarray, q: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P / q), 0.0)
    return np.maximum(terms.sum(axis=1), 0.0)


def wilson_interval(k: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    phat = k / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


# --------------------------------------------------------------------------
# configuration


def _enc(x):
    return "inf" if isinstance(x, float) and math.isinf(x) else x


def _dec(x):
    return math.inf if x in ("inf", "INFINITE") else x


@dataclass
class ExperimentConfig:
    graph: dict
    field: FieldModel
    profile: str | MixingProfile = "theoretical"
    partition: dict = field(default_factory=lambda: {"source": "residue", "strategy": "dsatur"})
    d: dict = field(default_factory=lambda: {"mode": "tuned"})
    learner: dict = field(default_factory=lambda: {"kind": "ewa", "eta": "auto"})
    prior: str | list = "uniform"
    beta_n: float = 20.0
    hypotheses: dict = field(default_factory=lambda: {"m": 8, "label_threshold": 0.5, "label_noise": 0.1})
    delta: float = 0.05
    trials: int = 1000
    seed: int = 0
    audit_trials: int = 0
    tolerance: float = 0.02
    allow_uncertified: bool = False

    def __post_init__(self):
        self.graph = normalize_spec(self.graph)
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        mode = self.d.get("mode")
        if mode == "fixed":
            if int(self.d.get("value", 0)) < 1:
                raise ConfigError("fixed d needs a value >= 1")
            self.d = {"mode": "fixed", "value": int(self.d["value"])}
        elif mode == "tuned":
            self.d = {"mode": "tuned", "max": int(self.d.get("max", 10))}
        else:
            raise ConfigError(f"d.mode must be 'fixed' or 'tuned', got {mode!r}")
        source = self.partition.get("source", "residue")
        if source not in ("residue", "greedy", "explicit", "exact"):
            raise ConfigError(f"unknown partition source {source!r}")
        part = {"source": source, "strategy": self.partition.get("strategy", "dsatur")}
        if source == "explicit":
            if "family" not in self.partition:
                raise ConfigError("explicit partition source needs a 'family' document")
            part["family"] = WeightedStableFamily.from_dict(self.partition["family"]).to_dict()
            if mode != "fixed" or part["family"]["d"] != self.d["value"]:
                raise ConfigError("explicit family requires a fixed d equal to the family's d")
        self.partition = part
        self.hypotheses = {
            "m": int(self.hypotheses.get("m", 8)),
            "label_threshold": float(self.hypotheses.get("label_threshold", 0.5)),
            "label_noise": float(self.hypotheses.get("label_noise", 0.1)),
        }
        if self.hypotheses["m"] < 1 or not 0 <= self.hypotheses["label_noise"] <= 1:
            raise ConfigError("hypotheses need m >= 1 and label_noise in [0, 1]")
        eta = self.learner.get("eta", "auto")
        self.learner = {"kind": "ewa", "eta": eta if eta == "auto" else float(eta)}
        self.beta_n = float(_dec(self.beta_n))

    def to_dict(self) -> dict[str, Any]:
        return {
            "graph": self.graph,
            "field": self.field.to_dict(),
            "profile": self.profile if isinstance(self.profile, str) else {"declared": self.profile.to_dict()},
            "partition": self.partition,
            "d": self.d,
            "learner": self.learner,
            "prior": self.prior,
            "beta_n": _enc(self.beta_n),
            "hypotheses": self.hypotheses,
            "delta": self.delta,
            "trials": self.trials,
            "seed": self.seed,
            "audit_trials": self.audit_trials,
            "tolerance": self.tolerance,
            "allow_uncertified": self.allow_uncertified,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "graph" not in data or "field" not in data:
            raise ConfigError("config needs 'graph' and 'field'")
        data["field"] = FieldModel.from_dict(data["field"])
        prof = data.get("profile", "theoretical")
        if isinstance(prof, dict):
            data["profile"] = MixingProfile.from_dict(prof.get("declared", prof))
        elif prof != "theoretical":
            raise ConfigError("profile must be 'theoretical' or {'declared': {...}}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


# --------------------------------------------------------------------------
# reports


@dataclass
class TrialOutcome:
    trial: int
    target: float
    bound: float
    violated: bool
    aux: dict[str, float] = field(default_factory=dict)


@dataclass
class CertificationReport:
    kind: str
    trials: int
    violations: int
    rate: float
    wilson: tuple[float, float]
    threshold: float
    passed: bool
    certified: bool
    bound_table: list[dict[str, Any]]
    outcomes: list[TrialOutcome]
    diagnostics: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    runtime: float = 0.0

    def to_dict(self, include_runtime: bool = False, include_outcomes: bool = False) -> dict[str, Any]:
        out = {
            "kind": self.kind,
            "trials": self.trials,
            "violations": self.violations,
            "rate": self.rate,
            "wilson95": list(self.wilson),
            "threshold": self.threshold,
            "passed": self.passed,
            "certified": self.certified,
            "bound_table": [{k: _enc(v) for k, v in row.items()} for row in self.bound_table],
            "diagnostics": {k: _enc(v) for k, v in self.diagnostics.items()},
            "notes": self.notes,
        }
        if include_runtime:
            out["runtime"] = self.runtime
        if include_outcomes:
            out["outcomes"] = [
                {"trial": o.trial, "target": o.target, "bound": _enc(o.bound), "violated": o.violated, **o.aux}
                for o in self.outcomes
            ]
        return out

    def to_json(self, include_runtime: bool = False) -> str:
        return json.dumps(self.to_dict(include_runtime), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "target", "bound", "violated"])
        for o in self.outcomes:
            w.writerow([o.trial, repr(o.target), repr(o.bound), int(o.violated)])
        return buf.getvalue()

    def to_svg(self) -> str:
        gaps = [o.target - o.bound for o in self.outcomes if math.isfinite(o.bound)]
        return histogram_svg(gaps, marker=0.0, title=f"{self.kind}: target - bound ({self.trials} trials)")


def _finish(kind, outcomes, threshold, certified, table, diagnostics, notes, started) -> CertificationReport:
    trials = len(outcomes)
    k = sum(o.violated for o in outcomes)
    lo, hi = wilson_interval(k, trials)
    return CertificationReport(
        kind, trials, k, k / trials, (lo, hi), threshold, hi <= threshold, certified,
        table, outcomes, diagnostics, notes, time.perf_counter() - started,
    )


def _run_blocks(fn, trials: int, threads: int) -> list:
    blocks = [range(s, min(s + BLOCK, trials)) for s in range(0, trials, BLOCK)]
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, blocks))
    else:
        parts = [fn(b) for b in blocks]
    return [x for part in parts for x in part]


def _resolve_profile(cfg: ExperimentConfig, model: FieldModel, notes: list[str]) -> tuple[MixingProfile, bool]:
    if isinstance(cfg.profile, MixingProfile):
        notes.append("mixing profile declared by the configuration, not certified")
        return cfg.profile, False
    try:
        return theoretical_profile(model), True
    except NoCertifiedProfile as exc:
        raise ConfigError(f"{exc}; declare a profile in the config to proceed") from None


def _candidate_ds(cfg: ExperimentConfig, n: int, profile: MixingProfile) -> list[int]:
    if cfg.d["mode"] == "fixed":
        return [cfg.d["value"]]
    return list(range(1, min(n, cfg.d["max"]) + 1))


def _family(cfg: ExperimentConfig, g: Graph, d: int) -> tuple[WeightedStableFamily, str]:
    if cfg.partition["source"] == "explicit":
        fam = WeightedStableFamily.from_dict(cfg.partition["family"], g.n)
        return fam, "explicit"
    return family_for(g, d, cfg.partition["source"], cfg.graph, cfg.partition["strategy"])


def _marginal_note(g: Graph, notes: list[str]):
    if not g.is_vertex_transitive_family():
        msg = f"graph {g.label or 'edgelist'} is not vertex-transitive; identical marginals are not guaranteed"
        log.warning(msg)
        notes.append(msg)


# --------------------------------------------------------------------------
# concentration


def verify_concentration(cfg: ExperimentConfig, threads: int = 1) -> CertificationReport:
    """Empirical violation rate of the concentration bound for the centered field mean."""
    started = time.perf_counter()
    notes: list[str] = []
    g = generate_graph(cfg.graph)
    model = cfg.field
    _marginal_note(g, notes)
    profile, certified = _resolve_profile(cfg, model, notes)
    oracle = field_means(g, model, cfg.seed)
    slack = 3 * oracle.stderr
    Delta = model.range_length
    weight_sums, sources = {}, {}
    for d in _candidate_ds(cfg, g.n, profile):
        fam, src = _family(cfg, g, d)
        weight_sums[d] = weight_sum(fam)
        sources[d] = src
    report = best_concentration_bound(g.n, cfg.delta, Delta, profile, weight_sums)
    table = [dict(row, W=str(weight_sums[row["d"]]), source=sources[row["d"]]) for row in report.table]
    bound = report.value
    if math.isinf(bound):
        raise ConfigError("no finite bound: every candidate d has infinite phi")
    mu = oracle.means

    def block(trials: range) -> list[TrialOutcome]:
        x = field_from_noise(g, model, noise_block(g.n, model, cfg.seed, trials))
        means = (x - mu).mean(axis=1)
        return [TrialOutcome(t, float(m), bound, bool(m > bound + slack)) for t, m in zip(trials, means)]

    outcomes = _run_blocks(block, cfg.trials, threads)
    diagnostics = {
        "bound": bound, "best_d": report.d, "Delta": Delta, "n": g.n,
        "mean_method": oracle.method, "mean_stderr": oracle.stderr, "slack": slack,
        "profile": json.dumps(profile.to_dict(), sort_keys=True),
    }
    return _finish("verify-concentration", outcomes, cfg.delta + cfg.tolerance, certified,
                   table, diagnostics, notes, started)


# --------------------------------------------------------------------------
# generalization


@dataclass
class ThresholdTask:
    """Threshold classifiers on a scalar field value with noisy threshold labels.

    Instance at v is ``(x_v, y_v)`` with ``y_v = 1{x_v >= label_threshold}``
    flipped with probability ``label_noise`` by noise local to v. Hypothesis w
    predicts ``1{x >= theta_w}`` with ``theta_w`` on a uniform grid.
    """

    thetas: np.ndarray
    label_threshold: float
    label_noise: float

    @classmethod
    def from_config(cls, hyp: dict, value_range: tuple[float, float]) -> "ThresholdTask":
        lo, hi = value_range
        m = hyp["m"]
        thetas = lo + (np.arange(m) + 0.5) * (hi - lo) / m
        return cls(thetas, hyp["label_threshold"], hyp["label_noise"])

    def losses(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """0/1 losses of shape x.shape[:-1] + (m, n)."""
        pred = x[..., None, :] >= self.thetas[:, None]
        return (pred != y[..., None, :].astype(bool)).astype(float)

    def conditional_loss(self, x: np.ndarray) -> np.ndarray:
        """Loss of each hypothesis at each x, averaged over the label flip; shape (m, len(x))."""
        pred = x[None, :] >= self.thetas[:, None]
        clean = x[None, :] >= self.label_threshold
        return np.where(pred != clean, 1 - self.label_noise, self.label_noise)

    def expected_loss(self, x: np.ndarray, px: np.ndarray) -> np.ndarray:
        return self.conditional_loss(x) @ px


def population_losses(g: Graph, model: FieldModel, task: ThresholdTask, seed: int) -> tuple[np.ndarray, str, float]:
    """Population loss of every hypothesis averaged over vertices, with provenance and stderr."""
    if model.kind == "iid":
        sizes = np.ones(g.n, dtype=int)
        transform = None
    elif model.kind == "local_average":
        _, sizes = ball_matrix(g, model.radius)
        sizes = sizes.astype(int)
        transform = model.transform
    else:
        raise ConfigError("generalization runs need an iid or local_average field")
    total = np.zeros(len(task.thetas))
    method, stderr = "exact", 0.0
    for k in sorted(set(sizes.tolist())):
        count = int((sizes == k).sum())
        if enumerable(model.noise, k):
            law = sum_distribution(model.noise, k)
            x = np.array([s for s, _ in law]) / k
            px = np.array([p for _, p in law])
            Lk = task.expected_loss(x if transform is None else transform(x), px)
        else:
            rng = stream(seed, k, 13)
            x = model.noise.from_uniform(rng.random((MC_ORACLE_DRAWS, k))).sum(axis=1) / k
            per_draw = task.conditional_loss(x if transform is None else transform(x))
            Lk = per_draw.mean(axis=1)
            stderr = max(stderr, float(per_draw.std(axis=1, ddof=1).max() / math.sqrt(x.size)))
            method = "mc"
        total += count * Lk
    return total / g.n, method, stderr


def _loss_profile(model: FieldModel, notes: list[str], cfg: ExperimentConfig) -> tuple[MixingProfile, bool]:
    """Profile of ``L(w) - loss(w, Z_v)``: losses are functions of a single vertex's value."""
    if isinstance(cfg.profile, MixingProfile):
        notes.append("loss mixing profile declared by the configuration, not certified")
        return cfg.profile, False
    field_profile = _resolve_profile(cfg, model, notes)[0]
    if field_profile.kind == "zero":
        return field_profile, True
    return MixingProfile.threshold(field_profile.d_star, 1.0), True


def _choose_d(cfg: ExperimentConfig, profile: MixingProfile, n: int) -> int:
    if cfg.d["mode"] == "fixed":
        return cfg.d["value"]
    # data-independent rule
    if profile.kind == "zero":
        return 1
    if profile.kind == "threshold":
        return min(profile.d_star + 1, n)
    if profile.kind == "geometric":
        return tune_d_geometric(profile.C, profile.tau, n)
    return min(cfg.d["max"], n)


def _eta(cfg: ExperimentConfig, m: int, n: int, W: float) -> float:
    eta = cfg.learner["eta"]
    if eta != "auto":
        return float(eta)
    return math.sqrt(2 * math.log(max(m, 2)) * W / n)


def run_generalization(cfg: ExperimentConfig, threads: int = 1) -> CertificationReport:
    """Violation rate of the graph PAC-Bayes bound for the Gibbs posterior.

    Audit trials additionally replay the sheltered game and check
    ``L(P) - Lhat(P) = (R(P) + M) / n`` for the learned posterior.
    """
    started = time.perf_counter()
    notes = ["certifies the bound for the fixed Gibbs algorithm, not uniformity over algorithms"]
    g = generate_graph(cfg.graph)
    model = cfg.field
    n = g.n
    _marginal_note(g, notes)
    try:
        profile, certified = _loss_profile(model, notes, cfg)
    except ConfigError:
        if not cfg.allow_uncertified:
            raise
        profile, certified = MixingProfile.threshold(n, math.inf), False
    d = _choose_d(cfg, profile, n)
    phi = phi_value(profile, d)
    if math.isinf(phi):
        raise ConfigError(f"phi_{d} is infinite; choose a larger d")
    fam, source = _family(cfg, g, d)
    W = weight_sum(fam)
    task = ThresholdTask.from_config(cfg.hypotheses, model.value_range)
    m = len(task.thetas)
    L, method, stderr = population_losses(g, model, task, cfg.seed)
    slack = 3 * stderr
    prior = np.full(m, 1.0 / m) if cfg.prior == "uniform" else as_distribution(cfg.prior, tol=1e-9)
    if len(prior) != m:
        raise ConfigError("prior length must equal the number of hypotheses")
    Wf = float(W)

    def sample(trials: range) -> tuple[np.ndarray, np.ndarray]:
        x = field_from_noise(g, model, noise_block(n, model, cfg.seed, trials))
        flips = np.stack([stream(cfg.seed, t, 1).random(n) for t in trials]) < task.label_noise
        y = (x >= task.label_threshold) ^ flips
        return x, y

    def block(trials: range) -> list[TrialOutcome]:
        x, y = sample(trials)
        losses = task.losses(x, y)
        Lhat = losses.mean(axis=2)
        P = gibbs_batch(prior, Lhat, cfg.beta_n)
        LP = P @ L
        LhatP = np.einsum("tm,tm->t", P, Lhat)
        KL = kl_batch(P, prior)
        out = []
        for i, t in enumerate(trials):
            b = float(LhatP[i]) + pacbayes_bound_graph(n, cfg.delta, float(KL[i]), phi, Wf)
            out.append(TrialOutcome(t, float(LP[i]), b, bool(LP[i] > b + slack),
                                    {"empirical": float(LhatP[i]), "kl": float(KL[i])}))
        return out

    outcomes = _run_blocks(block, cfg.trials, threads)

    audit = {}
    if cfg.audit_trials:
        eta = _eta(cfg, m, n, Wf)
        config = GameConfig(g, shelter_d=d, family=fam)
        worst = 0.0
        for t in range(min(cfg.audit_trials, cfg.trials)):
            x, y = sample(range(t, t + 1))
            losses = task.losses(x, y)[0]
            setting = FiniteHypothesisSetting(losses, L, method, stderr)
            learner = make_sheltered(lambda: make_ewa(prior, eta), fam, config)
            tr = play_game(setting, config, learner, np.arange(n))
            Lhat = losses.mean(axis=1)
            P = gibbs_batch(prior, Lhat[None, :], cfg.beta_n)[0]
            gap = float(P @ L - P @ Lhat)
            worst = max(worst, abs(gap - (regret_of(tr, P) + tr.M) / n))
        audit = {"audit_trials": min(cfg.audit_trials, cfg.trials), "max_identity_error": worst, "eta": eta}
    table = [{"d": d, "W": str(W), "phi": phi, "source": source, "n": n}]
    diagnostics = {"d": d, "W": str(W), "phi": phi, "m": m, "loss_method": method,
                   "loss_stderr": stderr, "slack": slack, "population_loss": json.dumps(L.tolist()), **audit}
    return _finish("run-generalization", outcomes, cfg.delta + cfg.tolerance, certified,
                   table, diagnostics, notes, started)
