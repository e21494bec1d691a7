import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphmix.errors import ConfigError, ParameterError
from graphmix.experiments import (
    ExperimentConfig,
    gibbs_batch,
    gibbs_posterior,
    kl_divergence,
    run_generalization,
    verify_concentration,
    wilson_interval,
)


def test_gibbs_beta_zero_is_prior():
    prior = [0.1, 0.6, 0.3]
    assert np.allclose(gibbs_posterior(prior, [0.9, 0.1, 0.4], 0.0, 50), prior)


def test_gibbs_softmax_example():
    assert gibbs_posterior([0.5, 0.5], [0.2, 0.4], 10.0) == pytest.approx([0.880797, 0.119203], abs=1e-6)


def test_gibbs_infinite_beta_tie():
    assert list(gibbs_posterior([1 / 3] * 3, [0.3, 0.3, 0.5], math.inf)) == [0.5, 0.5, 0.0]


def test_gibbs_negative_beta():
    with pytest.raises(ParameterError):
        gibbs_posterior([0.5, 0.5], [0, 1], -1.0)


def test_gibbs_batch_matches_single():
    rng = np.random.default_rng(0)
    prior = rng.dirichlet(np.ones(6))
    losses = rng.random((4, 6))
    batch = gibbs_batch(prior, losses, 7.5)
    for row, L in zip(batch, losses):
        assert np.allclose(row, gibbs_posterior(prior, L, 7.5))


def test_kl_examples():
    p = [0.2, 0.3, 0.5]
    assert kl_divergence(p, p) == 0
    assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2))
    assert kl_divergence([0.5, 0.5], [1, 0]) == math.inf


@settings(max_examples=40, deadline=None)
@given(m=st.integers(2, 32), seed=st.integers(0, 10_000))
def test_kl_of_gibbs_non_decreasing_in_beta(m, seed):
    rng = np.random.default_rng(seed)
    prior = rng.dirichlet(np.ones(m))
    losses = rng.random(m)
    betas = np.linspace(0, 60, 40)
    kls = [kl_divergence(gibbs_posterior(prior, losses, b), prior) for b in betas]
    assert all(b >= a - 1e-12 for a, b in zip(kls, kls[1:]))


@settings(max_examples=30, deadline=None)
@given(m=st.integers(2, 32), seed=st.integers(0, 10_000), beta=st.floats(0, 50))
def test_gibbs_continuous_in_beta(m, seed, beta):
    rng = np.random.default_rng(seed)
    prior = rng.dirichlet(np.ones(m))
    losses = rng.random(m)
    a = gibbs_posterior(prior, losses, beta)
    b = gibbs_posterior(prior, losses, beta + 1e-7)
    assert np.abs(a - b).max() < 1e-5


def test_wilson():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0 and 0.03 < hi < 0.04
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi and hi - 0.5 == pytest.approx(0.5 - lo)


def small_cfg(**kw):
    doc = {"graph": "cycle:30", "field": {"kind": "local_average", "radius": 1}, "trials": 300, "seed": 4}
    doc.update(kw)
    return ExperimentConfig.from_dict(doc)


def test_config_round_trip():
    cfg = small_cfg(profile={"declared": {"kind": "geometric", "C": 1, "tau": 2}}, d={"mode": "fixed", "value": 3},
                    beta_n="inf")
    once = cfg.to_json()
    assert ExperimentConfig.from_json(once).to_json() == once


@pytest.mark.parametrize("bad", [
    {"trials": 0}, {"delta": 1.0}, {"seed": -3}, {"d": {"mode": "auto"}}, {"partition": {"source": "magic"}},
    {"unknown_key": 1}, {"profile": "guess"},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        small_cfg(**bad)


def test_uncertified_field_needs_declaration():
    cfg = small_cfg(field={"kind": "distance_weighted", "alpha": 0.5})
    with pytest.raises(ConfigError):
        verify_concentration(cfg)


def test_declared_profile_is_flagged():
    cfg = small_cfg(field={"kind": "distance_weighted", "alpha": 0.3},
                    profile={"declared": {"kind": "geometric", "C": 1, "tau": 1}})
    report = verify_concentration(cfg)
    assert not report.certified
    assert any("declared" in n for n in report.notes)


def test_verify_reproducible_across_threads():
    cfg = small_cfg(trials=600)
    a = verify_concentration(cfg, threads=1).to_json()
    b = verify_concentration(cfg, threads=3).to_json()
    assert a == b


def test_verify_report_consistency():
    r = verify_concentration(small_cfg())
    assert r.rate == r.violations / r.trials
    assert len(r.outcomes) == r.trials
    assert all(o.violated == (o.target > o.bound) for o in r.outcomes)
    assert r.to_csv().splitlines()[0] == "trial,target,bound,violated"
    assert r.to_svg().startswith("<svg")


def test_delta_near_one_regime():
    cfg = ExperimentConfig.from_dict({"graph": "edgeless:2000", "field": {"kind": "iid"}, "delta": 0.999,
                                      "trials": 1000, "seed": 2})
    r = verify_concentration(cfg)
    assert r.diagnostics["bound"] < 0.001
    assert 0.3 < r.rate <= 0.999


def test_non_transitive_graph_warns():
    cfg = ExperimentConfig.from_dict({"graph": "path:40", "field": {"kind": "local_average", "radius": 1},
                                      "trials": 50})
    r = verify_concentration(cfg)
    assert any("vertex-transitive" in n for n in r.notes)


def test_generalization_audit_identity():
    cfg = ExperimentConfig.from_dict({
        "graph": "cycle:60", "field": {"kind": "local_average", "radius": 1, "noise": {"kind": "grid", "levels": 5}},
        "d": {"mode": "fixed", "value": 3}, "trials": 40, "audit_trials": 10, "seed": 8,
    })
    r = run_generalization(cfg)
    assert r.diagnostics["max_identity_error"] <= 1e-9
    assert r.diagnostics["W"] == "3"


def test_generalization_mc_population_loss():
    cfg = ExperimentConfig.from_dict({
        "graph": "cycle:30", "field": {"kind": "local_average", "radius": 1}, "d": {"mode": "fixed", "value": 3},
        "trials": 20,
    })
    r = run_generalization(cfg)
    assert r.diagnostics["loss_method"] == "mc"
    assert r.diagnostics["slack"] > 0


def test_generalization_tuned_d_uses_threshold():
    cfg = ExperimentConfig.from_dict({"graph": "cycle:60", "field": {"kind": "local_average", "radius": 2,
                                                                      "noise": {"kind": "bernoulli", "p": 0.5}},
                                      "trials": 20})
    r = run_generalization(cfg)
    assert r.diagnostics["d"] == 5
    assert r.diagnostics["phi"] == 0.0


def test_explicit_family_must_match_d():
    fam = {"d": 3, "graph_n": 30, "subsets": [list(range(r, 30, 3)) for r in range(3)], "weights": ["1", "1", "1"]}
    with pytest.raises(ConfigError):
        small_cfg(partition={"source": "explicit", "family": fam})
    cfg = small_cfg(partition={"source": "explicit", "family": fam}, d={"mode": "fixed", "value": 3})
    assert json.loads(cfg.to_json())["partition"]["source"] == "explicit"
