import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphmix.bounds import (
    best_concentration_bound,
    concentration_bound,
    pacbayes_bound_graph,
    pacbayes_bound_iid,
    tail_probability,
    tune_d_geometric,
)
from graphmix.errors import ParameterError
from graphmix.mixing import INFINITE, MixingProfile

# Reference values evaluated with mpmath at 40 digits.
CONC_200 = 0.08654091913011426
CONC_200_W4 = 0.17308183826022853
GRAPH_400 = 0.72319625457172443
IID_100_KL2 = 0.50968576


def test_concentration_values():
    assert concentration_bound(200, 0.05, 1, 0, 1) == pytest.approx(CONC_200, abs=1e-15)
    assert concentration_bound(200, 0.05, 1, 0, 4) == pytest.approx(CONC_200_W4, abs=1e-15)
    assert concentration_bound(200, 0.05, 1, INFINITE, 1) == INFINITE


@pytest.mark.parametrize("args", [(0, 0.05, 1, 0, 1), (10, 0, 1, 0, 1), (10, 1, 1, 0, 1), (10, 0.1, 0, 0, 1),
                                  (10, 0.1, 1, -0.1, 1), (10, 0.1, 1, 0, 0.5)])
def test_concentration_rejects(args):
    with pytest.raises(ParameterError):
        concentration_bound(*args)


def test_best_bound_examples():
    chain = {d: d for d in range(1, 11)}
    assert best_concentration_bound(400, 0.05, 1, MixingProfile.zero(), chain).d == 1
    assert best_concentration_bound(400, 0.05, 1, MixingProfile.threshold(2), chain).d == 3


def test_best_bound_matches_scan():
    n, delta = 400, 0.05
    profile = MixingProfile.geometric(1, 2)
    chain = {d: d for d in range(1, n + 1)}
    report = best_concentration_bound(n, delta, 1, profile, chain)
    scan = [math.exp(-d / 2) + math.sqrt(d * math.log(1 / delta) / (2 * n)) for d in range(1, n + 1)]
    best = min(range(n), key=lambda i: (scan[i], i))
    assert report.d == best + 1
    assert report.value == pytest.approx(scan[best], rel=1e-14)


def test_best_bound_all_infinite():
    report = best_concentration_bound(50, 0.05, 1, MixingProfile.threshold(10), {1: 1, 2: 2})
    assert report.value == INFINITE and report.d is None
    assert report.to_dict()["value"] == "inf"


def test_tail_examples():
    assert tail_probability(200, 1, 1, 0, CONC_200) == pytest.approx(0.05, abs=1e-14)
    assert tail_probability(200, 1, 1, 0.1, 0.1 + 1e-9) == pytest.approx(1.0)
    t = 0.2
    assert tail_probability(400, 1, 3, 0.05, t) == pytest.approx(tail_probability(200, 1, 3, 0.05, t) ** 2, rel=1e-12)


def test_tail_requires_t_above_phi():
    with pytest.raises(ParameterError):
        tail_probability(10, 1, 1, 0.2, 0.2)


def test_iid_examples():
    assert pacbayes_bound_iid(900, math.exp(-2), 0) == pytest.approx(0.1333333333333333, abs=1e-15)
    assert pacbayes_bound_iid(100, 0.05, 2) == pytest.approx(IID_100_KL2, abs=1e-7)
    first = math.sqrt(9 / 100)
    assert pacbayes_bound_iid(400, 0.05, 0) - math.sqrt(math.log(20) / 800) == pytest.approx(first / 2)


def test_graph_example():
    assert pacbayes_bound_graph(400, 0.05, 1, 0.02, 9) == pytest.approx(GRAPH_400, abs=1e-15)
    assert pacbayes_bound_graph(400, 0.05, INFINITE, 0, 1) == INFINITE


@pytest.mark.parametrize("tau, d", [(1, 12), (2, 24), (4, 47), (8, 93)])
def test_tune_d_values(tau, d):
    assert tune_d_geometric(1, tau, 100_000) == d


def test_tune_d_clamped():
    assert tune_d_geometric(1, 100, 10) == 10
    assert tune_d_geometric(0.001, 1, 10) == 1


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 10**6), delta=st.floats(1e-6, 0.999), Delta=st.floats(0.01, 10), W=st.floats(1, 100))
def test_tail_inverts_concentration(n, delta, Delta, W):
    b = concentration_bound(n, delta, Delta, 0.0, W)
    assert abs(tail_probability(n, Delta, W, 0.0, b) - delta) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 10**6), delta=st.floats(1e-6, 0.999), Delta=st.floats(0.01, 10),
       W=st.floats(1, 100), phi=st.floats(0, 1))
def test_tail_inverts_with_phi(n, delta, Delta, W, phi):
    # t - phi loses ulp(t) absolute accuracy; delta inherits 2 log(1/delta) times that relative error
    b = concentration_bound(n, delta, Delta, phi, W)
    rel = 4 * math.ulp(b) / (b - phi)
    assert abs(tail_probability(n, Delta, W, phi, b) - delta) <= 1e-12 + 2 * delta * math.log(1 / delta) * rel


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 10**6), delta=st.floats(1e-6, 0.999), KL=st.floats(0, 50))
def test_graph_reduces_to_iid(n, delta, KL):
    assert pacbayes_bound_graph(n, delta, KL, 0.0, 1.0) == pacbayes_bound_iid(n, delta, KL)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 10**5), delta=st.floats(1e-6, 0.999), KL=st.floats(0, 20), W=st.floats(1, 50),
       phi=st.floats(0, 1))
def test_graph_bound_monotone(n, delta, KL, W, phi):
    base = pacbayes_bound_graph(n, delta, KL, phi, W)
    assert pacbayes_bound_graph(n, delta, KL, phi, W * 1.5) >= base
    assert pacbayes_bound_graph(n, delta, KL + 1, phi, W) >= base
    assert pacbayes_bound_graph(n, delta, KL, phi + 0.1, W) >= base
