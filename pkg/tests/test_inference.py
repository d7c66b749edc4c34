import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_state
from ctfmarkov._random import make_rng
from ctfmarkov.chain import PosteriorChain
from ctfmarkov.errors import (ConfigurationError, HypothesisParseError, InputError,
                              UndefinedBayesFactorError)
from ctfmarkov.inference import (Hypothesis, batch_means_mcse, bayes_factor, classification_error,
                                 ktilde_of, lag_inclusion, maximal_order_distribution,
                                 parse_hypotheses, posterior_mean_transition, posterior_prob,
                                 predict_one_step, prior_prob, run_tests, running_quantiles, summarize)
from ctfmarkov.model import Schedule, evaluate_transitions, ktilde_prior_prob_one


def make_chain(ktilde, k=None, snapshots=None, contexts=None):
    kt = np.atleast_2d(np.asarray(ktilde, dtype=np.int64))
    S = kt.shape[0]
    return PosteriorChain(iters=np.arange(1, S + 1), k=kt.copy() if k is None else np.asarray(k),
                          ktilde=kt, loglik=np.zeros(S), n_clusters=np.ones(S, dtype=np.int64),
                          schedule=Schedule(S, 0, 1), contexts=contexts, snapshots=snapshots)


# ---------------------------------------------------------------- ktilde and summaries

def test_ktilde_of():
    assert ktilde_of([2, 2, 2]) == 1
    assert ktilde_of([1, 2, 1, 3]) == 3
    with pytest.raises(InputError):
        ktilde_of([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=30))
def test_ktilde_set_oracle(z):
    assert ktilde_of(z) == len(set(z))


def test_inclusion_counts():
    ch = make_chain([[1, 2], [1, 3], [1, 1], [1, 2]])
    np.testing.assert_allclose(lag_inclusion(ch), [0, 0.75])
    assert lag_inclusion(make_chain([[1, 1, 1]] * 3)).tolist() == [0, 0, 0]


def test_order_pmf():
    assert maximal_order_distribution(make_chain([[1, 1, 1]] * 4)).tolist() == [1, 0, 0, 0]
    pmf = maximal_order_distribution(make_chain([[2, 1, 3, 1]]))
    assert pmf.tolist() == [0, 0, 0, 1, 0]
    pmf = maximal_order_distribution(make_chain([[2, 1, 1], [1, 2, 1], [2, 2, 2]]))
    assert pmf.sum() == pytest.approx(1.0)


# ---------------------------------------------------------------- hypotheses

@pytest.mark.parametrize("text,lags", [
    ("k4>1", {4: ">1"}),
    ("k8>1 k9=1 k10=1", {8: ">1", 9: "=1", 10: "=1"}),
    ("k1>1 k4>1 k8>1 rest=1", {1: ">1", 4: ">1", 8: ">1", 2: "=1", 10: "=1"}),
    ("ktilde2 = 1 and k3>1", {2: "=1", 3: ">1"}),
])
def test_parse(text, lags):
    ops = Hypothesis.parse(text).lag_ops(10)
    for lag, op in lags.items():
        assert ops[lag] == op


def test_contradictory_hypothesis_names_line():
    with pytest.raises(HypothesisParseError, match="line 3"):
        parse_hypotheses("a: k1>1\n\nb: k2=1 k2>1\n")


@pytest.mark.parametrize("bad", ["", "k>1", "k2<1", "rest=1 rest>1", "k0>1"])
def test_malformed(bad):
    with pytest.raises(HypothesisParseError):
        Hypothesis.parse(bad)


def test_lag_beyond_q():
    with pytest.raises(InputError):
        Hypothesis.parse("k7>1").lag_ops(5)


def test_posterior_prob_basics():
    ch = make_chain([[2, 1], [1, 1], [3, 2], [2, 1]])
    h = Hypothesis.parse("k1>1")
    assert posterior_prob(ch, h) == 0.75
    assert posterior_prob(ch, h) + posterior_prob(ch, h.negate()) == 1
    assert posterior_prob(make_chain([[1], [1]]), Hypothesis.parse("k1>1")) == 0
    assert posterior_prob(ch, Hypothesis.parse("k1>1 rest=1")) == 0.5


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_posterior_monotone_and_partition(seed):
    r = make_rng(seed)
    ch = make_chain(r.integers(1, 3, size=(30, 3)))
    tight = Hypothesis.parse("k1>1 k2=1 k3>1")
    loose = Hypothesis.parse("k1>1 k3>1")
    assert posterior_prob(ch, loose) >= posterior_prob(ch, tight)
    total = sum(posterior_prob(ch, Hypothesis.parse(f"k1{a}1 k2{b}1"))
                for a in "=>" for b in "=>")
    assert total == pytest.approx(1.0)


# ---------------------------------------------------------------- Bayes factors

def test_bayes_factor_cases():
    assert bayes_factor((0.4, 0.4), prior_p0=0.3, prior_p1=0.3) == 1.0
    assert bayes_factor((0.0, 0.2)) == math.inf
    with pytest.raises(UndefinedBayesFactorError):
        bayes_factor((0.0, 0.0))
    with pytest.raises(InputError):
        bayes_factor((0.5, 0.5), prior_p0=1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_bayes_factor_reciprocal(p0, p1, a, b):
    assert bayes_factor((p0, p1), prior_p0=a, prior_p1=b) * \
        bayes_factor((p1, p0), prior_p0=b, prior_p1=a) == pytest.approx(1.0)


def test_bayes_factor_from_chain():
    ch = make_chain([[2], [2], [1], [2]])
    h0, h1 = Hypothesis.parse("k1>1"), Hypothesis.parse("k1=1")
    assert bayes_factor(ch, h0, h1, 0.5, 0.5) == pytest.approx((0.25 / 0.5) / (0.75 / 0.5))


def test_never_visited_null_gives_inf_marker():
    ch = make_chain([[2, 2]] * 5)
    tests = parse_hypotheses("t: k1=1 | k1>1 | 0.4 0.6")
    res = run_tests(ch, tests)
    assert res[0]["bf10"] == "inf"


def test_prior_prob_product_over_lags():
    counts = np.array([[10, 20], [15, 15], [30, 0]])
    h = Hypothesis.parse("k1>1 k3=1")
    want = (1 - ktilde_prior_prob_one(0.5, 0.5, 1, counts[0], 2)) * \
        min(1.0, ktilde_prior_prob_one(0.5, 0.5, 3, counts[2], 2))
    assert prior_prob(h, counts, 0.5, 0.5) == pytest.approx(want)
    assert prior_prob(h.negate(), counts, 0.5, 0.5) == pytest.approx(1 - want)


def test_run_tests_uses_closed_form_priors():
    ch = make_chain([[2, 1], [1, 1], [2, 2]])
    counts = np.array([[20, 10], [12, 18]])
    res = run_tests(ch, parse_hypotheses("a: k1>1"), counts, [0.5, 0.5], 0.5)[0]
    assert res["p0"] == pytest.approx(1 - ktilde_prior_prob_one(0.5, 0.5, 1, counts[0], 2))
    assert res["p0"] + res["p1"] == pytest.approx(1.0)
    assert res["post0"] == pytest.approx(2 / 3)


# ---------------------------------------------------------------- transitions and prediction

def test_posterior_mean_single_and_pair():
    r = make_rng(0)
    ctx = r.integers(3, size=(6, 2))
    s1, s2 = random_state(r, 3, 2), random_state(r, 3, 2)
    e1, e2 = evaluate_transitions(s1, ctx), evaluate_transitions(s2, ctx)
    one = make_chain([[1, 1]], snapshots=e1[None], contexts=ctx)
    np.testing.assert_array_equal(posterior_mean_transition(one, ctx), e1)
    two = make_chain([[1, 1]] * 2, snapshots=np.stack([e1, e2]), contexts=ctx)
    mean = posterior_mean_transition(two)
    np.testing.assert_allclose(mean, (e1 + e2) / 2, atol=1e-15)
    assert np.abs(mean.sum(axis=1) - 1).max() <= 1e-10


def test_posterior_mean_requires_snapshots():
    with pytest.raises(ConfigurationError):
        posterior_mean_transition(make_chain([[1]]))
    ch = make_chain([[1]], snapshots=np.full((1, 1, 2), 0.5), contexts=np.array([[0]]))
    with pytest.raises(ConfigurationError):
        posterior_mean_transition(ch, [[1]])


def test_prediction():
    assert predict_one_step([0.2, 0.7, 0.1]) == 1
    assert predict_one_step([0.5, 0.5]) == 0
    pred = predict_one_step(np.array([[0.9, 0.1], [0.3, 0.7], [0.5, 0.5]]))
    assert classification_error(pred, [0, 0, 1]) == pytest.approx(2 / 3)


# ---------------------------------------------------------------- diagnostics

def test_mcse_cases():
    assert batch_means_mcse(np.full(1000, 3.0)) == 0
    x = make_rng(0).standard_normal(10_000)
    assert batch_means_mcse(x) == pytest.approx(0.01, rel=0.3)
    assert batch_means_mcse(-4 * x) == pytest.approx(4 * batch_means_mcse(x))
    with pytest.raises(InputError):
        batch_means_mcse(np.ones(150))


def test_running_quantiles():
    x = np.arange(1.0, 41.0)
    out = running_quantiles(x)
    for n in range(1, 41):
        assert out[1, n - 1] == x[math.ceil(0.95 * n) - 1]
    assert np.all(running_quantiles(np.full(7, 2.5)) == 2.5)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=60))
def test_running_quantiles_naive(trace):
    out = running_quantiles(trace, (0.05, 0.5, 0.95))
    for n in range(1, len(trace) + 1):
        srt = sorted(trace[:n])
        for i, p in enumerate((0.05, 0.5, 0.95)):
            assert out[i, n - 1] == srt[max(1, math.ceil(p * n)) - 1]


def test_summary_layout():
    ch = make_chain(make_rng(1).integers(1, 3, size=(300, 3)))
    rep = summarize(ch, parse_hypotheses("x: k2>1"))
    assert set(rep) >= {"inclusion", "order_pmf", "tests", "mcse"}
    assert len(rep["order_pmf"]) == 4
    assert rep["mcse"]["loglik"] == 0


def test_chain_jsonl_round_trip(tmp_path):
    ch = make_chain([[1, 2], [2, 2]], k=[[2, 3], [2, 2]])
    ch.to_jsonl(tmp_path / "c.jsonl")
    back = PosteriorChain.from_jsonl(tmp_path / "c.jsonl")
    assert np.array_equal(back.k, ch.k) and np.array_equal(back.ktilde, ch.ktilde)
