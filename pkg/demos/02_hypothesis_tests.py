"""Bayes-factor tests about lag importance on a three-letter chain.

The truth uses lags 1, 4 and 8 (maximal order 10 is searched). Each test
pits a null about the occupied class counts against its complement; prior
probabilities come from the closed-form single-class prior.

    python3 demos/02_hypothesis_tests.py
"""

from ctfmarkov import Hyperparams, Schedule, fit, from_codes, generate_true_tensor, simulate_chain
from ctfmarkov._random import make_rng
from ctfmarkov.inference import parse_hypotheses, run_tests

truth = generate_true_tensor(3, (1, 4, 8), make_rng(10))
y = simulate_chain(truth, 500, make_rng(11))
data = from_codes(y, 3, truth.q)
hyper = Hyperparams.default(3, truth.q, schedule=Schedule(5000, 1000, 5))
chain = fit(data, hyper, seed=3)

tests = parse_hypotheses("""
lag4 matters:            k4>1
lag5 matters:            k5>1
order is eight:          k8>1 k9=1 k10=1
exactly lags 1, 4, 8:    k1>1 k4>1 k8>1 rest=1
""")
for r in run_tests(chain, tests, data.n_counts, hyper.gamma, hyper.phi):
    bf = r["bf10"] if isinstance(r["bf10"], str) else f"{r['bf10']:.3g}"
    print(f"{r['name']:<22} P(H0|y)={r['post0']:.3f}  prior={r['p0']:.3f}  BF10={bf}")
