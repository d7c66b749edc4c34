"""Fit a sparse third-order binary chain and read off which lags matter.

The truth depends on lags 1 and 3 only. The sampler gets six candidate lags
and decides which ones to keep.

    python3 demos/01_quickstart.py
"""

import numpy as np

from ctfmarkov import Hyperparams, Schedule, fit, from_codes, generate_true_tensor, simulate_chain
from ctfmarkov._random import make_rng
from ctfmarkov.inference import lag_inclusion, maximal_order_distribution, posterior_mean_transition
from ctfmarkov.simgen import lag_contexts

truth = generate_true_tensor(2, (1, 3), make_rng(1), q=6)
y = simulate_chain(truth, 700, make_rng(2))
train, q = y[:600], truth.q

data = from_codes(train, C0=2, q=q)
hyper = Hyperparams.default(2, q, schedule=Schedule(4000, 1000, 5))

# store transition probabilities at the 100 held-out contexts while sampling
ctx = lag_contexts(y, q, 600, 700)
chain = fit(data, hyper, seed=7, contexts=ctx)

print("posterior inclusion per lag:")
for j, p in enumerate(lag_inclusion(chain), start=1):
    print(f"  lag {j:2d}  {p:5.2f}  {'#' * int(round(20 * p))}")

pmf = maximal_order_distribution(chain)
print("most probable maximal order:", int(np.argmax(pmf)), f"(mass {pmf.max():.2f})")

est = posterior_mean_transition(chain, ctx)
tv = np.abs(est - truth.rows(ctx)).sum(axis=1).mean() / 2
print(f"mean total-variation error on held-out contexts: {tv:.3f}")
