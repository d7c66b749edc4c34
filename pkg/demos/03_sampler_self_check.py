"""Joint-distribution check of the sampler on a tiny model.

Forward simulation from the prior and a chain that alternates Gibbs sweeps
with fresh data draws must produce the same distribution of k, occupied
class counts and a kernel entry. Small z scores mean agreement.

    python3 demos/03_sampler_self_check.py   (about a minute)
"""

from ctfmarkov.geweke import geweke_test

for mode in ("exact", "stirling"):
    print(f"k update: {mode}")
    for name, r in geweke_test(n_samples=5000, seed=1, mode=mode).items():
        print(f"  {name:<11} prior {r['mc']:.3f}  chain {r['sc']:.3f}  z {r['z']:+.2f}")
# the large-count formula is an approximation and drifts visibly here
