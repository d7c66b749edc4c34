"""Small simulation study against a smoothed full-order frequency table.

    python3 demos/04_simulation_study.py [case] [reps]
"""

import sys

from ctfmarkov import Schedule, run_experiment

case = sys.argv[1] if len(sys.argv) > 1 else "H"
reps = int(sys.argv[2]) if len(sys.argv) > 2 else 3

res = run_experiment(case, T=500, N=500, n_reps=reps, seed=1, schedule=Schedule(4000, 1000, 5))
for r in res.rows:
    print(f"rep {r['rep']} {r['method']:<9} avg L1 {r['avg_l1']:.4f}  class err {r['class_err']:.3f}")
print(res.aggregate_json())
