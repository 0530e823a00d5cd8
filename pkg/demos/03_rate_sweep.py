"""Estimation error against sample size on a stochastic instance.

The function class is Q* shifted by a fine grid of constants, so the
selected value error is read off directly.  Quadrupling n should roughly
halve the median error.
"""
# %%
from pabc_lab import ExperimentConfig, build_rate_instance, sweep

inst = build_rate_instance(0)
base = ExperimentConfig(instance="rate", algorithm="pabc", mode="value", trials=50, seed=1, compact=False)
rows = sweep(base, {"n": [1000, 4000, 16000, 64000]}, inst=inst)

# %%
prev = None
for r in rows:
    med = r["median_value_error"]
    ratio = "" if prev is None else f"  ratio {prev / med:.2f}"
    print(f"n={r['n']:>6}  alpha={r['alpha']:.4f}  median |V - v*| = {med:.4f}{ratio}")
    prev = med
