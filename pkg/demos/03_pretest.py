"""
Postprocess only when it helps
==============================

The mixed regime has a calibrated ensemble from May to October and a
biased one otherwise. The pretest refits on part of the training year and
keeps the raw ensemble whenever the model does not beat it on the held-out
months.
"""

import numpy as np

from topocal import ModelVariant, SyntheticConfig, generate_synthetic, run_variant

cfg = SyntheticConfig(regime="mixed", n_stations=15, n_months=24)
data = generate_synthetic(cfg, seed=8)
months = [f"2018-{m:02d}" for m in range(1, 13)]

dem = run_variant(ModelVariant("dem", 8), data, months, rng_seed=1)
pt = run_variant(ModelVariant("dem-pt", 8, 3), data, months, rng_seed=1)

print(f"dem     mean CRPS {dem.output.mean_crps():.4f}")
print(f"dem+PT  mean CRPS {pt.output.mean_crps():.4f}")

# %%
# Share of stations that were postprocessed, month by month.
accepted = {}
for rec in pt.pretest:
    accepted.setdefault(rec["target_month"], []).append(rec["accepted"])
for month in months:
    share = np.mean(accepted[month])
    print(f"{month}  {'#' * int(round(20 * share)):20s} {share:.0%}")
