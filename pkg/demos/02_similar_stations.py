"""
Training on topographically similar stations
============================================

In the dem-bias regime the forecast bias depends on the smoothed terrain
height, so one global model fitted on every station is a compromise. We
compare raw, global and DEM-neighbour models over one year and look for
the best number of neighbours L.
"""

import numpy as np

from topocal import ModelVariant, SyntheticConfig, generate_synthetic, run_variant, select_L, verify_run

data = generate_synthetic(SyntheticConfig(regime="dem-bias", n_stations=20, n_months=18), seed=3)
print(f"{len(data)} pairs, {len(data.stations)} stations, K={data.K}")

# %%
# Choose L on the first half of 2018, using the year before each month for training.
sel = select_L(data, [3, 6, 10, 19], "dem", ["2018-01", "2018-02", "2018-03"], rng_seed=0)
for (L, _), score in sorted(sel.scores.items()):
    print(f"L={L:2d}  mean CRPS {score:.4f}")
print("chosen L:", sel.L)

# %%
# Evaluate on the following months.
months = ["2018-04", "2018-05", "2018-06"]
outputs = {v.label: run_variant(v, data, months, rng_seed=0).output
           for v in (ModelVariant("raw"), ModelVariant("global"), ModelVariant("dem", sel.L))}
report = verify_run(outputs)
for name, entry in report["models"].items():
    print(f"{name:14s} CRPS {entry['mean_crps']:.4f}  skill {100 * entry['skill']:+.1f}%")

# Station-wise skill of the DEM model against the terrain height.
dem_entry = report["models"][f"dem_cnlr_L{sel.L}"]["station_skill"]
for sid in sorted(dem_entry, key=lambda s: data.stations[s].dem_31km)[::4]:
    print(f"{sid}  dem {data.stations[sid].dem_31km:6.0f} m  skill {100 * dem_entry[sid]:+.1f}%")
