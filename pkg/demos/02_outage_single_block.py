"""Outage of a single-block channel under a PAPR constraint.

Rayleigh fading, 16-QAM coded modulation, rate 1 bit per channel use.
With one block the outage has a closed form, which is compared against
Monte Carlo. A finite PAPR produces an error floor: above the power P0 the
outage follows the peak-limited curve and falls only like 1/P.
"""
import math

import numpy as np

from fadealloc import (FadingSpec, InputModel, PowerBudget, b1_outage_analytic,
                       b1_threshold_P0, b1_threshold_s, builtin, get_curve, outage_mc)
from fadealloc.delay_limited import ThresholdPolicy

curve = get_curve(InputModel.cm(builtin("qam16")))
fading = FadingSpec(m=1.0, B=1)
R = 1.0

# %% where the average constraint stops mattering
for papr_db in (3.0, 10.0):
    P0 = b1_threshold_P0(curve, fading, R, 10 ** (papr_db / 10))
    where = f"{10 * math.log10(P0):.2f} dB" if P0 > 0 else "never (peak binds everywhere)"
    print(f"PAPR {papr_db:4.1f} dB: peak limit takes over above {where}")

# %% analytic against simulated outage
print(f"\n{'P_av dB':>8}{'PAPR dB':>9}{'analytic':>12}{'MC':>12}{'z':>7}")
n = 200_000
for papr_db in (3.0, 10.0, math.inf):
    for p_db in (0.0, 10.0, 20.0, 30.0):
        budget = PowerBudget.from_db(p_db, papr_db)
        p = b1_outage_analytic(curve, fading, R, budget)
        s = b1_threshold_s(curve, fading, R, budget.P_av)
        est = outage_mc(ThresholdPolicy.papr(curve, budget, s), R, fading, n, seed=1)
        sd = math.sqrt(p * (1 - p) / n)
        z = (est.p_hat - p) / sd if sd > 0 else 0.0
        print(f"{p_db:8.1f}{papr_db:9.1f}{p:12.3e}{est.p_hat:12.3e}{z:7.2f}")

# %% the floor: slope of log outage per decade of power
P_db = np.arange(30.0, 61.0, 10.0)
for papr_db in (10.0, math.inf):
    p = [b1_outage_analytic(curve, fading, R, PowerBudget.from_db(x, papr_db)) for x in P_db]
    print(f"PAPR {papr_db} dB:", " ".join(f"{v:.2e}" for v in p))
