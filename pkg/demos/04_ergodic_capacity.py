"""Ergodic capacity of 16-QAM on Rayleigh fading.

Compares constant power, truncated water-filling with the best SNR cap and
mercury/water-filling, each with and without a PAPR limit.
"""
import math

import numpy as np

from fadealloc import FadingSpec, InputModel, builtin, get_curve
from fadealloc.delay_limited import PowerBudget
from fadealloc.ergodic import capacity_of_policy, make_policy, optimize_beta, uniform_policy

curve = get_curve(InputModel.cm(builtin("qam16")))
fading = FadingSpec(m=1.0)
betas = 10 ** (np.arange(0.0, 31.0, 2.0) / 10)

print(f"{'P_av dB':>8}{'PAPR dB':>9}{'uniform':>9}{'tw':>9}{'beta dB':>9}{'opt':>9}")
for p_db in (-5.0, 0.0, 5.0, 10.0, 15.0):
    P_av = 10 ** (p_db / 10)
    C_uni = capacity_of_policy(uniform_policy(curve, fading, P_av)).C
    for papr_db in (math.inf, 4.0, 1.0):
        budget = PowerBudget(P_av, 10 ** (papr_db / 10))
        kind = "opt" if math.isinf(papr_db) else "papr_opt"
        C_opt = capacity_of_policy(make_policy(kind, curve, fading, budget)).C
        best = optimize_beta(curve, fading, budget, betas)
        print(f"{p_db:8.1f}{papr_db:9.1f}{C_uni:9.4f}{best.point.C:9.4f}"
              f"{10 * math.log10(best.beta):9.1f}{C_opt:9.4f}")
