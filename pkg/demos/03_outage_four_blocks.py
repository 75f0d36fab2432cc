"""Outage with four fading blocks per codeword.

At rate 3 with 16-QAM the achievable diversity is 1 + floor(4 (1 - 3/4)) = 2.
With a PAPR constraint the outage curve picks up this slope once the peak
budget governs the silence decision. The sweep shares one channel sample
across all powers, so the curves are smooth in P_av.
"""
import numpy as np

from fadealloc import FadingSpec, InputModel, builtin, get_curve, outage_sweep
from fadealloc.delay_limited import diversity_slope_fit, singleton_diversity

curve = get_curve(InputModel.cm(builtin("qam16")))
fading = FadingSpec(m=1.0, B=4)
R, papr = 3.0, 10.0
n = 10**6

print("Singleton diversity:", singleton_diversity(4, 4, R))

P_db = np.arange(6.0, 23.0, 2.0)
res = {scheme: outage_sweep(curve, R, fading, 10 ** (P_db / 10), PAPR=papr, scheme=scheme,
                            n=n, seed=7, threshold_n=n)
       for scheme in ("av", "peak", "papr")}

# %% table of the three policies
print(f"{'P_av dB':>8}" + "".join(f"{s:>11}" for s in res) + "   peak governs")
for k, p in enumerate(P_db):
    governs = res["papr"][k].threshold == res["papr"][k].P_peak
    print(f"{p:8.1f}" + "".join(f"{res[s][k].p_hat:11.2e}" for s in res) + f"   {governs}")

# %% fitted slope on the peak-governed part
pp = np.array([e.p_hat for e in res["papr"]])
gov = np.array([e.threshold == e.P_peak for e in res["papr"]])
print("fitted slope: %.2f" % diversity_slope_fit(P_db[gov], pp[gov], n=n))
