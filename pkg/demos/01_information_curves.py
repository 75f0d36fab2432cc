"""Mutual information and MMSE of 16-QAM over AWGN.

Compares coded modulation, BICM with Gray labels and the Gaussian input,
and checks that the slope of the information curve is the MMSE.
"""
import numpy as np

from fadealloc import InputModel, builtin, get_curve
from fadealloc.awgn_info import LN2

qam16 = builtin("qam16")
curves = {
    "gaussian": get_curve(InputModel.gaussian()),
    "cm": get_curve(InputModel.cm(qam16)),
    "bicm": get_curve(InputModel.bicm(qam16)),
}

# %% information in bits against SNR
rho_db = np.arange(-10, 31, 5)
rho = 10 ** (rho_db / 10)
print(f"{'SNR dB':>7}" + "".join(f"{k:>10}" for k in curves))
for r_db, r in zip(rho_db, rho):
    print(f"{r_db:7.0f}" + "".join(f"{float(c.info(r)):10.4f}" for c in curves.values()))

# %% the gap between CM and BICM is small with Gray labels
gap = curves["cm"].info(rho) - curves["bicm"].info(rho)
print("\nlargest CM - BICM gap on the grid: %.4f bits" % gap.max())

# %% slope of I equals MMSE / ln 2
cm = curves["cm"]
h = 1e-5
for r in (0.5, 5.0, 50.0):
    fd = (cm.info(r + h) - cm.info(r - h)) / (2 * h)
    print(f"rho = {r:5.1f}: dI/drho = {float(fd):.6f}, mmse/ln2 = {float(cm.mmse(r)) / LN2:.6f}")

# %% SNR needed for a target rate
for R in (1.0, 2.0, 3.0, 3.9):
    need = 10 * np.log10(float(cm.inverse_info(R)))
    print(f"R = {R:3.1f} bits needs {need:6.2f} dB with 16-QAM")
