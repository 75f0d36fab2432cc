"""Power allocation for fading channels with discrete inputs.

Mutual information and MMSE of signal constellations over AWGN, outage of
delay-limited block-fading channels under peak, average and PAPR power
constraints, and ergodic capacity with mercury/water-filling.
"""

from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # pragma: no cover - source checkout
    __version__ = "0.0.0"

from .constellation import (LabeledConstellation, builtin, load_constellation, make_psk,
                            make_qam, save_constellation)
from .curve import InfoCurve, InputModel, UnachievableRateError, build_curve, get_curve
from .fading import FadingSpec, sample_power_gains
from .delay_limited import (OutageEstimate, PowerBudget, ThresholdS, b1_outage_analytic,
                            b1_threshold_P0, b1_threshold_s, min_power_alloc,
                            outage_mc, outage_sweep, threshold_s, tw_min_power_alloc)
from .ergodic import (CapacityPoint, ErgodicPolicy, capacity_of_policy, mercury_waterfill,
                      optimize_beta, papr_opt_waterfill, papr_tw_waterfill, tw_waterfill)

__all__ = [
    "__version__",
    "LabeledConstellation", "builtin", "load_constellation", "save_constellation",
    "make_psk", "make_qam",
    "InfoCurve", "InputModel", "UnachievableRateError", "build_curve", "get_curve",
    "FadingSpec", "sample_power_gains",
    "PowerBudget", "ThresholdS", "OutageEstimate", "min_power_alloc", "tw_min_power_alloc",
    "threshold_s", "outage_mc", "outage_sweep", "b1_threshold_s", "b1_threshold_P0",
    "b1_outage_analytic",
    "ErgodicPolicy", "CapacityPoint", "mercury_waterfill", "tw_waterfill",
    "papr_opt_waterfill", "papr_tw_waterfill", "capacity_of_policy", "optimize_beta",
]
