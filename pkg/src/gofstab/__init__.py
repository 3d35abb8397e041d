"""Stabilized finite-sample critical values and fast p-values for ecdf-based
goodness-of-fit statistics on [0, 1] and on the hypersphere."""
from .asymptotics import (AlphaGrid, CriticalTable, asymptotic_quantile, asymptotic_sf,
                          build_projected_table, projected_asymptotic_quantile)
from .kinds import StatisticKind
from .pvalue import PValueResult, approx_pvalue, reject
from .stabilizer import (DimStabilizedForm, StabilizedForm, StephensForm, critical_value,
                         default_form, eval_g, eval_g_dim, stabilize, stephens_modify)
from .statistics import (SphericalSample, StatisticValue, UnitSample, bakshaev_statistic,
                         classical_statistic, compute_statistic, mean_chord, projected_statistic,
                         projection_cdf)

__version__ = "0.1.0"

__all__ = [
    "AlphaGrid", "CriticalTable", "DimStabilizedForm", "PValueResult", "SphericalSample",
    "StabilizedForm", "StatisticKind", "StatisticValue", "StephensForm", "UnitSample",
    "approx_pvalue", "asymptotic_quantile", "asymptotic_sf", "bakshaev_statistic",
    "build_projected_table", "classical_statistic", "compute_statistic", "critical_value",
    "default_form", "eval_g", "eval_g_dim", "mean_chord", "projected_asymptotic_quantile",
    "projected_statistic", "projection_cdf", "reject", "stabilize", "stephens_modify",
]
