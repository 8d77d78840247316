from .accumulator import MCAccumulator
from .cumulants import (CumulantSource, CumulantVector, HLaw, cumulant_expansion_check,
                        cumulants_from_moments, law_cumulants, moments_from_cumulants, sample_cumulants)
from .experiments import (BiasFit, LinstatResult, LocalLawResult, MomentCell, Observables, RatioResult,
                          ResolventResult, bias_rate_fit, collect_observables, complex_vs_real_ratio,
                          local_law_check, map_batches, mixed_moment_table, run_linstat_experiment,
                          run_resolvent_experiment)
from .normality import kolmogorov_sf, ks_normality_test, ks_statistic

__all__ = [
    "MCAccumulator", "CumulantSource", "CumulantVector", "HLaw", "cumulant_expansion_check",
    "cumulants_from_moments", "law_cumulants", "moments_from_cumulants", "sample_cumulants",
    "BiasFit", "LinstatResult", "LocalLawResult", "MomentCell", "Observables", "RatioResult",
    "ResolventResult", "bias_rate_fit", "collect_observables", "complex_vs_real_ratio",
    "local_law_check", "map_batches", "mixed_moment_table", "run_linstat_experiment",
    "run_resolvent_experiment", "kolmogorov_sf", "ks_normality_test", "ks_statistic",
]
