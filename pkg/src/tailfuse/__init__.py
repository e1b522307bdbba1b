"""Heavy-tailed p-value combination tests under dependence."""

from .copulas import (
    Comonotone,
    CorrelationMatrix,
    Gaussian,
    Independence,
    Mixture,
    StudentT,
    SurvClaytonForComplement,
    dependence_from_tau,
    model_from_tau,
    sample_null_pvalues,
)
from .distributions import norm_quantile, t_cdf, t_quantile
from .simlab import (
    ExperimentConfig,
    Null,
    SimResult,
    TypeA,
    TypeB,
    gen_alternative,
    run_null_sweep,
    run_power_sweep,
    seed_stream,
    wilson_ci,
)
from .theory import (
    SpectralMeasure,
    bonferroni_ratio,
    cstar_eval,
    ell_eval,
    q_bound,
    q_gamma_spectral,
    validate_spectral,
)
from .transforms import (
    TransformSpec,
    WeightVector,
    bonferroni_pvalue,
    combined_pvalue,
    make_transform,
    reject,
    threshold,
)

__version__ = "0.1.0"
