"""Attribution of a binary outcome to two interacting binary exposures."""
from .classes import (
    ALL_CLASSES,
    MONOTONE_CLASSES,
    ClassDistribution,
    Evidence,
    ExposureCell,
    LatentClass,
    compatible_classes,
    enumerate_classes,
    outcome_under,
)
from .rates import CellCounts, CellRates, identified_masses, monotonicity_consistency, rates_from_counts
from .bounds import IntervalBounds, class_bounds_mono, posterior_bounds
from .maxent import maxent_mono, maxent_posterior
from .em import (
    Dataset,
    FitConfig,
    FitResult,
    MixtureModelParams,
    Restriction,
    e_step,
    fit_em,
    m_step_beta,
    m_step_theta,
    read_dataset_csv,
    write_dataset_csv,
)
from .attribution import (
    DEFAULT_SHARES,
    AttributionMatrix,
    ExtendedEvidence,
    model_posterior,
    posterior_curve,
    posterior_given_evidence,
    posterior_given_extended,
    responsibility_shares,
)
from .datagen import SimConfig, generate_asbestos_replica, generate_simulation
from .bootstrap import bootstrap, make_pipeline

__version__ = "0.1.0"
