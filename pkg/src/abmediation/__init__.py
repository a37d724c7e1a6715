"""Direct and indirect effects of A/B test treatments through a measured mediator."""

from .data import ArmSummary, ColumnMapping, ObservationRecord, ObservationTable, ingest, read_csv, summarize
from .effects import EffectEstimate, EffectReport, build_report, delta_variances, effects_from_theta, z_test
from .gmm import GmmFit, HacConfig, ThetaVector, hac_matrix, itgmm_fit, moment_eval, ols_init
from .lsem import (
    GroundTruth,
    LsemSpec,
    NoiseSpec,
    counterfactual_oracle,
    simulate,
    theta_from_structural,
    true_effects_from_structural,
)
from .pipeline import analyze

__version__ = "0.1.0"
