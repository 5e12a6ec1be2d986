"""Dynamic panel-data econometrics.

Difference and system GMM with Sargan/Hansen, difference-in-Hansen, AR(m),
Pesaran CD and Wald diagnostics; Levin-Lin-Chu and Im-Pesaran-Shin panel
unit-root tests; the Dumitrescu-Hurlin panel Granger non-causality test; and
a configuration-driven replication pipeline for trade-facilitation models.
"""

from .causality import DhConfig, DhResult, dh_test, standardize_dh, unit_wald
from .diagnostics import (TestResult, ar_test, difference_in_hansen, hansen_j, pesaran_cd,
                          sargan, wald_joint)
from .gmm import (GmmEstimate, GmmStyle, InstrumentPlan, ModelSpec, build_difference_instruments,
                  build_system_instruments, default_plan, estimate, windmeijer_correct)
from .ingest import (ClassificationList, FetchRequest, VariableSpec, build_model_variables,
                     classify, fetch_indicators, load_csv, write_csv)
from .panel import (DescriptiveRow, PanelDataset, SeriesTransform, apply_transform, describe,
                    subset_by_group)
from .simulate import DgpConfig, gen_dynamic_panel, oracle_iv
from .unit_root import AdfSpec, UnitRootResult, adf_stat, ips_test, llc_test

__version__ = "0.1.0"

__all__ = [
    "PanelDataset", "SeriesTransform", "DescriptiveRow", "apply_transform", "describe",
    "subset_by_group",
    "VariableSpec", "ClassificationList", "FetchRequest", "load_csv", "write_csv", "classify",
    "build_model_variables", "fetch_indicators",
    "AdfSpec", "UnitRootResult", "adf_stat", "llc_test", "ips_test",
    "DhConfig", "DhResult", "unit_wald", "standardize_dh", "dh_test",
    "ModelSpec", "GmmStyle", "InstrumentPlan", "GmmEstimate", "default_plan",
    "build_difference_instruments", "build_system_instruments", "estimate", "windmeijer_correct",
    "TestResult", "sargan", "hansen_j", "difference_in_hansen", "ar_test", "pesaran_cd",
    "wald_joint",
    "DgpConfig", "gen_dynamic_panel", "oracle_iv",
]
