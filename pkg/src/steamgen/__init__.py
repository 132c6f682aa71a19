"""Treatment-aware synthetic data generation and evaluation."""

__version__ = "0.1.0"

from .data import (Column, RngSeed, Scaler, TreatmentDataset, default_schema, load_csv,
                   load_schema, save_csv, save_schema, split, standardize)
from .learners import TrainConfig, fit_gbt, fit_logistic, fit_ridge, predict_proba
from .generators import (FixedPropensity, GenConfig, SteamModel, fit_gmm, fit_joint_baseline,
                         fit_marginal_hist, fit_steam, fit_steam_ablation_jointxw, generate_steam)
from .cate import CateConfig, CateFamilyConfig, CateModel, fit_cate, predict_cate
from .metrics import (MetricReport, alpha_precision_x, baseline_joint_metrics, beta_recall_x,
                      evaluate, jsd_pi, oracle_pehe, u_int, u_pehe, u_policy)
from .simulate import (DgpConfig, Theorem1Params, adversarial_synth, build_outcome_arch_study,
                       build_propensity_subset_study, oracle_cate, simulate, theorem1_ratio)
from .privacy import (BudgetSplit, DpLedger, PrivacyBudget, compose, dp_logistic,
                      dp_marginal_hist, dp_steam, split_budget)
