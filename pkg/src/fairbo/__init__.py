"""Fairness-constrained Bayesian hyperparameter optimization."""

from .acquisition import constrained_ei, expected_improvement, joint_feasibility, probability_of_feasibility
from .data import Dataset, generate_synthetic, load_csv, split_train_validation, standardize
from .errors import ConfigError, DomainError, LoadError, NumericalError, StateError, UndefinedMetricError
from .fairness import ConstraintSpec, FairnessReport, deo, dfp, dsp, fairness_report, tally
from .gp import KernelParams, fit_gp, fit_gp_classifier, log_marginal_likelihood, posterior, predict_probability
from .learners import LinearLearnerConfig, LinearLearnerPipeline, linear_learner_space, train_linear_learner
from .space import Dimension, SearchSpace
from .tuner import History, best_feasible_curve, run_bo, run_fairbo, run_random_search

__version__ = "0.1.0"
