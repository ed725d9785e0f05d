"""Neural-ODE hazard models for interval-censored, left-truncated survival data."""
from .data import CovariateSchema, Dataset, Subject, SurvivalCurve, load_dataset, split_dataset, write_dataset
from .errors import ConfigError, DataError, ICODENError, LikelihoodError, SolverError, TrainingError
from .likelihood import dataset_loss, dataset_loss_grad, loglik_terms, subject_loglik
from .metrics import EvaluationConfig, evaluate, ibs, mse_survival, predict_survival
from .model import ICODENModel
from .net import MLPParams, NetworkShape, forward, init_params, load_model, save_model, vjp
from .ode import ODEConfig, batch_solve, solve_adjoint, solve_cumhaz
from .simulate import ScenarioConfig, gen_scenario, gen_simple
from .subgroup import gmm_fit, identify_subgroups, turnbull
from .train import TrainConfig, train, tune_oat
from .weibull import WeibullPHParams, fit_weibull_ph, weibull_cumhaz

__version__ = "0.1.0"
