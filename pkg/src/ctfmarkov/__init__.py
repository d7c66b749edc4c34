"""Bayesian higher-order Markov chains via conditional tensor factorization."""

from .chain import PosteriorChain
from .errors import CTFError
from .inference import (Hypothesis, bayes_factor, batch_means_mcse, lag_inclusion,
                        maximal_order_distribution, posterior_mean_transition, posterior_prob,
                        predict_one_step, running_quantiles)
from .init_approx import init_two_stage
from .model import (Hyperparams, LatentState, Schedule, TransitionTensor, evaluate_transition,
                    ktilde_prior_prob_one, lag_prior_pmf, materialize_tensor, parameter_count)
from .sampler import initial_state, run_chain
from .seqdata import SequenceData, build_lag_design, encode, from_codes, load_sequence
from .simgen import CASES, fit, generate_true_tensor, run_experiment, simulate_chain

__version__ = "0.1.0"

__all__ = [
    "CASES", "CTFError", "Hyperparams", "Hypothesis", "LatentState", "PosteriorChain", "Schedule",
    "SequenceData", "TransitionTensor", "bayes_factor", "batch_means_mcse", "build_lag_design",
    "encode", "evaluate_transition", "fit", "from_codes", "generate_true_tensor", "init_two_stage",
    "initial_state", "ktilde_prior_prob_one", "lag_inclusion", "lag_prior_pmf", "load_sequence",
    "materialize_tensor", "maximal_order_distribution", "parameter_count", "posterior_mean_transition",
    "posterior_prob", "predict_one_step", "run_chain", "run_experiment", "running_quantiles",
    "simulate_chain",
]
