"""Closed-loop system identification through dual system-level parameters.

The main entry points are :func:`estimate_dual_params` with
:func:`recover_plant_freqresp`, the dual-Youla and coprime-factor baselines,
and the Monte Carlo harness behind the ``dslpid`` command.
"""

from .baselines import CoprimeFactors, PlantEstimate, coprime_estimate, coprime_factorize, dual_youla_estimate
from .config import ExperimentConfig, load_config, preset
from .dslp import (
    DualSlsEstimate,
    estimate_dual_params,
    expected_param_transform,
    realize_plant_ss,
    recover_plant_freqresp,
    transform_realization,
)
from .harness import convergence_sweep, run_monte_carlo, run_trial, summarize
from .lti import FrequencyResponse, Polynomial, RationalTF, StateSpaceModel, tf_to_ss
from .loop import LoopConfig, LoopDataset, simulate_loop, validate_loop
from .metrics import closed_loop_stable, err1, err2, freq_grid
from .signals import RngStream, Signal, prbs_generate
from .sls import FirParams, build_affine_constraints, true_dual_params, verify_params

__version__ = "0.1.0"
