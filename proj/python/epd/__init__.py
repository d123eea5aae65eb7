"""Python access to the ensemble parallel-direction sampler core."""

import json as _json

from ._epd import (
    BranchError,
    GaussianMixture,
    TrainingDiverged,
    build_schedule,
    closed_form_flow,
    default_gmm,
    resolve_steps,
    single_gaussian,
)
from . import _epd

__all__ = [
    "BranchError",
    "GaussianMixture",
    "TrainingDiverged",
    "build_schedule",
    "closed_form_flow",
    "default_gmm",
    "gmm_from_dict",
    "initial_params",
    "resolve_steps",
    "run_epd",
    "run_experiment",
    "sample",
    "single_gaussian",
    "train",
    "validate_params",
]


def gmm_from_dict(spec):
    return GaussianMixture.from_json(_json.dumps(spec))


def sample(solver, model, steps, x, *, afs=True, schedule="polynomial", t_min=0.002, t_max=80.0, rho=7.0):
    """Baseline rollout. Returns {times, states, nfe, para_nfe}; times ascend, states follow visitation order."""
    return _json.loads(_epd._run_sampler(solver, model, schedule, steps, list(x), afs, t_min, t_max, rho))


def initial_params(K, steps):
    return _json.loads(_epd._initial_params(K, steps))


def run_epd(params, model, x, *, workers=1):
    return _json.loads(_epd._run_epd(_json.dumps(params), model, list(x), workers))


def train(config, model, *, workers=1):
    """`config` uses the experiment config layout; only its train/schedule/afs parts matter here."""
    return _json.loads(_epd._train(_json.dumps(config), model, workers))


def run_experiment(config_path, *, workers=1):
    return _json.loads(_epd._run_experiment(str(config_path), workers))


def validate_params(paths):
    return _json.loads(_epd._validate_params([str(p) for p in paths]))
