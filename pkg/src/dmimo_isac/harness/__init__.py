"""Configuration, Monte Carlo runner and command-line interface."""

from .config import ScenarioConfig, paper_scenario
from .runner import ExperimentRecord, deploy, evaluate, prepare, run_trial, run_trials, stream, sweep

__all__ = ["ScenarioConfig", "paper_scenario", "ExperimentRecord", "deploy", "evaluate", "prepare", "run_trial",
           "run_trials", "stream", "sweep"]
