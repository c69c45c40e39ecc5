"""Monte Carlo runner: deployment, the per-trial pipeline, records and parameter sweeps."""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..channel import PathLossModel, Target, comm_channels
from ..comm import sum_se
from ..errors import ConfigurationError
from ..estimator import (CFARConfig, GridConfig, RefineConfig, SensingSetup, refine_coherent, scan_and_detect,
                         synthesize_echoes)
from ..estimator.refine import position_errors
from ..fisher import Parameterization, coverage, fim
from ..geometry import Position2D
from ..scenario import Scenario
from ..selection import ModeAssignment, Strategy, select_comm_centric, select_sensing_centric
from ..waveform import build_frame
from .config import ScenarioConfig

# stream tags: one independent generator per (root seed, trial, purpose)
TAG_DEPLOY, TAG_CHANNEL, TAG_FRAME, TAG_NOISE, TAG_COVERAGE = range(5)


def stream(root_seed: int, trial: int, tag: int) -> np.random.Generator:
    """Generator keyed by (root seed, trial, tag); adding trials or tags never shifts existing streams."""
    return np.random.default_rng(np.random.SeedSequence(int(root_seed), spawn_key=(int(trial), int(tag))))


def _dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def deploy(cfg: ScenarioConfig, rng: np.random.Generator) -> Scenario:
    """Uniform random APs, UEs and targets; targets keep a minimum separation and AP clearance."""
    d, r = cfg.deployment, cfg.radio
    x0, y0, x1, y1 = d.region
    lo, hi = (x0, y0), (x1, y1)
    aps = rng.uniform(lo, hi, size=(d.num_aps, 2))
    bores = rng.uniform(0.0, 2 * np.pi, size=d.num_aps)
    ues = rng.uniform(lo, hi, size=(d.num_ues, 2))
    ue_phases = rng.uniform(0.0, 2 * np.pi, size=d.num_ues)
    targets = []
    for _ in range(10000):
        if len(targets) == d.num_targets:
            break
        p = rng.uniform(lo, hi)
        if np.min(np.linalg.norm(aps - p, axis=1)) < d.min_target_clearance:
            continue
        if np.min(np.linalg.norm(ues - p, axis=1)) == 0.0:
            continue
        if any(np.hypot(*(t.position.as_array() - p)) < d.min_target_separation for t in targets):
            continue
        targets.append(Target(Position2D.from_array(p), rcs=10.0 ** (d.rcs_dbsm / 10.0),
                              reflection_phase=float(rng.uniform(0.0, 2 * np.pi))))
    else:
        raise ConfigurationError("could not place targets with the requested separation")
    return Scenario(
        ap_positions=aps, ap_boresights=bores, ue_positions=ues, ue_phases=ue_phases, targets=targets,
        num_antennas=r.num_antennas, carrier_hz=r.carrier_hz, bandwidth_hz=r.bandwidth_hz,
        max_power=_dbm_to_watts(r.power_dbm), rho=np.asarray(r.rho, dtype=float), temperature_k=r.temperature_k,
        noise_figure_db=r.noise_figure_db,
        path_loss=PathLossModel(r.path_loss_intercept_db, r.path_loss_slope_db),
        rician_k_db=r.rician_k_db, correlation_model=r.correlation_model, region=tuple(d.region),
    )


def select_modes(cfg: ScenarioConfig, scenario: Scenario) -> ModeAssignment:
    d = cfg.deployment
    if d.selection == "fixed":
        T = tuple(int(t) for t in d.transmit)
        a = ModeAssignment(T, tuple(m for m in range(scenario.num_aps) if m not in T), Strategy.FIXED)
    elif d.selection == "comm_centric":
        a = select_comm_centric(scenario.ap_positions, scenario.ue_positions, scenario.path_loss, d.num_tx,
                                noise_tilde=d.noise_tilde, noise_power=scenario.noise_power,
                                max_power=float(np.median(scenario.max_power)))
    else:
        a = select_sensing_centric(scenario.ap_positions, scenario.num_aps - d.num_tx)
    a.validate(scenario.num_aps)
    return a


@dataclass
class TrialState:
    """Intermediate products of one trial, for callers that need more than the record."""

    scenario: Scenario
    assignment: ModeAssignment
    G: np.ndarray
    beta: np.ndarray
    frame: object


def prepare(cfg: ScenarioConfig, seed: int, trial: int = 0) -> TrialState:
    """Deployment, mode selection, channels and frame for one trial."""
    scenario = deploy(cfg, stream(seed, trial, TAG_DEPLOY))
    assignment = select_modes(cfg, scenario)
    G, beta = comm_channels(scenario, assignment.transmit, stream(seed, trial, TAG_CHANNEL))
    frame = build_frame(scenario, assignment.transmit, G, beta, cfg.frame.length, stream(seed, trial, TAG_FRAME),
                        sensing_waveform=cfg.frame.sensing_waveform, reference=cfg.frame.sensing_reference)
    return TrialState(scenario, assignment, G, beta, frame)


def detection_configs(cfg: ScenarioConfig):
    dc = cfg.detection
    grid = GridConfig(spacing=dc.grid_spacing)
    cfar = CFARConfig(pfa=dc.pfa, method=dc.method, guard=dc.guard, train=dc.train,
                      dynamic_range_db=dc.dynamic_range_db, max_targets=dc.max_targets,
                      exclusion_radius=dc.exclusion_radius)
    rc = cfg.refinement
    refine = RefineConfig(**vars(rc))
    return grid, cfar, refine


@dataclass
class ExperimentRecord:
    config_hash: str
    seed: int
    trial: int
    assignment: dict
    se: dict
    peb: dict
    detections: list = field(default_factory=list)
    estimation: dict | None = None
    coverage: dict | None = None
    timings: dict = field(default_factory=dict, compare=False)

    def canonical(self) -> dict:
        """Everything except wall-clock timings."""
        return {
            "config_hash": self.config_hash, "seed": self.seed, "trial": self.trial,
            "assignment": self.assignment, "se": self.se, "peb": self.peb,
            "detections": self.detections, "estimation": self.estimation, "coverage": self.coverage,
        }

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.canonical(), sort_keys=True, separators=(",", ":")).encode()

    def to_json(self) -> str:
        d = self.canonical()
        d["timings"] = self.timings
        return json.dumps(d, sort_keys=True)


def _floats(a):
    return [float(v) for v in np.ravel(a)]


def run_trial(cfg: ScenarioConfig, seed: int | None = None, trial: int = 0) -> ExperimentRecord:
    """deploy -> select -> channels -> frame -> SE -> echoes -> detect -> refine -> bounds."""
    cfg.validate()
    seed = cfg.seed if seed is None else seed
    timings = {}
    t0 = time.perf_counter()
    try:
        st = prepare(cfg, seed, trial)
    except ConfigurationError:
        raise
    except Exception as exc:    # add trial context
        raise RuntimeError(f"trial {trial} (seed {seed}) failed during setup: {exc}") from exc
    sc, asg, frame = st.scenario, st.assignment, st.frame
    se = sum_se(st.G, frame, sc.noise_power)
    peb_c = fim(sc, asg, frame, parameterization=Parameterization.COHERENT).peb_per_target
    peb_nc = fim(sc, asg, frame, parameterization=Parameterization.NONCOHERENT).peb_per_target
    timings["setup"] = time.perf_counter() - t0

    rec = ExperimentRecord(cfg.hash(), int(seed), int(trial), asg.to_dict(), se.to_dict(),
                           {"coherent": _floats(peb_c), "noncoherent": _floats(peb_nc),
                            "targets": sc.target_positions.tolist()})
    if cfg.estimate:
        t1 = time.perf_counter()
        echoes = synthesize_echoes(sc, asg, frame, stream(seed, trial, TAG_NOISE))
        setup = SensingSetup.from_scenario(sc, asg, frame)
        grid, cfar, refine = detection_configs(cfg)
        cmap = scan_and_detect(echoes.y, setup, sc.region, grid, cfar, pfa_scope=cfg.detection.scope)
        timings["scan"] = time.perf_counter() - t1
        rec.detections = [{"node": _floats(d.position), "estimate": _floats(d.estimate), "cost": d.cost,
                           "statistic": d.statistic} for d in cmap.detections]
        t2 = time.perf_counter()
        x0, y0, x1, y1 = sc.region
        coarse = np.array([d.position for d in cmap.detections]).reshape(-1, 2)
        report = refine_coherent(echoes.y, setup, coarse, refine, truth=sc.target_positions,
                                 miss_penalty=float(np.hypot(x1 - x0, y1 - y0)))
        rec.estimation = report.to_dict()
        rec.estimation["coarse_errors"] = _floats(position_errors(coarse, sc.target_positions,
                                                                  float(np.hypot(x1 - x0, y1 - y0))))
        timings["refine"] = time.perf_counter() - t2
    if cfg.compute_coverage:
        t3 = time.perf_counter()
        cov = coverage(sc, asg, frame, cfg.coverage.threshold_wavelengths * sc.wavelength, cfg.coverage.samples,
                       stream(seed, trial, TAG_COVERAGE))
        rec.coverage = {"threshold": cov.threshold, "f_sc": cov.coverage, "median_peb": float(np.median(cov.peb))}
        timings["coverage"] = time.perf_counter() - t3
    rec.timings = timings
    return rec


def _trial_job(args):
    cfg_dict, seed, trial = args
    return run_trial(ScenarioConfig.from_dict(cfg_dict), seed, trial)


def run_trials(cfg: ScenarioConfig, seed: int | None = None, trials: int = 1, workers: int = 1) -> list:
    """Records of trials 0..trials-1, in trial order whatever the worker count."""
    seed = cfg.seed if seed is None else seed
    jobs = [(cfg.validate().to_dict(), seed, t) for t in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_trial_job, jobs))
    return [_trial_job(j) for j in jobs]


# ----------------------------------------------------------------------------- sweeps

AXES = {
    "M_r": "deployment.num_tx",     # value v maps to M_t = M - v
    "rho": "radio.rho",
    "P_t": "radio.power_dbm",
    "N": "radio.num_antennas",
}

METRICS = ("sum_se", "peb_coherent", "peb_noncoherent", "coverage", "error")


def apply_axis(cfg: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    if axis not in AXES:
        raise ConfigurationError(f"unknown sweep axis {axis!r}; choose from {sorted(AXES)}")
    if axis == "M_r":
        return cfg.with_overrides(**{AXES[axis]: int(cfg.deployment.num_aps - int(value))})
    if axis == "N":
        value = int(value)
    return cfg.with_overrides(**{AXES[axis]: value})


def evaluate(cfg: ScenarioConfig, seed: int, trial: int, metrics=("sum_se", "peb_coherent", "peb_noncoherent")):
    """Selected scalar metrics of one trial; cheaper than :func:`run_trial` when estimation is not needed."""
    cfg.validate()
    st = prepare(cfg, seed, trial)
    sc, asg, frame = st.scenario, st.assignment, st.frame
    out = {}
    if "sum_se" in metrics:
        out["sum_se"] = sum_se(st.G, frame, sc.noise_power).sum_se
    if "peb_coherent" in metrics:
        out["peb_coherent"] = float(np.mean(fim(sc, asg, frame, parameterization="coherent").peb_per_target))
    if "peb_noncoherent" in metrics:
        out["peb_noncoherent"] = float(np.mean(fim(sc, asg, frame, parameterization="noncoherent").peb_per_target))
    if "coverage" in metrics:
        cov = coverage(sc, asg, frame, cfg.coverage.threshold_wavelengths * sc.wavelength, cfg.coverage.samples,
                       stream(seed, trial, TAG_COVERAGE))
        out["coverage"] = cov.coverage
    if "error" in metrics:
        rec = run_trial(cfg.with_overrides(estimate=True, compute_coverage=False), seed, trial)
        out["error"] = float(np.mean(rec.estimation["errors"]))
    return out


def _job(args):
    cfg_dict, axis, value, seed, trial, metrics = args
    cfg = apply_axis(ScenarioConfig.from_dict(cfg_dict), axis, value)
    return evaluate(cfg, seed, trial, metrics)


def sweep(cfg: ScenarioConfig, axis: str, values, trials: int, metrics=("sum_se", "peb_coherent", "peb_noncoherent"),
          workers: int = 1, seed: int | None = None):
    """Tidy summary rows (axis, value, metric, n, mean, std, ci95, median, q05, q25, q75, q95).

    Trial t uses the same random streams at every axis value, so differences
    between values are paired comparisons. Results are reduced in (value,
    trial) order, independent of the worker count.
    """
    metrics = tuple(metrics)
    for m in metrics:
        if m not in METRICS:
            raise ConfigurationError(f"unknown metric {m!r}")
    seed = cfg.seed if seed is None else seed
    values = list(values)
    for v in values:
        apply_axis(cfg, axis, v).validate()
    jobs = [(cfg.to_dict(), axis, v, seed, t, metrics) for v in values for t in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    raw = {}
    for (_, _, v, _, t, _), res in zip(jobs, results):
        raw[(values.index(v), t)] = res
    rows = []
    for i, v in enumerate(values):
        for m in metrics:
            x = np.array([raw[(i, t)][m] for t in range(trials)], dtype=float)
            rows.append(summarize(axis, v, m, x))
    return rows, raw


def summarize(axis, value, metric, x) -> dict:
    x = np.asarray(x, dtype=float)
    n = len(x)
    std = float(np.std(x, ddof=1)) if n > 1 else 0.0
    q = np.quantile(x, [0.05, 0.25, 0.5, 0.75, 0.95]) if n else [np.nan] * 5
    return {"axis": axis, "value": value, "metric": metric, "n": n, "mean": float(np.mean(x)), "std": std,
            "ci95": 1.96 * std / np.sqrt(n) if n > 1 else 0.0, "median": float(q[2]), "q05": float(q[0]),
            "q25": float(q[1]), "q75": float(q[3]), "q95": float(q[4])}
