"""End-to-end acceptance checks; each test reports one PASS/FAIL line in the session summary.

Run alone with ``pytest tests/test_acceptance.py -v``. The full file takes about 30 min on one core.
"""

import time

import numpy as np
import pytest

from conftest import reference_trial, verdict
from dmimo_isac.estimator import (CFARConfig, GridConfig, RefineConfig, coherent_cost, ncp_cost, refine_coherent,
                                  scan_and_detect)
from dmimo_isac.fisher import fisher_from_setup
from dmimo_isac.harness import evaluate, paper_scenario, run_trial, run_trials
from dmimo_isac.harness.runner import sweep
from dmimo_isac.selection import greedy_comm_centric, select_sensing_centric
from dmimo_isac.validation import random_echo, random_setup, raw_coherent_min, raw_ncp_min
from test_fisher import fd_fim
from test_selection import BETA, NOISE, greedy_sequences

pytestmark = pytest.mark.acceptance


def _paired_ci(d):
    d = np.asarray(d, dtype=float)
    return float(np.mean(d)), float(1.96 * np.std(d, ddof=1) / np.sqrt(len(d)))


def test_criterion_1_compression_identity():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst_c = worst_n = 0.0
    for _ in range(50):
        setup = random_setup(rng, M_t=2, M_r=2, N=2, L=4)
        p = rng.uniform(0, 200, (1, 2))
        y, _, _ = random_echo(rng, setup, p + rng.normal(0, 0.05, (1, 2)))
        ref = raw_coherent_min(y, setup, p, rng)
        worst_c = max(worst_c, abs(coherent_cost(y, setup, p) - ref) / ref)
        ref = raw_ncp_min(y, setup, p)
        worst_n = max(worst_n, abs(ncp_cost(y, setup, p) - ref) / ref)
    dt = time.perf_counter() - t0
    verdict(1, worst_c < 1e-6 and worst_n < 1e-6 and dt < 60,
            f"50 instances, max rel. dev. coherent {worst_c:.1e}, non-coherent {worst_n:.1e} (tol 1e-6), {dt:.0f} s")


def test_criterion_2_noiseless_recovery():
    t0 = time.perf_counter()
    st_, echoes, setup = reference_trial(seed=0, trial=0, noise=False)
    truth = st_.scenario.target_positions
    assert np.hypot(*(truth[0] - truth[1])) >= 100.0
    cmap = scan_and_detect(echoes.y, setup, st_.scenario.region)
    det = np.array([d.position for d in cmap.detections]).reshape(-1, 2)
    ok = len(det) == 2
    coarse_err = np.full(2, np.inf)
    err = np.full(2, np.inf)
    if ok:
        # match each detection to a target, then require it within one 5 m cell on both axes
        order = [int(np.argmin(np.linalg.norm(det - t, axis=1))) for t in truth]
        off = np.abs(det[order] - truth)
        coarse_err = np.linalg.norm(off, axis=1)
        ok = len(set(order)) == 2 and bool(np.all(off <= cmap.spacing))
        rep = refine_coherent(echoes.y, setup, det, RefineConfig(), truth=truth)
        err = rep.errors
        ok = ok and bool(np.all(err < 1e-4))
    dt = time.perf_counter() - t0
    verdict(2, ok and dt < 120, f"{len(det)} detections, coarse errors {np.round(coarse_err, 2).tolist()} m, "
                                f"refined errors {err[0]:.1e} / {err[1]:.1e} m (tol 1e-4), {dt:.0f} s")


def _error_to_peb(power_dbm, trials):
    cfg = paper_scenario(**{"radio.power_dbm": power_dbm, "detection.grid_spacing": 10.0,
                            "refinement.max_points": 400000})
    ratios = []
    for t in range(trials):
        rec = run_trial(cfg, 0, t)
        ratios.append(np.asarray(rec.estimation["errors"]) / np.asarray(rec.peb["coherent"]))
    return float(np.median(np.concatenate(ratios)))


def test_criterion_3_bound_attainment():
    t0 = time.perf_counter()
    high = _error_to_peb(40.0, 200)
    low = _error_to_peb(0.0, 200)
    dt = time.perf_counter() - t0
    verdict(3, high <= 2.0 and low >= 10.0 and dt < 1800,
            f"median error/PEB {high:.2f} at 40 dBm (<= 2), {low:.3g} at 0 dBm (>= 10), 200 trials each, "
            f"{dt / 60:.1f} min")


def test_criterion_4_bound_ordering():
    t0 = time.perf_counter()
    draws = 50
    rhos = [round(0.1 * k, 1) for k in range(1, 10)]
    metrics = ("sum_se", "peb_coherent", "peb_noncoherent")
    fails = []
    worst_gap = np.inf
    for rho in rhos:
        res = {}
        for N in (2, 8):
            cfg = paper_scenario(**{"estimate": False, "radio.rho": rho, "radio.num_antennas": N,
                                    "radio.power_dbm": 30.0})
            res[N] = {m: np.array([evaluate(cfg, 0, t, metrics)[m] for t in range(draws)]) for m in metrics}
            # pointwise bound ordering holds for every draw
            if np.any(res[N]["peb_coherent"] > res[N]["peb_noncoherent"] * (1 + 1e-9)):
                fails.append(f"coherent > non-coherent at rho={rho}, N={N}")
        m, ci = _paired_ci(np.log(res[8]["peb_coherent"]) - np.log(res[2]["peb_coherent"]))
        if not m + ci < 0:
            fails.append(f"PEB(N=8) not below PEB(N=2) at rho={rho}")
        worst_gap = min(worst_gap, -(m + ci))
        m, ci = _paired_ci(res[8]["sum_se"] - res[2]["sum_se"])
        if not m - ci > 0:
            fails.append(f"SE(N=8) not above SE(N=2) at rho={rho}")
    dt = time.perf_counter() - t0
    verdict(4, not fails and dt < 600,
            (f"9 rho values x N in (2, 8), {draws} paired draws; " + ("; ".join(fails) if fails else
             f"all orderings strict, tightest log-PEB margin {worst_gap:.2f}") + f", {dt:.0f} s"))


def test_criterion_5_tradeoff_trends():
    t0 = time.perf_counter()
    trials = 30
    values = list(range(1, 12))
    raw = {}
    for sel in ("sensing_centric", "comm_centric"):
        cfg = paper_scenario(**{"estimate": False, "deployment.num_ues": 10, "deployment.selection": sel,
                                "coverage.samples": 200, "radio.power_dbm": 20.0, "radio.rho": 0.5})
        _, raw[sel] = sweep(cfg, "M_r", values, trials, ["sum_se", "coverage"])

    def series(sel, m):
        return np.array([[raw[sel][(i, t)][m] for t in range(trials)] for i in range(len(values))])

    problems = []
    for sel in raw:
        se = series(sel, "sum_se")
        for i in range(len(values) - 1):
            m, ci = _paired_ci(se[i + 1] - se[i])
            if m > ci:
                problems.append(f"{sel} SE rises from M_r={values[i]} to {values[i + 1]}")
        cov = series(sel, "coverage").mean(axis=1)
        peak = values[int(np.argmax(cov))]
        if peak in (values[0], values[-1]):
            problems.append(f"{sel} coverage peaks at the boundary M_r={peak}")
    sens, comm = series("sensing_centric", "coverage"), series("comm_centric", "coverage")
    below = []
    for i, v in enumerate(values):
        m, ci = _paired_ci(sens[i] - comm[i])
        if m < -ci:
            below.append(f"M_r={v} ({m:+.3f} +- {ci:.3f})")
    if below:
        problems.append("sensing-centric coverage below comm-centric at " + ", ".join(below))
    dt = time.perf_counter() - t0
    peaks = {sel: values[int(np.argmax(series(sel, 'coverage').mean(axis=1)))] for sel in raw}
    verdict(5, not problems and dt < 1200,
            f"{trials} paired trials per M_r, coverage peaks at M_r={peaks['sensing_centric']} (sensing-centric) "
            f"and {peaks['comm_centric']} (comm-centric); " + ("; ".join(problems) if problems else "all trends hold")
            + f", {dt / 60:.1f} min")


def test_criterion_6_fim_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    worst, min_eig = 0.0, np.inf
    for _ in range(20):
        setup = random_setup(rng, M_t=2, M_r=2, N=2, L=4)
        p = rng.uniform(0, 200, 2)
        alpha = rng.uniform(0.5, 1.5, (1, 2, 2))
        phi = rng.uniform(0, 2 * np.pi, 1)
        F = fisher_from_setup(setup, p, alpha, phi).fim
        worst = max(worst, np.max(np.abs(F - fd_fim(setup, p, alpha, phi))) / np.max(np.abs(F)))
        w = np.linalg.eigvalsh(F)
        min_eig = min(min_eig, w[0] / w[-1])
    setup = random_setup(rng, M_t=2, M_r=3, N=4, L=8)
    P = rng.uniform(0, 200, (2, 2))
    alpha = rng.uniform(0.5, 1.5, (2, 2, 3))
    a = fisher_from_setup(setup, P, alpha).peb_per_target
    b = fisher_from_setup(setup.with_signals(2 * setup.signals), P, alpha).peb_per_target
    scale_dev = float(np.max(np.abs(b / a - 0.5)) / 0.5)
    dt = time.perf_counter() - t0
    verdict(6, worst < 1e-5 and min_eig >= -1e-12 and scale_dev < 1e-6 and dt < 60,
            f"max rel. FD deviation {worst:.1e} (tol 1e-5), min normalized eigenvalue {min_eig:.1e}, "
            f"power x4 PEB ratio deviation {scale_dev:.1e} (tol 1e-6), {dt:.0f} s")


def test_criterion_7_phase_signature():
    t0 = time.perf_counter()
    rng = np.random.default_rng(707)
    d_ncp, d_coh = [], []
    for _ in range(50):
        setup = random_setup(rng, M_t=2, M_r=3, N=4, L=8)
        p = rng.uniform(0, 200, (1, 2))
        y, _, _ = random_echo(rng, setup, p, snr_scale=3.0)
        rot = np.exp(1j * rng.uniform(0, 2 * np.pi, setup.num_rx))[:, None, None]
        c0 = ncp_cost(y, setup, p)
        d_ncp.append(abs(ncp_cost(rot * y, setup, p) - c0) / c0)
        k0 = coherent_cost(y, setup, p)
        d_coh.append(abs(coherent_cost(rot * y, setup, p) - k0) / k0)
    dt = time.perf_counter() - t0
    verdict(7, max(d_ncp) < 1e-9 and min(d_coh) > 1e-3 and dt < 60,
            f"50 instances, non-coherent max change {max(d_ncp):.1e} (< 1e-9), coherent min change "
            f"{min(d_coh):.1e} (> 1e-3), {dt:.0f} s")


def test_criterion_8_detector_calibration():
    """Per-node false-alarm rate on pure-noise maps (50 m grid, four deployments, 2500 maps each)."""
    t0 = time.perf_counter()
    pfa = 1e-3
    grid, cfar = GridConfig(spacing=50.0), CFARConfig(pfa=pfa, max_targets=0)
    rng = np.random.default_rng(808)
    alarms = nodes = 0
    for trial in range(4):
        st_, _, setup = reference_trial(seed=8, trial=trial, noise=False)
        shape = (setup.num_rx, setup.num_instants, setup.num_antennas)
        for _ in range(2500):
            y = np.sqrt(setup.noise_power / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
            cmap = scan_and_detect(y, setup, st_.scenario.region, grid, cfar, pfa_scope="node")
            alarms += cmap.first_pass_exceedances
            nodes += cmap.tested_nodes
    rate = alarms / nodes
    dt = time.perf_counter() - t0
    verdict(8, pfa / 3 <= rate <= pfa * 3 and dt < 900,
            f"10000 maps, {nodes} node tests, empirical rate {rate:.2e} in [{pfa / 3:.1e}, {pfa * 3:.1e}], "
            f"{dt:.0f} s")


def test_criterion_9_selection_oracles():
    t0 = time.perf_counter()
    ok = True
    for num_tx in (1, 2, 3):
        a = greedy_comm_centric(BETA, num_tx, NOISE)
        ok = ok and [p for p, _ in a.trace] == greedy_sequences(BETA, num_tx, NOISE)[0]
    ap = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]], dtype=float)
    R = set(select_sensing_centric(ap, 2).receive)
    ok = ok and R in ({0, 2}, {1, 3})
    dt = time.perf_counter() - t0
    verdict(9, ok and dt < 1.0, f"greedy traces match brute-force replay for M_t=1..3, square+center receive set "
                                f"{sorted(R)}, {dt * 1e3:.0f} ms")


def test_criterion_10_determinism():
    t0 = time.perf_counter()
    cfg = paper_scenario(**{"detection.grid_spacing": 20.0, "refinement.max_points": 20000,
                            "refinement.max_window": 5.0, "radio.power_dbm": 30.0})
    first = [r.canonical_bytes() for r in run_trials(cfg, 3, 3, workers=1)]
    again = [r.canonical_bytes() for r in run_trials(cfg, 3, 3, workers=1)]
    pooled = [r.canonical_bytes() for r in run_trials(cfg, 3, 3, workers=2)]
    single = run_trial(cfg, 3, 1).canonical_bytes()
    ok = first == again == pooled and single == first[1]
    dt = time.perf_counter() - t0
    verdict(10, ok and dt < 120, f"3 trials byte-identical across 2 sequential runs and 2 workers "
                                 f"({sum(map(len, first))} bytes), {dt:.0f} s")
