"""Quick oracle and invariant checks on small random instances (used by ``dmimo-isac validate``)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .estimator import SensingSetup, coherent_cost, coherent_fit, hypothesis, mean_echo, ncp_cost
from .fisher import Parameterization, fisher_from_setup, jacobian
from .selection import select_sensing_centric

WAVELENGTH = 299792458.0 / 3.5e9


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        self.passed = bool(self.passed)


def random_setup(rng: np.random.Generator, M_t=2, M_r=2, N=2, L=4, extent=200.0, noise_power=1.0) -> SensingSetup:
    """Random APs in a square, random complex Gaussian transmit symbols."""
    X = (rng.standard_normal((M_t, L, N)) + 1j * rng.standard_normal((M_t, L, N))) / np.sqrt(2)
    return SensingSetup(
        tx_positions=rng.uniform(0, extent, (M_t, 2)), tx_boresights=rng.uniform(0, 2 * np.pi, M_t),
        rx_positions=rng.uniform(0, extent, (M_r, 2)), rx_boresights=rng.uniform(0, 2 * np.pi, M_r),
        signals=X, wavelength=WAVELENGTH, phase_step=np.pi, noise_power=noise_power,
    )


def random_echo(rng, setup: SensingSetup, positions, snr_scale=1.0, noise=True):
    """Coherent-model echo with unit-order amplitudes plus unit-variance noise."""
    P = np.asarray(positions, dtype=float).reshape(-1, 2)
    hyp = hypothesis(setup, P)
    alpha = snr_scale * rng.uniform(0.5, 1.5, hyp.psi.shape)
    phi = rng.uniform(0, 2 * np.pi, len(P))
    gains = alpha * np.exp(1j * (hyp.psi + phi[:, None, None]))
    y = mean_echo(setup, P, gains)
    if noise:
        y = y + (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)) * np.sqrt(setup.noise_power / 2)
    return y, alpha, phi


def raw_coherent_min(y, setup, p, rng, restarts=8) -> float:
    """Dense numeric minimization of ||y - mu(p, alpha, phi)||^2 over real alpha and phi."""
    P = np.asarray(p, dtype=float).reshape(-1, 2)
    hyp = hypothesis(setup, P)
    basis = hyp.ar[:, None, :, None, :] * hyp.s[:, :, None, :, None]
    S, M_t, M_r = hyp.psi.shape

    def f(x):
        a = x[: S * M_t * M_r].reshape(S, M_t, M_r)
        g = a * np.exp(1j * (hyp.psi + x[S * M_t * M_r:][:, None, None]))
        return float(np.sum(np.abs(y - np.einsum("str,strln->rln", g, basis)) ** 2))

    best = np.inf
    for phi0 in np.linspace(0, np.pi, restarts, endpoint=False):
        x0 = np.concatenate([rng.standard_normal(S * M_t * M_r), np.full(S, phi0)])
        res = minimize(f, x0, method="BFGS", options={"gtol": 1e-12, "maxiter": 5000})
        best = min(best, res.fun)
    return best


def raw_ncp_min(y, setup, p) -> float:
    """Generic least squares over complex per-path gains (lstsq on the stacked real system)."""
    P = np.asarray(p, dtype=float).reshape(-1, 2)
    hyp = hypothesis(setup, P)
    basis = hyp.ar[:, None, :, None, :] * hyp.s[:, :, None, :, None]
    S, M_t, M_r = hyp.psi.shape
    cols = []
    for s in range(S):
        for t in range(M_t):
            for r in range(M_r):
                c = np.zeros(y.shape, dtype=complex)
                c[r] = basis[s, t, r]
                cols.append(c.ravel())
    A = np.stack(cols, axis=1)
    g, *_ = np.linalg.lstsq(A, y.ravel(), rcond=None)
    return float(np.sum(np.abs(y.ravel() - A @ g) ** 2))


def check_compression(rng, instances=5) -> CheckResult:
    worst_c = worst_n = 0.0
    for _ in range(instances):
        setup = random_setup(rng)
        p = rng.uniform(0, 200, (1, 2))
        y, _, _ = random_echo(rng, setup, p + rng.normal(0, 0.02, (1, 2)))
        ref = raw_coherent_min(y, setup, p, rng)
        worst_c = max(worst_c, abs(coherent_cost(y, setup, p) - ref) / ref)
        ref = raw_ncp_min(y, setup, p)
        worst_n = max(worst_n, abs(ncp_cost(y, setup, p) - ref) / ref)
    ok = worst_c < 1e-6 and worst_n < 1e-6
    return CheckResult("compression identity", ok, f"max rel. error coherent {worst_c:.2e}, non-coherent {worst_n:.2e}")


def check_phase_signature(rng, instances=5) -> CheckResult:
    d_ncp, d_coh = [], []
    for _ in range(instances):
        setup = random_setup(rng, M_t=2, M_r=3, N=4, L=8)
        p = rng.uniform(0, 200, (1, 2))
        y, _, _ = random_echo(rng, setup, p, snr_scale=3.0)
        rot = np.exp(1j * rng.uniform(0, 2 * np.pi, setup.num_rx))[:, None, None]
        c0, c1 = ncp_cost(y, setup, p), ncp_cost(rot * y, setup, p)
        d_ncp.append(abs(c1 - c0) / c0)
        k0, k1 = coherent_cost(y, setup, p), coherent_cost(rot * y, setup, p)
        d_coh.append(abs(k1 - k0) / k0)
    ok = max(d_ncp) < 1e-9 and min(d_coh) > 1e-3
    return CheckResult("phase-coherence signature", ok,
                       f"ncp max change {max(d_ncp):.1e}, coherent min change {min(d_coh):.1e}")


def check_fim_fd(rng, instances=5, h=1e-6) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        setup = random_setup(rng, M_t=1, M_r=1, N=2, L=4)
        p = rng.uniform(0, 200, 2)
        alpha = rng.uniform(0.5, 1.5, (1, 1, 1))
        phi = rng.uniform(0, 2 * np.pi, 1)
        J = jacobian(setup, p, alpha, phi, Parameterization.COHERENT)

        def mu(x):
            P = x[:2][None]
            hyp = hypothesis(setup, P)
            g = x[2:3].reshape(1, 1, 1) * np.exp(1j * (hyp.psi + x[3]))
            return mean_echo(setup, P, g).ravel()

        x0 = np.concatenate([p, alpha.ravel(), phi])
        steps = np.array([h, h, 1e-6, 1e-6])
        Jfd = np.stack([(mu(x0 + np.eye(4)[i] * steps[i]) - mu(x0 - np.eye(4)[i] * steps[i])) / (2 * steps[i])
                        for i in range(4)], axis=1)
        F = np.real(J.conj().T @ J)
        Ffd = np.real(Jfd.conj().T @ Jfd)
        worst = max(worst, np.max(np.abs(F - Ffd)) / np.max(np.abs(F)))
    return CheckResult("FIM vs finite differences", worst < 1e-5, f"max rel. deviation {worst:.1e}")


def check_power_scaling(rng) -> CheckResult:
    setup = random_setup(rng, M_t=2, M_r=2, N=4, L=8)
    p = rng.uniform(0, 200, (1, 2))
    alpha = rng.uniform(0.5, 1.5, (1, 2, 2))
    a = fisher_from_setup(setup, p, alpha).peb_per_target[0]
    b = fisher_from_setup(setup.with_signals(2 * setup.signals), p, alpha).peb_per_target[0]
    rel = abs(b / a - 0.5) / 0.5
    return CheckResult("PEB halves when power quadruples", rel < 1e-6, f"ratio {b / a:.9f}")


def check_farthest_point() -> CheckResult:
    ap = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]], dtype=float)
    R = set(select_sensing_centric(ap, 2).receive)
    ok = R in ({0, 2}, {1, 3})
    return CheckResult("farthest-point diameter pair", ok, f"receive set {sorted(R)}")


def check_alpha_recovery(rng) -> CheckResult:
    setup = random_setup(rng, M_t=2, M_r=2, N=4, L=8)
    p = rng.uniform(0, 200, (1, 2))
    y, alpha, phi = random_echo(rng, setup, p, noise=False)
    _, a_hat, phi_hat = coherent_fit(y, setup, p)
    rel = np.max(np.abs(a_hat - alpha)) / np.max(np.abs(alpha))
    return CheckResult("noiseless amplitude recovery", rel < 1e-9, f"max rel. error {rel:.1e}")


def run_all(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    return [check_compression(rng), check_phase_signature(rng), check_fim_fd(rng), check_power_scaling(rng),
            check_farthest_point(), check_alpha_recovery(rng)]
