"""Fisher information and position error bounds for the coherent and non-coherent models.

Observations are y = mu(eta) + z with z circular white Gaussian of variance
sigma^2 per element, so the FIM is (2/sigma^2) Re(J^H J) with J the Jacobian
of the stacked noiseless echoes. Nuisances are marginalized: the PEB uses the
position block of the full inverse.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .estimator.model import SensingSetup, hypothesis, position_jacobian, true_path_gains


class Parameterization(str, Enum):
    COHERENT = "coherent"          # [p, alpha (real per path), phi_fix (one per target)]
    NONCOHERENT = "noncoherent"    # [p, Re gamma, Im gamma] with free complex gain per path
    PER_PATH_PHASE = "per_path_phase"   # [p, alpha, phi per path]; equivalent to NONCOHERENT


@dataclass
class FisherResult:
    fim: np.ndarray
    peb_per_target: np.ndarray
    parameterization: Parameterization
    singular: bool = False
    position_cov: np.ndarray | None = None   # (S, 2, 2) blocks of the inverse FIM

    @property
    def num_targets(self) -> int:
        return len(self.peb_per_target)


def _place(per_path, M_r):
    """Embed per-path signals (S, M_t, M_r, L, N) into full-echo columns (S, M_t, M_r, M_r, L, N)."""
    S, M_t, _, L, N = per_path.shape
    out = np.zeros((S, M_t, M_r, M_r, L, N), dtype=complex)
    r = np.arange(M_r)
    out[:, :, r, r] = per_path
    return out


def jacobian(setup: SensingSetup, positions, alpha, phi_fix, parameterization=Parameterization.COHERENT):
    """Jacobian of the flattened noiseless echoes, shaped (M_r L N, num_params).

    :param alpha: real amplitudes (S, M_t, M_r)
    :param phi_fix: reflection phases (S,)
    """
    par = Parameterization(parameterization)
    P = np.asarray(positions, dtype=float).reshape(-1, 2)
    S = len(P)
    hyp = hypothesis(setup, P)
    phase = np.exp(1j * (hyp.psi + np.asarray(phi_fix, dtype=float).reshape(S)[:, None, None]))
    gains = np.asarray(alpha, dtype=float) * phase
    coherent_position = par is not Parameterization.NONCOHERENT
    _, dmu, basis = position_jacobian(setup, P, gains, coherent=coherent_position)
    M_r = setup.num_rx
    D = dmu.shape[0] * dmu.shape[1] * dmu.shape[2]
    cols = [dmu.reshape(D, 2 * S)]
    if par is Parameterization.NONCOHERENT:
        placed = _place(basis, M_r)
        cols += [placed.reshape(-1, D).T, (1j * placed).reshape(-1, D).T]
    else:
        d_alpha = _place(phase[..., None, None] * basis, M_r)
        cols.append(d_alpha.reshape(-1, D).T)
        per_path = _place(1j * gains[..., None, None] * basis, M_r)      # d mu / d phi_str
        if par is Parameterization.COHERENT:
            cols.append(per_path.sum(axis=(1, 2)).reshape(S, D).T)
        else:
            cols.append(per_path.reshape(-1, D).T)
    return np.concatenate(cols, axis=1)


def position_covariance(F: np.ndarray, num_targets: int, rtol: float = 1e-13):
    """2x2 blocks of F^-1 for every target's position, shaped (S, 2, 2); None if F is singular.

    Columns are equilibrated before inversion because position and amplitude
    derivatives differ by many orders of magnitude.
    """
    F = 0.5 * (F + F.T)
    d = np.sqrt(np.clip(np.diag(F), 0.0, None))
    if np.any(d == 0.0):
        return None
    Fn = F / np.outer(d, d)
    w = np.linalg.eigvalsh(Fn)
    if w[0] <= rtol * w[-1]:
        return None
    inv = np.linalg.inv(Fn) / np.outer(d, d)
    idx = np.arange(2 * num_targets).reshape(num_targets, 2)
    return np.stack([inv[np.ix_(i, i)] for i in idx])


def peb_from_fim(F: np.ndarray, num_targets: int, rtol: float = 1e-13):
    """Per-target sqrt(trace) of the position blocks of F^-1; +inf everywhere if F is singular.

    :return: (peb (S,), singular flag)
    """
    cov = position_covariance(F, num_targets, rtol)
    if cov is None:
        return np.full(num_targets, np.inf), True
    tr = np.trace(cov, axis1=1, axis2=2)
    return np.sqrt(np.clip(tr, 0.0, None)), False


def fisher_from_setup(setup: SensingSetup, positions, alpha, phi_fix=None,
                      parameterization=Parameterization.COHERENT) -> FisherResult:
    par = Parameterization(parameterization)
    P = np.asarray(positions, dtype=float).reshape(-1, 2)
    if setup.num_rx == 0 or setup.num_tx == 0:
        return FisherResult(np.zeros((0, 0)), np.full(len(P), np.inf), par, True)
    if setup.noise_power <= 0:
        raise ValueError("Fisher information needs a positive noise power")
    phi = np.zeros(len(P)) if phi_fix is None else phi_fix
    J = jacobian(setup, P, alpha, phi, par)
    F = (2.0 / setup.noise_power) * np.real(J.conj().T @ J)
    cov = position_covariance(F, len(P))
    if cov is None:
        return FisherResult(F, np.full(len(P), np.inf), par, True)
    peb = np.sqrt(np.clip(np.trace(cov, axis1=1, axis2=2), 0.0, None))
    return FisherResult(F, peb, par, False, cov)


def fim(scenario, assignment, frame, target_positions=None,
        parameterization=Parameterization.COHERENT) -> FisherResult:
    """FIM at the scenario's targets (or at ``target_positions`` with unit-RCS radar amplitudes)."""
    setup = SensingSetup.from_scenario(scenario, assignment, frame)
    if target_positions is None:
        P = scenario.target_positions
        alpha = true_path_gains(scenario, assignment)
        phi = np.array([t.reflection_phase for t in scenario.targets])
    else:
        P = np.asarray(target_positions, dtype=float).reshape(-1, 2)
        alpha = point_gains(scenario, assignment, P)
        phi = np.zeros(len(P))
    return fisher_from_setup(setup, P, alpha, phi, parameterization)


def point_gains(scenario, assignment, positions, rcs: float = 1.0) -> np.ndarray:
    """Radar-equation amplitudes (S, M_t, M_r) for hypothetical targets of equal RCS."""
    from .channel import radar_gain

    P = np.asarray(positions, dtype=float).reshape(-1, 2)
    d_t = np.linalg.norm(P[:, None, :] - scenario.ap_positions[list(assignment.transmit)][None], axis=-1)
    d_r = np.linalg.norm(P[:, None, :] - scenario.ap_positions[list(assignment.receive)][None], axis=-1)
    return radar_gain(scenario.wavelength, rcs, d_t[:, :, None], d_r[:, None, :])


@dataclass
class CoverageMap:
    points: np.ndarray           # (n, 2)
    peb: np.ndarray              # (n,) meters
    threshold: float             # eta_cov, meters

    @property
    def coverage(self) -> float:
        return self.fraction_below(self.threshold)

    def fraction_below(self, threshold: float) -> float:
        if len(self.peb) == 0:
            return 0.0
        return float(np.mean(self.peb <= threshold))

    def save_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "y", "peb"])
            for (x, y), v in zip(self.points, self.peb):
                wr.writerow([repr(float(x)), repr(float(y)), repr(float(v))])


def coverage(scenario, assignment, frame, threshold: float, samples: int = 500,
             rng: np.random.Generator | None = None, parameterization=Parameterization.COHERENT,
             rcs: float = 1.0, min_clearance: float = 1.0) -> CoverageMap:
    """Sensing coverage Pr(PEB <= threshold) over uniform single-target positions in the region.

    Points closer than ``min_clearance`` to an AP are redrawn (the model is
    singular at an AP).
    """
    if samples < 1:
        raise ValueError("need at least one coverage sample")
    if threshold < 0:
        raise ValueError("coverage threshold must be non-negative")
    rng = np.random.default_rng(0) if rng is None else rng
    x0, y0, x1, y1 = scenario.region
    setup = SensingSetup.from_scenario(scenario, assignment, frame)
    points = np.empty((samples, 2))
    filled = 0
    while filled < samples:
        cand = rng.uniform((x0, y0), (x1, y1), size=(samples - filled, 2))
        d = np.linalg.norm(cand[:, None] - scenario.ap_positions[None], axis=-1).min(axis=1)
        cand = cand[d > min_clearance]
        points[filled:filled + len(cand)] = cand
        filled += len(cand)
    peb = np.empty(samples)
    for i, p in enumerate(points):
        alpha = point_gains(scenario, assignment, p[None], rcs)
        peb[i] = fisher_from_setup(setup, p[None], alpha, None, parameterization).peb_per_target[0]
    return CoverageMap(points, peb, float(threshold))
