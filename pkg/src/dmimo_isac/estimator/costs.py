"""Concentrated maximum-likelihood costs for the non-coherent and coherent estimators.

Non-coherent: every (t, r) path of a hypothesised target carries a free complex
gain; the cost is the least-squares residual after solving for all gains of a
receive AP jointly.

Coherent: gains are alpha * exp(j(psi + phi_fix)) with real alpha per path,
psi = -2 pi (d_t + d_r) / lambda fixed by geometry and one reflection phase per
target shared by every AP pair. For one target the minimum over alpha and
phi_fix has the closed form

    E - 1/2 sum_r v_r^H G^-1 v_r - 1/2 | sum_r v_r^T G^-1 v_r |

with G = Re(U^H U) the real Gram matrix of the phase-compensated path
regressors and v_r = U_r^H y_r. With more than one target the reflection
phases are found numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .model import SensingSetup, hypothesis


def _solve(A, b):
    """Solve A x = b over leading axes, falling back to pseudo-inverses for singular slices."""
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(A) @ b


@dataclass
class _Terms:
    """Sufficient statistics of a joint S-target hypothesis."""

    C: np.ndarray     # (M_r, S*M_t, S*M_t) complex Gram of the path regressors a(vr) s_st
    w: np.ndarray     # (M_r, S*M_t) correlations with the data
    psi: np.ndarray   # (S, M_t, M_r)
    energy: float
    S: int
    M_t: int


def _terms(y, setup: SensingSetup, positions) -> _Terms:
    P = np.asarray(positions, dtype=float).reshape(-1, 2)
    S, M_t = len(P), setup.num_tx
    hyp = hypothesis(setup, P)
    Gs = np.einsum("atl,bul->atbu", hyp.s.conj(), hyp.s)                  # (S, M_t, S, M_t)
    Ar = np.einsum("arn,brn->rab", hyp.ar.conj(), hyp.ar)                 # (M_r, S, S)
    C = (Ar[:, :, None, :, None] * Gs[None]).reshape(-1, S * M_t, S * M_t)
    z = np.einsum("srn,rln->srl", hyp.ar.conj(), y)
    w = np.einsum("stl,srl->rst", hyp.s.conj(), z).reshape(-1, S * M_t)
    return _Terms(C, w, hyp.psi, float(np.sum(np.abs(y) ** 2)), S, M_t)


class _PointStats:
    """Single-target sufficient statistics at many hypotheses.

    With B_tr = sum_l x_t[l]^* y_r[l]^T and R_tu = sum_l x_t[l]^* x_u[l]^T
    precomputed, the correlations and Gram entries become quadratic forms in
    the steering vectors and no longer depend on the frame length:
    w_tr = a_t^H B_tr a_r^*, Gs_tu = a_t^H R_tu a_u.
    """

    def __init__(self, y, setup: SensingSetup):
        X = setup.signals
        M_t, _, N = X.shape
        M_r = y.shape[0]
        self.setup = setup
        self.N, self.M_t, self.M_r = N, M_t, M_r
        B = np.einsum("tln,rlm->tnrm", X.conj(), y)
        R = np.einsum("tln,ulm->tnum", X.conj(), X)
        self.B = B.reshape(M_t, N, M_r * N)
        self.R = R.reshape(M_t, N, M_t * N)

    def _steering(self, points, pos, bore):
        d = points[:, None, :] - pos[None]
        dist = np.hypot(d[..., 0], d[..., 1])
        sin_ang = (d[..., 1] * np.cos(bore) - d[..., 0] * np.sin(bore)) / dist
        base = np.exp(1j * self.setup.phase_step * sin_ang)
        a = np.ones(dist.shape + (self.N,), dtype=complex)
        if self.N > 1:
            a[..., 1:] = np.cumprod(np.broadcast_to(base[..., None], dist.shape + (self.N - 1,)), axis=-1)
        return dist, a

    def __call__(self, points):
        """Returns (Gs (H, M_t, M_t), w (H, M_t, M_r), psi (H, M_t, M_r))."""
        st = self.setup
        H = len(points)
        dt, at = self._steering(points, st.tx_positions, st.tx_boresights)
        dr, ar = self._steering(points, st.rx_positions, st.rx_boresights)
        atc = at.conj().transpose(1, 0, 2)                                    # (M_t, H, N)
        U = np.matmul(atc, self.B).reshape(self.M_t, H, self.M_r, self.N)
        w = np.einsum("thrm,hrm->htr", U, ar.conj())
        V = np.matmul(atc, self.R).reshape(self.M_t, H, self.M_t, self.N)
        Gs = np.einsum("thum,hum->htu", V, at)
        psi = -2 * np.pi * (dt[:, :, None] + dr[:, None, :]) / st.wavelength
        return Gs, w, psi


# ----------------------------------------------------------------------------- non-coherent

def ncp_fit(y, setup: SensingSetup, positions):
    """Joint non-coherent fit for S hypotheses.

    :return: (cost, gamma) with gamma the complex path gains, shaped (S, M_t, M_r)
    """
    tm = _terms(y, setup, positions)
    g = _solve(tm.C, tm.w[..., None])[..., 0]                      # (M_r, S*M_t)
    captured = np.real(np.sum(tm.w.conj() * g))
    gamma = g.reshape(-1, tm.S, tm.M_t).transpose(1, 2, 0)
    return tm.energy - captured, gamma


def ncp_cost(y, setup: SensingSetup, positions) -> float:
    """Non-coherent cost with the per-receiver least-squares gains substituted."""
    return float(ncp_fit(y, setup, positions)[0])


def ncp_cost_points(y, setup: SensingSetup, points, chunk: int = 2048) -> np.ndarray:
    """Single-target non-coherent cost at every row of ``points`` (H, 2)."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    energy = float(np.sum(np.abs(y) ** 2))
    N = setup.num_antennas
    out = np.empty(len(points))
    stats = _PointStats(y, setup)
    for lo in range(0, len(points), chunk):
        C, w, _ = stats(points[lo:lo + chunk])
        C = N * C
        g = _solve(C, w)
        out[lo:lo + chunk] = energy - np.real(np.sum(w.conj() * g, axis=(1, 2)))
    return out


# ----------------------------------------------------------------------------- coherent

def _phase_vector(tm: _Terms, phi_fix):
    """exp(j(psi + phi_fix)) arranged as (M_r, S*M_t)."""
    ph = tm.psi + np.asarray(phi_fix, dtype=float)[:, None, None]
    return np.exp(1j * ph).transpose(2, 0, 1).reshape(-1, tm.S * tm.M_t)


def _profile(tm: _Terms, phi_fix):
    """Cost at fixed reflection phases with alpha profiled out; returns (cost, alpha (M_r, S*M_t))."""
    e = _phase_vector(tm, phi_fix)
    G = np.real(e.conj()[:, :, None] * tm.C * e[:, None, :])
    v = np.real(e.conj() * tm.w)
    alpha = _solve(G, v[..., None])[..., 0]
    return tm.energy - float(np.sum(v * alpha)), alpha


def _single_target_closed_form(tm: _Terms):
    """Closed-form (cost, phi_fix) for S = 1."""
    e = np.exp(1j * tm.psi[0]).T                                           # (M_r, M_t)
    # e_tr^* e_ur does not depend on r for a single target
    G = np.real(e[0].conj()[:, None] * tm.C[0] * e[0][None, :])
    v = e.conj() * tm.w                                                    # (M_r, M_t)
    Gi_v = _solve(G, v.T)                                                  # (M_t, M_r)
    P = float(np.real(np.sum(v.conj().T * Gi_v)))
    Q = complex(np.sum(v.T * Gi_v))
    return tm.energy - 0.5 * P - 0.5 * abs(Q), 0.5 * np.angle(Q)


def _resolve_sign(alpha, phi_fix):
    """Pick the phase branch (phi vs phi + pi) that makes each target's summed alpha non-negative."""
    alpha = alpha.copy()
    phi_fix = np.array(phi_fix, dtype=float)
    for s in range(len(phi_fix)):
        if alpha[s].sum() < 0:
            alpha[s] = -alpha[s]
            phi_fix[s] += np.pi
    return alpha, np.mod(phi_fix, 2 * np.pi)


def _decoupled_phases(tm: _Terms) -> np.ndarray:
    """Per-target closed-form phases ignoring cross-target coupling."""
    out = np.zeros(tm.S)
    M_t = tm.M_t
    for s in range(tm.S):
        sl = slice(s * M_t, (s + 1) * M_t)
        sub = _Terms(tm.C[:, sl, sl], tm.w[:, sl], tm.psi[s:s + 1], tm.energy, 1, M_t)
        out[s] = _single_target_closed_form(sub)[1]
    return out


def _minimize_phases(tm: _Terms, starts) -> np.ndarray:
    fun = lambda ph: _profile(tm, ph)[0] / max(tm.energy, 1e-300)
    best = None
    for x0 in starts:
        res = minimize(fun, np.asarray(x0, dtype=float), method="BFGS", options={"gtol": 1e-12, "maxiter": 500})
        if best is None or res.fun < best.fun:
            best = res
    return best.x


def coherent_fit(y, setup: SensingSetup, positions, phi_start=None):
    """Coherent cost minimized over alpha and phi_fix at fixed positions.

    :param phi_start: optional warm start for the reflection phases (S > 1 only)
    :return: (cost, alpha (S, M_t, M_r), phi_fix (S,) in [0, 2 pi))
    """
    tm = _terms(y, setup, positions)
    if tm.S == 1:
        _, phi = _single_target_closed_form(tm)
        phi = np.array([phi])
    else:
        decoupled = _decoupled_phases(tm)
        starts = [decoupled]
        if phi_start is not None:
            starts.append(np.asarray(phi_start, dtype=float))
        if tm.S <= 3:
            # coarse lattice guards against a poor decoupled start (cost is pi-periodic per phase)
            grid = np.stack(np.meshgrid(*[np.arange(8) * np.pi / 8] * tm.S, indexing="ij"), -1).reshape(-1, tm.S)
            vals = np.array([_profile(tm, g)[0] for g in grid])
            starts.append(grid[np.argmin(vals)])
        phi = _minimize_phases(tm, starts)
    cost, alpha = _profile(tm, phi)
    alpha = alpha.reshape(-1, tm.S, tm.M_t).transpose(1, 2, 0)
    alpha, phi = _resolve_sign(alpha, phi)
    return float(cost), alpha, phi


def coherent_cost(y, setup: SensingSetup, positions) -> float:
    """Position-only coherent cost (amplitudes and reflection phases concentrated out)."""
    return coherent_fit(y, setup, positions)[0]


def coherent_cost_points(y, setup: SensingSetup, points, chunk: int = 2048) -> np.ndarray:
    """Single-target closed-form coherent cost at every row of ``points`` (H, 2)."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    energy = float(np.sum(np.abs(y) ** 2))
    N = setup.num_antennas
    out = np.empty(len(points))
    stats = _PointStats(y, setup)
    for lo in range(0, len(points), chunk):
        Gs, w, psi = stats(points[lo:lo + chunk])
        e = np.exp(1j * psi)                                               # (H, M_t, M_r)
        e0 = e[..., 0]
        G = np.real(N * e0.conj()[:, :, None] * Gs * e0[:, None, :])
        v = e.conj() * w
        Gi_v = _solve(G, v)
        P = np.real(np.sum(v.conj() * Gi_v, axis=(1, 2)))
        Q = np.sum(v * Gi_v, axis=(1, 2))
        out[lo:lo + chunk] = energy - 0.5 * P - 0.5 * np.abs(Q)
    return out


def coherent_objective(y, setup: SensingSetup, positions, phi_fix):
    """Coherent cost at given positions and reflection phases, alpha profiled out, with its gradient.

    The gradient follows from the envelope theorem: derivatives of the raw
    residual at the profiled alpha.

    :return: (cost, grad_positions (S, 2), grad_phi (S,), alpha (S, M_t, M_r))
    """
    from .model import position_jacobian

    P = np.asarray(positions, dtype=float).reshape(-1, 2)
    tm = _terms(y, setup, P)
    cost, alpha = _profile(tm, phi_fix)
    alpha = alpha.reshape(-1, tm.S, tm.M_t).transpose(1, 2, 0)
    gains = alpha * np.exp(1j * (tm.psi + np.asarray(phi_fix)[:, None, None]))
    mu, dmu, basis = position_jacobian(setup, P, gains, coherent=True)
    resid = y - mu
    grad_p = -2.0 * np.real(np.einsum("rln,rlnsc->sc", resid.conj(), dmu))
    mu_s = np.einsum("str,strln->srln", gains, basis)
    grad_phi = -2.0 * np.real(np.einsum("rln,srln->s", resid.conj(), 1j * mu_s))
    return cost, grad_p, grad_phi, alpha


def ncp_objective(y, setup: SensingSetup, positions):
    """Non-coherent cost with its position gradient (envelope theorem at the LS gains)."""
    from .model import position_jacobian

    P = np.asarray(positions, dtype=float).reshape(-1, 2)
    cost, gamma = ncp_fit(y, setup, P)
    mu, dmu, _ = position_jacobian(setup, P, gamma, coherent=False)
    grad = -2.0 * np.real(np.einsum("rln,rlnsc->sc", (y - mu).conj(), dmu))
    return cost, grad, gamma


def coherent_cost_printed(y, setup: SensingSetup, positions, return_phase: bool = False):
    """The compressed coherent cost with per-path amplitude estimates substituted independently.

    Each alpha is estimated as if its path were alone; the residual is split
    into a phase-independent part y_check and phase-doubled terms c, and one
    common reflection phase is aligned:

        sum ||y_check||^2 + sum ||sum_st e^{j2 psi} c||^2 - 2 |sum e^{j2 psi} y_check^H c|

    It coincides with :func:`coherent_cost` when the path regressors seen by
    each receive AP are mutually orthogonal (e.g. one transmit AP, one target).
    """
    P = np.asarray(positions, dtype=float).reshape(-1, 2)
    hyp = hypothesis(setup, P)
    b = hyp.ar[:, None, :, None, :] * hyp.s[:, :, None, :, None]            # (S, M_t, M_r, L, N)
    energy = np.sum(np.abs(b) ** 2, axis=(3, 4))                            # (S, M_t, M_r)
    c = np.einsum("strln,rln->str", b.conj(), y)                            # b^H y
    y_check = y - np.einsum("str,strln->rln", c / (2 * energy), b)
    cterm = (c.conj() / (2 * energy))[..., None, None] * b
    rot = np.exp(2j * hyp.psi)[..., None, None]
    summed = np.sum(rot * cterm, axis=(0, 1))                               # (M_r, L, N)
    cross = np.einsum("rln,strln->", y_check.conj(), rot * cterm)
    cost = float(np.sum(np.abs(y_check) ** 2) + np.sum(np.abs(summed) ** 2) - 2 * np.abs(cross))
    if return_phase:
        return cost, -0.5 * np.angle(cross)
    return cost
