"""Multistatic echo model: setup arrays, echo synthesis, noiseless mean and its position derivatives."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..channel import sensing_channel
from ..geometry import TWO_PI, APMode, relative_geometry, ula_response


@dataclass(frozen=True)
class SensingSetup:
    """Everything the estimator knows: AP geometry, the transmitted frame and radio constants."""

    tx_positions: np.ndarray     # (M_t, 2)
    tx_boresights: np.ndarray    # (M_t,)
    rx_positions: np.ndarray     # (M_r, 2)
    rx_boresights: np.ndarray    # (M_r,)
    signals: np.ndarray          # (M_t, L, N)
    wavelength: float
    phase_step: float            # 2 pi d / lambda
    noise_power: float

    @property
    def num_tx(self) -> int:
        return len(self.tx_positions)

    @property
    def num_rx(self) -> int:
        return len(self.rx_positions)

    @property
    def num_instants(self) -> int:
        return self.signals.shape[1]

    @property
    def num_antennas(self) -> int:
        return self.signals.shape[2]

    @classmethod
    def from_scenario(cls, scenario, assignment, frame) -> "SensingSetup":
        T, R = list(assignment.transmit), list(assignment.receive)
        return cls(
            tx_positions=scenario.ap_positions[T],
            tx_boresights=scenario.ap_boresights[T],
            rx_positions=scenario.ap_positions[R],
            rx_boresights=scenario.ap_boresights[R],
            signals=frame.reference_signals,
            wavelength=scenario.wavelength,
            phase_step=scenario.array.phase_step,
            noise_power=scenario.noise_power,
        )

    def with_signals(self, signals) -> "SensingSetup":
        return SensingSetup(self.tx_positions, self.tx_boresights, self.rx_positions, self.rx_boresights,
                            np.asarray(signals), self.wavelength, self.phase_step, self.noise_power)


@dataclass
class EchoSet:
    y: np.ndarray          # (M_r, L, N)
    noise_power: float
    carrier_hz: float

    MAGIC = b"DMEC"
    VERSION = 1

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.y) ** 2))

    def save(self, path) -> None:
        """Little-endian: magic, u32 version, u32 M_r, u32 L, u32 N, f64 sigma^2, f64 f,
        then interleaved (re, im) f64 samples in (r, l, n) row-major order."""
        M_r, L, N = self.y.shape
        header = self.MAGIC + struct.pack("<IIIIdd", self.VERSION, M_r, L, N, self.noise_power, self.carrier_hz)
        body = np.ascontiguousarray(self.y, dtype="<c16").view("<f8").tobytes()
        Path(path).write_bytes(header + body)

    @classmethod
    def load(cls, path) -> "EchoSet":
        raw = Path(path).read_bytes()
        if raw[:4] != cls.MAGIC:
            raise ValueError("not an echo-set file")
        version, M_r, L, N, sigma2, f = struct.unpack("<IIIIdd", raw[4:36])
        if version != cls.VERSION:
            raise ValueError(f"unsupported echo-set version {version}")
        data = np.frombuffer(raw[36:], dtype="<f8")
        if data.size != 2 * M_r * L * N:
            raise ValueError("echo-set payload size does not match its header")
        y = data.view("<c16").reshape(M_r, L, N).astype(complex)
        return cls(y=y, noise_power=sigma2, carrier_hz=f)


def true_path_gains(scenario, assignment) -> np.ndarray:
    """Radar-equation amplitudes alpha, shaped (S, M_t, M_r)."""
    from ..channel import radar_gain

    P = scenario.target_positions
    d_t, *_ = relative_geometry(P, scenario.ap_positions[list(assignment.transmit)], np.zeros(len(assignment.transmit)))
    d_r, *_ = relative_geometry(P, scenario.ap_positions[list(assignment.receive)], np.zeros(len(assignment.receive)))
    rcs = np.array([t.rcs for t in scenario.targets])
    return radar_gain(scenario.wavelength, rcs[:, None, None], d_t[:, :, None], d_r[:, None, :])


def synthesize_echoes(scenario, assignment, frame, rng: np.random.Generator | None, noise: bool = True) -> EchoSet:
    """Received echoes y_r[l] = sum_s sum_t H_{t,r}^s x_t[l] + z_r[l].

    Built from the explicit channel matrices of the channel module, independent
    of the estimator's vectorized model.
    """
    X = frame.reference_signals
    T, R = list(assignment.transmit), list(assignment.receive)
    _, L, N = X.shape
    y = np.zeros((len(R), L, N), dtype=complex)
    for target in scenario.targets:
        for i, t in enumerate(T):
            tx = scenario.ap_node(t, APMode.TRANSMIT)
            for j, r in enumerate(R):
                _, H = sensing_channel(tx, scenario.ap_node(r, APMode.RECEIVE), target, scenario.carrier_hz)
                y[j] += X[i] @ H.T
    sigma2 = scenario.noise_power
    if noise:
        if rng is None:
            raise ValueError("a random generator is required for noisy echoes")
        y = y + np.sqrt(sigma2 / 2.0) * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    return EchoSet(y=y, noise_power=sigma2 if noise else 0.0, carrier_hz=scenario.carrier_hz)


@dataclass
class Hypothesis:
    """Geometry-dependent quantities for a batch of position hypotheses.

    Leading axes of ``positions`` (..., 2) are carried through; AP axes follow.
    """

    dt: np.ndarray    # (..., M_t) distance to transmit APs
    dr: np.ndarray    # (..., M_r)
    th: np.ndarray    # (..., M_t) departure angle
    vr: np.ndarray    # (..., M_r) arrival angle
    ut: np.ndarray    # (..., M_t, 2) unit vector AP -> point
    ur: np.ndarray    # (..., M_r, 2)
    at: np.ndarray    # (..., M_t, N)
    ar: np.ndarray    # (..., M_r, N)
    s: np.ndarray     # (..., M_t, L)  a(theta)^T x_t[l]
    psi: np.ndarray   # (..., M_t, M_r) propagation phase -2 pi (d_t + d_r) / lambda


def hypothesis(setup: SensingSetup, positions) -> Hypothesis:
    positions = np.asarray(positions, dtype=float)
    N = setup.num_antennas
    dt, th, dxt, dyt = relative_geometry(positions, setup.tx_positions, setup.tx_boresights)
    dr, vr, dxr, dyr = relative_geometry(positions, setup.rx_positions, setup.rx_boresights)
    at = ula_response(N, setup.phase_step, th)
    ar = ula_response(N, setup.phase_step, vr)
    lead = at.shape[:-2]
    M_t, L = setup.signals.shape[:2]
    # a(theta)^T x_t[l] as one batched matmul per transmit AP
    s = np.matmul(at.reshape(-1, M_t, N).transpose(1, 0, 2), setup.signals.transpose(0, 2, 1))
    s = s.transpose(1, 0, 2).reshape(lead + (M_t, L))
    psi = -TWO_PI * (dt[..., :, None] + dr[..., None, :]) / setup.wavelength
    ut = np.stack([dxt, dyt], axis=-1) / dt[..., None]
    ur = np.stack([dxr, dyr], axis=-1) / dr[..., None]
    return Hypothesis(dt, dr, th, vr, ut, ur, at, ar, s, psi)


def coherent_gains(alpha, phi_fix, hyp: Hypothesis) -> np.ndarray:
    """Complex path gains alpha exp(j(psi + phi_fix)), shaped (S, M_t, M_r)."""
    return np.asarray(alpha) * np.exp(1j * (hyp.psi + np.asarray(phi_fix)[:, None, None]))


def mean_echo(setup: SensingSetup, positions, gains) -> np.ndarray:
    """Noiseless echoes sum_s sum_t g_str a(vartheta_rs) s_st[l], shaped (M_r, L, N).

    :param positions: (S, 2)
    :param gains: complex (S, M_t, M_r), including every phase term
    """
    hyp = hypothesis(setup, np.asarray(positions).reshape(-1, 2))
    return np.einsum("str,srn,stl->rln", gains, hyp.ar, hyp.s)


def position_jacobian(setup: SensingSetup, positions, gains, coherent: bool = True):
    """Noiseless mean and its derivative with respect to target coordinates.

    With ``coherent=True`` the gains are alpha*exp(j(psi(p) + phi_fix)) and the
    propagation phase moves with the target; otherwise the complex gains are
    free constants and only the angles depend on position.

    :return: (mu (M_r, L, N), dmu (M_r, L, N, S, 2), basis (S, M_t, M_r, L, N))
        where ``basis`` holds a(vartheta) s_st[l] per path (no gain applied)
    """
    P = np.asarray(positions, dtype=float).reshape(-1, 2)
    hyp = hypothesis(setup, P)
    N = setup.num_antennas
    n = np.arange(N)
    kappa = setup.phase_step
    X = setup.signals

    # angle gradients d(theta)/dp = (-dy, dx)/d^2
    dth = np.stack([-hyp.ut[..., 1], hyp.ut[..., 0]], axis=-1) / hyp.dt[..., None]   # (S, M_t, 2)
    dvr = np.stack([-hyp.ur[..., 1], hyp.ur[..., 0]], axis=-1) / hyp.dr[..., None]   # (S, M_r, 2)
    # d a_n / dp = j n kappa cos(angle) d(angle)/dp a_n
    s_prime = np.einsum("stn,n,tln->stl", hyp.at, n, X)                              # sum_n n a_n x_n
    ds = 1j * kappa * np.cos(hyp.th)[..., None, None] * dth[..., None, :] * s_prime[..., None]   # (S, M_t, L, 2)
    dar = 1j * kappa * np.cos(hyp.vr)[..., None, None] * dvr[..., None, :] * (n[:, None] * hyp.ar[..., None])
    # dar: (S, M_r, N, 2)

    basis = hyp.ar[:, None, :, None, :] * hyp.s[:, :, None, :, None]                  # (S, M_t, M_r, L, N)
    mu = np.einsum("str,strln->rln", gains, basis)

    term_ar = np.einsum("str,srnc,stl->rlnsc", gains, dar, hyp.s)
    term_s = np.einsum("str,srn,stlc->rlnsc", gains, hyp.ar, ds)
    dmu = term_ar + term_s
    if coherent:
        dpsi = -TWO_PI / setup.wavelength * (hyp.ut[:, :, None, :] + hyp.ur[:, None, :, :])   # (S, M_t, M_r, 2)
        dmu = dmu + 1j * np.einsum("str,strc,strln->rlnsc", gains, dpsi, basis)
    return mu, dmu, basis
