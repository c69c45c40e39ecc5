"""Sensing (bistatic, rank-one) and communication (Rician, LoS + target-reflected) channels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import Boltzmann

from .geometry import (
    TWO_PI,
    APNode,
    DegenerateGeometryError,
    Position2D,
    aod_to_point,
    bistatic_delay,
    steering_vector,
    wrap_2pi,
)


@dataclass(frozen=True)
class Target:
    position: Position2D
    rcs: float = 1.0
    reflection_phase: float = 0.0

    def __post_init__(self):
        if self.rcs <= 0:
            raise ValueError("rcs must be > 0")


@dataclass(frozen=True)
class SensingPathParams:
    gain: float
    carrier_phase: float
    delay: float
    aod: float
    aoa: float


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance model ``beta[dB] = intercept - slope * log10(d / 1 m)``.

    Stand-in for an urban-microcell model; coefficients are configurable.
    """

    intercept_db: float = -30.5
    slope_db: float = 36.7
    min_distance: float = 1.0

    def gain_db(self, distance):
        d = np.maximum(np.asarray(distance, dtype=float), self.min_distance)
        return self.intercept_db - self.slope_db * np.log10(d)

    def gain(self, distance):
        return 10.0 ** (self.gain_db(distance) / 10.0)


def radar_gain(wavelength, rcs, d_t, d_r):
    """Bistatic radar-equation amplitude with unit element gains."""
    return np.sqrt(wavelength**2 * rcs / ((4.0 * np.pi) ** 3 * np.asarray(d_t) ** 2 * np.asarray(d_r) ** 2))


def noise_power(bandwidth: float, temperature: float = 290.0, noise_figure_db: float = 0.0) -> float:
    """Thermal noise power k_B T W, scaled by the linear noise figure, in watts."""
    if bandwidth <= 0 or temperature <= 0:
        raise ValueError("bandwidth and temperature must be positive")
    return Boltzmann * temperature * bandwidth * 10.0 ** (noise_figure_db / 10.0)


def sensing_channel(tx: APNode, rx: APNode, target: Target, carrier_hz: float):
    """Sensing path parameters and the N_r x N_t channel matrix through one target.

    The matrix is ``alpha exp(j phi) a(aoa) a(aod)^T``.
    """
    wavelength = tx.array.wavelength
    p = target.position.as_array()
    d_t = np.hypot(*(p - tx.position.as_array()))
    d_r = np.hypot(*(rx.position.as_array() - p))
    if d_t == 0.0 or d_r == 0.0:
        raise DegenerateGeometryError("target coincides with an AP")
    tau = bistatic_delay(tx, target.position, rx)
    params = SensingPathParams(
        gain=float(radar_gain(wavelength, target.rcs, d_t, d_r)),
        carrier_phase=wrap_2pi(-TWO_PI * carrier_hz * tau + target.reflection_phase),
        delay=tau,
        aod=aod_to_point(tx, target.position),
        aoa=aod_to_point(rx, target.position),
    )
    a_rx = steering_vector(rx.array, params.aoa)
    a_tx = steering_vector(tx.array, params.aod)
    H = params.gain * np.exp(1j * params.carrier_phase) * np.outer(a_rx, a_tx)
    return params, H


def correlation_matrix(num_elements: int, power: float, model: str = "identity", angle: float = 0.0,
                       phase_step: float = np.pi, angular_spread: float = np.deg2rad(10.0)) -> np.ndarray:
    """Spatial correlation of the stochastic NLoS component.

    ``identity`` gives ``power * I``; ``local_scattering`` uses the
    small-angle Gaussian approximation of a local scattering cluster around
    ``angle``.
    """
    if model == "identity":
        return power * np.eye(num_elements, dtype=complex)
    if model == "local_scattering":
        dist = np.arange(num_elements)[:, None] - np.arange(num_elements)[None, :]
        R = np.exp(1j * phase_step * dist * np.sin(angle)) * np.exp(
            -0.5 * (angular_spread * phase_step * dist * np.cos(angle)) ** 2)
        return power * R
    raise ValueError(f"unknown correlation model {model!r}")


def _psd_sqrt(R: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(R)
    return V * np.sqrt(np.clip(w, 0.0, None))


@dataclass
class CommChannelRealization:
    deterministic: np.ndarray
    stochastic: np.ndarray
    correlation: np.ndarray
    los_gain: float
    los_delay: float
    ue_phase_offset: float
    reflected_gains: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reflected_phases: np.ndarray = field(default_factory=lambda: np.zeros(0))
    large_scale: float = 0.0

    @property
    def total(self) -> np.ndarray:
        return self.deterministic + self.stochastic


def comm_channel(tx: APNode, ue_index: int, scenario, rng: np.random.Generator) -> CommChannelRealization:
    """Downlink channel from ``tx`` to UE ``ue_index`` (deterministic + stochastic parts).

    Total large-scale power gain beta(d) per antenna is split by the Rician
    factor: ``los_gain**2 = beta * K/(1+K)`` and ``tr(R) = N * beta/(1+K)``.
    Target-reflected components reuse the radar equation with the UE as a
    single-antenna endpoint; their phase includes the UE oscillator offset.
    """
    wavelength = tx.array.wavelength
    N = tx.array.num_elements
    p_ap = tx.position.as_array()
    p_ue = np.asarray(scenario.ue_positions[ue_index], dtype=float)
    d = np.hypot(*(p_ue - p_ap))
    if d == 0.0:
        raise DegenerateGeometryError("UE coincides with the AP")
    beta = float(scenario.path_loss.gain(d))
    kappa = 10.0 ** (scenario.rician_k_db / 10.0)
    los_gain = np.sqrt(beta * kappa / (1.0 + kappa))
    tau = d / (wavelength * scenario.carrier_hz)
    ue_phase = float(scenario.ue_phases[ue_index])
    aod_ue = aod_to_point(tx, Position2D.from_array(p_ue))
    g_bar = los_gain * np.exp(-1j * TWO_PI * d / wavelength) * np.exp(1j * ue_phase) * steering_vector(tx.array, aod_ue)

    gains, phases = [], []
    for target in scenario.targets:
        p_s = target.position.as_array()
        d_ts = np.hypot(*(p_s - p_ap))
        d_sk = np.hypot(*(p_ue - p_s))
        if d_ts == 0.0 or d_sk == 0.0:
            raise DegenerateGeometryError("target coincides with an AP or UE")
        gain = float(radar_gain(wavelength, target.rcs, d_ts, d_sk))
        phase = wrap_2pi(-TWO_PI * (d_ts + d_sk) / wavelength + target.reflection_phase + ue_phase)
        g_bar = g_bar + gain * np.exp(1j * phase) * steering_vector(tx.array, aod_to_point(tx, target.position))
        gains.append(gain)
        phases.append(phase)

    R = correlation_matrix(N, beta / (1.0 + kappa), scenario.correlation_model, aod_ue, tx.array.phase_step)
    w = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) / np.sqrt(2.0)
    g_tilde = _psd_sqrt(R) @ w
    return CommChannelRealization(
        deterministic=g_bar,
        stochastic=g_tilde,
        correlation=R,
        los_gain=float(los_gain),
        los_delay=float(tau),
        ue_phase_offset=ue_phase,
        reflected_gains=np.array(gains),
        reflected_phases=np.array(phases),
        large_scale=beta,
    )


def comm_channels(scenario, tx_indices, rng: np.random.Generator):
    """All transmit-AP/UE channels.

    :return: (G, beta) with G shaped (M_t, K, N) and beta shaped (M_t, K)
    """
    tx_indices = list(tx_indices)
    K = scenario.num_ues
    G = np.zeros((len(tx_indices), K, scenario.num_antennas), dtype=complex)
    beta = np.zeros((len(tx_indices), K))
    for i, t in enumerate(tx_indices):
        node = scenario.ap_node(t)
        for k in range(K):
            real = comm_channel(node, k, scenario, rng)
            G[i, k] = real.total
            beta[i, k] = real.large_scale
    return G, beta
