"""Downlink transmit frames: MRT communication beams plus a time-multiplexed sensing waveform."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .geometry import ula_response


@dataclass(frozen=True)
class TransmitFrame:
    comm_symbols: np.ndarray     # (K, L)
    sensing_symbols: np.ndarray  # (L, N)
    schedule: np.ndarray         # (M_t, L) of 0/1
    beamformers: np.ndarray      # (M_t, K, N), unit norm along N
    power_coeffs: np.ndarray     # (M_t, K) watts
    rho: np.ndarray              # (M_t,)
    max_power: np.ndarray        # (M_t,) watts
    reference: str = "full"      # which part of x_t[l] the sensing receivers exploit: full | sensing_only

    @property
    def length(self) -> int:
        return self.comm_symbols.shape[1]

    @property
    def num_tx(self) -> int:
        return self.schedule.shape[0]

    @property
    def signals(self) -> np.ndarray:
        """Transmitted vectors x_t[l], shaped (M_t, L, N)."""
        comm = np.einsum("tkn,kl->tln", np.sqrt(self.rho[:, None] * self.power_coeffs)[..., None] * self.beamformers,
                         self.comm_symbols)
        return comm + self.sensing_signals

    @property
    def sensing_signals(self) -> np.ndarray:
        """Dedicated sensing component delta_t[l] sqrt((1 - rho_t) P_t) q_0[l], shaped (M_t, L, N)."""
        sens_amp = np.sqrt((1.0 - self.rho) * self.max_power)
        return (self.schedule * sens_amp[:, None])[..., None] * self.sensing_symbols[None]

    @property
    def reference_signals(self) -> np.ndarray:
        """Signals that illuminate the targets as seen by the sensing receivers.

        ``full`` uses the whole x_t[l] (communication beams are known at the
        receivers and double as illumination); ``sensing_only`` assumes the
        communication echoes are not exploited and removed, leaving the dedicated
        sensing waveform.
        """
        return self.signals if self.reference == "full" else self.sensing_signals

    def expected_power(self) -> np.ndarray:
        """E||x_t[l]||^2 per AP and instant, shaped (M_t, L)."""
        comm = self.rho * self.power_coeffs.sum(axis=1)
        return comm[:, None] + (1.0 - self.rho)[:, None] * self.schedule * self.max_power[:, None]

    def scaled(self, power_factor: float) -> "TransmitFrame":
        """Same symbols and beams with every power multiplied by ``power_factor``."""
        return TransmitFrame(self.comm_symbols, self.sensing_symbols, self.schedule, self.beamformers,
                             self.power_coeffs * power_factor, self.rho, self.max_power * power_factor,
                             self.reference)


def mrt_beamformer(g) -> np.ndarray:
    """Normalized maximal-ratio beamformer w = g/||g||, so that g^H w = ||g||."""
    g = np.asarray(g, dtype=complex)
    norm = np.linalg.norm(g)
    if norm == 0.0:
        raise ValueError("cannot beamform towards an all-zero channel")
    return g / norm


def round_robin_schedule(num_tx: int, length: int) -> np.ndarray:
    """delta_t[l] = 1 iff l mod M_t == t."""
    return (np.arange(length)[None, :] % num_tx == np.arange(num_tx)[:, None]).astype(int)


def proportional_power(beta: np.ndarray, max_power: np.ndarray) -> np.ndarray:
    """p_tk = P_t beta_tk / sum_i beta_ti (sum over UEs equals P_t; rho_t is applied in the frame)."""
    beta = np.asarray(beta, dtype=float)
    return np.asarray(max_power, dtype=float)[:, None] * beta / beta.sum(axis=1, keepdims=True)


def build_frame(scenario, tx_indices, G: np.ndarray, beta: np.ndarray, length: int, rng: np.random.Generator,
                sensing_waveform: str = "isotropic", steer_angle: float = 0.0,
                power_coeffs: np.ndarray | None = None, reference: str = "full") -> TransmitFrame:
    """Assemble an L-instant frame for the transmit APs ``tx_indices``.

    :param G: channels (M_t, K, N) to every UE
    :param beta: large-scale gains (M_t, K) used for power allocation
    :param sensing_waveform: ``isotropic`` (i.i.d. CN(0, I/N)) or ``steered`` towards ``steer_angle``
    :param power_coeffs: optional override of p_tk; must satisfy sum_k p_tk <= P_t
    :param reference: ``full`` or ``sensing_only``, see :attr:`TransmitFrame.reference_signals`
    """
    if reference not in ("full", "sensing_only"):
        raise ConfigurationError(f"unknown sensing reference {reference!r}")
    tx_indices = list(tx_indices)
    M_t, K, N = G.shape
    if M_t != len(tx_indices):
        raise ConfigurationError("channel array does not match the transmit set")
    if length < 1:
        raise ConfigurationError("frame length must be >= 1")
    max_power = scenario.max_power[tx_indices]
    rho = scenario.rho[tx_indices]
    if power_coeffs is None:
        power_coeffs = proportional_power(beta, max_power)
    power_coeffs = np.asarray(power_coeffs, dtype=float)
    if np.any(power_coeffs < 0) or np.any(power_coeffs.sum(axis=1) > max_power * (1 + 1e-12)):
        raise ConfigurationError("per-UE power coefficients exceed the per-AP budget")

    W = np.array([[mrt_beamformer(G[t, k]) for k in range(K)] for t in range(M_t)]).reshape(M_t, K, N)
    comm = np.exp(1j * rng.uniform(-np.pi, np.pi, size=(K, length)))
    if sensing_waveform == "isotropic":
        q0 = (rng.standard_normal((length, N)) + 1j * rng.standard_normal((length, N))) / np.sqrt(2.0 * N)
    elif sensing_waveform == "steered":
        sym = np.exp(1j * rng.uniform(-np.pi, np.pi, size=length))
        beam = np.conj(ula_response(N, scenario.array.phase_step, np.asarray(steer_angle))) / np.sqrt(N)
        q0 = sym[:, None] * beam[None, :]
    else:
        raise ConfigurationError(f"unknown sensing waveform {sensing_waveform!r}")
    return TransmitFrame(comm, q0, round_robin_schedule(M_t, length), W, power_coeffs, rho, max_power,
                         reference)
