"""Downlink SINR and spectral efficiency with MRT beams and sensing-waveform interference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .waveform import TransmitFrame


@dataclass(frozen=True)
class SEReport:
    per_ue_sinr: np.ndarray   # (K, L) linear
    per_ue_se: np.ndarray     # (K,) bit/s/Hz, averaged over instants
    sum_se: float

    def to_dict(self) -> dict:
        return {
            "per_ue_se": [float(v) for v in self.per_ue_se],
            "sum_se": float(self.sum_se),
            "mean_sinr_db": [float(v) for v in 10 * np.log10(np.maximum(self.per_ue_sinr.mean(axis=1), 1e-300))],
        }


def _signal_terms(G: np.ndarray, frame: TransmitFrame):
    """Per-UE desired power, multi-user interference and per-instant sensing interference."""
    N = G.shape[2]
    amp = np.sqrt(frame.rho[:, None] * frame.power_coeffs)                  # (t, i)
    A = np.einsum("tkn,tin->tki", G.conj(), frame.beamformers)              # g_tk^H w_ti
    S = np.einsum("ti,tki->ki", amp, A)
    desired = np.abs(np.diag(S)) ** 2
    interference = (np.abs(S) ** 2).sum(axis=1) - desired
    sens_amp = np.sqrt((1.0 - frame.rho) * frame.max_power)                 # (t,)
    leak = np.einsum("tl,tkn->kln", frame.schedule * sens_amp[:, None], G)
    sensing = (np.abs(leak) ** 2).sum(axis=2) / N                           # (k, l)
    return desired, interference, sensing


def sinr_matrix(G: np.ndarray, frame: TransmitFrame, noise_var) -> np.ndarray:
    """SINR_k[l] for every UE and instant, shaped (K, L)."""
    desired, interference, sensing = _signal_terms(G, frame)
    noise = np.broadcast_to(np.asarray(noise_var, dtype=float), desired.shape)
    denom = interference[:, None] + sensing + noise[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = desired[:, None] / denom
    return np.where(desired[:, None] == 0.0, 0.0, out)


def ue_sinr(G: np.ndarray, frame: TransmitFrame, ue_index: int, instant: int, noise_var) -> float:
    """SINR of UE ``ue_index`` at instant ``instant``.

    :param G: realized channels (M_t, K, N)
    :param noise_var: sigma_k^2, scalar or per UE
    """
    return float(sinr_matrix(G, frame, noise_var)[ue_index, instant])


def sum_se(G: np.ndarray, frame: TransmitFrame, noise_var) -> SEReport:
    """Per-instant log2(1+SINR) averaged over the frame, then summed over UEs."""
    sinr = sinr_matrix(G, frame, noise_var)
    se = np.log2(1.0 + sinr).mean(axis=1)
    return SEReport(per_ue_sinr=sinr, per_ue_se=se, sum_se=float(se.sum()))
