"""Transmit/receive mode assignment: greedy communication-centric and farthest-point sensing-centric."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .channel import PathLossModel
from .errors import ConfigurationError

_TIE_RTOL = 1e-12


class Strategy(str, Enum):
    COMM_CENTRIC = "comm_centric"
    SENSING_CENTRIC = "sensing_centric"
    FIXED = "fixed"


@dataclass(frozen=True)
class ModeAssignment:
    transmit: tuple
    receive: tuple
    strategy: Strategy = Strategy.FIXED
    trace: tuple = field(default=(), compare=False)

    def __post_init__(self):
        T, R = set(self.transmit), set(self.receive)
        if len(T) != len(self.transmit) or len(R) != len(self.receive):
            raise ConfigurationError("duplicate AP index in mode assignment")
        if T & R:
            raise ConfigurationError("an AP cannot both transmit and receive")

    @property
    def num_tx(self) -> int:
        return len(self.transmit)

    @property
    def num_rx(self) -> int:
        return len(self.receive)

    def validate(self, num_aps: int) -> None:
        if set(self.transmit) | set(self.receive) != set(range(num_aps)):
            raise ConfigurationError("mode assignment must cover every AP exactly once")
        if not self.transmit or not self.receive:
            raise ConfigurationError("need at least one transmit and one receive AP")

    def to_dict(self) -> dict:
        return {"transmit": list(self.transmit), "receive": list(self.receive), "strategy": self.strategy.value}

    @classmethod
    def from_dict(cls, d: dict) -> "ModeAssignment":
        return cls(tuple(d["transmit"]), tuple(d["receive"]), Strategy(d.get("strategy", "fixed")))


def _argmax_lowest(values) -> int:
    """Index of the maximum; values within a relative 1e-12 of it count as ties, lowest index wins."""
    v = np.asarray(values, dtype=float)
    top = np.max(v)
    tol = _TIE_RTOL * max(abs(top), 1e-300)
    return int(np.flatnonzero(v >= top - tol)[0])


def surrogate_se(beta: np.ndarray, transmit, noise_tilde: float) -> float:
    """sum_k log2(1 + b_k^2 / (sum_{i != k} b_i^2 + noise)) with b_k = sum_{t in T} beta_tk."""
    b = np.asarray(beta, dtype=float)[list(transmit)].sum(axis=0)
    p = b ** 2
    sinr = p / (p.sum() - p + noise_tilde)
    return float(np.log2(1.0 + sinr).sum())


def surrogate_noise(beta: np.ndarray, noise_power: float, max_power: float) -> float:
    """Default effective noise for the surrogate SINR: (sigma^2 / P_t) times the median link gain."""
    return float(noise_power / max_power * np.median(beta))


def greedy_comm_centric(beta: np.ndarray, num_tx: int, noise_tilde: float) -> ModeAssignment:
    """Greedy transmit-set construction on a table of power gains ``beta`` (M, K)."""
    beta = np.asarray(beta, dtype=float)
    M = beta.shape[0]
    if not 1 <= num_tx <= M - 1:
        raise ConfigurationError(f"M_t must lie in [1, {M - 1}], got {num_tx}")
    T: list = []
    trace = []
    current = 0.0
    for _ in range(num_tx):
        cand = [m for m in range(M) if m not in T]
        gains = [surrogate_se(beta, T + [m], noise_tilde) - current for m in cand]
        pick = cand[_argmax_lowest(gains)]
        trace.append((pick, tuple(float(g) for g in gains)))
        T.append(pick)
        current = surrogate_se(beta, T, noise_tilde)
    R = tuple(m for m in range(M) if m not in T)
    return ModeAssignment(tuple(T), R, Strategy.COMM_CENTRIC, tuple(trace))


def select_comm_centric(ap_positions, ue_positions, path_loss: PathLossModel, num_tx: int,
                        noise_tilde: float | None = None, noise_power: float = 1e-15,
                        max_power: float = 0.1) -> ModeAssignment:
    """Communication-centric selection from positions and a path-loss model (beta as power gains)."""
    ap = np.asarray(ap_positions, dtype=float).reshape(-1, 2)
    ue = np.asarray(ue_positions, dtype=float).reshape(-1, 2)
    beta = path_loss.gain(np.linalg.norm(ap[:, None] - ue[None], axis=-1))
    if noise_tilde is None:
        noise_tilde = surrogate_noise(beta, noise_power, max_power)
    return greedy_comm_centric(beta, num_tx, noise_tilde)


def select_sensing_centric(ap_positions, num_rx: int) -> ModeAssignment:
    """Farthest-point receiver selection seeded by the diameter pair.

    A single receiver has no spread to maximize; it goes to the AP closest
    to the AP centroid, which keeps the bistatic legs short over the region.
    """
    ap = np.asarray(ap_positions, dtype=float).reshape(-1, 2)
    M = len(ap)
    if not 1 <= num_rx <= M - 1:
        raise ConfigurationError(f"M_r must lie in [1, {M - 1}], got {num_rx}")
    D = np.linalg.norm(ap[:, None] - ap[None], axis=-1)
    if num_rx == 1:
        R = [_argmax_lowest(-np.linalg.norm(ap - ap.mean(axis=0), axis=1))]
    else:
        iu, ju = np.triu_indices(M, k=1)          # row-major order, so ties go to the lowest (i, j)
        k = _argmax_lowest(D[iu, ju])
        R = [int(iu[k]), int(ju[k])]
    while len(R) < num_rx:
        cand = [m for m in range(M) if m not in R]
        R.append(cand[_argmax_lowest(D[np.ix_(cand, R)].min(axis=1))])
    T = tuple(m for m in range(M) if m not in R)
    return ModeAssignment(T, tuple(R), Strategy.SENSING_CENTRIC)
