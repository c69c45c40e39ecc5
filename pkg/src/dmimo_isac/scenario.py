"""A deployed scenario: node positions, per-AP power settings, targets and radio constants."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import speed_of_light

from .channel import PathLossModel, Target, noise_power
from .geometry import APMode, APNode, ArrayGeometry, Position2D


@dataclass
class Scenario:
    ap_positions: np.ndarray            # (M, 2)
    ap_boresights: np.ndarray           # (M,)
    ue_positions: np.ndarray            # (K, 2)
    ue_phases: np.ndarray               # (K,)
    targets: list[Target]
    num_antennas: int = 8
    carrier_hz: float = 3.5e9
    bandwidth_hz: float = 100e3
    max_power: np.ndarray | float = 1.0     # watts, per AP
    rho: np.ndarray | float = 0.5
    temperature_k: float = 290.0
    noise_figure_db: float = 0.0
    path_loss: PathLossModel = field(default_factory=PathLossModel)
    rician_k_db: float = 10.0
    correlation_model: str = "identity"
    region: tuple = (0.0, 0.0, 1000.0, 1000.0)

    def __post_init__(self):
        self.ap_positions = np.asarray(self.ap_positions, dtype=float).reshape(-1, 2)
        self.ap_boresights = np.asarray(self.ap_boresights, dtype=float).reshape(-1)
        self.ue_positions = np.asarray(self.ue_positions, dtype=float).reshape(-1, 2)
        self.ue_phases = np.asarray(self.ue_phases, dtype=float).reshape(-1)
        M = len(self.ap_positions)
        self.max_power = np.broadcast_to(np.asarray(self.max_power, dtype=float), (M,)).copy()
        self.rho = np.broadcast_to(np.asarray(self.rho, dtype=float), (M,)).copy()
        if len(self.ap_boresights) != M:
            raise ValueError("one boresight per AP required")
        if np.any((self.rho < 0) | (self.rho > 1)):
            raise ValueError("rho must lie in [0, 1]")

    @property
    def num_aps(self) -> int:
        return len(self.ap_positions)

    @property
    def num_ues(self) -> int:
        return len(self.ue_positions)

    @property
    def num_targets(self) -> int:
        return len(self.targets)

    @property
    def wavelength(self) -> float:
        return speed_of_light / self.carrier_hz

    @property
    def array(self) -> ArrayGeometry:
        return ArrayGeometry(self.num_antennas, self.wavelength)

    @property
    def noise_power(self) -> float:
        return noise_power(self.bandwidth_hz, self.temperature_k, self.noise_figure_db)

    @property
    def target_positions(self) -> np.ndarray:
        return np.array([t.position.as_array() for t in self.targets]).reshape(-1, 2)

    def ap_node(self, index: int, mode: APMode = APMode.TRANSMIT) -> APNode:
        return APNode(
            position=Position2D.from_array(self.ap_positions[index]),
            boresight=float(self.ap_boresights[index]),
            array=self.array,
            max_power=float(self.max_power[index]),
            comm_power_fraction=float(self.rho[index]),
            mode=mode,
        )

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)
