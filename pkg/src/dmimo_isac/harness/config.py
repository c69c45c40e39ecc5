"""Experiment configuration: nested dataclasses serialized as JSON.

Unknown keys are rejected so that a typo never silently falls back to a
default. ``paper_scenario()`` returns the reference deployment.
"""

from __future__ import annotations

import hashlib
import json
import typing
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from ..errors import ConfigurationError


@dataclass
class RadioConfig:
    carrier_hz: float = 3.5e9
    bandwidth_hz: float = 100e3
    temperature_k: float = 290.0
    noise_figure_db: float = 0.0
    num_antennas: int = 8
    power_dbm: float | list = 20.0        # per AP, scalar or one value per AP
    rho: float | list = 0.5               # communication power fraction, scalar or per AP
    path_loss_intercept_db: float = -30.5
    path_loss_slope_db: float = 36.7
    rician_k_db: float = 10.0
    correlation_model: str = "identity"


@dataclass
class DeploymentConfig:
    region: list = field(default_factory=lambda: [0.0, 0.0, 1000.0, 1000.0])
    num_aps: int = 12
    num_ues: int = 4
    num_targets: int = 2
    rcs_dbsm: float = 0.0
    min_target_separation: float = 100.0
    min_target_clearance: float = 20.0    # from any AP
    num_tx: int = 6
    selection: str = "sensing_centric"    # sensing_centric | comm_centric | fixed
    transmit: list | None = None          # used when selection == "fixed"
    noise_tilde: float | None = None


@dataclass
class FrameConfig:
    length: int = 32
    sensing_waveform: str = "isotropic"
    sensing_reference: str = "full"      # full | sensing_only


@dataclass
class DetectionConfig:
    grid_spacing: float = 5.0
    pfa: float = 1e-3
    method: str = "glrt"
    scope: str = "map"
    guard: int = 2
    train: int = 8
    dynamic_range_db: float = 90.0
    max_targets: int = 8
    exclusion_radius: float = 40.0


@dataclass
class RefinementConfig:
    ncp_box: float = 20.0
    confidence: float = 3.5
    max_window: float = 30.0
    step_fraction: float = 0.0625
    max_points: int = 1500000
    starts_per_target: int = 5
    maxiter: int = 400


@dataclass
class CoverageConfig:
    samples: int = 500
    threshold_wavelengths: float = 0.1


@dataclass
class ScenarioConfig:
    radio: RadioConfig = field(default_factory=RadioConfig)
    deployment: DeploymentConfig = field(default_factory=DeploymentConfig)
    frame: FrameConfig = field(default_factory=FrameConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    coverage: CoverageConfig = field(default_factory=CoverageConfig)
    estimate: bool = True
    compute_coverage: bool = False
    seed: int = 0

    # ------------------------------------------------------------------ validation
    def validate(self) -> "ScenarioConfig":
        d, r = self.deployment, self.radio
        M = d.num_aps
        if M < 2:
            raise ConfigurationError("need at least two APs")
        if d.selection == "fixed":
            if d.transmit is None:
                raise ConfigurationError("fixed selection needs an explicit transmit list")
            num_tx = len(d.transmit)
        else:
            num_tx = d.num_tx
        if not 1 <= num_tx <= M - 1:
            raise ConfigurationError(f"M_t={num_tx} leaves M_r={M - num_tx}; both must be >= 1")
        if d.selection not in ("sensing_centric", "comm_centric", "fixed"):
            raise ConfigurationError(f"unknown selection strategy {d.selection!r}")
        if d.num_ues < 1 or d.num_targets < 0:
            raise ConfigurationError("need at least one UE and a non-negative target count")
        if r.num_antennas < 1 or self.frame.length < 1:
            raise ConfigurationError("antenna count and frame length must be positive")
        for name in ("power_dbm", "rho"):
            v = getattr(r, name)
            if isinstance(v, list) and len(v) != M:
                raise ConfigurationError(f"{name} must be a scalar or one value per AP")
        rho = r.rho if isinstance(r.rho, list) else [r.rho]
        if any(not 0.0 <= x <= 1.0 for x in rho):
            raise ConfigurationError("rho must lie in [0, 1]")
        if self.frame.sensing_waveform not in ("isotropic", "steered"):
            raise ConfigurationError(f"unknown sensing waveform {self.frame.sensing_waveform!r}")
        if self.frame.sensing_reference not in ("full", "sensing_only"):
            raise ConfigurationError(f"unknown sensing reference {self.frame.sensing_reference!r}")
        if self.detection.method not in ("glrt", "ca") or self.detection.scope not in ("map", "node"):
            raise ConfigurationError("detection method must be glrt|ca and scope map|node")
        x0, y0, x1, y1 = d.region
        if not (x1 > x0 and y1 > y0):
            raise ConfigurationError("region must have positive extent")
        return self

    @property
    def num_rx(self) -> int:
        d = self.deployment
        return d.num_aps - (len(d.transmit) if d.selection == "fixed" else d.num_tx)

    # ------------------------------------------------------------------ serialization
    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        return _build(cls, data)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    def hash(self) -> str:
        """SHA-256 of the canonical JSON (sorted keys, no whitespace)."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def with_overrides(self, **dotted) -> "ScenarioConfig":
        """Copy with ``section.key=value`` (or top-level ``key=value``) overrides."""
        data = self.to_dict()
        for key, value in dotted.items():
            node = data
            *path, leaf = key.split(".")
            for p in path:
                if p not in node or not isinstance(node[p], dict):
                    raise ConfigurationError(f"unknown config section {p!r}")
                node = node[p]
            if leaf not in node:
                raise ConfigurationError(f"unknown config key {key!r}")
            node[leaf] = value
        return ScenarioConfig.from_dict(data)


def _build(cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigurationError(f"expected a mapping for {cls.__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        hint = hints[name]
        if isinstance(hint, type) and is_dataclass(hint):
            kwargs[name] = _build(hint, value)
        elif isinstance(value, list) and name == "region":
            kwargs[name] = [float(v) for v in value]
        else:
            kwargs[name] = value
    return cls(**kwargs)


def paper_scenario(**overrides) -> ScenarioConfig:
    """Reference deployment: 12 APs with 8 antennas over 1 x 1 km, 4 UEs, 2 targets at 3.5 GHz."""
    cfg = ScenarioConfig()
    return cfg.with_overrides(**overrides) if overrides else cfg


__all__ = ["RadioConfig", "DeploymentConfig", "FrameConfig", "DetectionConfig", "RefinementConfig",
           "CoverageConfig", "ScenarioConfig", "paper_scenario"]
