"""Geometry kernel: positions, boresight-relative angles, bistatic delays and ULA responses.

Angles are measured on the vector pointing from the AP towards the point of
interest and then made relative to the AP boresight.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.constants import speed_of_light

TWO_PI = 2.0 * np.pi


class DegenerateGeometryError(ValueError):
    """Raised when two points that must be distinct coincide."""


def wrap_2pi(angle):
    """Reduce angle(s) to [0, 2*pi)."""
    out = np.mod(angle, TWO_PI)
    # np.mod returns exactly 2*pi for tiny negative inputs
    out = np.where(out >= TWO_PI, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Position2D:
    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError(f"non-finite position ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @classmethod
    def from_array(cls, p) -> "Position2D":
        return cls(float(p[0]), float(p[1]))


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array. ``element_spacing`` defaults to half a wavelength."""

    num_elements: int
    wavelength: float
    element_spacing: float | None = None

    def __post_init__(self):
        if self.num_elements < 1:
            raise ValueError("num_elements must be >= 1")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be > 0")
        if self.element_spacing is None:
            object.__setattr__(self, "element_spacing", self.wavelength / 2.0)
        if self.element_spacing <= 0:
            raise ValueError("element_spacing must be > 0")

    @classmethod
    def from_carrier(cls, num_elements: int, carrier_hz: float, element_spacing=None) -> "ArrayGeometry":
        return cls(num_elements, speed_of_light / carrier_hz, element_spacing)

    @property
    def phase_step(self) -> float:
        """Per-element phase slope 2*pi*d/lambda multiplying sin(theta)."""
        return TWO_PI * self.element_spacing / self.wavelength


class APMode(str, Enum):
    TRANSMIT = "transmit"
    RECEIVE = "receive"


@dataclass(frozen=True)
class APNode:
    position: Position2D
    boresight: float
    array: ArrayGeometry
    max_power: float
    comm_power_fraction: float = 0.5
    mode: APMode = APMode.TRANSMIT

    def __post_init__(self):
        if not 0.0 <= self.comm_power_fraction <= 1.0:
            raise ValueError("comm_power_fraction must lie in [0, 1]")
        if self.max_power <= 0:
            raise ValueError("max_power must be > 0")
        object.__setattr__(self, "boresight", wrap_2pi(self.boresight))


def _as_xy(p) -> np.ndarray:
    if isinstance(p, Position2D):
        return p.as_array()
    if isinstance(p, APNode):
        return p.position.as_array()
    return np.asarray(p, dtype=float)


def aod_to_point(ap: APNode, p) -> float:
    """Boresight-relative angle in [0, 2*pi) of the direction from ``ap`` to ``p``.

    Used for both departure (transmit AP) and arrival (receive AP) angles.
    """
    delta = _as_xy(p) - ap.position.as_array()
    if np.hypot(*delta) == 0.0:
        raise DegenerateGeometryError("point coincides with the AP position")
    return wrap_2pi(np.arctan2(delta[1], delta[0]) - ap.boresight)


def bistatic_delay(tx, target, rx) -> float:
    """Two-leg propagation delay tx -> target -> rx in seconds."""
    pt, ps, pr = _as_xy(tx), _as_xy(target), _as_xy(rx)
    d_t = np.hypot(*(ps - pt))
    d_r = np.hypot(*(pr - ps))
    if d_t == 0.0 or d_r == 0.0:
        raise DegenerateGeometryError("zero-length bistatic leg")
    return (d_t + d_r) / speed_of_light


def steering_vector(array: ArrayGeometry, theta) -> np.ndarray:
    """ULA response ``exp(j n (2 pi d / lambda) sin(theta))``, n = 0..N-1.

    ``theta`` may be an array; the element axis is appended last.
    """
    n = np.arange(array.num_elements)
    phase = array.phase_step * np.sin(np.asarray(theta, dtype=float))[..., None] * n
    return np.exp(1j * phase)


# vectorized helpers used by the estimator and the Fisher engine; no degeneracy checks

def relative_geometry(points, ap_positions, ap_boresights):
    """Distances and boresight-relative angles for every (point, AP) pair.

    :param points: (..., 2) array
    :param ap_positions: (M, 2) array
    :param ap_boresights: (M,) array
    :return: (dist, angle, dx, dy) each shaped (..., M)
    """
    points = np.asarray(points, dtype=float)
    delta = points[..., None, :] - np.asarray(ap_positions, dtype=float)
    dx, dy = delta[..., 0], delta[..., 1]
    dist = np.hypot(dx, dy)
    angle = np.arctan2(dy, dx) - np.asarray(ap_boresights, dtype=float)
    return dist, angle, dx, dy


def ula_response(num_elements: int, phase_step: float, angle) -> np.ndarray:
    n = np.arange(num_elements)
    return np.exp(1j * phase_step * np.sin(angle)[..., None] * n)
