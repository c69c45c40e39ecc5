"""Constant-false-alarm-rate tests for non-coherent cost maps.

Two detectors are provided:

* ``glrt`` (default): every grid node is tested with the generalized
  likelihood-ratio statistic of the single-target non-coherent model,
  ``T = (D / k) / (R / (n - k))`` where ``D`` is the echo energy captured by
  the node's ``k`` complex path regressors and ``R`` the residual. Under
  noise only ``T`` follows an F(2k, 2(n - k)) law whatever the noise power,
  so the threshold is exact for any nominal false-alarm probability.
* ``ca``: classical 2D cell-averaging CFAR on the captured-energy map with a
  guard band and a square training ring. It assumes independent cells and is
  kept for maps whose cells are (close to) independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.ndimage import uniform_filter


@dataclass(frozen=True)
class CFARConfig:
    pfa: float = 1e-3
    method: str = "glrt"             # "glrt" or "ca"
    guard: int = 2                    # CA-CFAR guard cells on each side
    train: int = 8                    # CA-CFAR training ring width
    dynamic_range_db: float = 90.0    # residual floor relative to the echo energy
    max_targets: int = 8
    exclusion_radius: float = 40.0    # meters around earlier detections

    def __post_init__(self):
        if not 0.0 < self.pfa < 1.0:
            raise ValueError("pfa must lie in (0, 1)")
        if self.method not in ("glrt", "ca"):
            raise ValueError(f"unknown CFAR method {self.method!r}")


def glrt_threshold(pfa: float, k: int, n: int) -> float:
    """Threshold on T = (D/k)/(R/(n-k)) for a per-node false-alarm probability ``pfa``.

    :param k: complex regressors per hypothesis (M_t M_r)
    :param n: complex observations (M_r L N)
    """
    if n <= k:
        raise ValueError("need more observations than regressors")
    return float(stats.f.isf(pfa, 2 * k, 2 * (n - k)))


def glrt_statistic(captured, residual, k: int, n: int, floor: float = 0.0):
    """F-type statistic from captured energy ``D`` and residual ``R`` (arrays broadcast)."""
    R = np.maximum(np.asarray(residual, dtype=float), floor)
    R = np.maximum(R, np.finfo(float).tiny)
    return (np.asarray(captured, dtype=float) / k) / (R / (n - k))


def ca_threshold_factor(pfa: float, shape_k: float, num_train: int) -> float:
    """Multiplier on the training mean for Gamma(shape_k)-distributed independent cells.

    cell / mean(train) ~ F(2k, 2k M) under the null, so the factor is exact.
    """
    return float(stats.f.isf(pfa, 2 * shape_k, 2 * shape_k * num_train))


def ca_cfar_2d(values: np.ndarray, pfa: float, shape_k: float = 1.0, guard: int = 2, train: int = 8):
    """2D cell-averaging CFAR on a peak map (larger = more target-like).

    Training cells form the square ring between ``guard`` and ``guard + train``
    cells around the cell under test; edges use only the cells inside the map
    (the threshold factor is adjusted per cell for the actual count).

    :return: (boolean exceedance mask, ratio cell/training mean)
    """
    x = np.asarray(values, dtype=float)
    outer, inner = 2 * (guard + train) + 1, 2 * guard + 1
    ones = np.ones_like(x)

    def box_sum(a, size):
        return uniform_filter(a, size=size, mode="constant", cval=0.0) * size * size

    s = box_sum(x, outer) - box_sum(x, inner)
    count = np.rint(box_sum(ones, outer) - box_sum(ones, inner)).astype(int)
    mean = s / np.maximum(count, 1)
    ratio = x / np.maximum(mean, np.finfo(float).tiny)
    factors = {c: ca_threshold_factor(pfa, shape_k, c) for c in np.unique(count) if c > 0}
    thr = np.vectorize(lambda c: factors.get(c, np.inf))(count)
    return ratio > thr, ratio
