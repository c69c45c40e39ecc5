"""Non-coherent grid scan and sequential CFAR detection of cost-map dips."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .cfar import CFARConfig, ca_cfar_2d, glrt_statistic, glrt_threshold
from .costs import ncp_cost_points, ncp_fit, ncp_objective
from .model import SensingSetup, mean_echo


@dataclass(frozen=True)
class GridConfig:
    spacing: float = 5.0
    region: tuple | None = None      # (x0, y0, x1, y1); None -> scenario region
    ap_clearance: float = 1.0        # nodes this close to an AP are not scanned

    def nodes(self, region):
        x0, y0, x1, y1 = self.region if self.region is not None else region
        nx = int(np.floor((x1 - x0) / self.spacing + 1e-9)) + 1
        ny = int(np.floor((y1 - y0) / self.spacing + 1e-9)) + 1
        xs = x0 + self.spacing * np.arange(nx)
        ys = y0 + self.spacing * np.arange(ny)
        return xs, ys


@dataclass
class Detection:
    position: np.ndarray     # grid node (2,)
    cost: float              # single-target cost of the original echoes at that node
    statistic: float         # CFAR statistic when the detection was made
    estimate: np.ndarray     # continuous non-coherent estimate (2,)


@dataclass
class CostMap:
    origin: tuple
    spacing: float
    values: np.ndarray                   # (ny, nx), row index = y
    detections: list = field(default_factory=list)
    first_pass_exceedances: int = 0      # nodes above threshold before any cancellation
    tested_nodes: int = 0

    @property
    def shape(self):
        return self.values.shape

    def node(self, iy: int, ix: int) -> np.ndarray:
        return np.array([self.origin[0] + ix * self.spacing, self.origin[1] + iy * self.spacing])

    def save(self, path) -> None:
        """Plain-text raster: three header lines, then ny rows of nx values."""
        ny, nx = self.values.shape
        with open(Path(path), "w") as fh:
            fh.write(f"origin {self.origin[0]!r} {self.origin[1]!r}\n")
            fh.write(f"spacing {self.spacing!r}\n")
            fh.write(f"size {nx} {ny}\n")
            np.savetxt(fh, self.values, fmt="%.17g")

    @classmethod
    def load(cls, path) -> "CostMap":
        with open(Path(path)) as fh:
            ox, oy = map(float, fh.readline().split()[1:3])
            spacing = float(fh.readline().split()[1])
            nx, ny = map(int, fh.readline().split()[1:3])
            values = np.loadtxt(fh, ndmin=2).reshape(ny, nx)
        return cls((ox, oy), spacing, values)


def cost_scale(y, setup: SensingSetup) -> float:
    """Expected noise-only residual (n sigma^2), or the echo energy when noise is absent."""
    noise = setup.noise_power * np.size(y)
    return noise if noise > 0 else max(float(np.sum(np.abs(y) ** 2)), 1e-300)


def refine_ncp(y, setup: SensingSetup, starts, box: float = 20.0, maxiter: int = 200, recenter: int = 3):
    """Joint continuous non-coherent fit of all hypotheses.

    Each hypothesis moves within ``box`` meters of its start; when a
    coordinate ends on the bound, the box is re-centred (up to ``recenter``
    times).
    """
    P0 = np.asarray(starts, dtype=float).reshape(-1, 2)
    scale = cost_scale(y, setup)

    def fun(x):
        c, g, _ = ncp_objective(y, setup, x.reshape(-1, 2))
        return c / scale, g.ravel() / scale

    P, best = P0, fun(P0.ravel())[0]
    for _ in range(recenter + 1):
        centre = P.ravel()
        bounds = [(v - box, v + box) for v in centre]
        res = minimize(fun, centre, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": maxiter})
        if res.fun <= best:
            P, best = res.x.reshape(-1, 2), res.fun
        if not np.any(np.isclose(np.abs(res.x - centre), box, rtol=0, atol=1e-6 * box)):
            break
    return P


def _valid_nodes(points, setup: SensingSetup, clearance: float):
    aps = np.vstack([setup.tx_positions, setup.rx_positions])
    d = np.linalg.norm(points[:, None, :] - aps[None], axis=-1)
    return d.min(axis=1) > clearance


def scan_and_detect(y, setup: SensingSetup, region, grid: GridConfig = GridConfig(),
                    cfar: CFARConfig = CFARConfig(), pfa_scope: str = "map") -> CostMap:
    """Scan the single-target non-coherent cost and detect dips sequentially.

    Each pass tests every node with the CFAR rule, takes the strongest
    exceedance, refits all detections jointly and subtracts their fitted
    echoes before the next pass. Passes stop when no node exceeds the
    threshold. With ``pfa_scope="map"`` the nominal probability is split
    over the nodes (family-wise bound); ``"node"`` applies it per node.
    """
    y = np.asarray(y)
    M_r, L, N = y.shape
    k, n = setup.num_tx * M_r, M_r * L * N
    xs, ys = grid.nodes(region)
    gx, gy = np.meshgrid(xs, ys)
    points = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    valid = _valid_nodes(points, setup, grid.ap_clearance)

    energy0 = float(np.sum(np.abs(y) ** 2))
    values = np.full(len(points), energy0)
    values[valid] = ncp_cost_points(y, setup, points[valid])
    cmap = CostMap((float(xs[0]), float(ys[0])), grid.spacing, values.reshape(len(ys), len(xs)))
    cmap.tested_nodes = int(valid.sum())

    if pfa_scope not in ("map", "node"):
        raise ValueError(f"unknown pfa scope {pfa_scope!r}")
    pfa = cfar.pfa / cmap.tested_nodes if pfa_scope == "map" else cfar.pfa
    floor = 10.0 ** (-cfar.dynamic_range_db / 10.0) * energy0
    tau = glrt_threshold(pfa, k, n) if cfar.method == "glrt" else None

    resid, cost = y, values
    estimates: list = []
    stats_at: list = []
    for it in range(cfar.max_targets + 1):
        energy = float(np.sum(np.abs(resid) ** 2))
        captured = np.where(valid, energy - cost, 0.0)
        if cfar.method == "glrt":
            stat = glrt_statistic(captured, cost, k, n, floor)
            exceed = stat > tau
        else:
            mask, stat = ca_cfar_2d(captured.reshape(cmap.shape), pfa, shape_k=k, guard=cfar.guard, train=cfar.train)
            stat, exceed = stat.ravel(), mask.ravel()
            # captured energy must also clear the dynamic-range floor
            exceed &= captured > floor
        exceed &= valid
        if it == 0:
            cmap.first_pass_exceedances = int(exceed.sum())
        for e in estimates:
            exceed &= np.linalg.norm(points - e, axis=1) > cfar.exclusion_radius
        if not exceed.any() or it == cfar.max_targets:
            break
        idx = int(np.argmax(np.where(exceed, stat, -np.inf)))
        stats_at.append(float(stat[idx]))
        estimates = list(refine_ncp(y, setup, estimates + [points[idx]]))
        _, gamma = ncp_fit(y, setup, np.array(estimates))
        resid = y - mean_echo(setup, np.array(estimates), gamma)
        cost = np.full(len(points), float(np.sum(np.abs(resid) ** 2)))
        cost[valid] = ncp_cost_points(resid, setup, points[valid])

    for est, st in zip(estimates, stats_at):
        ix = int(np.clip(np.rint((est[0] - xs[0]) / grid.spacing), 0, len(xs) - 1))
        iy = int(np.clip(np.rint((est[1] - ys[0]) / grid.spacing), 0, len(ys) - 1))
        cmap.detections.append(Detection(cmap.node(iy, ix), float(cmap.values[iy, ix]), st, np.asarray(est)))
    return cmap
