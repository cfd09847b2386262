"""Belief densities for binary-strategy populations, advected by the mean response.

Each learning population gets a density over the belief coordinate of its
first strategy on ``M + 1`` equally spaced nodes in [0, 1]. The densities move
under the continuity equation with velocity ``(xbar - mu) / (lam + t + 1)``,
discretized with first-order upwind fluxes and explicit Euler steps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .dynamics import NumericalError, SfpParams, fmt, logit
from .game import GameError, PopulationNetworkGame

CFL = 0.9
MAX_QUADRATURE_NODES = 10**7


@dataclass
class DensityGrid:
    density: np.ndarray  # values at nodes 0..M; both endpoints are 0

    def __post_init__(self):
        self.density = np.asarray(self.density, dtype=float)
        if self.density.ndim != 1 or self.density.size < 3:
            raise GameError("density needs at least 3 nodes")

    @property
    def M(self) -> int:
        return self.density.size - 1

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.M + 1)

    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights times density."""
        w = self.density * self.h
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def mass(self) -> float:
        return float(self.weights().sum())

    def copy(self) -> "DensityGrid":
        return DensityGrid(self.density.copy())


def density_from_beta(a: float, b: float, M: int = 200) -> DensityGrid:
    """Beta(a, b) density on ``M + 1`` nodes, renormalized to unit trapezoid mass."""
    if not (a > 1 and b > 1):
        raise GameError(f"Beta({a}, {b}) has mass at the boundary; need a, b > 1")
    if M < 50:
        raise GameError(f"grid needs M >= 50, got {M}")
    nodes = np.linspace(0.0, 1.0, M + 1)
    p = stats.beta.pdf(nodes, a, b)
    p[0] = p[-1] = 0.0
    grid = DensityGrid(p)
    grid.density /= grid.mass()
    return grid


def grid_moments(grid: DensityGrid) -> tuple[float, float]:
    w = grid.weights()
    mass = w.sum()
    mean = float(w @ grid.nodes / mass)
    var = float(w @ (grid.nodes - mean) ** 2 / mass)
    return mean, max(var, 0.0)


def _check_binary(game: PopulationNetworkGame, i: int) -> None:
    if game.sizes[i] != 2:
        raise GameError(f"population {game.populations[i].id!r} has {game.sizes[i]} strategies; "
                        "densities need exactly 2")


def _grid_index(game: PopulationNetworkGame, grids: Mapping) -> dict[int, DensityGrid]:
    out = {}
    for pid, g in grids.items():
        out[game.index(pid)] = g
    return out


def mean_choice_from_density(game: PopulationNetworkGame, pop_id, grids: Mapping, beta: float) -> np.ndarray:
    """Population mean mixed strategy of ``pop_id`` given densities of beliefs about its neighbors.

    Integrates the logit response over the product of the neighbor densities
    with tensor-product trapezoid quadrature. Static neighbors enter through
    their fixed strategy.
    """
    i = game.index(pop_id)
    pop = game.populations[i]
    if pop.fixed is not None:
        return pop.fixed.copy()
    _check_binary(game, i)
    by_index = _grid_index(game, grids)
    base = np.zeros(2)
    axes_u, axes_w = [], []
    for j in game.neighbors[i]:
        a = game.payoff[(i, j)]
        fixed = game.populations[j].fixed
        if fixed is not None:
            base = base + a @ fixed
            continue
        _check_binary(game, j)
        if j not in by_index:
            raise GameError(f"no density for population {game.populations[j].id!r}")
        g = by_index[j]
        w = g.weights()
        keep = w > 0
        mu = g.nodes[keep]
        axes_u.append(np.outer(mu, a[:, 0]) + np.outer(1.0 - mu, a[:, 1]))
        axes_w.append(w[keep] / w.sum())
    if math.prod(len(w) for w in axes_w) > MAX_QUADRATURE_NODES:
        raise GameError("too many quadrature nodes for the tensor-product rule")
    u = base
    weight = np.ones(())
    for k, (uk, wk) in enumerate(zip(axes_u, axes_w)):
        shape = [1] * len(axes_u) + [2]
        shape[k] = len(wk)
        u = u + uk.reshape(shape)
        wshape = [1] * len(axes_u)
        wshape[k] = len(wk)
        weight = weight * wk.reshape(wshape)
    f = logit(u, beta)
    return np.tensordot(weight, f, axes=weight.ndim) if weight.ndim else f


def _face_velocity(grid: DensityGrid, xbar_h: float, t: float, lam: float) -> np.ndarray:
    faces = (np.arange(grid.M) + 0.5) * grid.h
    return (xbar_h - faces) / (lam + t + 1.0)


def _flux(grid: DensityGrid, v: np.ndarray) -> np.ndarray:
    p = grid.density
    flux = np.where(v > 0, v * p[:-1], v * p[1:])
    flux[0] = flux[-1] = 0.0
    return flux


def max_stable_dt(grids: Mapping, xbars: Mapping, t: float, lam: float) -> float:
    dt = math.inf
    for pid, g in grids.items():
        v = np.abs(_face_velocity(g, xbars[pid][0], t, lam))[1:-1]
        vmax = v.max() if v.size else 0.0
        if vmax > 0:
            dt = min(dt, CFL * g.h / vmax)
    return dt


def mean_choices(game: PopulationNetworkGame, grids: Mapping, beta: float) -> dict:
    return {pid: mean_choice_from_density(game, pid, grids, beta) for pid in grids}


def pde_step(grids: Mapping, game: PopulationNetworkGame, t: float, dt: float, params: SfpParams,
             xbars: Mapping | None = None) -> dict:
    """One upwind step of every density; returns new grids keyed like ``grids``."""
    if xbars is None:
        xbars = mean_choices(game, grids, params.beta)
    out = {}
    for pid, g in grids.items():
        v = _face_velocity(g, xbars[pid][0], t, params.lam)
        courant = dt * np.abs(v[1:-1]).max() / g.h if g.M > 2 else 0.0
        if courant > CFL + 1e-12:
            raise NumericalError(f"CFL violated at t={t}: courant number {courant:.4g} > {CFL}")
        flux = _flux(g, v)
        p = g.density.copy()
        p[1:-1] -= dt / g.h * (flux[1:] - flux[:-1])
        if not np.all(np.isfinite(p)):
            raise NumericalError(f"non-finite density at t={t + dt}")
        out[pid] = DensityGrid(p)
    return out


@dataclass
class PdeResult:
    times: np.ndarray
    snapshots: dict        # pop id -> (n_times, M + 1) densities
    means: dict            # pop id -> grid mean of the first-strategy belief
    variances: dict
    masses: dict
    choices: dict          # pop id -> mean probability of the first strategy
    steps: int


def run_pde(
    game: PopulationNetworkGame,
    grids: Mapping,
    t_end: float,
    params: SfpParams,
    snapshot_times: Sequence[float] | None = None,
) -> PdeResult:
    """Advance the densities to ``t_end`` with the largest stable step, recording snapshots.

    ``grids`` maps each learning population id to its initial density. The
    step is also shortened to land exactly on every snapshot time.
    """
    learners = {game.ids[i] for i in game.learning}
    if set(grids) != learners:
        raise GameError(f"need one density per learning population {sorted(learners, key=str)}")
    times = np.unique(np.concatenate([[0.0], np.asarray(snapshot_times if snapshot_times is not None
                                                        else [t_end], dtype=float), [t_end]]))
    if times[0] < 0 or times[-1] > t_end:
        raise GameError("snapshot times must lie in [0, t_end]")
    grids = {pid: g.copy() for pid, g in grids.items()}
    rec = {key: {pid: [] for pid in grids} for key in ("snap", "mean", "var", "mass", "choice")}

    def record(xbars):
        for pid, g in grids.items():
            m, v = grid_moments(g)
            rec["snap"][pid].append(g.density.copy())
            rec["mean"][pid].append(m)
            rec["var"][pid].append(v)
            rec["mass"][pid].append(g.mass())
            rec["choice"][pid].append(float(xbars[pid][0]))

    t = 0.0
    steps = 0
    xbars = mean_choices(game, grids, params.beta)
    record(xbars)
    for target in times[1:]:
        while t < target:
            dt = min(max_stable_dt(grids, xbars, t, params.lam), target - t)
            grids = pde_step(grids, game, t, dt, params, xbars)
            steps += 1
            t = target if target - (t + dt) <= 1e-12 * max(1.0, target) else t + dt
            xbars = mean_choices(game, grids, params.beta)
        record(xbars)
    return PdeResult(
        times=times,
        snapshots={pid: np.array(v) for pid, v in rec["snap"].items()},
        means={pid: np.array(v) for pid, v in rec["mean"].items()},
        variances={pid: np.array(v) for pid, v in rec["var"].items()},
        masses={pid: np.array(v) for pid, v in rec["mass"].items()},
        choices={pid: np.array(v) for pid, v in rec["choice"].items()},
        steps=steps,
    )


def write_density_csv(path, result: PdeResult) -> None:
    """Long-format density snapshots: one row per (time, node)."""
    pids = list(result.snapshots)
    M = result.snapshots[pids[0]].shape[1] - 1
    nodes = np.linspace(0.0, 1.0, M + 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mu"] + [f"pop{pid}_density" for pid in pids])
        for k, t in enumerate(result.times):
            for n, mu in enumerate(nodes):
                w.writerow([fmt(t), fmt(mu)] + [fmt(result.snapshots[pid][k, n]) for pid in pids])


def write_pde_moment_csv(path, game: PopulationNetworkGame, result: PdeResult) -> None:
    """Grid moments in the moment-trajectory layout (both coordinates of each binary population)."""
    pids = list(result.means)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["t"]
        head += [f"mean_pop{pid}_s{k}" for pid in pids for k in (0, 1)]
        head += [f"var_pop{pid}_s{k}" for pid in pids for k in (0, 1)]
        w.writerow(head)
        for n, t in enumerate(result.times):
            row = [fmt(t)]
            for pid in pids:
                m = result.means[pid][n]
                row += [fmt(m), fmt(1.0 - m)]
            for pid in pids:
                v = result.variances[pid][n]
                row += [fmt(v), fmt(v)]
            w.writerow(row)
