"""Mean and variance dynamics of heterogeneous beliefs under a second-order moment closure.

Packed moment states are arrays ``(..., 2 * game.dim)``: the packed mean
beliefs followed by the packed per-coordinate belief variances.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import (
    SfpParams,
    Trajectory,
    _blocks,
    _utilities,
    column_names,
    fmt,
    integrate,
    logit,
    t_of_tau,
    tau_of_t,
)
from .game import GameError, PopulationNetworkGame, check_simplex

BOUND_SLACK = 1e-9


@dataclass
class MomentState:
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.variance = np.asarray(self.variance, dtype=float)
        if self.mean.shape != self.variance.shape:
            raise GameError("mean and variance must have the same shape")
        if np.any(self.variance < 0):
            raise GameError("variances must be non-negative")
        excess = self.variance - self.mean * (1.0 - self.mean)
        if np.any(excess > BOUND_SLACK):
            k = int(np.argmax(excess))
            raise GameError(
                f"variance {self.variance.flat[k]:g} exceeds the bound mean*(1-mean) "
                f"= {(self.mean * (1 - self.mean)).flat[k]:g} at coordinate {k}"
            )

    @classmethod
    def create(cls, game: PopulationNetworkGame, mean, variance) -> "MomentState":
        """Validated state; static populations get their fixed mean and zero variance."""
        m = np.asarray(mean, dtype=float) if np.shape(mean) == (game.dim,) else game.pack(mean)
        m = game.pinned(m)
        for k, block in enumerate(game.unpack(m)):
            check_simplex(block, f"mean belief about population {game.populations[k].id!r}")
        v = np.broadcast_to(np.asarray(variance, dtype=float), (game.dim,)).copy()
        for k, pop in enumerate(game.populations):
            if pop.fixed is not None:
                v[game.offsets[k]:game.offsets[k + 1]] = 0.0
        return cls(m, v)

    def packed(self) -> np.ndarray:
        return np.concatenate([self.mean, self.variance], axis=-1)


@dataclass
class LogitHessianReport:
    """Diagonal second derivatives of one population's logit response.

    ``values[j][s, r]`` is the second derivative of choice probability ``s``
    with respect to the belief coordinate ``r`` about neighbor ``j``.
    """

    population: object
    values: dict = field(default_factory=dict)


def _hessian_blocks(game: PopulationNetworkGame, i: int, blocks, beta: float):
    """Logit response of population ``i`` and its Hessian diagonal per neighbor.

    Returns ``(f, {j: H})`` where ``H`` has shape ``(..., |S_i|, |S_j|)``.
    """
    f = logit(_utilities(game, i, blocks), beta)
    out = {}
    for j in game.neighbors[i]:
        d = beta * game.payoff[(i, j)]  # column r is the direction of dg/dmu_jr
        second = (d - (f @ d)[..., None, :]) ** 2
        spread = (f[..., None, :] @ second)
        out[j] = f[..., :, None] * (second - spread)
    return f, out


def logit_hessian_diag(game: PopulationNetworkGame, pop_id, beliefs, beta: float) -> LogitHessianReport:
    i = game.index(pop_id)
    _, h = _hessian_blocks(game, i, _blocks(game, beliefs), beta)
    return LogitHessianReport(game.ids[i], {game.ids[j]: v for j, v in h.items()})


def _closure_drift(game: PopulationNetworkGame, means, variances, beta: float) -> np.ndarray:
    """Packed f(mean) - mean + 0.5 * sum of Hessian diagonal times variance; zero on static blocks."""
    blocks = game.unpack(means)
    vblocks = game.unpack(variances)
    out = np.zeros(np.broadcast_shapes(np.shape(means), np.shape(variances)))
    for i in game.learning:
        f, h = _hessian_blocks(game, i, blocks, beta)
        x = f.copy()
        for j, hj in h.items():
            x = x + 0.5 * (hj @ vblocks[j][..., None])[..., 0]
        out[..., game.offsets[i]:game.offsets[i + 1]] = x - blocks[i]
    return out


def closure_choice(game: PopulationNetworkGame, means, variances, beta: float) -> np.ndarray:
    """Packed population-mean mixed strategies implied by the closure; fixed strategies for static populations."""
    means = np.asarray(means, dtype=float)
    return game.pinned(_closure_drift(game, means, np.asarray(variances, dtype=float), beta) + means)


def _static_mask(game: PopulationNetworkGame) -> np.ndarray:
    mask = np.zeros(game.dim, dtype=bool)
    for k, pop in enumerate(game.populations):
        if pop.fixed is not None:
            mask[game.offsets[k]:game.offsets[k + 1]] = True
    return mask


def mean_variance_rhs(game: PopulationNetworkGame, state, t: float, params: SfpParams) -> np.ndarray:
    """Time derivative of a packed moment state in model time ``t``."""
    y = state.packed() if isinstance(state, MomentState) else np.asarray(state, dtype=float)
    means, variances = y[..., :game.dim], y[..., game.dim:]
    scale = 1.0 / (params.lam + t + 1.0)
    dvar = -2.0 * variances * scale
    dvar[..., _static_mask(game)] = 0.0
    return np.concatenate([_closure_drift(game, means, variances, params.beta) * scale, dvar], axis=-1)


def variance_closed_form(sigma2, lam: float, t):
    """Belief variance at time ``t`` from initial variance ``sigma2``."""
    t = np.asarray(t, dtype=float)
    return ((lam + 1.0) / (lam + t + 1.0)) ** 2 * np.asarray(sigma2, dtype=float)


def tau_mean_rhs(game: PopulationNetworkGame, means, tau: float, params: SfpParams, sigma2) -> np.ndarray:
    """Mean dynamics in reparameterized time with variances ``sigma2 * exp(-2 tau)``."""
    var = np.asarray(sigma2, dtype=float) * np.exp(-2.0 * tau)
    return _closure_drift(game, np.asarray(means, dtype=float), var, params.beta)


def beta_moments(a: float, b: float) -> tuple[float, float]:
    if not (a > 0 and b > 0):
        raise ValueError(f"Beta parameters must be positive, got ({a}, {b})")
    s = a + b
    return a / s, a * b / (s * s * (s + 1.0))


@dataclass
class MomentTrajectory:
    times: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __len__(self) -> int:
        return len(self.times)


def integrate_moments(
    game: PopulationNetworkGame,
    initial: MomentState,
    t_end: float,
    params: SfpParams,
    *,
    step: float = 1e-2,
    time: str = "tau",
    t_eval: Sequence[float] | None = None,
) -> MomentTrajectory:
    """Integrate the closed mean and variance dynamics up to model time ``t_end``.

    ``time="t"`` steps the coupled mean/variance system in model time.
    ``time="tau"`` steps the means in reparameterized time, where the
    variance has the exact solution ``sigma2 * exp(-2 tau)``. A state with
    leading batch axes integrates every member side by side.
    """
    if time == "t":
        def proj(y):
            return np.concatenate([game.project(y[:game.dim]), y[game.dim:]])

        traj = integrate(lambda t, y: mean_variance_rhs(game, y, t, params), initial.packed(),
                         0.0, t_end, step, t_eval=t_eval, project=proj)
        return MomentTrajectory(traj.times, traj.states[:, :game.dim], traj.states[:, game.dim:])
    if time != "tau":
        raise ValueError(f"unknown time variable {time!r}")
    sigma2 = initial.variance
    tau_eval = None if t_eval is None else tau_of_t(t_eval, params.lam)
    traj = integrate(lambda s, y: tau_mean_rhs(game, y, s, params, sigma2), initial.mean, 0.0,
                     float(tau_of_t(t_end, params.lam)), step, t_eval=tau_eval, project=game.project)
    times = t_of_tau(traj.times, params.lam)
    if t_eval is not None:
        lookup = np.unique(np.concatenate([[0.0], np.asarray(t_eval, dtype=float)]))
        times = lookup[np.abs(times[:, None] - lookup[None, :]).argmin(axis=1)]
    decay = np.exp(-2.0 * traj.times).reshape((-1,) + (1,) * sigma2.ndim)
    variances = decay * sigma2[None]
    return MomentTrajectory(times, traj.states, variances)


def write_moment_csv(path, game: PopulationNetworkGame, traj: MomentTrajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + column_names(game, "mean_") + column_names(game, "var_"))
        for t, m, v in zip(traj.times, traj.means, traj.variances):
            w.writerow([fmt(t)] + [fmt(a) for a in m] + [fmt(a) for a in v])


def as_trajectory(traj: MomentTrajectory) -> Trajectory:
    return Trajectory(traj.times, traj.means)


__all__ = [
    "MomentState",
    "LogitHessianReport",
    "logit_hessian_diag",
    "mean_variance_rhs",
    "closure_choice",
    "variance_closed_form",
    "tau_mean_rhs",
    "beta_moments",
    "MomentTrajectory",
    "integrate_moments",
    "write_moment_csv",
]
