"""Smooth fictitious play dynamics for homogeneous beliefs, plus the shared integrator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .game import GameError, PopulationNetworkGame


class NumericalError(RuntimeError):
    """A solver produced non-finite values or violated a stability limit."""


@dataclass(frozen=True)
class SfpParams:
    beta: float = 10.0
    lam: float = 10.0

    def __post_init__(self):
        if not math.isfinite(self.beta) or self.beta < 0:
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")


def logit(u, beta: float) -> np.ndarray:
    """Softmax of ``beta * u`` over the last axis, stable for large arguments."""
    z = beta * np.asarray(u, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def utilities(game: PopulationNetworkGame, pop_id, beliefs) -> np.ndarray:
    """Payoff of each pure strategy of ``pop_id`` against the beliefs about its neighbors.

    ``beliefs`` is a packed array ``(..., dim)`` or one vector per population.
    """
    i = game.index(pop_id)
    return _utilities(game, i, _blocks(game, beliefs))


def _blocks(game: PopulationNetworkGame, beliefs) -> list[np.ndarray]:
    if isinstance(beliefs, np.ndarray) and beliefs.ndim >= 1 and beliefs.shape[-1] == game.dim:
        return game.unpack(beliefs)
    blocks = [np.asarray(b, dtype=float) for b in game._as_list(beliefs)]
    for k, b in enumerate(blocks):
        if b.shape[-1] != game.sizes[k]:
            raise GameError(f"belief about population {game.populations[k].id!r} has wrong length")
    return blocks


def _utilities(game: PopulationNetworkGame, i: int, blocks: Sequence[np.ndarray]) -> np.ndarray:
    batch = np.broadcast_shapes(*(b.shape[:-1] for b in blocks)) if blocks else ()
    u = np.zeros(batch + (game.sizes[i],))
    for j in game.neighbors[i]:
        u = u + blocks[j] @ game.payoff[(i, j)].T
    return u


def choice(game: PopulationNetworkGame, y, beta: float) -> np.ndarray:
    """Packed mixed strategies: logit response for learners, fixed strategy otherwise."""
    blocks = game.unpack(y)
    out = np.empty(np.shape(y))
    for k, pop in enumerate(game.populations):
        sl = slice(game.offsets[k], game.offsets[k + 1])
        if pop.fixed is None:
            out[..., sl] = logit(_utilities(game, k, blocks), beta)
        else:
            out[..., sl] = pop.fixed
    return out


def autonomous_rhs(game: PopulationNetworkGame, y, params: SfpParams) -> np.ndarray:
    """Limit dynamics x - mu; zero on static populations."""
    y = np.asarray(y, dtype=float)
    d = choice(game, y, params.beta) - y
    for k, pop in enumerate(game.populations):
        if pop.fixed is not None:
            d[..., game.offsets[k]:game.offsets[k + 1]] = 0.0
    return d


def homogeneous_rhs(game: PopulationNetworkGame, y, t: float, params: SfpParams) -> np.ndarray:
    """Belief dynamics for homogeneous populations in model time ``t``."""
    return autonomous_rhs(game, y, params) / (params.lam + t + 1.0)


def tau_of_t(t, lam: float):
    return np.log((lam + np.asarray(t, dtype=float) + 1.0) / (lam + 1.0))


def t_of_tau(tau, lam: float):
    return (lam + 1.0) * np.expm1(np.asarray(tau, dtype=float))


# ---------------------------------------------------------------------------
# integration


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), ...) packed states

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def rk4_step(rhs: Callable, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    rhs: Callable,
    y0,
    t0: float,
    t1: float,
    step: float,
    *,
    t_eval: Sequence[float] | None = None,
    project: Callable | None = None,
    stop: Callable | None = None,
) -> Trajectory:
    """Classical fixed-step RK4 from ``t0`` to ``t1``.

    Steps are shortened so that the integration lands exactly on ``t1`` and on
    every time in ``t_eval``. States are stored at every step, or only at
    ``t0`` and the ``t_eval`` times when given. ``project`` is applied after
    each step. ``stop(t, y)`` returning True ends the run early; the stopping
    state is stored.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    y = np.array(y0, dtype=float, copy=True)
    if not np.all(np.isfinite(y)):
        raise NumericalError(f"non-finite initial state at t={t0}")

    n_steps = math.ceil((t1 - t0) / step - 1e-9)
    nodes = t0 + step * np.arange(1, n_steps + 1)
    nodes[-1] = t1
    if t_eval is None:
        keep = np.ones(nodes.size, dtype=bool)
    else:
        targets = np.asarray(t_eval, dtype=float)
        if targets.size and (targets.min() < t0 or targets.max() > t1):
            raise ValueError("t_eval must lie within [t0, t1]")
        targets = targets[targets > t0]
        nodes = np.unique(np.concatenate([nodes, targets]))
        keep = np.isin(nodes, targets)

    times, states = [t0], [y.copy()]
    t = t0
    for t_next, store in zip(nodes, keep):
        y = rk4_step(rhs, t, y, t_next - t)
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite state at t={t_next}")
        if project is not None:
            y = project(y)
        t = t_next
        halt = stop is not None and stop(t, y)
        if store or halt:
            times.append(t)
            states.append(y.copy())
        if halt:
            break
    return Trajectory(np.array(times), np.array(states))


def integrate_homogeneous(
    game: PopulationNetworkGame,
    y0,
    t_end: float,
    params: SfpParams,
    *,
    step: float = 1e-2,
    time: str = "tau",
    t_eval: Sequence[float] | None = None,
    project: bool = True,
) -> Trajectory:
    """Integrate the homogeneous belief dynamics up to model time ``t_end``.

    With ``time="tau"`` the autonomous form is stepped in reparameterized
    time and the returned ``times`` are converted back to model time.
    ``y0`` may carry leading batch axes.
    """
    y0 = game.pinned(y0)
    proj = game.project if project else None
    if time == "t":
        return integrate(lambda t, y: homogeneous_rhs(game, y, t, params), y0, 0.0, t_end, step,
                         t_eval=t_eval, project=proj)
    if time != "tau":
        raise ValueError(f"unknown time variable {time!r}")
    tau_eval = None if t_eval is None else tau_of_t(t_eval, params.lam)
    traj = integrate(lambda s, y: autonomous_rhs(game, y, params), y0, 0.0,
                     float(tau_of_t(t_end, params.lam)), step, t_eval=tau_eval, project=proj)
    times = t_of_tau(traj.times, params.lam)
    if t_eval is not None:
        # undo round-off from the two log/exp conversions
        lookup = np.unique(np.concatenate([[0.0], np.asarray(t_eval, dtype=float)]))
        times = lookup[np.abs(times[:, None] - lookup[None, :]).argmin(axis=1)]
    return Trajectory(times, traj.states)


def column_names(game: PopulationNetworkGame, prefix: str = "") -> list[str]:
    return [f"{prefix}pop{p.id}_s{k}" for p in game.populations for k in range(p.strategies)]


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(path, game: PopulationNetworkGame, traj: Trajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + column_names(game))
        for t, y in zip(traj.times, traj.states):
            w.writerow([fmt(t)] + [fmt(v) for v in y])
