"""Logit fixed points, Lyapunov and potential functions, and monotonicity checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import xlogy
from scipy.stats import qmc

from .dynamics import _utilities, choice, logit
from .game import (
    GameError,
    PopulationNetworkGame,
    coordination_payoffs,
    is_star_forest,
    is_weighted_zero_sum,
)


def qre_map(game: PopulationNetworkGame, profile, beta: float) -> np.ndarray:
    """Logit response of every learning population to the packed profile."""
    return choice(game, np.asarray(profile, dtype=float), beta)


def qre_residual(game: PopulationNetworkGame, profile, beta: float) -> float:
    y = np.asarray(profile, dtype=float)
    return float(np.abs(qre_map(game, y, beta) - y).max())


@dataclass
class QreSolution:
    profile: np.ndarray
    residual: float
    iterations: int
    converged: bool
    residual_monotone: bool

    def to_dict(self, game: PopulationNetworkGame) -> dict:
        return {
            "profile": {str(pid): [float(v) for v in b] for pid, b in zip(game.ids, game.unpack(self.profile))},
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "residual_monotone": self.residual_monotone,
        }


def solve_qre(
    game: PopulationNetworkGame,
    beta: float,
    initial=None,
    damping: float = 0.5,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> QreSolution:
    """Damped fixed-point iteration ``x <- (1 - a) x + a F(x)`` on the logit response map.

    Stops when the max-norm defect ``|F(x) - x|`` is at most ``tol``. If the
    undamped image of the start is already a fixed point it is returned after
    one map application. On non-convergence the best iterate is returned with
    ``converged=False``.
    """
    if not 0 < damping <= 1:
        raise ValueError(f"damping must lie in (0, 1], got {damping}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = game.uniform_profile() if initial is None else game.pinned(np.asarray(initial, dtype=float))
    if x.shape != (game.dim,):
        raise GameError(f"initial profile must have {game.dim} entries")

    fx = qre_map(game, x, beta)
    image_defect = float(np.abs(qre_map(game, fx, beta) - fx).max())
    if image_defect <= tol:
        return QreSolution(fx, image_defect, 1, True, True)

    best, best_res = x, math.inf
    prev = math.inf
    monotone = True
    for it in range(max_iter + 1):
        res = float(np.abs(fx - x).max())
        if res < best_res:
            best, best_res = x, res
        if res > prev * (1 + 1e-12) + 1e-300:
            monotone = False
        prev = res
        if res <= tol:
            return QreSolution(x, res, it, True, monotone)
        if it == max_iter:
            break
        x = game.project(x + damping * (fx - x))
        fx = qre_map(game, x, beta)
    return QreSolution(best, best_res, max_iter, False, monotone)


def interior_starts(game: PopulationNetworkGame, n: int, margin: float = 0.02) -> np.ndarray:
    """``n`` packed interior profiles from an unscrambled Sobol sequence.

    Each learning population with ``S`` strategies uses ``S - 1`` coordinates,
    mapped to the simplex by sorted spacings and kept ``margin`` away from the
    boundary.
    """
    dims = sum(game.sizes[i] - 1 for i in game.learning)
    base = game.uniform_profile()
    if dims == 0:
        return np.tile(game.pinned(base), (n, 1))
    sampler = qmc.Sobol(dims, scramble=False)
    m = max(1, math.ceil(math.log2(max(n, 1))))
    u = sampler.random_base2(m)[:n]
    u = margin + (1 - 2 * margin) * u
    out = np.tile(base, (n, 1))
    col = 0
    for i in game.learning:
        k = game.sizes[i] - 1
        cuts = np.sort(u[:, col:col + k], axis=1)
        edges = np.concatenate([np.zeros((n, 1)), cuts, np.ones((n, 1))], axis=1)
        block = np.diff(edges, axis=1)
        block = (block + margin) / (1 + margin * block.shape[1])
        out[:, game.offsets[i]:game.offsets[i + 1]] = block
        col += k
    return game.pinned(out)


@dataclass
class QreCluster:
    profile: np.ndarray
    residual: float
    count: int


def multistart_qre(
    game: PopulationNetworkGame,
    beta: float,
    n_starts: int = 64,
    cluster_tol: float = 1e-6,
    **solve_kw,
) -> tuple[list[QreCluster], list[QreSolution]]:
    """Solve from a deterministic grid of starts and group converged profiles.

    Profiles within ``cluster_tol`` (max norm) of a cluster's first member
    join that cluster. Clusters are sorted by their profile.
    """
    solutions = [solve_qre(game, beta, x0, **solve_kw) for x0 in interior_starts(game, n_starts)]
    clusters: list[QreCluster] = []
    for sol in solutions:
        if not sol.converged:
            continue
        for c in clusters:
            if np.abs(c.profile - sol.profile).max() <= cluster_tol:
                c.count += 1
                break
        else:
            clusters.append(QreCluster(sol.profile, sol.residual, 1))
    clusters.sort(key=lambda c: tuple(np.round(c.profile, 9)))
    return clusters, solutions


def write_qre_report(path, game: PopulationNetworkGame, beta: float, clusters: Sequence[QreCluster],
                     solutions: Sequence[QreSolution]) -> None:
    doc = {
        "beta": beta,
        "starts": len(solutions),
        "converged": int(sum(s.converged for s in solutions)),
        "cluster_count": len(clusters),
        "clusters": [
            {
                "profile": {str(pid): [float(v) for v in b] for pid, b in zip(game.ids, game.unpack(c.profile))},
                "residual": c.residual,
                "count": c.count,
            }
            for c in clusters
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Lyapunov and potential functions


def entropy_term(x, beta: float) -> np.ndarray:
    """``-(1/beta) sum x ln x`` over the last axis, with 0 ln 0 = 0."""
    if not beta > 0:
        raise ValueError("entropy term needs beta > 0")
    return -xlogy(x, x).sum(axis=-1) / beta


def perturbed_payoff(game: PopulationNetworkGame, pop_id, x_i, beliefs, beta: float) -> float:
    """Expected payoff of ``x_i`` against ``beliefs`` plus the entropy bonus."""
    if not beta > 0:
        raise ValueError("perturbed payoff needs beta > 0")
    i = game.index(pop_id)
    x_i = np.asarray(x_i, dtype=float)
    if x_i.shape != (game.sizes[i],) or np.any(x_i < 0) or abs(x_i.sum() - 1) > 1e-12:
        raise GameError(f"x_i must be a mixed strategy of population {pop_id!r}")
    u = _utilities(game, i, game.unpack(np.asarray(beliefs, dtype=float)))
    return float(x_i @ u + entropy_term(x_i, beta))


def zero_sum_lyapunov(game: PopulationNetworkGame, beliefs, beta: float, weights=None):
    """Weighted gap between the perturbed payoff of the logit response and of the beliefs.

    Non-negative, and zero exactly at a logit fixed point. Static populations
    contribute nothing. ``beliefs`` may carry leading batch axes, in which
    case an array of values is returned.
    """
    ok, residual = is_weighted_zero_sum(game, weights)
    if not ok:
        raise GameError(f"game is not weighted zero-sum (largest payoff sum {residual:g})")
    if not beta > 0:
        raise ValueError("Lyapunov function needs beta > 0")
    w = game.weights if weights is None else np.asarray(weights, dtype=float)
    mu = game.pinned(np.asarray(beliefs, dtype=float))
    blocks = game.unpack(mu)
    total = np.zeros(mu.shape[:-1])
    for i in game.learning:
        if np.any(blocks[i] <= 0):
            raise GameError(f"beliefs about population {game.ids[i]!r} are on the boundary")
        u = _utilities(game, i, blocks)
        x = logit(u, beta)
        gap = ((x - blocks[i]) * u).sum(axis=-1) + entropy_term(x, beta) - entropy_term(blocks[i], beta)
        total = total + w[i] * gap
    return float(total) if total.ndim == 0 else total


def star_potential(game: PopulationNetworkGame, beliefs, beta: float):
    """Sum over star centers of the center's payoff against its leaves plus all entropy terms.

    Payoffs are taken after removing the coordination offsets (which leave
    every logit response unchanged), so the value ascends along the belief
    dynamics of any game that is coordination up to such offsets.
    ``beliefs`` may carry leading batch axes.
    """
    if not is_star_forest(game):
        raise GameError("star potential needs every component to be a star")
    payoffs = coordination_payoffs(game)
    if not beta > 0:
        raise ValueError("star potential needs beta > 0")
    mu = game.pinned(np.asarray(beliefs, dtype=float))
    blocks = game.unpack(mu)
    for i in game.learning:
        if np.any(blocks[i] <= 0):
            raise GameError(f"beliefs about population {game.ids[i]!r} are on the boundary")
    total = np.zeros(mu.shape[:-1])
    for j in game.star_centers():
        total = total + entropy_term(blocks[j], beta)
        for i in game.neighbors[j]:
            total = total + ((blocks[j] @ payoffs[(j, i)]) * blocks[i]).sum(axis=-1) + entropy_term(blocks[i], beta)
    return float(total) if total.ndim == 0 else total


@dataclass
class MonotoneReport:
    ok: bool
    first_violation: int | None
    worst_violation: float
    constant: bool
    strict: bool


def check_monotone(values, direction: str = "decreasing", slack: float = 1e-9) -> MonotoneReport:
    """Check that ``values`` never move against ``direction`` by more than ``slack`` per step.

    ``first_violation`` is the index of the first offending value. ``strict``
    says every step moved in ``direction``; ``constant`` that no step moved
    by more than ``slack``.
    """
    if direction not in ("decreasing", "increasing"):
        raise ValueError(f"direction must be 'decreasing' or 'increasing', got {direction!r}")
    v = np.asarray(values, dtype=float)
    d = np.diff(v)
    against = d if direction == "decreasing" else -d
    bad = np.flatnonzero(against > slack)
    worst = float(against.max()) if d.size else 0.0
    return MonotoneReport(
        ok=bad.size == 0,
        first_violation=int(bad[0]) + 1 if bad.size else None,
        worst_violation=max(worst, 0.0),
        constant=bool(np.all(np.abs(d) <= slack)),
        strict=bool(np.all(against < 0)),
    )
