"""Population network games.

A game is a graph whose vertices are populations of agents and whose edges
carry a pair of payoff matrices. Populations may carry a fixed mixed strategy,
in which case they never learn and every solver substitutes that strategy.

Beliefs and strategy profiles are handled in *packed* form: one flat vector
holding the probability vector of every population back to back, in the order
of ``game.populations``. ``PopulationNetworkGame.pack`` and ``unpack`` convert
between the two forms; ``unpack`` also accepts arrays with leading batch axes.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Mapping, Sequence

import numpy as np

SIMPLEX_TOL = 1e-12
ZERO_SUM_TOL = 1e-9
COORDINATION_TOL = 1e-12
MAX_PURE_PROFILES = 2**20


class GameError(ValueError):
    """Invalid game definition or profile."""


def check_simplex(x, name: str = "strategy", tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Return ``x`` as a float array, raising unless it lies on the simplex."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise GameError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(arr)):
        raise GameError(f"{name} has non-finite entries")
    if arr.min() < 0:
        raise GameError(f"{name} has negative entries: {arr.tolist()}")
    if abs(arr.sum() - 1.0) > tol:
        raise GameError(f"{name} does not sum to 1 (sum={arr.sum()!r})")
    return arr


@dataclass(frozen=True, eq=False)
class Population:
    id: Hashable
    strategies: int
    fixed: np.ndarray | None = None
    labels: tuple[str, ...] | None = None

    @property
    def learns(self) -> bool:
        return self.fixed is None


@dataclass(frozen=True, eq=False)
class Edge:
    source: Hashable
    target: Hashable
    payoff_source: np.ndarray  # |S_source| x |S_target|
    payoff_target: np.ndarray  # |S_target| x |S_source|


class PopulationNetworkGame:
    """Immutable population network game.

    Args:
        populations: population descriptors; ids must be unique.
        edges: at most one edge per unordered pair of distinct populations.
        weights: positive weight per population, aligned with ``populations``.
            Defaults to all ones.
    """

    def __init__(
        self,
        populations: Sequence[Population],
        edges: Sequence[Edge],
        weights: Sequence[float] | None = None,
    ):
        self.populations: tuple[Population, ...] = tuple(populations)
        self.edges: tuple[Edge, ...] = tuple(edges)
        n = len(self.populations)
        if n == 0:
            raise GameError("a game needs at least one population")

        self._index: dict[Hashable, int] = {}
        for k, pop in enumerate(self.populations):
            if pop.id in self._index:
                raise GameError(f"duplicate population id {pop.id!r}")
            if int(pop.strategies) < 1:
                raise GameError(f"population {pop.id!r} needs at least one strategy")
            if pop.fixed is not None:
                fixed = check_simplex(pop.fixed, f"fixed strategy of population {pop.id!r}")
                if fixed.size != pop.strategies:
                    raise GameError(f"fixed strategy of population {pop.id!r} has wrong length")
                fixed.setflags(write=False)
                object.__setattr__(pop, "fixed", fixed)
            if pop.labels is not None and len(pop.labels) != pop.strategies:
                raise GameError(f"population {pop.id!r} has {len(pop.labels)} labels")
            self._index[pop.id] = k

        if weights is None:
            weights = [1.0] * n
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise GameError(f"expected {n} weights, got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise GameError("all weights must be finite and positive")
        w.setflags(write=False)
        self.weights = w

        self.sizes = tuple(int(p.strategies) for p in self.populations)
        self.offsets = tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.sizes)]))
        self.dim = self.offsets[-1]

        # payoff[(i, j)] is the payoff matrix of population index i against j
        self.payoff: dict[tuple[int, int], np.ndarray] = {}
        neighbors: list[list[int]] = [[] for _ in range(n)]
        for e in self.edges:
            if e.source not in self._index or e.target not in self._index:
                raise GameError(f"edge ({e.source!r}, {e.target!r}) references an unknown population")
            i, j = self._index[e.source], self._index[e.target]
            if i == j:
                raise GameError(f"self-loop on population {e.source!r}")
            if (i, j) in self.payoff:
                raise GameError(f"more than one edge between {e.source!r} and {e.target!r}")
            a_ij = _finite_matrix(e.payoff_source, (self.sizes[i], self.sizes[j]), e, "payoff_from_to")
            a_ji = _finite_matrix(e.payoff_target, (self.sizes[j], self.sizes[i]), e, "payoff_to_from")
            self.payoff[(i, j)] = a_ij
            self.payoff[(j, i)] = a_ji
            neighbors[i].append(j)
            neighbors[j].append(i)
        self.neighbors: tuple[tuple[int, ...], ...] = tuple(tuple(sorted(nb)) for nb in neighbors)

    # -- lookup ---------------------------------------------------------
    def index(self, pop_id: Hashable) -> int:
        try:
            return self._index[pop_id]
        except KeyError:
            raise GameError(f"unknown population id {pop_id!r}") from None

    @property
    def ids(self) -> tuple[Hashable, ...]:
        return tuple(p.id for p in self.populations)

    @property
    def learning(self) -> tuple[int, ...]:
        """Indices of populations that learn."""
        return tuple(k for k, p in enumerate(self.populations) if p.learns)

    def __len__(self) -> int:
        return len(self.populations)

    # -- packed profiles ------------------------------------------------
    def unpack(self, y) -> list[np.ndarray]:
        """Split a packed array ``(..., dim)`` into per-population views."""
        y = np.asarray(y)
        return [y[..., a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def pack(self, vectors) -> np.ndarray:
        """Pack one vector per population (list or mapping by id) into one array."""
        vecs = self._as_list(vectors)
        return np.concatenate([np.asarray(v, dtype=float) for v in vecs], axis=-1)

    def profile(self, vectors) -> np.ndarray:
        """Validated packed profile with static populations pinned to their fixed strategy."""
        vecs = self._as_list(vectors)
        out = []
        for k, (pop, v) in enumerate(zip(self.populations, vecs)):
            arr = check_simplex(v, f"profile entry of population {pop.id!r}")
            if arr.size != self.sizes[k]:
                raise GameError(f"population {pop.id!r} expects {self.sizes[k]} entries, got {arr.size}")
            out.append(arr)
        return self.pinned(np.concatenate(out))

    def pinned(self, y) -> np.ndarray:
        """Copy of packed ``y`` with static populations set to their fixed strategy."""
        y = np.array(y, dtype=float, copy=True)
        for k, pop in enumerate(self.populations):
            if pop.fixed is not None:
                y[..., self.offsets[k]:self.offsets[k + 1]] = pop.fixed
        return y

    def uniform_profile(self) -> np.ndarray:
        return self.pinned(np.concatenate([np.full(s, 1.0 / s) for s in self.sizes]))

    def project(self, y, tol: float = SIMPLEX_TOL) -> np.ndarray:
        """Clip negatives and renormalize the blocks whose drift exceeds ``tol``."""
        y = np.array(y, dtype=float, copy=True)
        for a, b in zip(self.offsets[:-1], self.offsets[1:]):
            block = y[..., a:b]
            drift = np.abs(block.sum(axis=-1) - 1.0)
            bad = (drift > tol) | np.any(block < 0, axis=-1)
            if np.any(bad):
                fixed = np.clip(block, 0.0, None)
                fixed /= fixed.sum(axis=-1, keepdims=True)
                block[...] = np.where(bad[..., None], fixed, block)
        return y

    def _as_list(self, vectors) -> list:
        if isinstance(vectors, Mapping):
            missing = [p.id for p in self.populations if p.id not in vectors]
            if missing:
                raise GameError(f"profile is missing populations {missing}")
            return [vectors[p.id] for p in self.populations]
        vecs = list(vectors)
        if len(vecs) != len(self.populations):
            raise GameError(f"profile has {len(vecs)} entries for {len(self.populations)} populations")
        return vecs

    # -- structure ------------------------------------------------------
    def components(self) -> list[list[int]]:
        seen: set[int] = set()
        comps = []
        for start in range(len(self)):
            if start in seen:
                continue
            stack, comp = [start], []
            seen.add(start)
            while stack:
                k = stack.pop()
                comp.append(k)
                for nb in self.neighbors[k]:
                    if nb not in seen:
                        seen.add(nb)
                        stack.append(nb)
            comps.append(sorted(comp))
        return comps

    def star_centers(self) -> list[int] | None:
        """One center per connected component, or None if some component is not a star."""
        centers = []
        for comp in self.components():
            if len(comp) <= 2:
                centers.append(comp[0])
                continue
            hubs = [k for k in comp if len(self.neighbors[k]) == len(comp) - 1]
            leaves_ok = all(len(self.neighbors[k]) == 1 for k in comp if k not in hubs[:1])
            if len(hubs) != 1 or not leaves_ok:
                return None
            centers.append(hubs[0])
        return centers

    # -- equality / serialization --------------------------------------
    def __eq__(self, other) -> bool:
        if not isinstance(other, PopulationNetworkGame):
            return NotImplemented
        if self.ids != other.ids or self.sizes != other.sizes:
            return False
        if not np.array_equal(self.weights, other.weights):
            return False
        for p, q in zip(self.populations, other.populations):
            if (p.fixed is None) != (q.fixed is None) or p.labels != q.labels:
                return False
            if p.fixed is not None and not np.array_equal(p.fixed, q.fixed):
                return False
        if self.payoff.keys() != other.payoff.keys():
            return False
        return all(np.array_equal(m, other.payoff[key]) for key, m in self.payoff.items())

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"PopulationNetworkGame(populations={list(self.ids)}, edges={len(self.edges)})"

    def to_dict(self) -> dict:
        pops = []
        for p in self.populations:
            d: dict = {"id": p.id, "strategies": p.strategies}
            if p.labels is not None:
                d["labels"] = list(p.labels)
            if p.fixed is not None:
                d["fixed"] = p.fixed.tolist()
            pops.append(d)
        edges = [
            {
                "from": e.source,
                "to": e.target,
                "payoff_from_to": self.payoff[(self.index(e.source), self.index(e.target))].tolist(),
                "payoff_to_from": self.payoff[(self.index(e.target), self.index(e.source))].tolist(),
            }
            for e in self.edges
        ]
        return {"populations": pops, "edges": edges, "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PopulationNetworkGame":
        try:
            pops = [
                Population(
                    id=p["id"],
                    strategies=_strategy_count(p),
                    fixed=None if p.get("fixed") is None else _finite_vector(p["fixed"]),
                    labels=_labels(p),
                )
                for p in doc["populations"]
            ]
            edges = [
                Edge(e["from"], e["to"], np.asarray(e["payoff_from_to"], dtype=float),
                     np.asarray(e["payoff_to_from"], dtype=float))
                for e in doc.get("edges", [])
            ]
        except (KeyError, TypeError) as exc:
            raise GameError(f"malformed game document: {exc!r}") from exc
        weights = doc.get("weights")
        if isinstance(weights, Mapping):
            weights = [weights[str(p.id)] if str(p.id) in weights else weights[p.id] for p in pops]
        return cls(pops, edges, weights)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "PopulationNetworkGame":
        return cls.from_dict(_strict_json(text))

    @classmethod
    def load(cls, path) -> "PopulationNetworkGame":
        return cls.loads(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")


def _reject_constant(name: str):
    raise GameError(f"non-finite number {name} in JSON input")


def _finite_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise GameError(f"number {text} overflows to infinity")
    return value


def _strict_json(text: str):
    try:
        return json.loads(text, parse_constant=_reject_constant, parse_float=_finite_float)
    except json.JSONDecodeError as exc:
        raise GameError(f"invalid JSON: {exc}") from exc


def _strategy_count(p: Mapping) -> int:
    s = p["strategies"]
    if isinstance(s, list):
        return len(s)
    if isinstance(s, bool) or not isinstance(s, int):
        raise GameError(f"population {p.get('id')!r}: strategies must be an integer or a list of labels")
    return s


def _labels(p: Mapping):
    if isinstance(p["strategies"], list):
        return tuple(str(s) for s in p["strategies"])
    if p.get("labels") is not None:
        return tuple(str(s) for s in p["labels"])
    return None


def _finite_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise GameError("non-finite entry in vector")
    return arr


def _finite_matrix(m, shape, edge: Edge, name: str) -> np.ndarray:
    arr = np.array(m, dtype=float, copy=True)
    if arr.shape != shape:
        raise GameError(
            f"edge ({edge.source!r}, {edge.target!r}): {name} has shape {arr.shape}, expected {shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise GameError(f"edge ({edge.source!r}, {edge.target!r}): {name} has non-finite entries")
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# payoffs and classification


def expected_payoff(game: PopulationNetworkGame, pop_id, profile) -> float:
    """Expected payoff of population ``pop_id`` under a mixed profile.

    ``profile`` is one mixed strategy per population (sequence in game order
    or mapping by id). Populations without edges earn 0.
    """
    i = game.index(pop_id)
    xs = game._as_list(profile)
    vecs = []
    for k, x in enumerate(xs):
        arr = np.asarray(x, dtype=float)
        if arr.shape != (game.sizes[k],):
            raise GameError(f"profile entry for population {game.populations[k].id!r} has shape {arr.shape}")
        vecs.append(arr)
    return float(sum(vecs[i] @ game.payoff[(i, j)] @ vecs[j] for j in game.neighbors[i]))


def is_weighted_zero_sum(game: PopulationNetworkGame, weights=None) -> tuple[bool, float]:
    """Decide whether the weighted payoff sum vanishes on the whole product of simplices.

    The weighted sum is multilinear in the populations' strategies, so it
    vanishes everywhere iff it vanishes at every pure profile; all of them are
    enumerated. Returns the decision and the largest absolute value found.
    """
    w = game.weights if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(game),):
        raise GameError(f"expected {len(game)} weights")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise GameError("weights must be positive")
    if math.prod(game.sizes) > MAX_PURE_PROFILES:
        raise GameError(f"more than {MAX_PURE_PROFILES} pure profiles; enumeration refused")

    n = len(game)
    total = np.zeros(game.sizes)
    for (i, j), a in game.payoff.items():
        shape = [1] * n
        shape[i], shape[j] = game.sizes[i], game.sizes[j]
        term = a if i < j else a.T
        total = total + w[i] * term.reshape(shape)
    residual = float(np.abs(total).max()) if total.size else 0.0
    return residual <= ZERO_SUM_TOL, residual


def coordination_offsets(game: PopulationNetworkGame, tol: float = COORDINATION_TOL):
    """Per-edge column offsets that turn the game into an exact coordination game.

    Subtracting a constant ``c[r]`` from column ``r`` of ``A_ij`` adds the same
    amount to every utility of population ``i`` and so leaves all logit
    responses unchanged. Returns ``{(i, j): c}`` (minimum-norm choice) with
    ``A_ij - 1 c^T == (A_ji - 1 c'^T)^T`` on every edge, or None if no such
    offsets exist.
    """
    out = {}
    for (i, j) in game.payoff:
        if i > j:
            continue
        a, b = game.payoff[(i, j)], game.payoff[(j, i)]
        m, n = a.shape
        # unknowns: c_ij (n entries) then c_ji (m entries); a[r, s] - c_ij[s] == b[s, r] - c_ji[r]
        lhs = np.zeros((m * n, n + m))
        for r in range(m):
            for s_ in range(n):
                lhs[r * n + s_, s_] = 1.0
                lhs[r * n + s_, n + r] = -1.0
        rhs = (a - b.T).ravel()
        sol = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
        if np.abs(lhs @ sol - rhs).max() > tol * max(1.0, np.abs(rhs).max()):
            return None
        out[(i, j)] = sol[:n]
        out[(j, i)] = sol[n:]
    return out


def is_coordination(game: PopulationNetworkGame, exact: bool = False) -> bool:
    """Whether every edge has ``A_ij = A_ji^T``.

    With ``exact=False`` the test is up to column offsets that do not change
    any population's logit response (see ``coordination_offsets``); a
    symmetric game like the stag hunt then qualifies.
    """
    if not exact:
        return coordination_offsets(game) is not None
    return all(
        np.abs(game.payoff[(i, j)] - game.payoff[(j, i)].T).max() <= COORDINATION_TOL
        for (i, j) in game.payoff
        if i < j
    )


def coordination_payoffs(game: PopulationNetworkGame) -> dict:
    """Payoff matrices with coordination offsets removed; raises if none exist."""
    offsets = coordination_offsets(game)
    if offsets is None:
        raise GameError("game is not a coordination game, even up to payoff offsets")
    return {key: a - offsets[key][None, :] for key, a in game.payoff.items()}


def is_star_forest(game: PopulationNetworkGame) -> bool:
    return game.star_centers() is not None


def iter_pure_profiles(game: PopulationNetworkGame):
    return itertools.product(*(range(s) for s in game.sizes))


# ---------------------------------------------------------------------------
# benchmark games


def stag_hunt() -> PopulationNetworkGame:
    """Two-population stag hunt; strategies (H, S).

    The game is symmetric: both populations get ``a[own, other]``, so hunting
    hare against a stag hunter pays 2 and hunting stag alone pays 0.
    """
    a = np.array([[1.0, 2.0], [0.0, 4.0]])
    pops = [Population(1, 2, labels=("H", "S")), Population(2, 2, labels=("H", "S"))]
    return PopulationNetworkGame(pops, [Edge(1, 2, a, a.copy())], [1.0, 1.0])


def asymmetric_matching_pennies() -> PopulationNetworkGame:
    """Five populations on a line; the end populations play pure H and pure T.

    Every population gets the match matrix against its successor and the
    mismatch matrix against its predecessor, which makes the game zero-sum
    with unit weights.
    """
    match = np.array([[1.0, -1.0], [-1.0, 1.0]])
    labels = ("H", "T")
    pops = [Population(1, 2, fixed=np.array([1.0, 0.0]), labels=labels)]
    pops += [Population(k, 2, labels=labels) for k in (2, 3, 4)]
    pops += [Population(5, 2, fixed=np.array([0.0, 1.0]), labels=labels)]
    edges = [Edge(k, k + 1, match, -match) for k in range(1, 5)]
    return PopulationNetworkGame(pops, edges, [1.0] * 5)


BUILTIN_GAMES = {
    "stag_hunt": stag_hunt,
    "matching_pennies": asymmetric_matching_pennies,
}


def load_game(name_or_path) -> PopulationNetworkGame:
    """A builtin game by name, or a game-spec JSON file."""
    key = str(name_or_path)
    if key in BUILTIN_GAMES:
        return BUILTIN_GAMES[key]()
    path = Path(key)
    if not path.exists():
        raise FileNotFoundError(f"game file not found: {key}")
    return PopulationNetworkGame.load(path)
