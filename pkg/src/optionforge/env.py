"""Small enumerable environments.

Every environment is a tabular MDP stored as a dense ``P[s, a, s']`` tensor
plus episode metadata. Grid layouts index states row-major,
``state = row * cols + col``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import ContractViolation, InvalidSpecError
from .flatkv import format_flat, parse_flat

ROW_TOL = 1e-12

# grid actions shared by four_rooms and point_mass
UP, DOWN, LEFT, RIGHT, STAY = 0, 1, 2, 3, 4
_MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1), STAY: (0, 0)}

# chain actions
CHAIN_LEFT, CHAIN_RIGHT = 0, 1

DOORWAY = -1


class StepResult(NamedTuple):
    next_state: int
    terminated: bool


@dataclass(frozen=True, eq=False)
class EnvSpec:
    name: str
    n_states: int
    n_actions: int
    transition: np.ndarray
    initial_state: int
    feature_of: np.ndarray
    terminal_states: frozenset = frozenset()
    horizon_default: int = 100
    room_of: dict | None = None
    walls: frozenset = frozenset()
    grid_shape: tuple | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "feature_of", np.atleast_2d(np.asarray(self.feature_of, dtype=float)))
        object.__setattr__(self, "terminal_states", frozenset(int(s) for s in self.terminal_states))
        object.__setattr__(self, "walls", frozenset(int(s) for s in self.walls))
        S, A = self.n_states, self.n_actions
        if S < 1 or A < 1:
            raise InvalidSpecError(f"{self.name}: need at least one state and one action")
        if P.shape != (S, A, S):
            raise InvalidSpecError(f"{self.name}: transition shape {P.shape} != {(S, A, S)}")
        if np.any(P < 0.0) or np.any(P > 1.0) or not np.all(np.isfinite(P)):
            raise InvalidSpecError(f"{self.name}: probabilities outside [0, 1]")
        worst = np.max(np.abs(P.sum(axis=2) - 1.0))
        if worst > ROW_TOL:
            raise InvalidSpecError(f"{self.name}: transition rows off by {worst:.3g}")
        if not 0 <= self.initial_state < S:
            raise InvalidSpecError(f"{self.name}: initial_state out of range")
        if self.initial_state in self.terminal_states:
            raise InvalidSpecError(f"{self.name}: initial_state is terminal")
        if any(not 0 <= s < S for s in self.terminal_states | self.walls):
            raise InvalidSpecError(f"{self.name}: terminal/wall state out of range")
        if self.feature_of.shape[0] != S:
            raise InvalidSpecError(f"{self.name}: feature_of has {self.feature_of.shape[0]} rows, expected {S}")
        if self.horizon_default < 1:
            raise InvalidSpecError(f"{self.name}: horizon_default must be positive")
        if self.grid_shape is not None and self.grid_shape[0] * self.grid_shape[1] != S:
            raise InvalidSpecError(f"{self.name}: grid_shape {self.grid_shape} does not cover {S} states")

    @property
    def feature_dim(self) -> int:
        return self.feature_of.shape[1]

    @cached_property
    def _cumulative(self) -> np.ndarray:
        cum = np.cumsum(self.transition, axis=2)
        return cum / cum[:, :, -1:]

    @cached_property
    def open_states(self) -> np.ndarray:
        """States that are not walls, in index order."""
        return np.array([s for s in range(self.n_states) if s not in self.walls], dtype=int)

    def __eq__(self, other):
        if not isinstance(other, EnvSpec):
            return NotImplemented
        return (
            self.name == other.name
            and self.n_states == other.n_states
            and self.n_actions == other.n_actions
            and np.array_equal(self.transition, other.transition)
            and self.initial_state == other.initial_state
            and np.array_equal(self.feature_of, other.feature_of)
            and self.terminal_states == other.terminal_states
            and self.horizon_default == other.horizon_default
            and self.room_of == other.room_of
            and self.walls == other.walls
            and tuple(self.grid_shape or ()) == tuple(other.grid_shape or ())
        )

    __hash__ = None


def step(env: EnvSpec, s: int, a: int, rng: np.random.Generator) -> StepResult:
    if s in env.terminal_states:
        raise ContractViolation(f"step from terminal state {s}")
    if not (0 <= s < env.n_states and 0 <= a < env.n_actions):
        raise ContractViolation(f"invalid state/action ({s}, {a})")
    u = rng.random()
    nxt = int(np.searchsorted(env._cumulative[s, a], u, side="right"))
    nxt = min(nxt, env.n_states - 1)
    return StepResult(nxt, nxt in env.terminal_states)


def reachable_states(env: EnvSpec, start: int) -> set[int]:
    seen = {start}
    frontier = deque([start])
    support = env.transition.sum(axis=1) > 0
    while frontier:
        s = frontier.popleft()
        if s in env.terminal_states:
            continue
        for t in np.flatnonzero(support[s]):
            t = int(t)
            if t not in seen:
                seen.add(t)
                frontier.append(t)
    return seen


def _centroids(rows: int, cols: int) -> np.ndarray:
    ys = -1.0 + (2.0 * np.arange(rows) + 1.0) / rows
    xs = -1.0 + (2.0 * np.arange(cols) + 1.0) / cols
    return np.array([(xs[c], ys[r]) for r in range(rows) for c in range(cols)])


def _grid_transition(rows: int, cols: int, actions, blocked=frozenset()) -> np.ndarray:
    S = rows * cols
    P = np.zeros((S, len(actions), S))
    for s in range(S):
        r, c = divmod(s, cols)
        for i, a in enumerate(actions):
            if s in blocked:
                P[s, i, s] = 1.0
                continue
            dr, dc = _MOVES[a]
            nr, nc = r + dr, c + dc
            t = nr * cols + nc
            if not (0 <= nr < rows and 0 <= nc < cols) or t in blocked:
                t = s
            P[s, i, t] = 1.0
    return P


def make_four_rooms(side: int) -> EnvSpec:
    """Four rooms split by one wall row and one wall column at ``side // 2``.

    Each wall segment has a single doorway cell at its middle. Wall cells are
    kept as (unreachable, self-looping) states so ``S == side**2`` and the
    grid layout maps directly onto state indices. Rooms are labelled 0..3
    (top-left, top-right, bottom-left, bottom-right); doorways get -1.
    """
    if side < 5:
        raise InvalidSpecError(f"four_rooms needs side >= 5, got {side}")
    m = side // 2
    lo_door = (m - 1) // 2
    hi_door = m + 1 + (side - m - 2) // 2
    doors = {(lo_door, m), (hi_door, m), (m, lo_door), (m, hi_door)}
    walls, room_of = set(), {}
    for r in range(side):
        for c in range(side):
            s = r * side + c
            if (r, c) in doors:
                room_of[s] = DOORWAY
            elif r == m or c == m:
                walls.add(s)
            else:
                room_of[s] = 2 * int(r > m) + int(c > m)
    P = _grid_transition(side, side, (UP, DOWN, LEFT, RIGHT), frozenset(walls))
    return EnvSpec(
        name="four_rooms",
        n_states=side * side,
        n_actions=4,
        transition=P,
        initial_state=0,
        feature_of=_centroids(side, side),
        horizon_default=100,
        room_of=room_of,
        walls=frozenset(walls),
        grid_shape=(side, side),
        params={"side": side},
    )


def make_chain(n: int, slip: float = 0.0) -> EnvSpec:
    if n < 2:
        raise InvalidSpecError(f"chain needs n >= 2, got {n}")
    if not 0.0 <= slip <= 0.5:
        raise InvalidSpecError(f"slip must lie in [0, 0.5], got {slip}")
    P = np.zeros((n, 2, n))
    for s in range(n):
        left, right = max(s - 1, 0), min(s + 1, n - 1)
        P[s, CHAIN_LEFT, left] += 1.0 - slip
        P[s, CHAIN_LEFT, right] += slip
        P[s, CHAIN_RIGHT, right] += 1.0 - slip
        P[s, CHAIN_RIGHT, left] += slip
    return EnvSpec(
        name="chain",
        n_states=n,
        n_actions=2,
        transition=P,
        initial_state=(n - 1) // 2,
        feature_of=_centroids(1, n)[:, :1],
        horizon_default=20,
        grid_shape=(1, n),
        params={"n": n, "slip": slip},
    )


def make_point_mass(grid: int) -> EnvSpec:
    """Discretized 2-D point mass on a ``grid x grid`` lattice, starting at the centre."""
    if grid < 3:
        raise InvalidSpecError(f"point_mass needs grid >= 3, got {grid}")
    centre = (grid // 2) * grid + grid // 2
    return EnvSpec(
        name="point_mass",
        n_states=grid * grid,
        n_actions=5,
        transition=_grid_transition(grid, grid, (UP, DOWN, LEFT, RIGHT, STAY)),
        initial_state=centre,
        feature_of=_centroids(grid, grid),
        horizon_default=100,
        grid_shape=(grid, grid),
        params={"grid": grid},
    )


# --- text serialization -----------------------------------------------------

def _join(xs) -> str:
    return ",".join(repr(float(x)) if isinstance(x, (float, np.floating)) else str(int(x)) for x in xs)


def env_to_text(env: EnvSpec) -> str:
    """Serialize to the flat key=value format; transitions are stored sparsely."""
    out: dict[str, object] = {
        "env.name": env.name,
        "env.n_states": env.n_states,
        "env.n_actions": env.n_actions,
        "env.initial_state": env.initial_state,
        "env.horizon_default": env.horizon_default,
        "env.terminal_states": _join(sorted(env.terminal_states)),
        "env.walls": _join(sorted(env.walls)),
        "env.grid_shape": _join(env.grid_shape) if env.grid_shape else "",
        "env.feature_dim": env.feature_dim,
    }
    for s in range(env.n_states):
        out[f"feature.{s}"] = ",".join(repr(float(x)) for x in env.feature_of[s])
    if env.room_of is not None:
        for s in sorted(env.room_of):
            out[f"room.{s}"] = env.room_of[s]
    for s in range(env.n_states):
        for a in range(env.n_actions):
            row = env.transition[s, a]
            out[f"P.{s}.{a}"] = ";".join(f"{t}:{float(row[t])!r}" for t in np.flatnonzero(row))
    return format_flat(out)


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def env_from_text(text: str) -> EnvSpec:
    kv = parse_flat(text)
    try:
        S, A = int(kv["env.n_states"]), int(kv["env.n_actions"])
        P = np.zeros((S, A, S))
        features = [
            [float(x) for x in kv[f"feature.{s}"].split(",")] for s in range(S)
        ]
        for s in range(S):
            for a in range(A):
                for item in kv[f"P.{s}.{a}"].split(";"):
                    t, p = item.split(":")
                    P[s, a, int(t)] = float(p)
        rooms = {int(k.split(".", 1)[1]): int(v) for k, v in kv.items() if k.startswith("room.")}
        grid = _ints(kv.get("env.grid_shape", ""))
        return EnvSpec(
            name=kv["env.name"],
            n_states=S,
            n_actions=A,
            transition=P,
            initial_state=int(kv["env.initial_state"]),
            feature_of=np.array(features),
            terminal_states=frozenset(_ints(kv.get("env.terminal_states", ""))),
            horizon_default=int(kv.get("env.horizon_default", 100)),
            room_of=rooms or None,
            walls=frozenset(_ints(kv.get("env.walls", ""))),
            grid_shape=tuple(grid) if grid else None,
        )
    except (KeyError, ValueError, IndexError) as exc:
        raise InvalidSpecError(f"malformed environment file: {exc}") from exc


def make_env(name: str, **params) -> EnvSpec:
    """Build a named environment from string or numeric parameters."""
    if name == "four_rooms":
        return make_four_rooms(int(params.get("side", 11)))
    if name == "chain":
        return make_chain(int(params.get("n", 5)), float(params.get("slip", 0.0)))
    if name == "point_mass":
        return make_point_mass(int(params.get("grid", 5)))
    if name == "file":
        with open(params["path"], encoding="utf-8") as fh:
            return env_from_text(fh.read())
    raise InvalidSpecError(f"unknown environment {name!r}")
