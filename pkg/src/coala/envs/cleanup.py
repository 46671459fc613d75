"""CleanUp-lite: a small two-player orchard/river grid with pollution and zapping.

Column 0 is the orchard (apples spawn there), the last column is the river
(dirt accumulates there).  Each step applies, in order: dirt spawn, apple
spawn, harvest, clean, zap, movement, timer countdown.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import StepResult

EMPTY, APPLE, DIRT = 0, 1, 2
RIGHT, LEFT, UP, DOWN, ZAP, NOOP = range(6)
ACTION_NAMES = ("right", "left", "up", "down", "zap", "noop")
# (row, col) offsets per movement action
_MOVES = np.array([[0, 1], [0, -1], [-1, 0], [1, 0], [0, 0], [0, 0]])


@dataclass(frozen=True)
class CleanupConfig:
    rows: int = 5
    cols: int = 4
    p_pollution: float = 0.35
    apple_threshold: float = 3.0
    p_zap: float = 0.9
    t_zap: int = 5
    zap_range: int = 2
    initial_dirt: int = 3
    horizon: int = 64

    def __post_init__(self):
        if self.rows < 1 or self.cols < 2:
            raise ValueError("grid needs at least one row and two columns")
        if not 0 <= self.initial_dirt <= self.rows:
            raise ValueError("initial_dirt must fit in the river column")
        for name in ("p_pollution", "p_zap"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        if self.t_zap < 0 or self.horizon < 1 or self.apple_threshold <= 0:
            raise ValueError("t_zap, horizon and apple_threshold must be positive")


@dataclass(frozen=True)
class CleanupState:
    grid: np.ndarray    # (..., rows, cols) of EMPTY / APPLE / DIRT
    pos: np.ndarray     # (..., 2, 2) agent (row, col)
    timer: np.ndarray   # (..., 2) remaining frozen steps
    t: int


def _pick_free(free: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform index among True entries along the last axis (arbitrary if none)."""
    keys = rng.random(free.shape)
    return np.argmax(np.where(free, keys, -1.0), axis=-1)


class CleanupEnv:
    n_actions = 6

    def __init__(self, config: CleanupConfig | None = None):
        self.cfg = config or CleanupConfig()
        self.horizon = self.cfg.horizon
        self.n_cells = self.cfg.rows * self.cfg.cols
        self.obs_dim = 2 * self.n_cells + 3 * self.n_cells + 2

    @property
    def river(self) -> int:
        return self.cfg.cols - 1

    def reset(self, rng: np.random.Generator, batch: tuple = ()):
        cfg = self.cfg
        grid = np.zeros(batch + (cfg.rows, cfg.cols), dtype=np.int64)
        # choose initial_dirt distinct river rows per environment
        order = np.argsort(rng.random(batch + (cfg.rows,)), axis=-1)[..., :cfg.initial_dirt]
        river = np.zeros(batch + (cfg.rows,), dtype=np.int64)
        np.put_along_axis(river, order, DIRT, axis=-1)
        grid[..., self.river] = river
        cells = rng.integers(0, self.n_cells, size=batch + (2,))
        pos = np.stack([cells // cfg.cols, cells % cfg.cols], axis=-1)
        state = CleanupState(grid, pos, np.zeros(batch + (2,), dtype=np.int64), 0)
        return state, self.observe(state)

    def observe(self, state: CleanupState) -> np.ndarray:
        cfg = self.cfg
        flat = state.pos[..., 0] * cfg.cols + state.pos[..., 1]  # (..., 2)
        pos_hot = np.eye(self.n_cells)[flat]                       # (..., 2, n_cells)
        grid_hot = np.eye(3)[state.grid.reshape(state.grid.shape[:-2] + (-1,))]
        grid_hot = grid_hot.reshape(grid_hot.shape[:-2] + (-1,))
        frozen = (state.timer > 0).astype(np.float64)
        per_agent = []
        for i in (0, 1):
            j = 1 - i
            per_agent.append(np.concatenate(
                [pos_hot[..., i, :], pos_hot[..., j, :], grid_hot, frozen[..., i:i + 1], frozen[..., j:j + 1]],
                axis=-1))
        return np.stack(per_agent, axis=-2)

    def step(self, state: CleanupState, actions: np.ndarray, rng: np.random.Generator):
        cfg = self.cfg
        actions = np.asarray(actions)
        if np.any((actions < 0) | (actions >= 6)):
            raise ValueError("CleanUp actions must lie in 0..5")
        if state.t >= self.horizon:
            raise ValueError("episode already finished")
        grid = state.grid.copy()
        pos = state.pos.copy()
        timer = state.timer.copy()
        batch = grid.shape[:-2]
        bidx = tuple(np.indices(batch))

        # 1. pollution
        river = grid[..., self.river]
        free = river == EMPTY
        spawn = (rng.random(batch) < cfg.p_pollution) & free.any(axis=-1)
        row = _pick_free(free, rng)
        river_new = river.copy()
        np.put_along_axis(river_new, row[..., None], DIRT, axis=-1)
        grid[..., self.river] = np.where(spawn[..., None], river_new, river)

        # 2. apples, with probability decreasing in the dirt count
        dirt = (grid[..., self.river] == DIRT).sum(axis=-1)
        p_apple = 1.0 - np.minimum(1.0, dirt / cfg.apple_threshold)
        orchard = grid[..., 0]
        free = orchard == EMPTY
        spawn_apple = (rng.random(batch) < p_apple) & free.any(axis=-1)
        row = _pick_free(free, rng)
        orchard_new = orchard.copy()
        np.put_along_axis(orchard_new, row[..., None], APPLE, axis=-1)
        grid[..., 0] = np.where(spawn_apple[..., None], orchard_new, orchard)

        active = timer == 0
        rewards = np.zeros(batch + (2,))
        harvested = np.zeros(batch + (2,), dtype=bool)
        cleaned = np.zeros(batch + (2,), dtype=bool)
        # 3. harvest and 4. clean, in agent order
        for kind, out in ((APPLE, harvested), (DIRT, cleaned)):
            for i in (0, 1):
                r, c = pos[..., i, 0], pos[..., i, 1]
                cell = grid[bidx + (r, c)]
                hit = active[..., i] & (cell == kind)
                out[..., i] = hit
                grid[bidx + (r, c)] = np.where(hit, EMPTY, cell)
        rewards += harvested

        # 5. zap, attempted by agents active at the start of the step
        zap_try = active & (actions == ZAP)
        zap_hit = np.zeros(batch + (2,), dtype=bool)
        dist = np.abs(pos[..., 0, :] - pos[..., 1, :]).max(axis=-1)
        for i in (0, 1):
            j = 1 - i
            ok = zap_try[..., i] & (dist <= cfg.zap_range) & (timer[..., j] == 0)
            hit = ok & (rng.random(batch) < cfg.p_zap)
            zap_hit[..., i] = hit
            timer[..., j] = np.where(hit, cfg.t_zap, timer[..., j])

        # 6. movement for agents not frozen now
        can_move = timer == 0
        delta = _MOVES[actions] * can_move[..., None]
        moved = pos + delta
        inside = ((moved[..., 0] >= 0) & (moved[..., 0] < cfg.rows)
                  & (moved[..., 1] >= 0) & (moved[..., 1] < cfg.cols))
        pos = np.where(inside[..., None], moved, pos)

        # countdown only for agents that were frozen when the step began
        timer = np.where(active, timer, timer - 1)

        nxt = CleanupState(grid, pos, timer, state.t + 1)
        info = {
            "harvested": harvested,
            "cleaned": cleaned,
            "zap_attempt": zap_try,
            "zap_hit": zap_hit,
            "dirt": (grid[..., self.river] == DIRT).sum(axis=-1),
            "apples": (grid[..., 0] == APPLE).sum(axis=-1),
            "apple_spawned": spawn_apple,
            "dirt_spawned": spawn,
            "p_apple": p_apple,
        }
        return nxt, StepResult(self.observe(nxt), rewards, nxt.t >= self.horizon, info)


def cleanup_step(state: CleanupState, actions, rng: np.random.Generator, config: CleanupConfig | None = None):
    return CleanupEnv(config).step(state, actions, rng)
