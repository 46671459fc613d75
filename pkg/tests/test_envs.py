import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coala.envs import CleanupConfig, CleanupEnv, CleanupState, IpdEnv, env_reset, ipd_step, make_env
from coala.envs.cleanup import APPLE, DIRT, EMPTY, NOOP, ZAP
from coala.envs.ipd import CC, CD, DC, DD, S0


def test_ipd_reset_is_deterministic():
    s1, o1 = env_reset("ipd", np.random.default_rng(0))
    s2, o2 = env_reset("ipd", np.random.default_rng(1))
    assert s1.label == s2.label == S0 and s1.t == 0
    np.testing.assert_array_equal(o1, o2)


@pytest.mark.parametrize("a1, a2, rewards, own1, own2", [
    (0, 1, (-1.0, 2.0), CD, DC),
    (1, 1, (0.0, 0.0), DD, DD),
    (0, 0, (1.0, 1.0), CC, CC),
    (1, 0, (2.0, -1.0), DC, CD),
])
def test_ipd_single_round(a1, a2, rewards, own1, own2):
    state, _ = IpdEnv().reset()
    nxt, res = ipd_step(state, a1, a2)
    np.testing.assert_array_equal(res.rewards, rewards)
    np.testing.assert_array_equal(res.obs[0], np.eye(5)[own1])
    np.testing.assert_array_equal(res.obs[1], np.eye(5)[own2])
    assert nxt.t == 1 and not res.done


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1), st.integers(1, 12))
def test_ipd_never_returns_to_start_and_ends_on_horizon(seed, horizon):
    rng = np.random.default_rng(seed)
    env = IpdEnv(horizon)
    state, obs = env.reset(batch=(7,))
    assert np.all(obs.sum(axis=-1) == 1.0)
    for t in range(horizon):
        state, res = env.step(state, rng.integers(0, 2, size=(7, 2)))
        assert np.all(state.label != S0)
        assert np.all(res.obs.sum(axis=-1) == 1.0)
        assert res.done == (t == horizon - 1)
    with pytest.raises(ValueError):
        env.step(state, np.zeros((7, 2), dtype=int))


def test_ipd_rejects_bad_action():
    state, _ = IpdEnv().reset()
    with pytest.raises(ValueError):
        ipd_step(state, 2, 0)


def test_cleanup_reset_layout():
    env = CleanupEnv()
    state, obs = env.reset(np.random.default_rng(0), batch=(50,))
    assert np.all((state.grid == DIRT).sum(axis=(-1, -2)) == 3)
    assert np.all((state.grid[..., env.river] == DIRT).sum(axis=-1) == 3)
    assert np.all(state.grid == np.where(state.grid == DIRT, DIRT, EMPTY))
    assert np.all(state.timer == 0)
    assert obs.shape == (50, 2, env.obs_dim)


def test_cleanup_reset_reproducible():
    a, oa = env_reset("cleanup", np.random.default_rng(3), batch=(4,))
    b, ob = env_reset("cleanup", np.random.default_rng(3), batch=(4,))
    np.testing.assert_array_equal(a.grid, b.grid)
    np.testing.assert_array_equal(a.pos, b.pos)
    np.testing.assert_array_equal(oa, ob)


def _state(grid, pos, timer=(0, 0), t=0):
    return CleanupState(np.array(grid), np.array(pos), np.array(timer), t)


def _grid(dirt_rows=(), apple_rows=(), rows=5, cols=4):
    g = np.zeros((rows, cols), dtype=np.int64)
    for r in dirt_rows:
        g[r, cols - 1] = DIRT
    for r in apple_rows:
        g[r, 0] = APPLE
    return g


def test_no_apples_spawn_at_threshold_dirt():
    env = CleanupEnv(CleanupConfig(p_pollution=0.0))
    rng = np.random.default_rng(0)
    grid = np.broadcast_to(_grid(dirt_rows=(0, 1, 2)), (500, 5, 4))
    state = _state(grid, np.broadcast_to([[2, 1], [2, 2]], (500, 2, 2)), np.zeros((500, 2), dtype=int))
    _, res = env.step(state, np.full((500, 2), NOOP), rng)
    assert not res.info["apple_spawned"].any()
    assert np.all(res.info["p_apple"] == 0.0)


def test_successful_zap_freezes_for_five_steps():
    env = CleanupEnv(CleanupConfig(p_zap=1.0, p_pollution=0.0, initial_dirt=0))
    rng = np.random.default_rng(0)
    # no dirt, so apples keep spawning in the orchard where agent 2 stands
    state = _state(_grid(apple_rows=range(5)), [[1, 1], [1, 0]])
    state, res = env.step(state, np.array([ZAP, NOOP]), rng)
    assert res.info["zap_hit"][0] and state.timer[1] == 5
    # agent 2 harvested before the zap resolved in that step
    assert res.rewards[1] == 1.0
    frozen_rewards = []
    for _ in range(5):
        state = CleanupState(np.where(np.arange(4) == 0, APPLE, state.grid), state.pos, state.timer, state.t)
        state, res = env.step(state, np.array([NOOP, 2]), rng)  # agent 2 tries to move up
        frozen_rewards.append(res.rewards[1])
    assert frozen_rewards == [0.0] * 5
    np.testing.assert_array_equal(state.pos[1], [1, 0])
    assert state.timer[1] == 0
    state = CleanupState(np.where(np.arange(4) == 0, APPLE, state.grid), state.pos, state.timer, state.t)
    _, res = env.step(state, np.array([NOOP, NOOP]), rng)
    assert res.rewards[1] == 1.0


def test_zap_on_frozen_opponent_has_no_effect():
    env = CleanupEnv(CleanupConfig(p_zap=1.0))
    state = _state(_grid(), [[1, 1], [1, 2]], timer=(0, 3))
    nxt, res = env.step(state, np.array([ZAP, NOOP]), np.random.default_rng(0))
    assert not res.info["zap_hit"][0]
    assert nxt.timer[1] == 2


def test_zap_out_of_range_misses():
    env = CleanupEnv(CleanupConfig(p_zap=1.0))
    state = _state(_grid(), [[0, 0], [3, 0]])
    _, res = env.step(state, np.array([ZAP, NOOP]), np.random.default_rng(0))
    assert res.info["zap_attempt"][0] and not res.info["zap_hit"][0]


def test_cleaning_removes_dirt():
    env = CleanupEnv(CleanupConfig(p_pollution=0.0))
    state = _state(_grid(dirt_rows=(2,)), [[2, 3], [0, 0]])
    nxt, res = env.step(state, np.array([NOOP, NOOP]), np.random.default_rng(0))
    assert res.info["cleaned"][0] and nxt.grid[2, 3] == EMPTY and res.rewards[0] == 0.0


def test_movement_clips_at_walls_and_allows_sharing():
    env = CleanupEnv()
    state = _state(_grid(), [[0, 0], [0, 1]])
    nxt, _ = env.step(state, np.array([2, 1]), np.random.default_rng(0))  # up off-grid; left onto agent 1
    np.testing.assert_array_equal(nxt.pos, [[0, 0], [0, 0]])


def test_dirt_spawn_frequency():
    env = CleanupEnv(CleanupConfig(initial_dirt=0))
    n = 100_000
    state = _state(np.zeros((n, 5, 4), dtype=np.int64), np.zeros((n, 2, 2), dtype=np.int64),
                   np.zeros((n, 2), dtype=np.int64))
    _, res = env.step(state, np.full((n, 2), NOOP), np.random.default_rng(1))
    assert abs(res.info["dirt_spawned"].mean() - 0.35) < 0.01


@pytest.mark.parametrize("dirt", [0, 1, 2])
def test_apple_spawn_frequency_given_dirt(dirt):
    env = CleanupEnv(CleanupConfig(p_pollution=0.0))
    n = 100_000
    grid = np.broadcast_to(_grid(dirt_rows=range(dirt)), (n, 5, 4)).copy()
    state = _state(grid, np.full((n, 2, 2), 2), np.zeros((n, 2), dtype=np.int64))
    _, res = env.step(state, np.full((n, 2), NOOP), np.random.default_rng(dirt))
    assert abs(res.info["apple_spawned"].mean() - (1 - min(1.0, dirt / 3.0))) < 0.01


def _rollout(seed, steps=64, batch=(16,)):
    env = CleanupEnv()
    rng = np.random.default_rng(seed)
    state, obs = env.reset(rng, batch)
    out = []
    for _ in range(steps):
        state, res = env.step(state, rng.integers(0, 6, size=batch + (2,)), rng)
        out.append((state, res))
    return env, out


def test_cleanup_reward_conservation_and_invariants():
    env, steps = _rollout(5)
    total_rewards = sum(res.rewards.sum() for _, res in steps)
    total_harvests = sum(res.info["harvested"].sum() for _, res in steps)
    assert total_rewards == total_harvests
    for state, res in steps:
        assert not np.any(state.grid[..., :, :env.river] == DIRT)
        assert not np.any(state.grid[..., :, 1:] == APPLE)
        assert np.all((state.pos >= 0) & (state.pos[..., 0:1] < 5) & (state.pos[..., 1:2] < 4))
        assert np.all((state.timer >= 0) & (state.timer <= 5))
        n = env.n_cells
        for block in (res.obs[..., :n], res.obs[..., n:2 * n]):
            assert np.all(block.sum(axis=-1) == 1.0)
        cells = res.obs[..., 2 * n:5 * n].reshape(res.obs.shape[:-1] + (n, 3))
        assert np.all(cells.sum(axis=-1) == 1.0)
    assert steps[-1][1].done and not steps[-2][1].done


def test_cleanup_bit_reproducible():
    _, a = _rollout(11, steps=20)
    _, b = _rollout(11, steps=20)
    for (sa, ra), (sb, rb) in zip(a, b):
        np.testing.assert_array_equal(sa.grid, sb.grid)
        np.testing.assert_array_equal(ra.obs, rb.obs)


def test_make_env_and_validation():
    assert isinstance(make_env("ipd", 5), IpdEnv)
    assert make_env("cleanup", 7).horizon == 7
    with pytest.raises(ValueError):
        make_env("chess", 5)
    with pytest.raises(ValueError):
        CleanupConfig(p_zap=1.5)
    env = CleanupEnv()
    state, _ = env.reset(np.random.default_rng(0))
    with pytest.raises(ValueError):
        env.step(state, np.array([6, 0]), np.random.default_rng(0))
