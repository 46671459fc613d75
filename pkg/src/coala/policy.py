"""Recurrent sequence policy with a gated linear recurrence and a value head.

One residual block:

    e = obs W_in + b_in
    n = rmsnorm(e) * s0
    r, i = sigmoid(n W_a + b_a), sigmoid(n W_x + b_x)
    log a = -8 softplus(-lam) r
    h_t = a_t h_{t-1} + sqrt(1 - a_t^2) (i_t * n_t)
    y = e + h W_o + b_o
    z = y + tanh(rmsnorm(y) s1 W_1 + b_1) W_2 + b_2
    f = rmsnorm(z) s2
    logits, value = f W_pi + b_pi, f w_v + b_v

The gates depend only on the current input, so a whole sequence is processed
with one linear scan.  A reset mask zeroes the carried state before a step.
The same code runs on plain arrays (fast rollouts) and on tape tensors
(training).  Parameter arrays may carry a leading population axis.
"""
from __future__ import annotations

import hashlib
import json

import numpy as np
from scipy.special import log_softmax as _np_log_softmax

from .autodiff import tape as T

WIDTH = 32
CHECKPOINT_VERSION = 1
_EPS = 1e-6
_DECAY_POWER = 8.0

MATRICES = ("W_in", "W_a", "W_x", "W_o", "W_1", "W_2", "W_pi", "w_v")
VECTORS = ("b_in", "s0", "b_a", "b_x", "lam", "b_o", "s1", "b_1", "b_2", "s2", "b_pi", "b_v")
PARAM_NAMES = MATRICES + VECTORS


def _lecun(rng, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(scale=1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))


def init_params(rng: np.random.Generator, obs_dim: int, action_dim: int, width: int = WIDTH) -> dict:
    """Fresh parameters; the policy and value readouts start at exactly zero."""
    if obs_dim < 1 or action_dim < 1 or width < 1:
        raise ValueError("dimensions must be positive")
    decay = rng.uniform(0.9, 0.999, size=width)
    root = decay ** (1.0 / _DECAY_POWER)
    return {
        "W_in": _lecun(rng, obs_dim, width),
        "W_a": _lecun(rng, width, width),
        "W_x": _lecun(rng, width, width),
        "W_o": _lecun(rng, width, width),
        "W_1": _lecun(rng, width, width),
        "W_2": _lecun(rng, width, width),
        "W_pi": np.zeros((width, action_dim)),
        "w_v": np.zeros((width, 1)),
        "b_in": np.zeros(width),
        "s0": np.ones(width),
        "b_a": np.zeros(width),
        "b_x": np.zeros(width),
        # sigmoid(lam) ** 8 is the decay at full gate
        "lam": np.log(root) - np.log1p(-root),
        "b_o": np.zeros(width),
        "s1": np.ones(width),
        "b_1": np.zeros(width),
        "b_2": np.zeros(width),
        "s2": np.ones(width),
        "b_pi": np.zeros(action_dim),
        "b_v": np.zeros(1),
    }


def stack_params(param_sets) -> dict:
    """Stack several parameter dicts along a new leading population axis."""
    return {k: np.stack([p[k] for p in param_sets]) for k in param_sets[0]}


def unstack_params(params: dict, index: int) -> dict:
    return {k: v[index] for k, v in params.items()}


def _value(x):
    return x.value if isinstance(x, T.Tensor) else np.asarray(x)


def _has_population(params) -> bool:
    return _value(params["W_in"]).ndim == 3


def _broadcastable(params: dict, ndim: int) -> dict:
    """Insert singleton axes after a population axis so parameters broadcast against inputs."""
    if not _has_population(params):
        return params
    out = {}
    for k, p in params.items():
        v = _value(p)
        extra = ndim - 3 if k in MATRICES else ndim - 2
        shape = v.shape[:1] + (1,) * extra + v.shape[1:]
        out[k] = T.reshape(p, shape) if extra else p
    return out


def _rmsnorm(x, scale):
    ms = T.mean(T.square(x), axis=-1, keepdims=True)
    return x / T.sqrt(ms + _EPS) * scale


def _gates(p, obs):
    e = T.matmul(obs, p["W_in"]) + p["b_in"]
    n = _rmsnorm(e, p["s0"])
    r = T.sigmoid(T.matmul(n, p["W_a"]) + p["b_a"])
    i = T.sigmoid(T.matmul(n, p["W_x"]) + p["b_x"])
    log_a = (-_DECAY_POWER) * T.softplus(-p["lam"]) * r
    a = T.exp(log_a)
    mult = T.sqrt(-T.expm1(2.0 * log_a) + _EPS)
    return e, a, mult * (i * n)


def _readout(p, e, h):
    y = e + T.matmul(h, p["W_o"]) + p["b_o"]
    ff = T.tanh(T.matmul(_rmsnorm(y, p["s1"]), p["W_1"]) + p["b_1"])
    z = y + T.matmul(ff, p["W_2"]) + p["b_2"]
    f = _rmsnorm(z, p["s2"])
    logits = T.matmul(f, p["W_pi"]) + p["b_pi"]
    value = T.matmul(f, p["w_v"]) + p["b_v"]
    return logits, value[..., 0]


def policy_forward(params: dict, obs, reset, h0=None):
    """Process whole sequences.

    ``obs`` is ``(..., L, obs_dim)`` and ``reset`` ``(..., L)``: where set, the
    carried state is zeroed before that step.  With a population axis the
    leading axis of ``obs`` must match it.  Returns ``(logits, values, h_last)``.
    """
    obs_v = _value(obs)
    if obs_v.shape[-1] != _value(params["W_in"]).shape[-2]:
        raise ValueError(f"observation width {obs_v.shape[-1]} does not match parameters")
    reset = np.asarray(reset, dtype=bool)
    if reset.shape != obs_v.shape[:-1]:
        raise ValueError(f"reset mask shape {reset.shape} does not match observations {obs_v.shape[:-1]}")
    p = _broadcastable(params, obs_v.ndim)
    e, a, u = _gates(p, obs)
    keep = 1.0 - reset[..., None].astype(np.float64)
    h = T.scan(a * keep, u, h0)
    logits, values = _readout(p, e, h)
    return logits, values, _value(h)[..., -1, :]


def policy_step(params: dict, obs, h, reset):
    """Single-step form of ``policy_forward`` for rollouts on plain arrays.

    ``obs`` is ``(..., obs_dim)``, ``h`` ``(..., width)`` and ``reset`` ``(...)``.
    """
    p = _broadcastable(params, np.ndim(obs) + 1)
    obs = np.asarray(obs)[..., None, :]
    e, a, u = _gates(p, obs)
    keep = 1.0 - np.asarray(reset, dtype=np.float64)[..., None, None]
    h_new = a * keep * np.asarray(h)[..., None, :] + u
    logits, values = _readout(p, e, h_new)
    return logits[..., 0, :], values[..., 0], h_new[..., 0, :]


def initial_state(batch: tuple, width: int = WIDTH) -> np.ndarray:
    return np.zeros(batch + (width,))


def sample_action(logits, rng: np.random.Generator):
    """Categorical sample per row of ``logits``; returns ``(action, log_prob)``."""
    logits = np.asarray(logits, dtype=np.float64)
    logp = _np_log_softmax(logits, axis=-1)
    cdf = np.cumsum(np.exp(logp), axis=-1)
    u = rng.random(logits.shape[:-1] + (1,)) * cdf[..., -1:]
    action = np.minimum((u >= cdf).sum(axis=-1), logits.shape[-1] - 1)
    return action, np.take_along_axis(logp, action[..., None], -1)[..., 0]


def param_fingerprint(params: dict) -> str:
    h = hashlib.sha256()
    for k in sorted(params):
        h.update(k.encode())
        h.update(np.ascontiguousarray(params[k], dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def save_checkpoint(path, params: dict, config_fingerprint: str = "", extra: dict | None = None) -> None:
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "shapes": {k: list(np.shape(v)) for k, v in params.items()},
        "config_fingerprint": config_fingerprint,
        "extra": extra or {},
    }
    arrays = {f"param/{k}": np.asarray(v) for k, v in params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path):
    """Returns ``(params, meta)``; rejects unknown format versions and shape mismatches."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        params = {k.split("/", 1)[1]: data[k] for k in data.files if k.startswith("param/")}
    for k, shape in meta["shapes"].items():
        if list(params[k].shape) != shape:
            raise ValueError(f"checkpoint array {k} has shape {params[k].shape}, expected {shape}")
    return params, meta
