"""Types shared by the environments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StepResult:
    obs: np.ndarray      # (..., 2, obs_dim)
    rewards: np.ndarray  # (..., 2)
    done: bool
    info: dict
