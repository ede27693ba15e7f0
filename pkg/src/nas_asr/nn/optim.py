"""Adam optimizer with global-norm gradient clipping.

Parameters and gradients travel as name -> ndarray dicts so any stack of
layers can share one optimizer instance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OptimizerConfig:
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")


def global_norm(grads):
    """L2 norm of all gradient arrays concatenated."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    return math.sqrt(total)


def clip_by_global_norm(grads, max_norm):
    """Rescale the whole gradient dict so its global norm is <= max_norm.

    Returns (clipped_grads, original_norm). Gradients below the threshold
    pass through unchanged.
    """
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return {k: np.asarray(v) for k, v in grads.items()}, norm
    scale = max_norm / norm
    return {k: np.asarray(v) * scale for k, v in grads.items()}, norm


class Adam:
    """Adam over a dict of parameter arrays, updated in place.

    step() clips by global norm first, rejects the whole update if any
    gradient entry is non-finite, and counts the rejections.
    """

    def __init__(self, params, config: OptimizerConfig | None = None):
        self.params = params
        self.config = config or OptimizerConfig()
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0
        self.skipped = 0

    def step(self, grads):
        """Apply one update. Returns True if applied, False if rejected."""
        missing = set(self.params) - set(grads)
        if missing:
            raise KeyError(f"gradients missing for {sorted(missing)}")
        for k in self.params:
            if not np.all(np.isfinite(grads[k])):
                self.skipped += 1
                return False
        clipped, _ = clip_by_global_norm(
            {k: grads[k] for k in self.params}, self.config.clip_norm
        )
        cfg = self.config
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        for k, p in self.params.items():
            g = clipped[k]
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            p -= cfg.alpha * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        return True
