"""Autoregressive architecture controller.

A single-layer unidirectional LSTM emits one categorical decision per step:
the previous decision's embedding feeds the next step, and a per-decision
linear head produces the choice logits. REINFORCE with an EMA baseline
adjusts the parameters toward higher-reward architectures.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..nn.layers import xavier_uniform
from ..nn.recurrent import LSTM, LstmCellParams, lstm_step
from .search_space import ArchSpec, BlockSpec, DECISION_NAMES, decision_plan

log = logging.getLogger(__name__)


@dataclass
class ControllerState:
    space: object
    params: dict
    baseline: float = 0.0
    gamma: float = 1.0
    budget: int = 1024
    lr: float = 0.05
    baseline_decay: float = 0.95
    seed: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    skipped_updates: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not np.isfinite(self.baseline):
            raise ValueError("baseline must be finite")
        cell_keys = {f.name for f in LstmCellParams.__dataclass_fields__.values()}
        self._cell = LstmCellParams(
            **{k: self.params[f"lstm.{k}"] for k in cell_keys}
        )
        embed_size = self.params["embed.start"].shape[0]
        self._lstm = LSTM(embed_size, self._cell.hidden_size, np.random.default_rng(0))
        self._lstm.cell = self._cell  # share arrays with params


def create_controller(
    space,
    hidden_size=512,
    embed_size=32,
    seed=0,
    gamma=1.0,
    budget=1024,
    lr=0.05,
    baseline_decay=0.95,
):
    rng = np.random.default_rng(seed)
    cell = LstmCellParams.create(embed_size, hidden_size, rng)
    params = {f"lstm.{k}": v for k, v in cell.as_dict().items()}
    params["embed.start"] = 0.1 * rng.standard_normal(embed_size)
    for name in DECISION_NAMES:
        n = len(getattr(space, name))
        params[f"embed.{name}"] = 0.1 * rng.standard_normal((n, embed_size))
        params[f"head.{name}.W"] = xavier_uniform(
            rng, (n, hidden_size), hidden_size, n, np.float64
        )
        params[f"head.{name}.b"] = np.zeros(n)
    return ControllerState(
        space=space,
        params=params,
        gamma=gamma,
        budget=budget,
        lr=lr,
        baseline_decay=baseline_decay,
        seed=seed,
        rng=np.random.default_rng(seed),
    )


def _softmax_vec(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def _check_space(state, space):
    if space != state.space:
        raise ValueError("space differs from the one the controller was built for")


def sample_arch(state, space):
    """Sample one ArchSpec; returns (spec, summed decision log-probability)."""
    _check_space(state, space)
    plan = decision_plan(space)
    hidden = state._cell.hidden_size
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    x = state.params["embed.start"]
    values = []
    logprob = 0.0
    for name, choices in plan:
        h, c = lstm_step(state._cell, x, h, c)
        logits = state.params[f"head.{name}.W"] @ h + state.params[f"head.{name}.b"]
        p = _softmax_vec(logits)
        u = state.rng.random()
        idx = min(int(np.searchsorted(np.cumsum(p), u, side="right")), len(choices) - 1)
        logprob += float(np.log(p[idx]))
        values.append(choices[idx])
        x = state.params[f"embed.{name}"][idx]

    n = len(DECISION_NAMES)
    blocks = tuple(BlockSpec(*values[i : i + n]) for i in range(0, len(values), n))
    return ArchSpec(blocks=blocks), logprob


def _teacher_forward(state, spec):
    """Re-run the controller with the spec's decisions forced; returns the
    logprob plus everything backprop needs."""
    plan = decision_plan(state.space)
    values = spec.decisions()
    if len(values) != len(plan):
        raise ValueError(
            f"spec has {len(values)} decisions, controller expects {len(plan)}"
        )
    idxs = []
    for (name, choices), v in zip(plan, values):
        if v not in choices:
            raise ValueError(f"decision {name}={v} not in {choices}")
        idxs.append(choices.index(v))

    xs = [state.params["embed.start"]]
    for (name, _), i in zip(plan[:-1], idxs[:-1]):
        xs.append(state.params[f"embed.{name}"][i])
    inputs = np.stack(xs)

    hs = state._lstm.forward(inputs, train=True)
    probs = []
    logprob = 0.0
    for t, ((name, _), i) in enumerate(zip(plan, idxs)):
        logits = state.params[f"head.{name}.W"] @ hs[t] + state.params[f"head.{name}.b"]
        p = _softmax_vec(logits)
        probs.append(p)
        logprob += float(np.log(p[i]))
    return logprob, plan, idxs, hs, probs


def spec_logprob(state, spec):
    """Teacher-forced log-probability of an existing spec."""
    return _teacher_forward(state, spec)[0]


def _accumulate_episode(state, spec, coef, grad):
    """Add coef * d(logprob)/d(theta) into grad."""
    _, plan, idxs, hs, probs = _teacher_forward(state, spec)
    dh = np.zeros_like(hs)
    for t, ((name, _), i) in enumerate(zip(plan, idxs)):
        d = -probs[t] * coef
        d[i] += coef
        grad[f"head.{name}.W"] += np.outer(d, hs[t])
        grad[f"head.{name}.b"] += d
        dh[t] += state.params[f"head.{name}.W"].T @ d
    dx = state._lstm.backward(dh)
    for k, g in state._lstm.grads.items():
        grad[f"lstm.{k}"] += g
    grad["embed.start"] += dx[0]
    for t in range(1, len(plan)):
        name, _ = plan[t - 1]
        grad[f"embed.{name}"][idxs[t - 1]] += dx[t]


def reinforce_update(state, episodes):
    """One policy-gradient ascent step from (spec, logprob, reward) episodes.

    theta += lr * mean((reward - baseline) * grad logprob); the baseline EMA
    absorbs the batch mean reward afterwards. A non-finite gradient skips
    the parameter step (logged) but still moves the baseline.
    """
    if not episodes:
        raise ValueError("episode batch must be non-empty")
    rewards = [float(r) for _, _, r in episodes]
    if not all(np.isfinite(rewards)):
        raise ValueError("rewards must be finite")

    advantaged = [
        (spec, r - state.baseline) for (spec, _, r) in episodes if r != state.baseline
    ]
    if advantaged:
        grad = {k: np.zeros_like(v) for k, v in state.params.items()}
        for spec, adv in advantaged:
            _accumulate_episode(state, spec, adv, grad)
        if all(np.all(np.isfinite(g)) for g in grad.values()):
            scale = state.lr / len(episodes)
            for k, g in grad.items():
                state.params[k] += scale * g
        else:
            state.skipped_updates += 1
            log.warning("controller update skipped: non-finite gradient")

    batch_mean = float(np.mean(rewards))
    state.baseline = (
        state.baseline_decay * state.baseline
        + (1.0 - state.baseline_decay) * batch_mean
    )
    return state
