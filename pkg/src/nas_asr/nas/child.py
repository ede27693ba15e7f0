"""Child networks: build a sampled architecture, train it on CTC, and
turn its dev metrics into the controller's reward."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..corpus import word_error_rate
from ..ctc import ctc_loss, min_frames
from ..decoder import greedy_decode
from ..nn.layers import BatchNorm, Conv2D, Linear, MaxPool2D, ReLU, softmax
from ..nn.optim import Adam, OptimizerConfig
from ..nn.recurrent import BLSTM

CHILD_STATUSES = ("ok", "infeasible", "diverged", "failed")


@dataclass(frozen=True)
class InfeasibleArch:
    spec: object
    reason: str


@dataclass
class ChildResult:
    spec: object
    dev_ctc: float
    dev_wer: float
    reward: float
    wall_time: float = 0.0
    seed: int = 0
    status: str = "ok"
    params: dict | None = field(default=None, repr=False)
    alphabet: str | None = None

    def __post_init__(self):
        if not np.isfinite(self.reward):
            raise ValueError("reward must be finite")
        if self.status not in CHILD_STATUSES:
            raise ValueError(f"status must be one of {CHILD_STATUSES}")


def compute_reward(dev_wer, gamma=1.0, ok=True):
    """gamma * (1 - clamped WER); infeasible, diverged or failed children
    earn zero."""
    if not ok or dev_wer is None or not np.isfinite(dev_wer):
        return 0.0
    return gamma * (1.0 - min(max(float(dev_wer), 0.0), 1.0))


class _Flatten:
    """(T, F, C) <-> (T, F*C)."""

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._shape = None

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class _Expand:
    """(T, D) <-> (T, D, 1) so a recurrent block can feed the next conv."""

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x, train=False):
        return x[:, :, None]

    def backward(self, dout):
        return dout[:, :, 0]


class ChildNetwork:
    """Stack of (name, layer) pairs mapping (T, F) features to logits over
    the alphabet plus blank."""

    def __init__(self, spec, alphabet, layers, time_plan):
        self.spec = spec
        self.alphabet = alphabet
        self.layers = layers
        self._time_plan = time_plan

    def forward(self, features, train=False):
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"features must be (frames, dims), got {x.shape}")
        x = x[:, :, None]
        for _, layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, dlogits):
        d = dlogits
        for _, layer in reversed(self.layers):
            d = layer.backward(d)
        return d

    @property
    def params(self):
        return {
            f"{name}.{k}": v
            for name, layer in self.layers
            for k, v in layer.params.items()
        }

    @property
    def grads(self):
        return {
            f"{name}.{k}": v
            for name, layer in self.layers
            for k, v in layer.grads.items()
        }

    def snapshot(self):
        saved = {k: v.copy() for k, v in self.params.items()}
        for name, layer in self.layers:
            if isinstance(layer, BatchNorm):
                saved[f"{name}.running_mean"] = layer.running_mean.copy()
                saved[f"{name}.running_var"] = layer.running_var.copy()
        return saved

    def restore(self, saved):
        for k, v in self.params.items():
            v[...] = saved[k]
        for name, layer in self.layers:
            if isinstance(layer, BatchNorm):
                layer.running_mean = saved[f"{name}.running_mean"].copy()
                layer.running_var = saved[f"{name}.running_var"].copy()

    def time_out(self, n_frames):
        """Output sequence length for an input length, or None when a
        pooling stage cannot be applied."""
        t = n_frames
        for kind, arg in self._time_plan:
            if kind == "conv":
                t = -(-t // arg)
            else:  # pool
                if t < 2:
                    return None
                t //= 2
        return t


def instantiate_child(spec, input_shape, alphabet, seed=0):
    """Build the network, or return InfeasibleArch when shape propagation
    collapses a dimension on the given input shape."""
    t, f = input_shape
    if t < 1 or f < 1:
        raise ValueError(f"input_shape must be positive, got {input_shape}")
    rng = np.random.default_rng(seed)
    layers = []
    time_plan = []
    c = 1

    for bi, block in enumerate(spec.blocks):
        conv = Conv2D(
            c,
            block.num_filters,
            block.filter_height,
            block.filter_width,
            block.stride_height,
            block.stride_width,
            rng,
        )
        layers.append((f"block{bi}.conv", conv))
        time_plan.append(("conv", block.stride_height))
        t, f = conv.output_hw(t, f)
        c = block.num_filters

        if block.has_batchnorm:
            layers.append((f"block{bi}.bn", BatchNorm(c)))
        layers.append((f"block{bi}.relu", ReLU()))

        if block.has_maxpool:
            if t < 2 or f < 2:
                return InfeasibleArch(
                    spec, f"block {bi}: maxpool needs a 2x2 input, have {t}x{f}"
                )
            layers.append((f"block{bi}.pool", MaxPool2D()))
            time_plan.append(("pool", 2))
            t, f = t // 2, f // 2

        if block.has_rnn_block:
            layers.append((f"block{bi}.flatten", _Flatten()))
            layers.append((f"block{bi}.rnn", BLSTM(f * c, spec.head_width, rng)))
            layers.append((f"block{bi}.expand", _Expand()))
            f, c = 2 * spec.head_width, 1

    layers.append(("head.flatten", _Flatten()))
    layers.append(("head.rnn", BLSTM(f * c, spec.head_width, rng)))
    layers.append(("head.out", Linear(2 * spec.head_width, alphabet.n_classes, rng)))
    return ChildNetwork(spec, alphabet, layers, time_plan)


@dataclass(frozen=True)
class ChildTrainConfig:
    steps: int = 300
    eval_every: int = 25
    patience: int = 4
    opt: OptimizerConfig = field(default_factory=OptimizerConfig)
    gamma: float = 1.0

    def __post_init__(self):
        if self.steps < 0 or self.eval_every < 1 or self.patience < 1:
            raise ValueError("steps must be >= 0; eval_every and patience >= 1")


def _dev_ctc(child, dev_set):
    losses = []
    for features, target in dev_set:
        logits = child.forward(features, train=False)
        if not np.all(np.isfinite(logits)):
            losses.append(np.inf)
            continue
        loss, _ = ctc_loss(softmax(logits), target)
        losses.append(loss)
    return float(np.mean(losses))


def _dev_wer(child, dev_set):
    total = None
    for features, target in dev_set:
        logits = child.forward(features, train=False)
        if np.all(np.isfinite(logits)):
            hyp = greedy_decode(softmax(logits), child.alphabet)
        else:
            hyp = ""
        ref = child.alphabet.decode(target)
        result = word_error_rate(ref.split(), hyp.split())
        total = result if total is None else total + result
    return total.rate


def train_child(child, train_set, dev_set, cfg=None, seed=0):
    """Per-utterance CTC training with Adam, periodic dev evaluation with
    plateau early stopping, best-dev weights restored at the end."""
    cfg = cfg or ChildTrainConfig()
    if isinstance(child, InfeasibleArch):
        return ChildResult(
            child.spec, np.inf, np.inf, 0.0, 0.0, seed, status="infeasible"
        )
    if not train_set or not dev_set:
        raise ValueError("train and dev sets must be non-empty")
    start = time.perf_counter()

    def done(dev_ctc, dev_wer, status):
        reward = compute_reward(dev_wer, cfg.gamma, ok=status == "ok")
        return ChildResult(
            child.spec,
            dev_ctc,
            dev_wer,
            reward,
            time.perf_counter() - start,
            seed,
            status=status,
            params=child.snapshot(),
            alphabet="".join(child.alphabet.symbols),
        )

    # an output too short for its target makes CTC undefined, so reject
    # the architecture against this data before spending any training
    for features, target in list(train_set) + list(dev_set):
        t_out = child.time_out(len(features))
        if t_out is None or t_out < min_frames(target):
            return ChildResult(
                child.spec, np.inf, np.inf, 0.0,
                time.perf_counter() - start, seed, status="infeasible",
            )

    rng = np.random.default_rng(seed)
    adam = Adam(child.params, cfg.opt)
    best_ctc = _dev_ctc(child, dev_set)
    best_params = child.snapshot()
    stale = 0
    order = []

    for step in range(cfg.steps):
        if not order:
            order = list(rng.permutation(len(train_set)))
        features, target = train_set[order.pop()]
        logits = child.forward(features, train=True)
        if not np.all(np.isfinite(logits)):
            return done(np.inf, np.inf, "diverged")
        loss, dlogits = ctc_loss(softmax(logits), target)
        if not np.isfinite(loss):
            return done(np.inf, np.inf, "diverged")
        child.backward(dlogits)
        adam.step(child.grads)

        if (step + 1) % cfg.eval_every == 0 or step + 1 == cfg.steps:
            dev = _dev_ctc(child, dev_set)
            if dev < best_ctc - 1e-9:
                best_ctc = dev
                best_params = child.snapshot()
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break

    child.restore(best_params)
    return done(best_ctc, _dev_wer(child, dev_set), "ok")
