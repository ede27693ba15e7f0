"""Connectionist temporal classification.

Exact negative log-likelihood and gradient by log-space forward-backward
over the blank-augmented label sequence, the collapse operator that maps
frame-level paths to labelings, a Monte-Carlo estimator of the expected
collapse loss, and a brute-force path-enumeration oracle for testing.

Conventions: probability matrices are (T, K) with K = |alphabet| + 1 and
the blank as the LAST class; label sequences are tuples of symbol ids in
[0, K-1). Gradients are taken with respect to the pre-softmax logits that
produced the probability rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

NEG_INF = -np.inf


@dataclass(frozen=True)
class Alphabet:
    """Ordered distinct output symbols; blank is implicit and indexed last."""

    symbols: tuple

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if not self.symbols:
            raise ValueError("alphabet must contain at least one symbol")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("alphabet symbols must be distinct")
        for s in self.symbols:
            if not isinstance(s, str) or len(s) != 1:
                raise ValueError(f"symbols must be single characters, got {s!r}")

    @property
    def blank_index(self):
        return len(self.symbols)

    @property
    def n_classes(self):
        return len(self.symbols) + 1

    @cached_property
    def _char_to_id(self):
        return {ch: i for i, ch in enumerate(self.symbols)}

    def encode(self, text):
        try:
            return tuple(self._char_to_id[ch] for ch in text)
        except KeyError as exc:
            raise ValueError(f"character {exc.args[0]!r} not in alphabet") from None

    def decode(self, ids):
        return "".join(self.symbols[i] for i in ids)


def collapse(path, blank_index):
    """Map a frame-level path to its labeling: merge adjacent repeats,
    then delete blanks."""
    out = []
    prev = None
    for p in path:
        p = int(p)
        if p != prev and p != blank_index:
            out.append(p)
        prev = p
    return tuple(out)


def min_frames(target):
    """Shortest path length that can collapse to the target: its length
    plus one separating blank per adjacent repeat."""
    t = tuple(target)
    return len(t) + sum(1 for a, b in zip(t, t[1:]) if a == b)


def _as_target(target):
    out = tuple(int(i) for i in target)
    if any(i < 0 for i in out):
        raise ValueError("label ids must be non-negative")
    return out


def _validate(probs, target):
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise ValueError(f"need a (T, K>=2) probability matrix, got {probs.shape}")
    if probs.shape[0] < 1:
        raise ValueError("need at least one frame")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise ValueError("probabilities must be finite and non-negative")
    if np.max(np.abs(probs.sum(axis=1) - 1.0)) > 1e-6:
        raise ValueError("probability rows must sum to 1")
    n_symbols = probs.shape[1] - 1
    if any(i >= n_symbols for i in target):
        raise ValueError(f"label id out of range for {n_symbols} symbols")


def _augment(target, blank):
    z = np.full(2 * len(target) + 1, blank, dtype=np.int64)
    z[1::2] = target
    return z


def forward_backward(probs, target):
    """Log-space forward-backward over the blank-augmented target.

    Returns (log_alpha, log_beta, log_prob), each DP table (T, 2L+1).
    log_alpha[t, s] covers frames 0..t ending in state s (frame t's
    emission included); log_beta[t, s] is the completion probability
    strictly after frame t. For every t,
    logsumexp(log_alpha[t] + log_beta[t]) == log_prob.
    """
    probs = np.asarray(probs, dtype=np.float64)
    target = _as_target(target)
    _validate(probs, target)
    t_len, n_classes = probs.shape
    blank = n_classes - 1
    z = _augment(target, blank)
    s_len = z.size
    with np.errstate(divide="ignore"):
        emit = np.log(probs)[:, z]

    # a skip s-2 -> s is legal only between distinct non-blank labels
    can_skip = np.zeros(s_len, dtype=bool)
    if s_len > 3:
        can_skip[3::2] = z[3::2] != z[1:-2:2]

    log_alpha = np.full((t_len, s_len), NEG_INF)
    log_alpha[0, 0] = emit[0, 0]
    if s_len > 1:
        log_alpha[0, 1] = emit[0, 1]
    for t in range(1, t_len):
        prev = log_alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.logaddexp(acc[2:], np.where(can_skip[2:], prev[:-2], NEG_INF))
        log_alpha[t] = acc + emit[t]

    log_beta = np.full((t_len, s_len), NEG_INF)
    log_beta[t_len - 1, s_len - 1] = 0.0
    if s_len > 1:
        log_beta[t_len - 1, s_len - 2] = 0.0
    for t in range(t_len - 2, -1, -1):
        nxt = log_beta[t + 1] + emit[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.logaddexp(acc[:-2], np.where(can_skip[2:], nxt[2:], NEG_INF))
        log_beta[t] = acc

    log_prob = log_alpha[-1, -1]
    if s_len > 1:
        log_prob = np.logaddexp(log_prob, log_alpha[-1, -2])
    return log_alpha, log_beta, float(log_prob)


def ctc_loss(probs, target):
    """Exact CTC loss -log Pr(target|x) and its gradient.

    probs rows are post-softmax distributions; the gradient is with
    respect to the pre-softmax logits. Targets the frame count cannot
    reach (or that need a zero-probability emission) yield (+inf, zeros)
    rather than raising, so callers can penalize and move on.
    """
    probs = np.asarray(probs, dtype=np.float64)
    target = _as_target(target)
    _validate(probs, target)
    if probs.shape[0] < min_frames(target):
        return np.inf, np.zeros_like(probs)
    log_alpha, log_beta, log_prob = forward_backward(probs, target)
    if log_prob == NEG_INF:
        return np.inf, np.zeros_like(probs)

    t_len, n_classes = probs.shape
    z = _augment(target, n_classes - 1)
    occupancy = log_alpha + log_beta
    gamma = np.full((t_len, n_classes), NEG_INF)
    for k in np.unique(z):
        gamma[:, k] = logsumexp(occupancy[:, z == k], axis=1)
    grad = probs - np.exp(gamma - log_prob)
    return -log_prob, grad


def ctc_loss_enumerate(probs, target):
    """Brute-force oracle: sum Pr over every length-T path whose collapse
    equals the target. Exponential in T; test instances only."""
    probs = np.asarray(probs, dtype=np.float64)
    target = _as_target(target)
    _validate(probs, target)
    t_len, n_classes = probs.shape
    blank = n_classes - 1
    n_paths = n_classes**t_len
    if n_paths > 5_000_000:
        raise ValueError(f"{n_paths} paths is too many to enumerate")
    if len(target) > t_len:
        return np.inf

    powers = n_classes ** np.arange(t_len - 1, -1, -1, dtype=np.int64)
    ids = (np.arange(n_paths, dtype=np.int64)[:, None] // powers) % n_classes
    path_probs = np.prod(probs[np.arange(t_len), ids], axis=1)

    keep = ids != blank
    keep[:, 1:] &= ids[:, 1:] != ids[:, :-1]
    match = keep.sum(axis=1) == len(target)
    if target:
        pos = np.cumsum(keep, axis=1) - 1
        labels = np.full((n_paths, t_len), -1, dtype=np.int64)
        rows, cols = np.nonzero(keep)
        labels[rows, pos[rows, cols]] = ids[rows, cols]
        match &= np.all(labels[:, : len(target)] == np.asarray(target), axis=1)
    total = float(path_probs[match].sum())
    if total <= 0.0:
        return np.inf
    return -float(np.log(total))


def ctc_loss_mc(probs, target, n_samples, seed):
    """Monte-Carlo estimate of the expected collapse loss and a
    score-function gradient estimate.

    Paths q^i are sampled from the per-frame distributions and the exact
    loss of each sampled labeling B(q^i) is averaged, following the
    defining estimator (the fixed target is validated for interface
    parity with ctc_loss but the estimator scores the samples' own
    labelings). The gradient estimate is
    (1/N) sum_i L_i * d log Pr(q^i|x)/d logits.
    Deterministic for a fixed seed.
    """
    probs = np.asarray(probs, dtype=np.float64)
    target = _as_target(target)
    _validate(probs, target)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")

    rng = np.random.default_rng(seed)
    t_len, n_classes = probs.shape
    blank = n_classes - 1
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random((n_samples, t_len))
    paths = np.empty((n_samples, t_len), dtype=np.int64)
    for t in range(t_len):
        paths[:, t] = np.searchsorted(cdf[t], u[:, t], side="right")
    np.clip(paths, 0, n_classes - 1, out=paths)

    losses = np.empty(n_samples)
    grad = np.zeros_like(probs)
    frame_idx = np.arange(t_len)
    for i in range(n_samples):
        loss_i, _ = ctc_loss(probs, collapse(paths[i], blank))
        losses[i] = loss_i
        onehot = np.zeros_like(probs)
        onehot[frame_idx, paths[i]] = 1.0
        grad += loss_i * (onehot - probs)
    return float(losses.mean()), grad / n_samples
