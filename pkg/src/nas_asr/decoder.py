"""Character-level decoding of per-frame posteriors: greedy best-path and
prefix beam search with optional shallow n-gram fusion.

Beams are keyed by the collapsed prefix string. Each prefix carries two
log masses, ending-in-blank and ending-in-non-blank, so repeated symbols
separated by a blank stay distinguishable from a held symbol. The language
model scores a word once its trailing separator appears; the final partial
word is scored only at utterance end, where out-of-vocabulary words fall
back to the unknown token.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import word_error_rate
from .ctc import NEG_INF, collapse
from .lm import BOS, score as lm_score


@dataclass(frozen=True)
class DecoderConfig:
    beam_width: int = 8
    alpha: float = 0.0
    beta: float = 0.0
    model: object = None

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if not np.isfinite(self.alpha) or not np.isfinite(self.beta):
            raise ValueError("alpha and beta must be finite")


@dataclass(frozen=True)
class Hypothesis:
    text: str
    acoustic_logp: float
    fused_score: float


def _check_probs(probs, alphabet):
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != alphabet.n_classes:
        raise ValueError(
            f"probs must be (frames, {alphabet.n_classes}), got {probs.shape}"
        )
    if probs.shape[0] < 1:
        raise ValueError("need at least one frame")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise ValueError("probs must be finite and non-negative")
    return probs


def greedy_decode(probs, alphabet):
    """Per-frame argmax, then collapse. Ties pick the lowest class index."""
    probs = _check_probs(probs, alphabet)
    path = np.argmax(probs, axis=1)
    return alphabet.decode(collapse(path, alphabet.blank_index))


def _last_word(prefix):
    return prefix.rsplit(" ", 1)[-1]


def beam_decode(probs, alphabet, config):
    """Prefix beam search; returns hypotheses sorted by fused score.

    fused = log P(text | x) + alpha * log P(words) + beta * n_words.
    Pruning keeps exactly beam_width prefixes per frame (score ties break
    lexicographically on the prefix), with the fused contribution of the
    still-open word excluded until the end.
    """
    probs = _check_probs(probs, alphabet)
    with np.errstate(divide="ignore"):
        lp = np.log(probs)
    blank = alphabet.blank_index
    # alpha * -inf would poison the no-model path, so gate LM use explicitly
    use_lm = config.model is not None and config.alpha != 0.0

    def word_extra(word, words_before):
        extra = config.beta
        if use_lm:
            extra += config.alpha * lm_score(config.model, word, (BOS,) + words_before)
        return extra

    beams = {"": (0.0, NEG_INF)}
    # prefix -> (completed words, their fused contribution); pure function of
    # the prefix string, so entries survive pruning and stay valid
    meta = {"": ((), 0.0)}

    for t in range(probs.shape[0]):
        nxt = {}
        for prefix, (b, nb) in beams.items():
            total = np.logaddexp(b, nb)
            eb, enb = nxt.get(prefix, (NEG_INF, NEG_INF))
            eb = np.logaddexp(eb, total + lp[t, blank])
            if prefix:
                # holding the final symbol keeps the prefix
                enb = np.logaddexp(enb, nb + lp[t, alphabet.encode(prefix[-1])[0]])
            nxt[prefix] = (eb, enb)

            for c_id, ch in enumerate(alphabet.symbols):
                new = prefix + ch
                # a repeat right after the same symbol only extends the
                # prefix when a blank separated them
                src = b if prefix and ch == prefix[-1] else total
                neb, nenb = nxt.get(new, (NEG_INF, NEG_INF))
                nxt[new] = (neb, np.logaddexp(nenb, src + lp[t, c_id]))
                if new not in meta:
                    words, extra = meta[prefix]
                    if ch == " ":
                        done = _last_word(prefix)
                        if done:
                            words = words + (done,)
                            extra = extra + word_extra(done, words[:-1])
                    meta[new] = (words, extra)

        ranked = sorted(
            nxt.items(),
            key=lambda kv: (-(np.logaddexp(*kv[1]) + meta[kv[0]][1]), kv[0]),
        )
        beams = dict(ranked[: config.beam_width])

    out = []
    for prefix, (b, nb) in beams.items():
        words, extra = meta[prefix]
        tail = _last_word(prefix)
        if tail:
            extra = extra + word_extra(tail, words)
        acoustic = float(np.logaddexp(b, nb))
        out.append(Hypothesis(prefix, acoustic, acoustic + extra))
    out.sort(key=lambda h: (-h.fused_score, h.text))
    return out


def tune_fusion(dev_set, alphabet, model, alphas, betas, beam_width=8):
    """Grid-search (alpha, beta) minimizing corpus WER on dev.

    dev_set holds (probs, reference_text) pairs. Corpus WER pools edit
    counts over utterances. Ties keep the lexicographically first pair of
    the sorted grid.
    """
    if not dev_set:
        raise ValueError("dev_set must be non-empty")
    alphas = sorted({float(a) for a in alphas})
    betas = sorted({float(b) for b in betas})
    if not alphas or not betas:
        raise ValueError("alphas and betas must be non-empty")

    best_pair = None
    best_wer = np.inf
    for alpha in alphas:
        for beta in betas:
            cfg = DecoderConfig(beam_width, alpha, beta, model)
            total = None
            for probs, ref_text in dev_set:
                top = beam_decode(probs, alphabet, cfg)[0].text
                result = word_error_rate(ref_text.split(), top.split())
                total = result if total is None else total + result
            if total.rate < best_wer:
                best_wer = total.rate
                best_pair = (alpha, beta)
    return best_pair
