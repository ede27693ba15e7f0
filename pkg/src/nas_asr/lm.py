"""Word-level backoff n-gram language models.

Counts come from sentences padded with a single start marker and an end
marker; every k-gram window for k up to the model order is counted
(including the truncated sentence-initial ones), which keeps maximum
likelihood training perplexity monotonic in the order. Probabilities and
backoff weights are stored in log10 (ARPA-native); score() converts to
natural log for fusion with acoustic scores.

Smoothing is Witten-Bell by default: the stored probability interpolates
the maximum-likelihood estimate with the lower order, and the backoff
weight T/(c+T) makes every context distribution sum to exactly 1.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

LOG10_ZERO = -99.0  # conventional ARPA stand-in for log10(0)
_LN10 = math.log(10.0)

SMOOTHING_METHODS = ("witten_bell", "add_k", "none")


class ArpaError(ValueError):
    """Malformed ARPA text; message carries the offending line number."""


@dataclass(frozen=True)
class NGramModel:
    """Backoff model: log10 probabilities per stored n-gram, log10 backoff
    weights per stored context, and the predicted-event vocabulary."""

    order: int
    logp: dict
    bow: dict
    vocab: tuple

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")


def tokenize(sentence):
    """Lowercased, single-space word tokens; apostrophes survive."""
    return sentence.strip().lower().split()


def train_ngram(corpus, order, smoothing="witten_bell", add_k=1.0):
    """Count padded k-gram windows for every k <= order and build a
    backoff-normalized model.

    corpus: iterable of sentence strings. smoothing: "witten_bell",
    "add_k" (additive with constant add_k), or "none" (maximum
    likelihood; unseen events get zero probability).
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if smoothing not in SMOOTHING_METHODS:
        raise ValueError(f"unknown smoothing {smoothing!r}, want one of {SMOOTHING_METHODS}")
    if smoothing == "add_k" and add_k <= 0:
        raise ValueError("add_k must be positive")

    counts = [defaultdict(int) for _ in range(order + 1)]
    n_sentences = 0
    for sentence in corpus:
        toks = tokenize(sentence)
        if not toks:
            continue
        n_sentences += 1
        padded = [BOS] + toks + [EOS]
        for k in range(1, order + 1):
            for s in range(len(padded) - k + 1):
                if k == 1 and s == 0:
                    continue  # the start marker is context only, never an event
                counts[k][tuple(padded[s : s + k])] += 1
    if n_sentences == 0:
        raise ValueError("empty corpus")

    events = counts[1]
    vocab = tuple(sorted(set(tup[0] for tup in events) | {UNK}))
    n_events = sum(events.values())
    n_types = len(events)

    logp = {}
    bow = {}

    def store(gram, p):
        logp[gram] = math.log10(p) if p > 0 else LOG10_ZERO

    if smoothing == "witten_bell":
        for (w,), c in events.items():
            store((w,), c / (n_events + n_types))
        store((UNK,), n_types / (n_events + n_types))
    elif smoothing == "add_k":
        denom = n_events + add_k * len(vocab)
        for w in vocab:
            store((w,), (events.get((w,), 0) + add_k) / denom)
    else:
        for (w,), c in events.items():
            store((w,), c / n_events)
        store((UNK,), 0.0)
    logp[(BOS,)] = LOG10_ZERO

    def lower_query10(word, ctx):
        # backoff query against the levels built so far
        acc = 0.0
        ctx = tuple(ctx)
        while True:
            p = logp.get(ctx + (word,))
            if p is not None:
                return acc + p
            if not ctx:
                return acc + logp.get((word,), LOG10_ZERO)
            acc += bow.get(ctx, 0.0)
            ctx = ctx[1:]

    for k in range(2, order + 1):
        by_ctx = defaultdict(dict)
        for gram, c in counts[k].items():
            by_ctx[gram[:-1]][gram[-1]] = c
        stored_p = {}
        for ctx, conts in by_ctx.items():
            c_total = sum(conts.values())
            t_types = len(conts)
            for w, c in conts.items():
                low = 10.0 ** lower_query10(w, ctx[1:])
                if smoothing == "witten_bell":
                    p = (c + t_types * low) / (c_total + t_types)
                elif smoothing == "add_k":
                    p = (c + add_k) / (c_total + add_k * len(vocab))
                else:
                    p = c / c_total
                stored_p[ctx + (w,)] = p
                store(ctx + (w,), p)

        # backoff weights for the freshly completed level's contexts: the
        # mass not claimed by stored continuations, renormalized over the
        # lower-order mass of the unseen words. Start-marker contexts are
        # not in counts[k-1] (never events) but do take continuations.
        for gram in set(counts[k - 1]) | set(by_ctx):
            conts = by_ctx.get(gram)
            if not conts:
                bow[gram] = 0.0  # nothing reserved: back off at full weight
                continue
            if smoothing == "witten_bell":
                c_total = sum(conts.values())
                t_types = len(conts)
                bow[gram] = math.log10(t_types / (c_total + t_types))
                continue
            seen_mass = sum(stored_p[gram + (w,)] for w in conts)
            seen_low = sum(10.0 ** lower_query10(w, gram[1:]) for w in conts)
            num = max(0.0, 1.0 - seen_mass)
            den = 1.0 - seen_low
            if den <= 1e-12 or num == 0.0:
                bow[gram] = LOG10_ZERO if num == 0.0 and den > 1e-12 else 0.0
            else:
                bow[gram] = math.log10(num / den)

    return NGramModel(order=order, logp=logp, bow=bow, vocab=vocab)


def _map_word(model, w):
    if w == BOS or (w,) in model.logp:
        return w
    return UNK


def score10(model, word, context=()):
    """Backoff-chain log10 probability of word given the context."""
    word = _map_word(model, word)
    ctx = tuple(_map_word(model, w) for w in context)
    if len(ctx) >= model.order:
        ctx = ctx[len(ctx) - model.order + 1 :]
    acc = 0.0
    while True:
        p = model.logp.get(ctx + (word,))
        if p is not None:
            return acc + p
        if not ctx:
            return acc + model.logp.get((word,), LOG10_ZERO)
        acc += model.bow.get(ctx, 0.0)
        ctx = ctx[1:]


def score(model, word, context=()):
    """Natural-log probability of word given context (backoff evaluated)."""
    return score10(model, word, context) * _LN10


def perplexity(model, corpus):
    """Per-event perplexity of the corpus: events are each word plus the
    sentence-end marker, scored with start-padded truncated histories."""
    total10 = 0.0
    n = 0
    for sentence in corpus:
        toks = tokenize(sentence)
        if not toks:
            continue
        hist = (BOS,)
        for w in toks + [EOS]:
            total10 += score10(model, w, hist)
            hist = hist + (w,)
            n += 1
    if n == 0:
        raise ValueError("empty corpus")
    return 10.0 ** (-total10 / n)


def export_arpa(model):
    """Serialize to ARPA text (log10, 7 decimals, tab-separated)."""
    by_order = defaultdict(list)
    for gram in model.logp:
        by_order[len(gram)].append(gram)
    lines = ["\\data\\"]
    for k in range(1, model.order + 1):
        lines.append(f"ngram {k}={len(by_order.get(k, ()))}")
    lines.append("")
    for k in range(1, model.order + 1):
        lines.append(f"\\{k}-grams:")
        for gram in sorted(by_order.get(k, ())):
            lp = max(model.logp[gram], LOG10_ZERO)
            fields = [f"{lp:.7f}", *gram]
            if k < model.order:
                b = max(model.bow.get(gram, 0.0), LOG10_ZERO)
                fields.append(f"{b:.7f}")
            lines.append("\t".join(fields))
        lines.append("")
    lines.append("\\end\\")
    return "\n".join(lines) + "\n"


def import_arpa(text):
    """Parse ARPA text back into a model. Raises ArpaError with the line
    number on malformed input."""
    declared = {}
    logp = {}
    bow = {}
    section = None  # None -> pre-data, 0 -> \data\, k -> \k-grams:
    saw_end = False
    max_order = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if saw_end:
            raise ArpaError(f"line {lineno}: content after \\end\\")
        if line == "\\data\\":
            section = 0
            continue
        if line == "\\end\\":
            saw_end = True
            section = None
            continue
        if line.endswith("-grams:") and line.startswith("\\"):
            try:
                k = int(line[1:].split("-")[0])
            except ValueError:
                raise ArpaError(f"line {lineno}: bad section header {line!r}") from None
            if k < 1:
                raise ArpaError(f"line {lineno}: bad section order {k}")
            section = k
            max_order = max(max_order, k)
            continue
        if section == 0:
            if not line.startswith("ngram "):
                raise ArpaError(f"line {lineno}: expected 'ngram k=count', got {line!r}")
            try:
                k_str, count_str = line[len("ngram ") :].split("=")
                declared[int(k_str)] = int(count_str)
            except ValueError:
                raise ArpaError(f"line {lineno}: bad count declaration {line!r}") from None
            continue
        if section is None:
            raise ArpaError(f"line {lineno}: entry outside any section: {line!r}")
        fields = line.split()
        if len(fields) not in (section + 1, section + 2):
            raise ArpaError(
                f"line {lineno}: expected {section} words with logp"
                f" and optional backoff, got {len(fields)} fields"
            )
        try:
            lp = float(fields[0])
        except ValueError:
            raise ArpaError(f"line {lineno}: bad log-probability {fields[0]!r}") from None
        gram = tuple(fields[1 : section + 1])
        logp[gram] = lp
        if len(fields) == section + 2:
            try:
                bow[gram] = float(fields[section + 1])
            except ValueError:
                raise ArpaError(f"line {lineno}: bad backoff weight") from None
    if not saw_end:
        raise ArpaError("missing \\end\\ marker")
    if not logp:
        raise ArpaError("no n-gram entries found")
    for k, n_declared in declared.items():
        actual = sum(1 for g in logp if len(g) == k)
        if actual != n_declared:
            raise ArpaError(f"\\data\\ declares {n_declared} {k}-grams, file has {actual}")
    vocab = tuple(sorted(set(g[0] for g in logp if len(g) == 1) - {BOS} | {UNK}))
    return NGramModel(order=max_order, logp=logp, bow=bow, vocab=vocab)
