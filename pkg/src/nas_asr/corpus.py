"""Dataset plumbing and scoring: JSON-lines manifests, a synthetic tone
corpus for desk-scale end-to-end runs, TIMIT-style phone transcripts with
the 61-to-39 folding, and Levenshtein WER/PER."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .audio import Waveform, write_wav
from .ctc import Alphabet


@dataclass(frozen=True)
class EditDistanceResult:
    substitutions: int
    insertions: int
    deletions: int
    n_reference: int

    @property
    def errors(self):
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self):
        return self.errors / self.n_reference

    def __add__(self, other):
        return EditDistanceResult(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.n_reference + other.n_reference,
        )


def _levenshtein_counts(ref, hyp):
    n, m = len(ref), len(hyp)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            dist[i, j] = min(sub, dist[i - 1, j] + 1, dist[i, j - 1] + 1)

    # backtrace; ties prefer substitution, then deletion, then insertion
    subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return int(subs), int(ins), int(dels)


def word_error_rate(reference, hypothesis):
    """Levenshtein alignment of token lists with unit costs."""
    ref = list(reference)
    hyp = list(hypothesis)
    if not ref:
        raise ValueError("reference must be non-empty")
    s, i, d = _levenshtein_counts(ref, hyp)
    return EditDistanceResult(s, i, d, len(ref))


def phone_error_rate(reference, hypothesis, folding=None):
    """WER's algorithm over phone tokens; a folding map is applied first.

    folding maps each known phone to its class, or to None for phones that
    are removed before scoring. Tokens absent from the map are rejected.
    """
    if folding is not None:
        reference = fold_phones(reference, folding)
        hypothesis = fold_phones(hypothesis, folding)
    return word_error_rate(reference, hypothesis)


def fold_phones(phones, folding):
    out = []
    for p in phones:
        if p not in folding:
            raise ValueError(f"unknown phone symbol {p!r}")
        mapped = folding[p]
        if mapped is not None:
            out.append(mapped)
    return out


def load_phone_folding(path=None):
    """Parse a 'phone class' table (class '-' removes the phone). The
    packaged table is the conventional TIMIT 61-to-39 reduction."""
    if path is None:
        text = (
            resources.files("nas_asr").joinpath("data/timit_phone_fold_61_39.txt").read_text()
        )
    else:
        text = Path(path).read_text()
    folding = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ValueError(f"line {lineno}: expected 'phone class', got {raw!r}")
        folding[fields[0]] = None if fields[1] == "-" else fields[1]
    # classes are valid inputs too, so an already-folded sequence passes through
    for cls in list(folding.values()):
        if cls is not None:
            folding.setdefault(cls, cls)
    return folding


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    audio: Path
    text: str


def load_manifest(path, require_audio=True):
    """Read a JSON-lines manifest of {id, audio, text} rows. Audio paths
    are resolved relative to the manifest's directory."""
    path = Path(path)
    base = path.parent
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}, line {lineno}: bad JSON ({exc.msg})") from None
            if not isinstance(row, dict) or not {"id", "audio", "text"} <= set(row):
                raise ValueError(f"{path}, line {lineno}: need id, audio and text fields")
            utt_id = str(row["id"])
            if utt_id in seen:
                raise ValueError(f"{path}, line {lineno}: duplicate id {utt_id!r}")
            seen.add(utt_id)
            text = str(row["text"])
            if not text.strip():
                raise ValueError(f"{path}, line {lineno}: empty transcript")
            audio = Path(row["audio"])
            if not audio.is_absolute():
                audio = base / audio
            if require_audio and not audio.exists():
                raise ValueError(f"{path}, line {lineno}: audio file not found: {audio}")
            entries.append(ManifestEntry(utt_id, audio, text))
    return entries


def save_manifest(path, entries):
    """Write entries as JSON-lines; audio paths relative to the manifest
    directory when possible."""
    path = Path(path)
    base = path.parent
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            audio = Path(e.audio)
            try:
                audio = audio.relative_to(base)
            except ValueError:
                pass
            fh.write(
                json.dumps({"id": e.utt_id, "audio": str(audio), "text": e.text}) + "\n"
            )


def load_timit_phone_transcript(path):
    """Parse 'begin end phone' lines into the phone token sequence."""
    tokens = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 3:
                raise ValueError(f"{path}, line {lineno}: expected 'begin end phone'")
            try:
                begin, end = int(fields[0]), int(fields[1])
            except ValueError:
                raise ValueError(f"{path}, line {lineno}: non-integer sample index") from None
            if end < begin:
                raise ValueError(f"{path}, line {lineno}: end before begin")
            tokens.append(fields[2])
    return tokens


def synthetic_symbols(n_symbols):
    if not 2 <= n_symbols <= 26:
        raise ValueError("n_symbols must be in [2, 26]")
    return tuple(chr(ord("a") + i) for i in range(n_symbols))


def synthetic_alphabet(n_symbols):
    """Character alphabet for the synthetic corpus: the symbols plus the
    word separator."""
    return Alphabet(synthetic_symbols(n_symbols) + (" ",))


def symbol_frequencies(n_symbols):
    """One fixed tone per symbol, log-spaced so neighbors stay resolvable."""
    return np.geomspace(300.0, 3600.0, n_symbols)


def generate_synthetic_corpus(
    out_dir,
    n_symbols,
    n_utterances,
    seed,
    noise_level=0.02,
    sample_rate=16000,
    min_words=2,
    max_words=6,
):
    """Render random symbol sequences as concatenated tones.

    Each symbol is a fixed pure tone with a raised-cosine envelope;
    word durations are jittered, words are separated by short gaps, and
    gaussian noise of RMS noise_level is added. Deterministic given seed.
    Returns the manifest entries; wavs and manifest.jsonl land in out_dir.
    """
    if n_utterances < 1:
        raise ValueError("n_utterances must be >= 1")
    if noise_level < 0:
        raise ValueError("noise_level must be >= 0")
    if not 1 <= min_words <= max_words:
        raise ValueError("need 1 <= min_words <= max_words")
    symbols = synthetic_symbols(n_symbols)
    freqs = symbol_frequencies(n_symbols)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    gap = np.zeros(int(0.04 * sample_rate))
    entries = []
    for n in range(n_utterances):
        n_words = int(rng.integers(min_words, max_words + 1))
        ids = rng.integers(0, n_symbols, size=n_words)
        pieces = []
        for k, sym_id in enumerate(ids):
            dur = float(rng.uniform(0.08, 0.16))
            t = np.arange(int(dur * sample_rate)) / sample_rate
            tone = 0.6 * np.sin(2 * np.pi * freqs[sym_id] * t)
            tone *= np.hanning(tone.size)
            pieces.append(tone)
            if k != n_words - 1:
                pieces.append(gap)
        samples = np.concatenate(pieces)
        if noise_level > 0:
            samples = samples + rng.normal(scale=noise_level, size=samples.size)
        samples = np.clip(samples, -1.0, 1.0)

        utt_id = f"utt_{n:04d}"
        wav_path = out_dir / f"{utt_id}.wav"
        write_wav(wav_path, Waveform(samples=samples, sample_rate=sample_rate))
        text = " ".join(symbols[i] for i in ids)
        entries.append(ManifestEntry(utt_id, wav_path, text))

    save_manifest(out_dir / "manifest.jsonl", entries)
    return entries


def split_entries(entries, n_train, n_dev, n_test):
    """Deterministic contiguous split; ids stay disjoint across splits."""
    if n_train + n_dev + n_test > len(entries):
        raise ValueError(
            f"split sizes {n_train}+{n_dev}+{n_test} exceed {len(entries)} entries"
        )
    train = entries[:n_train]
    dev = entries[n_train : n_train + n_dev]
    test = entries[n_train + n_dev : n_train + n_dev + n_test]
    return train, dev, test
