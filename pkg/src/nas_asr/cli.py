"""Command-line pipeline driver.

One binary with six subcommands covering the full workflow: ``extract``
(audio to feature caches), ``train-lm`` (text to ARPA), ``train-child``
(one architecture), ``search`` (controller-driven architecture search),
``decode`` (checkpoint to transcripts), and ``score`` (WER/PER report).

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Configuration comes from an INI-style file of ``key = value`` lines
grouped in sections; command-line flags override file values. The
``NAS_ASR_SEED`` environment variable is the seed fallback when neither
a flag nor a config key supplies one.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .audio import (
    AudioError,
    FrontendConfig,
    add_gaussian_noise,
    extract_mfcc,
    load_features,
    read_wav,
    save_features,
    time_warp,
)
from .corpus import (
    load_manifest,
    load_phone_folding,
    phone_error_rate,
    word_error_rate,
)
from .ctc import Alphabet
from .decoder import DecoderConfig, beam_decode, greedy_decode
from .lm import export_arpa, import_arpa, perplexity, train_ngram
from .nas import (
    ChildTrainConfig,
    InfeasibleArch,
    SearchSpace,
    create_controller,
    format_arch,
    instantiate_child,
    make_trainer_evaluator,
    parse_arch,
    run_search,
    train_child,
)
from .nn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .nn.layers import softmax
from .nn.optim import OptimizerConfig

log = logging.getLogger("nas_asr.cli")

ENV_SEED = "NAS_ASR_SEED"


class UsageError(Exception):
    """Bad flags, bad config, or bad grammar: exit code 1."""


class RuntimeFailure(Exception):
    """Failure while doing the work: exit code 2."""


# ---------------------------------------------------------------------------
# configuration

# Every config key lives here; anything else is rejected by name. Values
# are (type, default) where type is one of int/float/str/path/intlist.
CONFIG_SCHEMA = {
    "data": {
        "train_manifest": ("path", None),
        "dev_manifest": ("path", None),
        "test_manifest": ("path", None),
        "features_dir": ("path", None),
    },
    "frontend": {
        "window_ms": ("float", 20.0),
        "hop_ms": ("float", 10.0),
        "n_filters": ("int", 32),
        "n_ceps": ("int", 16),
    },
    "space": {
        "max_blocks": ("int", 4),
        "num_filters": ("intlist", (8, 16, 32, 64)),
        "filter_heights": ("intlist", (1, 3, 5, 7)),
        "filter_widths": ("intlist", (1, 3, 5, 7)),
        "stride_heights": ("intlist", (1, 2)),
        "stride_widths": ("intlist", (1, 2)),
        "has_maxpool": ("intlist", (0, 1)),
        "has_batchnorm": ("intlist", (0, 1)),
        "has_rnn_block": ("intlist", (0, 1)),
    },
    "search": {
        "budget": ("int", 1024),
        "workers": ("int", 1),
        "seed": ("int", None),
        "hidden_size": ("int", 512),
        "embed_size": ("int", 32),
        "controller_lr": ("float", 0.05),
        "gamma": ("float", 1.0),
        "baseline_decay": ("float", 0.95),
        "log_path": ("path", "search_log.jsonl"),
        "checkpoint": ("path", "best_child.nasm"),
    },
    "child": {
        "steps": ("int", 300),
        "eval_every": ("int", 25),
        "patience": ("int", 4),
        "lr": ("float", 1e-3),
        "clip_norm": ("float", 5.0),
    },
    "decode": {
        "beam_width": ("int", 8),
        "alpha": ("float", 0.0),
        "beta": ("float", 0.0),
        "lm": ("path", None),
    },
}


def _convert(kind, raw, where):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            value = float(raw)
            if not np.isfinite(value):
                raise ValueError(raw)
            return value
        if kind == "intlist":
            return tuple(int(part) for part in raw.split(",") if part.strip())
        return raw.strip()
    except ValueError:
        raise UsageError(f"{where} expects {kind}, got {raw!r}") from None


def default_config():
    return {s: {k: d for k, (_, d) in keys.items()} for s, keys in CONFIG_SCHEMA.items()}


def load_config(path):
    """Parse and schema-check a config file; unknown keys are errors."""
    cfg = default_config()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise UsageError(f"config {path}: {exc}") from None
    if parser.defaults():
        raise UsageError(
            f"config {path}: keys outside a [section] are not allowed"
        )
    for section in parser.sections():
        if section not in CONFIG_SCHEMA:
            raise UsageError(f"config {path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in CONFIG_SCHEMA[section]:
                raise UsageError(f"config {path}: unknown key [{section}] {key}")
            kind = CONFIG_SCHEMA[section][key][0]
            cfg[section][key] = _convert(kind, raw, f"config {path}: [{section}] {key}")
    return cfg


def _merged(cfg, section, key, flag_value):
    """Flag wins over config file wins over schema default."""
    return flag_value if flag_value is not None else cfg[section][key]


def resolve_seed(flag_value, cfg_value=None):
    if flag_value is not None:
        return flag_value
    if cfg_value is not None:
        return cfg_value
    raw = os.environ.get(ENV_SEED)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{ENV_SEED} must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------------------
# shared helpers

def _require_paths(**named):
    for name, value in named.items():
        if value is None:
            raise UsageError(f"{name} is required (flag or config)")
        if not Path(value).exists():
            raise UsageError(f"{name} does not exist: {value}")


def _feature_path(features_dir, utt_id):
    return Path(features_dir) / f"{utt_id}.nasf"


def alphabet_from_texts(texts):
    """Sorted distinct characters across all transcripts."""
    chars = sorted(set().union(*(set(t) for t in texts)))
    return Alphabet(tuple(chars))


def _load_dataset(entries, features_dir, alphabet):
    """(features, encoded transcript) pairs from the extract cache."""
    data = []
    for entry in entries:
        path = _feature_path(features_dir, entry.utt_id)
        if not path.exists():
            raise RuntimeFailure(
                f"{entry.utt_id}: feature cache not found: {path} (run extract first)"
            )
        feat = load_features(path)
        data.append((feat.frames, alphabet.encode(entry.text)))
    widths = {frames.shape[1] for frames, _ in data}
    if len(widths) > 1:
        raise RuntimeFailure(
            f"feature caches disagree on coefficient count: {sorted(widths)}"
        )
    return data


def _min_frames_shape(datasets):
    t = min(frames.shape[0] for data in datasets for frames, _ in data)
    f = next(iter(datasets[0]))[0].shape[1]
    return (t, f)


def _read_sentences(path):
    """Training text: a manifest (.jsonl transcripts) or one sentence per line."""
    path = Path(path)
    if path.suffix == ".jsonl":
        return [e.text for e in load_manifest(path, require_audio=False)]
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                sentences.append(line)
    return sentences


def _fmt(value):
    return "n/a" if value is None or not np.isfinite(value) else f"{value:.6f}"


def _json_safe(value):
    if value is None or not np.isfinite(value):
        return None
    return float(value)


# ---------------------------------------------------------------------------
# commands

def cmd_extract(args):
    cfg = load_config(args.config)
    frontend = FrontendConfig(
        window_ms=_merged(cfg, "frontend", "window_ms", args.window_ms),
        hop_ms=_merged(cfg, "frontend", "hop_ms", args.hop_ms),
        n_filters=_merged(cfg, "frontend", "n_filters", args.n_filters),
        n_ceps=_merged(cfg, "frontend", "n_ceps", args.n_ceps),
    )
    seed = resolve_seed(args.seed)
    entries = load_manifest(args.manifest, require_audio=False)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    failures = 0
    for index, entry in enumerate(entries):
        try:
            wav = read_wav(entry.audio)
            if args.noise_snr_db is not None:
                wav = add_gaussian_noise(wav, args.noise_snr_db, seed + index)
            feat = extract_mfcc(wav, frontend)
            if args.warp is not None:
                feat = time_warp(feat, args.warp, seed + index)
            save_features(_feature_path(out_dir, entry.utt_id), feat)
            log.info("extracted %s: %d frames", entry.utt_id, feat.n_frames)
        except (AudioError, OSError, ValueError) as exc:
            failures += 1
            log.error("%s: %s", entry.utt_id, exc)
    if failures:
        log.error("%d of %d utterances failed", failures, len(entries))
        return 2
    print(f"extracted {len(entries)} utterances to {out_dir}")
    return 0


def cmd_train_lm(args):
    sentences = _read_sentences(args.corpus)
    if not sentences:
        raise RuntimeFailure(f"{args.corpus}: no sentences found")
    model = train_ngram(sentences, args.order, args.smoothing, args.add_k)
    text = export_arpa(model)
    if not text.endswith("\n"):
        text += "\n"
    Path(args.out).write_text(text, encoding="utf-8")
    pp = perplexity(model, sentences)
    log.info("order-%d model on %d sentences, train perplexity %.3f",
             args.order, len(sentences), pp)
    print(f"wrote {args.out} (order {args.order}, {len(model.logp)} n-grams)")
    return 0


def _parse_arch_flag(text):
    try:
        return parse_arch(text)
    except ValueError as exc:
        raise UsageError(f"--arch: {exc}") from None


def cmd_train_child(args):
    cfg = load_config(args.config)
    spec = _parse_arch_flag(args.arch)
    train_manifest = _merged(cfg, "data", "train_manifest", args.train_manifest)
    dev_manifest = _merged(cfg, "data", "dev_manifest", args.dev_manifest)
    features_dir = _merged(cfg, "data", "features_dir", args.features_dir)
    _require_paths(train_manifest=train_manifest, dev_manifest=dev_manifest,
                   features_dir=features_dir)
    seed = resolve_seed(args.seed, cfg["search"]["seed"])

    train_entries = load_manifest(train_manifest, require_audio=False)
    dev_entries = load_manifest(dev_manifest, require_audio=False)
    alphabet = alphabet_from_texts(
        [e.text for e in train_entries] + [e.text for e in dev_entries]
    )
    train_set = _load_dataset(train_entries, features_dir, alphabet)
    dev_set = _load_dataset(dev_entries, features_dir, alphabet)
    input_shape = _min_frames_shape([train_set, dev_set])

    train_cfg = ChildTrainConfig(
        steps=_merged(cfg, "child", "steps", args.steps),
        eval_every=_merged(cfg, "child", "eval_every", args.eval_every),
        patience=_merged(cfg, "child", "patience", args.patience),
        opt=OptimizerConfig(
            alpha=_merged(cfg, "child", "lr", args.lr),
            clip_norm=_merged(cfg, "child", "clip_norm", args.clip_norm),
        ),
    )
    child = instantiate_child(spec, input_shape, alphabet, seed=seed)
    result = train_child(child, train_set, dev_set, train_cfg, seed=seed)
    if result.status == "infeasible" or result.params is None:
        reason = child.reason if isinstance(child, InfeasibleArch) else result.status
        raise RuntimeFailure(f"architecture {args.arch} is untrainable here: {reason}")

    save_checkpoint(args.checkpoint, format_arch(spec),
                    "".join(alphabet.symbols), result.params)
    metrics = {
        "arch": format_arch(spec),
        "status": result.status,
        "dev_ctc": _json_safe(result.dev_ctc),
        "dev_wer": _json_safe(result.dev_wer),
        "reward": result.reward,
        "wall_time": result.wall_time,
        "seed": seed,
        "steps": train_cfg.steps,
    }
    if args.metrics:
        Path(args.metrics).write_text(json.dumps(metrics, indent=2) + "\n",
                                      encoding="utf-8")
    log.info("trained %s: status %s", format_arch(spec), result.status)
    print(f"architecture  {format_arch(spec)}")
    print(f"status        {result.status}")
    print(f"dev ctc       {_fmt(result.dev_ctc)}")
    print(f"dev wer       {_fmt(result.dev_wer)}")
    return 0


def _space_from_config(cfg):
    return SearchSpace(
        max_blocks=cfg["space"]["max_blocks"],
        num_filters=cfg["space"]["num_filters"],
        filter_height=cfg["space"]["filter_heights"],
        filter_width=cfg["space"]["filter_widths"],
        stride_height=cfg["space"]["stride_heights"],
        stride_width=cfg["space"]["stride_widths"],
        has_maxpool=cfg["space"]["has_maxpool"],
        has_batchnorm=cfg["space"]["has_batchnorm"],
        has_rnn_block=cfg["space"]["has_rnn_block"],
    )


def cmd_search(args):
    cfg = load_config(args.config)
    train_manifest = _merged(cfg, "data", "train_manifest", args.train_manifest)
    dev_manifest = _merged(cfg, "data", "dev_manifest", args.dev_manifest)
    features_dir = _merged(cfg, "data", "features_dir", args.features_dir)
    _require_paths(train_manifest=train_manifest, dev_manifest=dev_manifest,
                   features_dir=features_dir)
    seed = resolve_seed(args.seed, cfg["search"]["seed"])
    budget = _merged(cfg, "search", "budget", args.budget)
    workers = _merged(cfg, "search", "workers", args.workers)
    log_path = _merged(cfg, "search", "log_path", args.log_path)
    checkpoint = _merged(cfg, "search", "checkpoint", args.checkpoint)

    train_entries = load_manifest(train_manifest, require_audio=False)
    dev_entries = load_manifest(dev_manifest, require_audio=False)
    alphabet = alphabet_from_texts(
        [e.text for e in train_entries] + [e.text for e in dev_entries]
    )
    train_set = _load_dataset(train_entries, features_dir, alphabet)
    dev_set = _load_dataset(dev_entries, features_dir, alphabet)
    input_shape = _min_frames_shape([train_set, dev_set])

    try:
        space = _space_from_config(cfg)
        state = create_controller(
            space,
            hidden_size=cfg["search"]["hidden_size"],
            embed_size=cfg["search"]["embed_size"],
            seed=seed,
            gamma=cfg["search"]["gamma"],
            budget=budget,
            lr=cfg["search"]["controller_lr"],
            baseline_decay=cfg["search"]["baseline_decay"],
        )
        train_cfg = ChildTrainConfig(
            steps=_merged(cfg, "child", "steps", args.steps),
            eval_every=cfg["child"]["eval_every"],
            patience=cfg["child"]["patience"],
            opt=OptimizerConfig(alpha=cfg["child"]["lr"],
                                clip_norm=cfg["child"]["clip_norm"]),
            gamma=cfg["search"]["gamma"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    evaluate_fn = make_trainer_evaluator(train_set, dev_set, alphabet,
                                         input_shape, train_cfg)
    log.info("searching %d children (%d workers, seed %d) over %d-point space",
             budget, workers, seed, space.n_points)
    best, results = run_search(space, state, evaluate_fn, worker_count=workers,
                               log_path=log_path, checkpoint_path=checkpoint)

    statuses = [r.status for r in results]
    print(f"architecture  {format_arch(best.spec)}")
    print(f"dev ctc       {_fmt(best.dev_ctc)}")
    print(f"dev wer       {_fmt(best.dev_wer)}")
    print(f"children      {len(results)} "
          f"({statuses.count('ok')} ok, {len(statuses) - statuses.count('ok')} other)")
    print(f"log           {log_path}")
    if best.params is None:
        # run_search writes no checkpoint in this case; fail loudly instead
        # of letting a later decode trip over the missing file
        raise RuntimeFailure(
            f"no child trained successfully in {len(results)} attempts "
            f"(best status: {best.status}); see {log_path}"
        )
    print(f"checkpoint    {checkpoint}")
    return 0


def _greedy_hypothesis(probs, alphabet):
    """Best-path decode: the per-frame argmax path, collapsed."""
    text = greedy_decode(probs, alphabet)
    acoustic = float(np.sum(np.log(np.max(probs, axis=1))))
    return [{"text": text, "acoustic_logp": acoustic, "fused_score": acoustic}]


def cmd_decode(args):
    cfg = load_config(args.config)
    features_dir = _merged(cfg, "data", "features_dir", args.features_dir)
    _require_paths(checkpoint=args.checkpoint, manifest=args.manifest,
                   features_dir=features_dir)
    beam_width = _merged(cfg, "decode", "beam_width", args.beam)
    alpha = _merged(cfg, "decode", "alpha", args.alpha)
    beta = _merged(cfg, "decode", "beta", args.beta)
    lm_path = _merged(cfg, "decode", "lm", args.lm)

    arch_text, alphabet_text, params = load_checkpoint(args.checkpoint)
    spec = parse_arch(arch_text)
    alphabet = Alphabet(tuple(alphabet_text))
    entries = load_manifest(args.manifest, require_audio=False)
    dataset = _load_dataset(entries, features_dir, alphabet)

    # Build at the longest utterance so construction never fails on pooling;
    # genuinely too-short utterances fail per utterance below, by id.
    t_max = max(frames.shape[0] for frames, _ in dataset)
    child = instantiate_child(spec, (t_max, dataset[0][0].shape[1]), alphabet)
    if isinstance(child, InfeasibleArch):
        raise RuntimeFailure(f"checkpoint architecture infeasible: {child.reason}")
    try:
        child.restore(params)
    except (KeyError, ValueError) as exc:
        raise RuntimeFailure(
            f"checkpoint {args.checkpoint} does not match these features: {exc}"
        ) from None

    model = None
    if lm_path is not None:
        model = import_arpa(Path(lm_path).read_text(encoding="utf-8"))
    decoder_cfg = DecoderConfig(beam_width=beam_width, alpha=alpha, beta=beta,
                                model=model)
    if beam_width == 1 and (alpha != 0.0 or beta != 0.0):
        log.warning("beam 1 is plain best-path decoding; alpha/beta ignored")

    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        for entry, (frames, _) in zip(entries, dataset):
            try:
                logits = child.forward(frames, train=False)
                probs = softmax(logits)
                if beam_width == 1:
                    top = _greedy_hypothesis(probs, alphabet)
                else:
                    top = [
                        {"text": h.text, "acoustic_logp": h.acoustic_logp,
                         "fused_score": h.fused_score}
                        for h in beam_decode(probs, alphabet, decoder_cfg)
                    ]
            except ValueError as exc:
                raise RuntimeFailure(f"{entry.utt_id}: {exc}") from None
            fh.write(json.dumps({"id": entry.utt_id, "top": top}) + "\n")
            log.info("decoded %s: %r", entry.utt_id, top[0]["text"])
    print(f"decoded {len(entries)} utterances to {out}")
    return 0


def _load_hypotheses(path):
    hyps = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RuntimeFailure(f"{path}, line {lineno}: bad JSON ({exc.msg})") from None
            try:
                utt_id = row["id"]
                text = row["top"][0]["text"]
            except (KeyError, IndexError, TypeError):
                raise RuntimeFailure(
                    f"{path}, line {lineno}: need id and a non-empty top list"
                ) from None
            if utt_id in hyps:
                raise RuntimeFailure(f"{path}, line {lineno}: duplicate id {utt_id!r}")
            hyps[utt_id] = text
    return hyps


def _resolve_folding(mode, tokens):
    """none, timit, a table path, or auto (timit only when every token is known)."""
    if mode == "none":
        return None
    if mode == "timit":
        return load_phone_folding()
    if mode == "auto":
        table = load_phone_folding()
        return table if tokens and all(t in table for t in tokens) else None
    return load_phone_folding(mode)


def cmd_score(args):
    _require_paths(hyp=args.hyp, ref=args.ref)
    refs = load_manifest(args.ref, require_audio=False)
    hyps = _load_hypotheses(args.hyp)
    missing = [e.utt_id for e in refs if e.utt_id not in hyps]
    if missing:
        raise RuntimeFailure(f"hypotheses missing for: {', '.join(missing)}")
    extra = sorted(set(hyps) - {e.utt_id for e in refs})
    if extra:
        raise RuntimeFailure(f"hypotheses for unknown ids: {', '.join(extra)}")

    all_tokens = [t for e in refs for t in e.text.split()]
    all_tokens += [t for h in hyps.values() for t in h.split()]
    folding = _resolve_folding(args.fold, all_tokens)

    words = None
    phones = None
    for entry in refs:
        ref_tokens = entry.text.split()
        hyp_tokens = hyps[entry.utt_id].split()
        w = word_error_rate(ref_tokens, hyp_tokens)
        p = phone_error_rate(ref_tokens, hyp_tokens, folding)
        words = w if words is None else words + w
        phones = p if phones is None else phones + p

    report = {
        "wer": words.rate,
        "per": phones.rate,
        "S": words.substitutions,
        "I": words.insertions,
        "D": words.deletions,
        "N": words.n_reference,
    }
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# argument parsing and entry point

class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this binary reserves 2 for runtime."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_flag(sub):
    sub.add_argument("--config", metavar="FILE",
                     help="INI config file; flags override its values")


def _add_seed_flag(sub):
    sub.add_argument("--seed", type=int,
                     help=f"random seed (default: config, then ${ENV_SEED}, then 0)")


def build_parser():
    parser = _Parser(
        prog="nas-asr",
        description="End-to-end speech recognition pipeline: feature "
                    "extraction, n-gram LM training, CTC child training, "
                    "architecture search, beam decoding, and scoring.",
    )
    parser.add_argument("--log", choices=("text", "json"), default="text",
                        help="log format on stderr (json emits one object per line)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser,
                                metavar="command")
    sub.required = True

    p = sub.add_parser("extract", help="compute MFCC feature caches from a manifest")
    p.add_argument("--manifest", required=True, help="JSON-lines corpus manifest")
    p.add_argument("--out-dir", required=True, help="directory for .nasf feature caches")
    p.add_argument("--window-ms", type=float, help="analysis window (default 20)")
    p.add_argument("--hop-ms", type=float, help="frame hop (default 10)")
    p.add_argument("--n-filters", type=int, help="mel filters (default 32)")
    p.add_argument("--n-ceps", type=int, help="cepstral coefficients (default 16)")
    p.add_argument("--noise-snr-db", type=float,
                   help="add gaussian noise at this SNR before analysis")
    p.add_argument("--warp", type=int,
                   help="random local time warp of at most this many frames")
    _add_config_flag(p)
    _add_seed_flag(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-lm", help="train a backoff n-gram model, write ARPA")
    p.add_argument("--corpus", required=True,
                   help="training text: .jsonl manifest or one sentence per line")
    p.add_argument("--order", type=int, required=True, help="n-gram order")
    p.add_argument("--smoothing", choices=("witten_bell", "add_k", "none"),
                   default="witten_bell", help="smoothing method")
    p.add_argument("--add-k", type=float, default=1.0,
                   help="constant for add_k smoothing")
    p.add_argument("--out", required=True, help="output ARPA path")
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("train-child", help="train one architecture to a checkpoint")
    p.add_argument("--arch", required=True,
                   help="architecture string, e.g. nf16,fh3,fw3,sh1,sw1,mp1,bn1,rnn0,hd32")
    p.add_argument("--train-manifest", help="training manifest")
    p.add_argument("--dev-manifest", help="held-out manifest for early stopping")
    p.add_argument("--features-dir", help="extract output directory")
    p.add_argument("--checkpoint", required=True, help="output checkpoint path")
    p.add_argument("--metrics", help="optional JSON metrics path")
    p.add_argument("--steps", type=int, help="training steps (default 300)")
    p.add_argument("--eval-every", type=int, help="steps between dev evaluations")
    p.add_argument("--patience", type=int, help="dev evaluations without improvement")
    p.add_argument("--lr", type=float, help="Adam step size (default 1e-3)")
    p.add_argument("--clip-norm", type=float, help="gradient clip norm (default 5)")
    _add_config_flag(p)
    _add_seed_flag(p)
    p.set_defaults(func=cmd_train_child)

    p = sub.add_parser("search", help="run the architecture search")
    p.add_argument("--train-manifest", help="training manifest")
    p.add_argument("--dev-manifest", help="reward manifest")
    p.add_argument("--features-dir", help="extract output directory")
    p.add_argument("--budget", type=int, help="children to evaluate (default 1024)")
    p.add_argument("--workers", type=int, help="child training processes (default 1)")
    p.add_argument("--steps", type=int, help="training steps per child")
    p.add_argument("--log-path", help="JSON-lines search log (appended)")
    p.add_argument("--checkpoint", help="path for the best child's checkpoint")
    _add_config_flag(p)
    _add_seed_flag(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("decode", help="decode a manifest with a trained checkpoint")
    p.add_argument("--checkpoint", required=True, help="trained child checkpoint")
    p.add_argument("--manifest", required=True, help="utterances to decode")
    p.add_argument("--features-dir", help="extract output directory")
    p.add_argument("--out", required=True, help="output JSON-lines hypotheses")
    p.add_argument("--beam", type=int, help="beam width; 1 means best-path (greedy)")
    p.add_argument("--alpha", type=float, help="language model weight")
    p.add_argument("--beta", type=float, help="per-word insertion bonus")
    p.add_argument("--lm", help="ARPA language model for shallow fusion")
    _add_config_flag(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("score", help="score hypotheses against a reference manifest")
    p.add_argument("--hyp", required=True, help="decode output JSON-lines")
    p.add_argument("--ref", required=True, help="reference manifest")
    p.add_argument("--out", help="optional JSON report path (also printed)")
    p.add_argument("--fold", default="auto",
                   help="phone folding for PER: auto, none, timit, or a table path "
                        "(auto folds only when every token is a known phone)")
    p.set_defaults(func=cmd_score)
    return parser


class _JsonLogHandler(logging.Handler):
    def emit(self, record):
        row = {
            "level": record.levelname.lower(),
            "logger": record.name,
            "event": record.getMessage(),
        }
        sys.stderr.write(json.dumps(row) + "\n")


def _setup_logging(mode):
    handler = _JsonLogHandler() if mode == "json" else logging.StreamHandler(sys.stderr)
    if mode != "json":
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logging.basicConfig(level=logging.INFO, handlers=[handler], force=True)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log)
    try:
        return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return 1
    except (AudioError, CheckpointError, RuntimeFailure, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
