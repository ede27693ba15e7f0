"""The search loop: sample a batch of architectures, evaluate them (in
process or across workers), update the controller, and keep an append-only
JSON-lines log from which the best child is reproducible."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

from ..nn.checkpoint import save_checkpoint
from .child import ChildResult, ChildTrainConfig, instantiate_child, train_child
from .controller import reinforce_update, sample_arch
from .search_space import format_arch

log = logging.getLogger(__name__)

BATCH_SIZE = 8


def _child_seed(base_seed, index):
    return (base_seed * 1_000_003 + index) % (2**31)


def _json_num(x):
    return float(x) if x is not None and np.isfinite(x) else None


def _log_row(index, result):
    return {
        "index": index,
        "seed": result.seed,
        "spec": format_arch(result.spec),
        "decisions": result.spec.decisions(),
        "dev_ctc": _json_num(result.dev_ctc),
        "dev_wer": _json_num(result.dev_wer),
        "reward": float(result.reward),
        "status": result.status,
        "wall_time": float(result.wall_time),
    }


def select_best(rows):
    """Index of the dev-best row: lowest dev CTC, then highest reward, then
    earliest. Missing dev_ctc (infeasible/diverged/failed) ranks last."""
    if not rows:
        raise ValueError("no rows to rank")

    def key(pair):
        i, row = pair
        ctc = row["dev_ctc"]
        return (ctc if ctc is not None else np.inf, -row["reward"], i)

    return min(enumerate(rows), key=key)[0]


def load_search_log(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}, line {lineno}: bad JSON ({exc.msg})") from None
    return rows


def _evaluate_trained(spec, seed, train_set, dev_set, alphabet, input_shape, cfg):
    child = instantiate_child(spec, input_shape, alphabet, seed=seed)
    return train_child(child, train_set, dev_set, cfg, seed=seed)


def make_trainer_evaluator(train_set, dev_set, alphabet, input_shape, cfg=None):
    """evaluate_fn(spec, seed) that instantiates and trains a real child.
    Built from a module-level function so it survives pickling to workers."""
    return partial(
        _evaluate_trained,
        train_set=list(train_set),
        dev_set=list(dev_set),
        alphabet=alphabet,
        input_shape=tuple(input_shape),
        cfg=cfg or ChildTrainConfig(),
    )


def _failed_result(spec, seed, exc):
    log.warning("child evaluation failed: %s", exc)
    return ChildResult(spec, np.inf, np.inf, 0.0, 0.0, seed, status="failed")


def run_search(space, state, evaluate_fn, worker_count=1, log_path=None,
               checkpoint_path=None):
    """Evaluate state.budget children in controller batches; returns
    (best ChildResult, all results). Parameters stay fixed while a batch is
    sampled and evaluated, so worker completion order cannot matter."""
    if worker_count < 1:
        raise ValueError("worker_count must be >= 1")

    results = []
    rows = []
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    pool = ProcessPoolExecutor(max_workers=worker_count) if worker_count > 1 else None
    try:
        while len(results) < state.budget:
            n = min(BATCH_SIZE, state.budget - len(results))
            sampled = []
            for k in range(n):
                spec, logprob = sample_arch(state, space)
                sampled.append((spec, logprob, _child_seed(state.seed, len(results) + k)))

            if pool is not None:
                futures = [
                    pool.submit(evaluate_fn, spec, seed) for spec, _, seed in sampled
                ]
                batch = []
                for (spec, _, seed), fut in zip(sampled, futures):
                    try:
                        batch.append(fut.result())
                    except Exception as exc:
                        batch.append(_failed_result(spec, seed, exc))
            else:
                batch = []
                for spec, _, seed in sampled:
                    try:
                        batch.append(evaluate_fn(spec, seed))
                    except Exception as exc:
                        batch.append(_failed_result(spec, seed, exc))

            for (spec, logprob, seed), result in zip(sampled, batch):
                row = _log_row(len(results), result)
                rows.append(row)
                results.append(result)
                if log_fh:
                    log_fh.write(json.dumps(row) + "\n")
                    log_fh.flush()

            reinforce_update(
                state, [(s, lp, r.reward) for (s, lp, _), r in zip(sampled, batch)]
            )
    finally:
        if pool is not None:
            pool.shutdown()
        if log_fh:
            log_fh.close()

    best = results[select_best(rows)]
    if checkpoint_path and best.params is not None:
        save_checkpoint(
            checkpoint_path, format_arch(best.spec), best.alphabet, best.params
        )
    return best, results
