"""Tests for the search space grammar, the REINFORCE controller, child
network construction/training, and the search loop."""

import json

import numpy as np
import pytest

from fdcheck import numerical_grad, rel_error
from nas_asr.ctc import Alphabet, ctc_loss
from nas_asr.nas import (
    ArchSpec,
    BlockSpec,
    ChildResult,
    ChildTrainConfig,
    InfeasibleArch,
    SearchSpace,
    compute_reward,
    create_controller,
    decision_plan,
    format_arch,
    instantiate_child,
    load_search_log,
    parse_arch,
    reinforce_update,
    run_search,
    sample_arch,
    select_best,
    spec_logprob,
    train_child,
)
from nas_asr.nas.controller import _accumulate_episode
from nas_asr.nas.search_space import validate_in_space
from nas_asr.nn.layers import softmax
from nas_asr.nn.optim import OptimizerConfig

AB = Alphabet(("a", "b"))


def tiny_space():
    """One real binary decision (num_filters); everything else pinned."""
    return SearchSpace(
        max_blocks=1,
        num_filters=(8, 16),
        filter_height=(3,),
        filter_width=(3,),
        stride_height=(1,),
        stride_width=(1,),
        has_maxpool=(0,),
        has_batchnorm=(0,),
        has_rnn_block=(0,),
    )


def plain_block(**overrides):
    base = dict(
        num_filters=8,
        filter_height=3,
        filter_width=3,
        stride_height=1,
        stride_width=1,
        has_maxpool=0,
        has_batchnorm=0,
        has_rnn_block=0,
    )
    base.update(overrides)
    return BlockSpec(**base)


class TestSearchSpace:
    def test_defaults(self):
        space = SearchSpace()
        assert space.max_blocks == 4
        assert len(decision_plan(space)) == 32
        assert space.n_points == (4 * 4 * 4 * 2 * 2 * 2 * 2 * 2) ** 4

    def test_rejects_empty_choice_list(self):
        with pytest.raises(ValueError, match="non-empty"):
            SearchSpace(num_filters=())
        with pytest.raises(ValueError, match="max_blocks"):
            SearchSpace(max_blocks=0)

    def test_block_validation(self):
        with pytest.raises(ValueError, match="has_maxpool"):
            plain_block(has_maxpool=2)
        with pytest.raises(ValueError, match="strides"):
            plain_block(stride_height=0)

    def test_format_parse_round_trip(self):
        spec = ArchSpec(
            blocks=(
                plain_block(num_filters=16, filter_width=5, stride_width=2, has_maxpool=1, has_rnn_block=1),
                plain_block(filter_height=1, stride_height=2, has_batchnorm=1),
            ),
            head_width=48,
        )
        text = format_arch(spec)
        assert text == (
            "nf16,fh3,fw5,sh1,sw2,mp1,bn0,rnn1,"
            "nf8,fh1,fw3,sh2,sw1,mp0,bn1,rnn0,hd48"
        )
        assert parse_arch(text) == spec

    def test_parse_defaults_head_width(self):
        spec = parse_arch("nf8,fh3,fw3,sh1,sw1,mp0,bn0,rnn0")
        assert spec.head_width == 32

    def test_parse_errors_name_the_token(self):
        with pytest.raises(ValueError, match="token 4: expected prefix 'sh'"):
            parse_arch("nf8,fh3,fw3,mp0,sh1,sw1,bn0,rnn0")
        with pytest.raises(ValueError, match="token 1: non-integer"):
            parse_arch("nfx,fh3,fw3,sh1,sw1,mp0,bn0,rnn0")
        with pytest.raises(ValueError, match="multiple of 8"):
            parse_arch("nf8,fh3,fw3")
        with pytest.raises(ValueError, match="empty"):
            parse_arch("")

    def test_space_membership_check(self):
        spec = ArchSpec(blocks=(plain_block(num_filters=12),))
        with pytest.raises(ValueError, match="num_filters=12"):
            validate_in_space(spec, SearchSpace())
        with pytest.raises(ValueError, match="blocks"):
            validate_in_space(
                ArchSpec(blocks=(plain_block(), plain_block())), tiny_space()
            )

    def test_decisions_flat_list(self):
        spec = ArchSpec(blocks=(plain_block(num_filters=16),))
        assert spec.decisions() == [16, 3, 3, 1, 1, 0, 0, 0]


class TestControllerSampling:
    def test_deterministic_given_seed(self):
        space = SearchSpace(max_blocks=2)
        a = create_controller(space, hidden_size=32, embed_size=8, seed=5)
        b = create_controller(space, hidden_size=32, embed_size=8, seed=5)
        for _ in range(5):
            spec_a, lp_a = sample_arch(a, space)
            spec_b, lp_b = sample_arch(b, space)
            assert spec_a == spec_b
            assert lp_a == lp_b

    def test_logprob_matches_teacher_forcing(self):
        space = SearchSpace(max_blocks=2)
        state = create_controller(space, hidden_size=32, embed_size=8, seed=1)
        for _ in range(10):
            spec, lp = sample_arch(state, space)
            assert spec_logprob(state, spec) == pytest.approx(lp, abs=1e-9)

    def test_sampled_specs_live_in_space(self):
        space = SearchSpace(max_blocks=3)
        state = create_controller(space, hidden_size=16, embed_size=4, seed=2)
        for _ in range(20):
            spec, _ = sample_arch(state, space)
            validate_in_space(spec, space)
            assert len(spec.blocks) == 3

    def test_space_mismatch_rejected(self):
        state = create_controller(tiny_space(), hidden_size=16, embed_size=4)
        with pytest.raises(ValueError, match="space"):
            sample_arch(state, SearchSpace())

    def test_uniform_logits_sample_uniformly(self):
        space = SearchSpace(max_blocks=1)
        state = create_controller(space, hidden_size=16, embed_size=4, seed=3)
        for name, _ in decision_plan(space):
            state.params[f"head.{name}.W"][:] = 0.0
            state.params[f"head.{name}.b"][:] = 0.0
        n = 10_000
        counts = {name: np.zeros(len(c)) for name, c in decision_plan(space)}
        for _ in range(n):
            spec, _ = sample_arch(state, space)
            for (name, choices), v in zip(decision_plan(space), spec.decisions()):
                counts[name][choices.index(v)] += 1
        for name, choices in decision_plan(space):
            p = 1.0 / len(choices)
            sigma = np.sqrt(n * p * (1 - p))
            assert np.all(np.abs(counts[name] - n * p) <= 3 * sigma), name


class TestControllerUpdate:
    def _one_episode_state(self):
        state = create_controller(tiny_space(), hidden_size=8, embed_size=4, seed=7)
        spec, lp = sample_arch(state, state.space)
        return state, spec, lp

    def test_gradient_matches_finite_differences(self):
        state, spec, _ = self._one_episode_state()
        grad = {k: np.zeros_like(v) for k, v in state.params.items()}
        _accumulate_episode(state, spec, 1.0, grad)
        for key, g in grad.items():
            # numerical_grad mutates the live parameter array in place
            num = numerical_grad(lambda _: spec_logprob(state, spec), state.params[key])
            assert rel_error(g, num) < 1e-4, key

    def test_equal_rewards_give_bit_identical_params(self):
        state, spec, lp = self._one_episode_state()
        state.baseline = 0.37
        before = {k: v.copy() for k, v in state.params.items()}
        reinforce_update(state, [(spec, lp, 0.37)] * 4)
        for k in before:
            assert np.array_equal(before[k], state.params[k]), k

    def test_update_scales_linearly_with_advantage(self):
        def deltas(scale):
            state = create_controller(tiny_space(), hidden_size=8, embed_size=4, seed=7)
            spec, lp = sample_arch(state, state.space)
            before = {k: v.copy() for k, v in state.params.items()}
            state.baseline = 0.25 * scale
            reinforce_update(state, [(spec, lp, 1.0 * scale)])
            return {k: state.params[k] - before[k] for k in before}

        d1, d3 = deltas(1.0), deltas(3.0)
        for k in d1:
            assert np.allclose(3.0 * d1[k], d3[k], rtol=1e-9, atol=1e-15), k

    def test_baseline_ema_moves_after_update(self):
        state, spec, lp = self._one_episode_state()
        assert state.baseline == 0.0
        reinforce_update(state, [(spec, lp, 1.0)])
        assert state.baseline == pytest.approx(0.05)
        reinforce_update(state, [(spec, lp, 1.0)])
        assert state.baseline == pytest.approx(0.95 * 0.05 + 0.05)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_gradient_skips_update(self):
        state, spec, lp = self._one_episode_state()
        state.params["head.num_filters.W"][:] = np.inf
        before_b = state.params["head.filter_height.b"].copy()
        reinforce_update(state, [(spec, lp, 1.0)])
        assert state.skipped_updates == 1
        assert np.array_equal(state.params["head.filter_height.b"], before_b)
        assert state.baseline == pytest.approx(0.05)

    def test_rejects_bad_batches(self):
        state, spec, lp = self._one_episode_state()
        with pytest.raises(ValueError, match="non-empty"):
            reinforce_update(state, [])
        with pytest.raises(ValueError, match="finite"):
            reinforce_update(state, [(spec, lp, np.nan)])

    def test_update_moves_probability_toward_reward(self):
        state, _, _ = self._one_episode_state()
        good = ArchSpec(blocks=(plain_block(num_filters=8),))
        p_before = np.exp(spec_logprob(state, good))
        for _ in range(20):
            episodes = []
            for _ in range(4):
                spec, lp = sample_arch(state, state.space)
                episodes.append((spec, lp, 1.0 if spec == good else 0.0))
            reinforce_update(state, episodes)
        assert np.exp(spec_logprob(state, good)) > p_before


class TestBandit:
    def _run_seed(self, seed, n_updates=200, batch=8):
        state = create_controller(
            tiny_space(), hidden_size=32, embed_size=8, seed=seed
        )
        target = ArchSpec(blocks=(plain_block(num_filters=8),))
        batch_means = []
        for _ in range(n_updates):
            episodes = []
            for _ in range(batch):
                spec, lp = sample_arch(state, state.space)
                episodes.append((spec, lp, 1.0 if spec == target else 0.0))
            reinforce_update(state, episodes)
            batch_means.append(np.mean([r for _, _, r in episodes]))
        return np.exp(spec_logprob(state, target)), batch_means

    def test_converges_to_rewarded_arm(self):
        wins = sum(self._run_seed(seed)[0] > 0.9 for seed in range(10))
        assert wins >= 9

    def test_mean_reward_windows_mostly_non_decreasing(self):
        # windows of 50 episodes; a converged policy is a noisy plateau, so
        # a drop only counts when it exceeds twice the binomial sampling
        # noise of the window means; <= 5% of transitions may violate,
        # pooled over 10 seeds
        episodes_per_window = 50
        violations = 0
        transitions = 0
        for seed in range(10):
            _, batch_means = self._run_seed(seed)
            rewards = np.repeat(batch_means, 8)  # batch means back to episodes
            n_win = len(rewards) // episodes_per_window
            window = rewards[: n_win * episodes_per_window].reshape(n_win, -1).mean(axis=1)
            p = np.clip((window[1:] + window[:-1]) / 2, 0.02, 0.98)
            noise = np.sqrt(2 * p * (1 - p) / episodes_per_window)
            violations += int(np.sum(window[1:] < window[:-1] - 2 * noise))
            transitions += n_win - 1
        assert violations / transitions <= 0.05


class TestInstantiation:
    def test_single_block_preserves_shapes(self):
        spec = ArchSpec(blocks=(plain_block(),))
        child = instantiate_child(spec, (20, 16), AB, seed=0)
        logits = child.forward(np.zeros((20, 16)))
        assert logits.shape == (20, AB.n_classes)
        assert child.time_out(20) == 20

    def test_stride_two_halves_time_with_ceil(self):
        spec = ArchSpec(blocks=(plain_block(stride_height=2),))
        child = instantiate_child(spec, (20, 16), AB, seed=0)
        assert child.forward(np.zeros((20, 16))).shape == (10, AB.n_classes)
        assert child.time_out(20) == 10
        assert child.time_out(21) == 11

    def test_maxpool_halves_both_axes(self):
        spec = ArchSpec(blocks=(plain_block(has_maxpool=1),))
        child = instantiate_child(spec, (20, 16), AB, seed=0)
        assert child.forward(np.zeros((20, 16))).shape == (10, AB.n_classes)

    def test_one_frame_input_with_pool_is_infeasible(self):
        spec = ArchSpec(blocks=(plain_block(has_maxpool=1),))
        got = instantiate_child(spec, (1, 16), AB, seed=0)
        assert isinstance(got, InfeasibleArch)
        assert "maxpool" in got.reason

    def test_rnn_block_changes_feature_width(self):
        spec = ArchSpec(blocks=(plain_block(has_rnn_block=1),), head_width=8)
        child = instantiate_child(spec, (12, 16), AB, seed=0)
        assert child.forward(np.zeros((12, 16))).shape == (12, AB.n_classes)
        names = [name for name, _ in child.layers]
        assert "block0.rnn" in names

    def test_batchnorm_layer_present_when_requested(self):
        spec = ArchSpec(blocks=(plain_block(has_batchnorm=1),))
        child = instantiate_child(spec, (8, 16), AB, seed=0)
        assert any(name.endswith(".bn") for name, _ in child.layers)

    def test_deep_stack_shape(self):
        spec = ArchSpec(
            blocks=(
                plain_block(num_filters=16, stride_height=2),
                plain_block(num_filters=8, has_maxpool=1),
            )
        )
        child = instantiate_child(spec, (40, 16), AB, seed=0)
        # 40 -> 20 (stride) -> 10 (pool)
        assert child.forward(np.zeros((40, 16))).shape == (10, AB.n_classes)

    def test_composite_gradient_matches_finite_differences(self):
        spec = ArchSpec(blocks=(plain_block(num_filters=2),), head_width=3)
        child = instantiate_child(spec, (5, 4), AB, seed=1)
        rng = np.random.default_rng(0)
        feat = rng.normal(size=(5, 4))
        target = (0, 1)

        def loss_fn(_):
            logits = child.forward(feat, train=True)
            return ctc_loss(softmax(logits), target)[0]

        logits = child.forward(feat, train=True)
        _, dlogits = ctc_loss(softmax(logits), target)
        child.backward(dlogits)
        analytic = {k: v.copy() for k, v in child.grads.items()}
        for key, param in child.params.items():
            # numerical_grad mutates the live parameter array in place
            num = numerical_grad(loss_fn, param)
            assert rel_error(analytic[key], num) < 1e-4, key


class TestChildTraining:
    def _overfit_data(self):
        rng = np.random.default_rng(4)
        feat = rng.normal(size=(25, 6))
        target = AB.encode("ab")
        return [(feat, target)]

    def test_overfits_single_utterance(self):
        spec = ArchSpec(blocks=(plain_block(),), head_width=16)
        child = instantiate_child(spec, (25, 6), AB, seed=0)
        data = self._overfit_data()
        cfg = ChildTrainConfig(
            steps=400, eval_every=50, patience=8, opt=OptimizerConfig(alpha=0.005)
        )
        result = train_child(child, data, data, cfg, seed=0)
        assert result.status == "ok"
        assert result.dev_ctc < 0.1
        assert result.dev_wer == 0.0
        assert result.reward == 1.0

    def test_zero_steps_returns_untrained_metrics(self):
        spec = ArchSpec(blocks=(plain_block(),), head_width=8)
        data = self._overfit_data()
        child = instantiate_child(spec, (25, 6), AB, seed=3)
        expected = None
        for feat, target in data:
            probs = softmax(child.forward(feat))
            expected, _ = ctc_loss(probs, target)
        cfg = ChildTrainConfig(steps=0)
        result = train_child(child, data, data, cfg, seed=0)
        assert result.status == "ok"
        assert result.dev_ctc == pytest.approx(expected, abs=1e-12)

    def test_deterministic_given_seed(self):
        spec = ArchSpec(blocks=(plain_block(),), head_width=8)
        data = self._overfit_data()
        cfg = ChildTrainConfig(steps=40, eval_every=10, opt=OptimizerConfig(alpha=0.01))

        def run():
            child = instantiate_child(spec, (25, 6), AB, seed=5)
            return train_child(child, data, data, cfg, seed=11)

        a, b = run(), run()
        assert a.dev_ctc == b.dev_ctc
        assert a.dev_wer == b.dev_wer
        assert a.reward == b.reward
        assert set(a.params) == set(b.params)
        for k in a.params:
            assert np.array_equal(a.params[k], b.params[k]), k

    def test_divergence_returns_penalty(self):
        spec = ArchSpec(blocks=(plain_block(),), head_width=8)
        child = instantiate_child(spec, (25, 6), AB, seed=0)
        data = self._overfit_data()
        cfg = ChildTrainConfig(steps=30, eval_every=10, opt=OptimizerConfig(alpha=1e8))
        result = train_child(child, data, data, cfg, seed=0)
        assert result.status == "diverged"
        assert result.reward == 0.0

    def test_too_short_output_is_infeasible(self):
        spec = ArchSpec(blocks=(plain_block(),), head_width=8)
        child = instantiate_child(spec, (4, 6), AB, seed=0)
        feat = np.zeros((4, 6))
        target = AB.encode("aabb")  # needs 6 frames after repeats
        result = train_child(child, [(feat, target)], [(feat, target)], seed=0)
        assert result.status == "infeasible"
        assert result.reward == 0.0

    def test_infeasible_arch_passes_through(self):
        spec = ArchSpec(blocks=(plain_block(has_maxpool=1),))
        got = instantiate_child(spec, (1, 16), AB, seed=0)
        result = train_child(got, [], [], seed=0)
        assert result.status == "infeasible"
        assert result.reward == 0.0

    def test_result_validation(self):
        spec = ArchSpec(blocks=(plain_block(),))
        with pytest.raises(ValueError, match="finite"):
            ChildResult(spec, 1.0, 1.0, np.inf)
        with pytest.raises(ValueError, match="status"):
            ChildResult(spec, 1.0, 1.0, 0.5, status="bogus")


class TestComputeReward:
    def test_formula(self):
        assert compute_reward(0.0) == 1.0
        assert compute_reward(1.0) == 0.0
        assert compute_reward(2.5) == 0.0
        assert compute_reward(0.25, gamma=2.0) == 1.5

    def test_failures_earn_zero(self):
        assert compute_reward(0.1, ok=False) == 0.0
        assert compute_reward(None) == 0.0
        assert compute_reward(np.nan) == 0.0


def oracle_space():
    """16-point space: 4 filter counts x 2 heights x 2 pool flags."""
    return SearchSpace(
        max_blocks=1,
        num_filters=(8, 16, 32, 64),
        filter_height=(1, 3),
        filter_width=(3,),
        stride_height=(1,),
        stride_width=(1,),
        has_maxpool=(0, 1),
        has_batchnorm=(0,),
        has_rnn_block=(0,),
    )


ORACLE_TARGET = dict(num_filters=32, filter_height=1, has_maxpool=1)


def oracle_eval(spec, seed):
    """Reward = fraction of searched decisions matching a fixed target."""
    block = spec.blocks[0]
    score = np.mean([getattr(block, k) == v for k, v in ORACLE_TARGET.items()])
    return ChildResult(spec, dev_ctc=1.0 - score, dev_wer=1.0 - score,
                       reward=float(score), seed=seed)


class TestSearch:
    def test_budget_one_logs_one_result(self, tmp_path):
        state = create_controller(oracle_space(), hidden_size=16, embed_size=4,
                                  seed=0, budget=1)
        log = tmp_path / "search.jsonl"
        best, results = run_search(oracle_space(), state, oracle_eval,
                                   log_path=log)
        assert len(results) == 1
        assert len(load_search_log(log)) == 1
        assert best is results[0]

    def test_finds_enumerated_maximizer(self, tmp_path):
        space = oracle_space()
        state = create_controller(space, hidden_size=32, embed_size=8, seed=1,
                                  budget=128)
        best, results = run_search(space, state, oracle_eval)
        assert len(results) == 128
        block = best.spec.blocks[0]
        assert all(getattr(block, k) == v for k, v in ORACLE_TARGET.items())

    def test_single_worker_deterministic(self, tmp_path):
        def run(path):
            space = oracle_space()
            state = create_controller(space, hidden_size=16, embed_size=4,
                                      seed=9, budget=24)
            run_search(space, state, oracle_eval, log_path=path)
            return load_search_log(path)

        rows_a = run(tmp_path / "a.jsonl")
        rows_b = run(tmp_path / "b.jsonl")
        assert rows_a == rows_b

    def test_worker_pool_matches_inline(self, tmp_path):
        def run(path, workers):
            space = oracle_space()
            state = create_controller(space, hidden_size=16, embed_size=4,
                                      seed=3, budget=16)
            run_search(space, state, oracle_eval, worker_count=workers,
                       log_path=path)
            return load_search_log(path)

        inline = run(tmp_path / "one.jsonl", 1)
        pooled = run(tmp_path / "two.jsonl", 2)
        assert inline == pooled

    def test_failed_child_gets_zero_and_search_continues(self, tmp_path):
        calls = []

        def flaky(spec, seed):
            calls.append(seed)
            if len(calls) == 2:
                raise RuntimeError("worker lost")
            return oracle_eval(spec, seed)

        state = create_controller(oracle_space(), hidden_size=16, embed_size=4,
                                  seed=0, budget=6)
        log = tmp_path / "search.jsonl"
        best, results = run_search(oracle_space(), state, flaky, log_path=log)
        assert len(results) == 6
        statuses = [r.status for r in results]
        assert statuses.count("failed") == 1
        failed_row = load_search_log(log)[statuses.index("failed")]
        assert failed_row["reward"] == 0.0
        assert failed_row["dev_ctc"] is None

    def test_log_replay_reproduces_best(self, tmp_path):
        space = oracle_space()
        state = create_controller(space, hidden_size=16, embed_size=4, seed=4,
                                  budget=32)
        log = tmp_path / "search.jsonl"
        best, _ = run_search(space, state, oracle_eval, log_path=log)
        rows = load_search_log(log)
        assert rows == sorted(rows, key=lambda r: r["index"])
        replay = rows[select_best(rows)]
        assert replay["spec"] == format_arch(best.spec)

    def test_log_appends_across_runs(self, tmp_path):
        log = tmp_path / "search.jsonl"
        for seed in (0, 1):
            space = oracle_space()
            state = create_controller(space, hidden_size=16, embed_size=4,
                                      seed=seed, budget=8)
            run_search(space, state, oracle_eval, log_path=log)
        assert len(load_search_log(log)) == 16

    def test_select_best_prefers_low_ctc_then_reward_then_index(self):
        rows = [
            {"dev_ctc": 2.0, "reward": 0.5},
            {"dev_ctc": 1.0, "reward": 0.2},
            {"dev_ctc": 1.0, "reward": 0.4},
            {"dev_ctc": None, "reward": 0.9},
            {"dev_ctc": 1.0, "reward": 0.4},
        ]
        assert select_best(rows) == 2
        with pytest.raises(ValueError, match="rows"):
            select_best([])

    def test_checkpoint_written_for_trained_best(self, tmp_path):
        rng = np.random.default_rng(8)
        data = [(rng.normal(size=(12, 6)), AB.encode("ab"))]
        from nas_asr.nas import make_trainer_evaluator

        evaluate = make_trainer_evaluator(
            data, data, AB, (12, 6),
            ChildTrainConfig(steps=5, eval_every=5, patience=2),
        )
        space = oracle_space()
        state = create_controller(space, hidden_size=16, embed_size=4, seed=2,
                                  budget=2)
        ckpt = tmp_path / "best.nasm"
        best, _ = run_search(space, state, evaluate, checkpoint_path=ckpt)
        assert ckpt.exists()
        from nas_asr.nn import load_checkpoint

        arch_text, alphabet_text, params = load_checkpoint(ckpt)
        assert parse_arch(arch_text) == best.spec
        assert alphabet_text == "ab"
        assert set(params) == set(best.params)
