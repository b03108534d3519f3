"""Two-stage procedure and strategy dispatch: contracts, determinism, budgets."""

import math

import numpy as np
import numpy.testing as npt
import pytest

import supercon as sc
from supercon.exceptions import (
    ConfigError,
    DegenerateBatchError,
    FreezeContractError,
    InfeasibleStrategyError,
)
from supercon.losses import FocalConfig, SupConConfig
from supercon.training import (
    STRATEGIES,
    TrainConfig,
    build_stack_for_config,
    cosine_separation,
    finetune_classifier,
    fit_strategy,
    run_strategy,
    train_representation,
)


def blobs(counts=(60, 24), seed=3, **kw):
    defaults = dict(dims=3, class_separation=4.0, cluster_spread=0.8)
    defaults.update(kw)
    return sc.generate_blobs(list(counts), seed=seed, **defaults)


def split(dataset, seed=0):
    return sc.stratified_split(dataset, sc.SplitSpec(0.8, seed=seed))


def tiny_config(strategy="SuperCon", **kw):
    defaults = dict(
        strategy=strategy,
        batch_size=16,
        stage1_epochs=3 if strategy in ("SuperCon", "SuperConCE") else None,
        stage2_epochs=3,
        stage1_lr=0.05,
        stage2_lr=0.2,
        supcon=SupConConfig(temperature=0.3),
        focal=FocalConfig(alpha=0.75, gamma=2.0),
        seed=11,
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestTrainConfig:
    def test_stage1_epochs_required_for_two_stage(self):
        with pytest.raises(ConfigError, match="stage1_epochs"):
            TrainConfig(strategy="SuperCon", stage1_epochs=None)

    def test_single_stage_does_not_need_stage1_epochs(self):
        TrainConfig(strategy="Vanilla", stage1_epochs=None)

    def test_stage1_needs_augmentation(self):
        with pytest.raises(ConfigError, match="augmentation"):
            TrainConfig(strategy="SuperCon", stage1_epochs=2, augment=sc.AugmentConfig(transforms=()))

    def test_bad_strategy(self):
        with pytest.raises(ConfigError):
            TrainConfig(strategy="Hybrid")

    def test_dict_round_trip(self):
        cfg = tiny_config()
        clone = TrainConfig.from_dict(cfg.to_dict())
        assert clone == cfg


class TestStage1:
    def test_classifier_untouched_by_stage1(self):
        train, _ = split(blobs())
        cfg = tiny_config()
        stack = build_stack_for_config(cfg, train)
        before = stack.checksums()["classifier"]
        train_representation(stack, train, cfg)
        assert stack.checksums()["classifier"] == before

    def test_extractor_and_mapper_change(self):
        train, _ = split(blobs())
        cfg = tiny_config()
        stack = build_stack_for_config(cfg, train)
        before = stack.checksums()
        trace = train_representation(stack, train, cfg)
        after = stack.checksums()
        assert after["extractor"] != before["extractor"]
        assert after["mapper"] != before["mapper"]
        assert trace.stage == "stage1"
        assert len(trace.epoch_losses) == cfg.stage1_epochs

    def test_identical_seed_identical_checksums(self):
        train, _ = split(blobs())
        cfg = tiny_config()
        traces = []
        for _ in range(2):
            stack = build_stack_for_config(cfg, train)
            traces.append(train_representation(stack, train, cfg))
        assert traces[0].checksums == traces[1].checksums
        assert traces[0].epoch_losses == traces[1].epoch_losses

    def test_improves_separation_on_separable_blobs(self):
        data = blobs(counts=(80, 40), class_separation=6.0, cluster_spread=0.6)
        train, test = split(data)
        cfg = tiny_config(stage1_epochs=8)
        stack = build_stack_for_config(cfg, train)
        z0 = stack.embed(test.samples).data
        before = cosine_separation(z0, test.labels)
        train_representation(stack, train, cfg)
        after = cosine_separation(stack.embed(test.samples).data, test.labels)
        assert after["gap"] > before["gap"]
        assert after["intra_class_cosine"] > after["inter_class_cosine"]

    def test_single_class_train_rejected(self):
        data = blobs(counts=(10, 10))
        only_zero = data.subset(np.flatnonzero(data.labels == 0))
        with pytest.raises(ConfigError, match="2 classes"):
            train_representation(build_stack_for_config(tiny_config(), only_zero), only_zero, tiny_config())

    def test_negatives_only_single_class_batch_names_epoch_and_batch(self):
        # batch size 4 over a 96%-majority set: some batch is single-class
        data = blobs(counts=(50, 2), class_separation=3.0)
        cfg = tiny_config(
            batch_size=4,
            supcon=SupConConfig(temperature=0.3, denominator_variant="negatives_only"),
        )
        stack = build_stack_for_config(cfg, data)
        with pytest.raises(DegenerateBatchError, match=r"epoch \d+, batch \d+"):
            train_representation(stack, data, cfg)


class TestStage2:
    def _stage1_stack(self, train, cfg):
        stack = build_stack_for_config(cfg, train)
        train_representation(stack, train, cfg)
        stack.set_frozen("extractor", True)
        stack.set_frozen("mapper", True)
        return stack

    def test_frozen_components_unchanged(self):
        train, _ = split(blobs())
        cfg = tiny_config(stage2_epochs=10)
        stack = self._stage1_stack(train, cfg)
        before = stack.checksums()
        trace = finetune_classifier(stack, train, cfg)
        after = stack.checksums()
        assert after["extractor"] == before["extractor"]
        assert after["mapper"] == before["mapper"]
        assert after["classifier"] != before["classifier"]
        assert trace.loss_kind == "focal"

    def test_unfrozen_extractor_rejected(self):
        train, _ = split(blobs())
        cfg = tiny_config()
        stack = build_stack_for_config(cfg, train)
        train_representation(stack, train, cfg)
        with pytest.raises(FreezeContractError):
            finetune_classifier(stack, train, cfg)

    def test_superconce_uses_cross_entropy(self):
        train, _ = split(blobs())
        cfg = tiny_config(strategy="SuperConCE")
        stack = self._stage1_stack(train, cfg)
        trace = finetune_classifier(stack, train, cfg)
        assert trace.loss_kind == "cross_entropy"

    def test_loss_decreases_on_separable_data(self):
        data = blobs(counts=(80, 40), class_separation=6.0, cluster_spread=0.6)
        train, _ = split(data)
        finals, firsts = [], []
        for seed in range(5):
            cfg = tiny_config(seed=seed, stage1_epochs=6, stage2_epochs=8)
            stack = self._stage1_stack(train, cfg)
            trace = finetune_classifier(stack, train, cfg)
            firsts.append(trace.epoch_losses[0])
            finals.append(trace.epoch_losses[-1])
        assert np.median(finals) < np.median(firsts)

    def test_stage2_augment_flag_keeps_freeze(self):
        train, _ = split(blobs())
        cfg = tiny_config(stage2_augment=True)
        stack = self._stage1_stack(train, cfg)
        before = stack.checksums()["extractor"]
        finetune_classifier(stack, train, cfg)
        assert stack.checksums()["extractor"] == before


class TestRunStrategy:
    @pytest.mark.parametrize("strategy", STRATEGIES)
    def test_every_strategy_produces_complete_report(self, strategy):
        train, test = split(blobs(counts=(60, 24)))
        cfg = tiny_config(strategy=strategy)
        report = run_strategy(cfg, train, test)
        assert report.strategy == strategy
        assert 0.0 <= report.metrics.macro_f1 <= 1.0
        assert 0.0 <= report.metrics.auc <= 1.0
        assert report.metrics.confusion.total == len(test)
        assert report.embeddings["rep"].shape[0] == len(test)
        assert report.embeddings["projection"].shape == (len(test), 2)
        assert "final" in report.checkpoints
        assert report.notes
        if strategy in ("SuperCon", "SuperConCE"):
            assert "stage1" in report.checkpoints
            assert report.separation is not None
            assert "z" in report.embeddings

    def test_vanilla_equals_focal_with_gamma_zero_unit_alpha(self):
        train, test = split(blobs())
        base = dict(batch_size=16, stage2_epochs=4, stage1_lr=0.05, stage2_lr=0.2, seed=9)
        vanilla = run_strategy(TrainConfig(strategy="Vanilla", **base), train, test)
        focal = run_strategy(
            TrainConfig(strategy="FocalLoss", focal=FocalConfig(gamma=0.0, alpha_enabled=False), **base),
            train,
            test,
        )
        assert vanilla.checksums == focal.checksums
        assert vanilla.metrics.to_dict() == focal.metrics.to_dict()

    def test_step_counts_include_partial_batches(self):
        data = blobs(counts=(8, 5))  # 13 samples -> ceil(13/4) = 4 steps/epoch
        cfg = tiny_config(strategy="Vanilla", batch_size=4, stage2_epochs=3)
        report = run_strategy(cfg, data, data)
        (trace,) = report.traces
        assert trace.steps == 3 * math.ceil(len(data) / 4)

    def test_stage1_step_counts(self):
        data = blobs(counts=(8, 5))
        cfg = tiny_config(batch_size=4, stage1_epochs=2)
        report = run_strategy(cfg, data, data)
        stage1 = report.traces[0]
        assert stage1.steps == 2 * math.ceil(len(data) / 4)

    def test_identical_config_identical_report(self):
        train, test = split(blobs())
        cfg = tiny_config()
        a = run_strategy(cfg, train, test)
        b = run_strategy(cfg, train, test)
        assert a.metrics.to_dict() == b.metrics.to_dict()
        assert a.checkpoints["final"] == b.checkpoints["final"]
        npt.assert_array_equal(a.embeddings["projection"], b.embeddings["projection"])

    def test_supercon_variants_share_stage1_checkpoint(self):
        train, test = split(blobs())
        ce = run_strategy(tiny_config(strategy="SuperConCE"), train, test)
        focal = run_strategy(tiny_config(strategy="SuperCon"), train, test)
        assert ce.checkpoints["stage1"] == focal.checkpoints["stage1"]
        assert ce.checkpoints["final"] != focal.checkpoints["final"]

    def test_freeze_contract_over_full_run(self):
        train, test = split(blobs())
        report = run_strategy(tiny_config(), train, test)
        stage1, stage2 = report.traces
        assert stage1.checksums["extractor"] == stage2.checksums["extractor"]
        assert stage1.checksums["mapper"] == stage2.checksums["mapper"]
        assert stage1.checksums["classifier"] != stage2.checksums["classifier"]


class TestRusStrategy:
    def test_infeasible_when_minority_below_batch(self):
        data = blobs(counts=(200, 10))
        cfg = tiny_config(strategy="RUS", batch_size=16)
        with pytest.raises(InfeasibleStrategyError, match="minority"):
            fit_strategy(cfg, data)

    def test_phases_consume_subsampled_then_original(self):
        data = blobs(counts=(120, 40))
        train, test = split(data)  # 96 / 32 per class
        cfg = tiny_config(strategy="RUS", batch_size=16, stage2_epochs=2)
        report = run_strategy(cfg, train, test)
        pretrain, main = report.traces
        assert pretrain.stage == "rus_pretrain"
        assert pretrain.dataset_size == 2 * 32
        assert main.stage == "train"
        assert main.dataset_size == len(train)
        assert pretrain.loss_kind == main.loss_kind == "cross_entropy"

    def test_phase1_epoch_override(self):
        data = blobs(counts=(120, 40))
        train, _ = split(data)
        cfg = tiny_config(strategy="RUS", batch_size=16, stage2_epochs=2, rus_phase1_epochs=5)
        _, traces, _, _ = fit_strategy(cfg, train)
        assert traces[0].epochs == 5
        assert traces[1].epochs == 2


class TestMinorityResolution:
    def test_inferred_from_counts(self):
        data = blobs(counts=(50, 9))
        report = run_strategy(tiny_config(strategy="Vanilla"), data, data)
        assert report.minority_class_id == 1

    def test_explicit_id_respected(self):
        data = blobs(counts=(50, 9))
        cfg = tiny_config(strategy="FocalLoss", focal=FocalConfig(alpha=0.6, gamma=1.0, minority_class_id=0))
        report = run_strategy(cfg, data, data)
        assert report.minority_class_id == 0

    def test_out_of_range_rejected(self):
        data = blobs(counts=(50, 9))
        cfg = tiny_config(strategy="FocalLoss", focal=FocalConfig(minority_class_id=7))
        with pytest.raises(ConfigError):
            run_strategy(cfg, data, data)


class TestCosineSeparation:
    def test_perfectly_clustered(self):
        z = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        labels = np.array([0, 0, 1, 1])
        stats = cosine_separation(z, labels)
        assert stats["intra_class_cosine"] == pytest.approx(1.0)
        assert stats["inter_class_cosine"] == pytest.approx(0.0)
        assert stats["gap"] == pytest.approx(1.0)
