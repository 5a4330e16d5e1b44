import numpy as np
import pytest

from aratkit import (
    ChannelSet,
    ConfusionMatrix,
    CvReport,
    DataError,
    LabelTaxonomy,
    PreprocessConfig,
    aggregate_domains,
    confusion,
    grid_search,
    make_folds,
    run_cv,
)
from aratkit.evaluation import grid_to_csv_text, label_order

from conftest import make_dataset


class TestMakeFolds:
    def test_ten_ids_ten_folds(self):
        plan = make_folds([f"i{k}" for k in range(10)], 10, 42)
        assert plan.fold_sizes() == [1] * 10

    def test_103_ids_remainder_rule(self):
        plan = make_folds([f"i{k:03d}" for k in range(103)], 10, 42)
        sizes = sorted(plan.fold_sizes(), reverse=True)
        assert sizes == [11] * 3 + [10] * 7

    def test_seed_42_deterministic(self):
        ids = [f"i{k}" for k in range(25)]
        assert make_folds(ids, 10, 42).assignments == \
            make_folds(ids, 10, 42).assignments
        assert make_folds(ids, 10, 42).assignments != \
            make_folds(ids, 10, 43).assignments

    def test_partition(self):
        ids = [f"i{k}" for k in range(37)]
        plan = make_folds(ids, 5, 7)
        seen = [i for f in range(5) for i in plan.fold_ids(f)]
        assert sorted(seen) == sorted(ids)

    def test_too_few_ids_rejected(self):
        with pytest.raises(DataError):
            make_folds(["a", "b"], 3, 0)

    def test_k_below_two_rejected(self):
        with pytest.raises(DataError):
            make_folds(["a", "b", "c"], 1, 0)


class TestConfusion:
    def test_perfect_predictions_diagonal(self):
        cm = confusion(["a", "b", "a"], ["a", "b", "a"], ["a", "b"])
        assert np.array_equal(cm.counts, np.array([[2, 0], [0, 1]]))

    def test_single_error_off_diagonal(self):
        cm = confusion(["a", "a", "b", "b"], ["a", "a", "b", "a"], ["a", "b"])
        assert np.trace(cm.counts) == 3
        assert cm.counts[1, 0] == 1

    def test_accuracy_is_trace_over_total(self):
        cm = confusion(["a", "a", "b", "b"], ["a", "b", "b", "b"], ["a", "b"])
        assert cm.accuracy() == np.trace(cm.counts) / cm.total == 0.75

    def test_label_outside_order_rejected(self):
        with pytest.raises(DataError):
            confusion(["a", "z"], ["a", "a"], ["a", "b"])
        with pytest.raises(DataError):
            confusion(["a", "a"], ["a", "z"], ["a", "b"])

    def test_csv_round_trip(self, tmp_path):
        cm = confusion(["a", "b", "a"], ["b", "b", "a"], ["a", "b"])
        path = tmp_path / "cm.csv"
        cm.save_csv(path)
        loaded = ConfusionMatrix.load_csv(path)
        assert loaded.labels == cm.labels
        assert np.array_equal(loaded.counts, cm.counts)

    def test_render_text_normalized(self):
        cm = confusion(["a"] * 4, ["a", "a", "a", "b"], ["a", "b"])
        text = cm.render_text(normalize=True)
        assert "75.0" in text and "25.0" in text
        plain = cm.render_text()
        assert "3" in plain


class TestAggregateDomains:
    def test_identity_item_cm_gives_identity_domain_cm(self, taxonomy):
        items = list(taxonomy.items[:4])
        cm = confusion(items, items, items)
        dom = aggregate_domains(cm, taxonomy)
        assert np.array_equal(dom.counts, np.diag(np.diag(dom.counts)))
        assert dom.total == cm.total

    def test_within_domain_confusion_lands_on_diagonal(self, taxonomy):
        from aratkit import Domain

        grasp = list(taxonomy.items_of(Domain.GRASP))[:2]
        cm = confusion([grasp[0], grasp[0]], [grasp[1], grasp[0]], grasp)
        dom = aggregate_domains(cm, taxonomy)
        assert dom.labels == ("Grasp",)
        assert dom.counts[0, 0] == 2

    def test_total_preserved(self, taxonomy):
        rng = np.random.default_rng(0)
        labels = list(taxonomy.labels)
        truth = [labels[i] for i in rng.integers(0, 20, size=60)]
        pred = [labels[i] for i in rng.integers(0, 20, size=60)]
        cm = confusion(truth, pred, labels)
        dom = aggregate_domains(cm, taxonomy)
        assert dom.total == cm.total == 60
        assert dom.labels == ("Grasp", "Grip", "Pinch", "Gross", "Junk")

    def test_domain_accuracy_at_least_item_accuracy(self, taxonomy):
        rng = np.random.default_rng(1)
        labels = list(taxonomy.labels)
        truth = [labels[i] for i in rng.integers(0, 20, size=200)]
        pred = [t if rng.random() < 0.5 else labels[rng.integers(0, 20)]
                for t in truth]
        cm = confusion(truth, pred, labels)
        dom = aggregate_domains(cm, taxonomy)
        assert dom.accuracy() >= cm.accuracy()

    def test_unknown_label_rejected(self, taxonomy):
        cm = confusion(["a"], ["a"], ["a"])
        with pytest.raises(DataError):
            aggregate_domains(cm, taxonomy)


FAST_CV = dict(k=3, seed=42, feature_count=84 * 3)


class TestRunCv:
    def test_separable_synthetic_high_accuracy(self, tiny_dataset):
        report = run_cv(tiny_dataset, PreprocessConfig(), ChannelSet.ALL,
                        **FAST_CV)
        assert report.mean_accuracy >= 0.95

    def test_single_class_rejected(self):
        ds = make_dataset(n=12, num_labels=1)
        with pytest.raises(DataError):
            run_cv(ds, PreprocessConfig(), **FAST_CV)

    def test_domain_accuracy_dominates(self, tiny_dataset):
        report = run_cv(tiny_dataset, PreprocessConfig(), ChannelSet.ALL,
                        **FAST_CV)
        assert report.domain_accuracy >= report.item_accuracy

    def test_mean_is_unweighted_fold_mean(self, tiny_dataset):
        report = run_cv(tiny_dataset, PreprocessConfig(), ChannelSet.ALL,
                        **FAST_CV)
        assert report.mean_accuracy == pytest.approx(
            float(np.mean(report.fold_accuracies)))
        assert len(report.fold_accuracies) == 3

    def test_fold_missing_class_reported(self):
        # one label present exactly once: its eval fold has no training example
        ds = make_dataset(n=7, num_labels=2)
        tax = ds.taxonomy
        seqs = list(ds.sequences)
        from conftest import make_sequence

        seqs[-1] = make_sequence("rare", label=tax.items[5], seed=99)
        ds = ds.replace_sequences(tuple(seqs))
        with pytest.raises(DataError, match="miss"):
            run_cv(ds, PreprocessConfig(), k=7, seed=0, feature_count=84 * 3)

    def test_every_sequence_validated_once(self, tiny_dataset):
        report = run_cv(tiny_dataset, PreprocessConfig(), ChannelSet.ALL,
                        **FAST_CV)
        ids = [p[0] for p in report.predictions]
        assert sorted(ids) == sorted(tiny_dataset.ids)

    def test_report_json_round_trip(self, tiny_dataset):
        report = run_cv(tiny_dataset, PreprocessConfig(), ChannelSet.ALL,
                        **FAST_CV)
        back = CvReport.from_json(report.to_json())
        assert back.mean_accuracy == report.mean_accuracy
        assert back.config == report.config
        assert np.array_equal(back.item_cm.counts, report.item_cm.counts)
        assert back.predictions == report.predictions

    def test_bit_reproducible(self, tiny_dataset):
        a = run_cv(tiny_dataset, PreprocessConfig(padding_mode="mean",
                                                  noise_std_acc=0.5,
                                                  noise_std_gyr=3.0),
                   ChannelSet.ALL, **FAST_CV)
        b = run_cv(tiny_dataset, PreprocessConfig(padding_mode="mean",
                                                  noise_std_acc=0.5,
                                                  noise_std_gyr=3.0),
                   ChannelSet.ALL, **FAST_CV)
        da, db = a.to_dict(), b.to_dict()
        da.pop("timing"), db.pop("timing")
        assert da == db


class TestLeakage:
    def test_eval_fold_never_influences_fitted_state(self, tiny_dataset):
        """Replacing one fold's sequences with garbage leaves the model
        trained on the other folds bit-identical."""
        from conftest import make_sequence

        cfg = PreprocessConfig(padding_mode="mean", noise_std_acc=0.5,
                               noise_std_gyr=3.0)
        _, models = run_cv(tiny_dataset, cfg, ChannelSet.ALL,
                           return_models=True, **FAST_CV)
        plan = make_folds(tiny_dataset.ids, 3, 42)
        eval_ids = set(plan.fold_ids(0))
        max_len = max(s.num_samples for s in tiny_dataset)

        corrupted = []
        for seq in tiny_dataset:
            if seq.id in eval_ids:
                garbage = make_sequence(seq.id, length=max_len + 50,
                                        label=seq.label, seed=777)
                garbage = garbage.with_samples(garbage.samples * 1e3)
                samples = np.array(garbage.samples)
                samples[6:] = 0.0
                samples[6] = 1.0  # keep quats unit, values elsewhere huge
                corrupted.append(garbage.with_samples(samples))
            else:
                corrupted.append(seq)
        ds2 = tiny_dataset.replace_sequences(tuple(corrupted))
        _, models2 = run_cv(ds2, cfg, ChannelSet.ALL, return_models=True,
                            **FAST_CV)

        before, after = models[0], models2[0]
        assert after.fitted_length == before.fitted_length
        assert np.array_equal(after.standardizer.mean, before.standardizer.mean)
        assert np.array_equal(after.standardizer.std, before.standardizer.std)
        assert np.array_equal(after.rocket_model.biases,
                              before.rocket_model.biases)
        assert after.rocket_model.channel_assignments == \
            before.rocket_model.channel_assignments
        assert after.ridge.chosen_lambda == before.ridge.chosen_lambda
        assert np.array_equal(after.ridge.weights, before.ridge.weights)


class TestGridSearch:
    def test_crippling_noise_ranks_last(self, tiny_dataset):
        clean = PreprocessConfig()
        crippled = PreprocessConfig(noise_std_acc=1e6)
        cells = grid_search(tiny_dataset, [crippled, clean], ChannelSet.ALL,
                            **FAST_CV)
        assert cells[0].config == clean
        assert cells[-1].config == crippled
        assert cells[0].mean_accuracy > cells[-1].mean_accuracy

    def test_single_config_single_row(self, tiny_dataset):
        cells = grid_search(tiny_dataset, [PreprocessConfig()],
                            ChannelSet.ALL, **FAST_CV)
        assert len(cells) == 1
        csv_text = grid_to_csv_text(cells)
        assert len(csv_text.strip().splitlines()) == 2

    def test_failing_config_recorded_not_raised(self, tiny_dataset):
        from aratkit import select_channels

        acc_only = select_channels(tiny_dataset, ChannelSet.ACC_GYRO)
        freeing = PreprocessConfig(free_acceleration=True,
                                   free_angular_velocity=True)
        cells = grid_search(acc_only, [PreprocessConfig(), freeing],
                            **FAST_CV)
        assert cells[0].error is None
        assert cells[-1].error is not None
        assert "failed" in grid_to_csv_text(cells)

    def test_csv_layout(self, tiny_dataset):
        cells = grid_search(tiny_dataset, [PreprocessConfig(
            padding_mode="mean", noise_std_acc=0.5, noise_std_gyr=3.0)],
            ChannelSet.ALL, **FAST_CV)
        lines = grid_to_csv_text(cells).splitlines()
        assert lines[0].split(",")[:6] == [
            "rank", "std_noise_acc", "std_noise_gyr", "padding",
            "filter_freq_acc_gyr", "freed_sensors"]
        assert lines[1].startswith("1,0.5,3,Mean,0 / 0,False,")

    def test_tie_break_by_input_order(self, tiny_dataset):
        cfg = PreprocessConfig()
        cells = grid_search(tiny_dataset, [cfg, cfg], ChannelSet.ALL,
                            **FAST_CV)
        assert [c.index for c in cells] == [0, 1]

    def test_workers_do_not_change_ranking(self, tiny_dataset):
        configs = [PreprocessConfig(),
                   PreprocessConfig(padding_mode="mean"),
                   PreprocessConfig(noise_std_acc=1e6)]
        serial = grid_search(tiny_dataset, configs, ChannelSet.ALL, **FAST_CV)
        threaded = grid_search(tiny_dataset, configs, ChannelSet.ALL,
                               workers=3, **FAST_CV)
        assert [c.index for c in serial] == [c.index for c in threaded]
        assert [c.mean_accuracy for c in serial] == \
            [c.mean_accuracy for c in threaded]


class TestLabelOrder:
    def test_taxonomy_order_with_junk_last(self):
        ds = make_dataset(n=6, num_labels=3, junk=2)
        order = label_order(ds)
        assert order[-1] == "junk"
        tax = LabelTaxonomy.default()
        assert list(order[:-1]) == [i for i in tax.items if i in order]
