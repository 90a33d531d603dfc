import io
import math

import numpy as np
import pytest

from borrowings.corpus import (
    ENG_ALPHABET,
    FULL_ALPHABET,
    Corpus,
    Headline,
    LabeledSpan,
    Token,
)
from borrowings.crf import (
    CrfModel,
    DivergenceError,
    ModelDimensionError,
    ModelFormatError,
    ModelTruncatedError,
    ModelVersionError,
    TrainConfig,
    encode_training_set,
    load_model,
    log_partition,
    n_parameters,
    save_model,
    score_sequence,
    tag,
    train,
    viterbi,
)
from borrowings.errors import ConfigError, ValidationError
from borrowings.evaluation import evaluate
from borrowings.features import FeatureConfig
from conftest import (
    alphabet_of_size,
    brute_best_path,
    brute_log_partition,
    dp_best_path_min_index,
    enumerate_scores,
    model_from_matrices,
    synthetic_corpus,
)


def random_matrices(rng, n, n_labels, scale=1.0):
    return (
        rng.normal(scale=scale, size=(n, n_labels)),
        rng.normal(scale=scale, size=(n_labels, n_labels)),
        rng.normal(scale=scale, size=n_labels),
        rng.normal(scale=scale, size=n_labels),
    )


def zero_model(n, n_labels):
    e = np.zeros((n, n_labels))
    t = np.zeros((n_labels, n_labels))
    s = np.zeros(n_labels)
    return model_from_matrices(e, t, s, s.copy())


class TestScoreSequence:
    def test_zero_weights_score_zero(self):
        model, attrs = zero_model(3, 3)
        for y in (["O", "O", "O"], ["B-ENG", "I-ENG", "O"]):
            assert score_sequence(model, attrs, y) == 0.0

    def test_single_token_start_plus_end(self):
        e = np.zeros((1, 3))
        t = np.zeros((3, 3))
        s = np.array([0.1, 0.7, -0.3])
        end = np.array([1.0, -2.0, 0.25])
        model, attrs = model_from_matrices(e, t, s, end)
        for j, tag_name in enumerate(model.alphabet.tags):
            assert score_sequence(model, attrs, [tag_name]) == pytest.approx(
                s[j] + end[j]
            )

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            n = int(rng.integers(1, 6))
            n_labels = int(rng.integers(2, 5))
            model, attrs = model_from_matrices(*random_matrices(rng, n, n_labels))
            y_ids = rng.integers(0, n_labels, size=n)
            y = [model.alphabet.tags[i] for i in y_ids]
            expected = model.start[y_ids[0]] + model.end[y_ids[-1]]
            for t, i in enumerate(y_ids):
                expected += model.state[t, i]
            for t in range(1, n):
                expected += model.transition[y_ids[t - 1], y_ids[t]]
            assert score_sequence(model, attrs, y) == pytest.approx(expected)

    def test_attribute_values_scale_contribution(self):
        model, _ = zero_model(1, 3)
        model.state[0] = np.array([0.5, 1.5, -1.0])
        assert score_sequence(model, [{"p0": 2.0}], ["B-ENG"]) == pytest.approx(3.0)

    def test_unknown_attributes_contribute_zero(self):
        rng = np.random.default_rng(2)
        model, attrs = model_from_matrices(*random_matrices(rng, 2, 3))
        augmented = [dict(a, **{"never-seen": 9.0}) for a in attrs]
        y = ["O", "B-ENG"]
        assert score_sequence(model, augmented, y) == score_sequence(model, attrs, y)

    def test_length_mismatch_rejected(self):
        model, attrs = zero_model(2, 3)
        with pytest.raises(ValidationError, match="2 attribute vectors but 1"):
            score_sequence(model, attrs, ["O"])


class TestLogPartition:
    def test_zero_weights_two_by_three(self):
        model, attrs = zero_model(2, 3)
        assert log_partition(model, attrs) == pytest.approx(2 * math.log(3))

    def test_zero_weights_general(self):
        for n, n_labels in ((1, 2), (3, 5), (4, 4)):
            model, attrs = zero_model(n, n_labels)
            assert log_partition(model, attrs) == pytest.approx(n * math.log(n_labels))

    def test_matches_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            n = int(rng.integers(1, 6))
            n_labels = int(rng.integers(2, 5))
            mats = random_matrices(rng, n, n_labels, scale=2.0)
            model, attrs = model_from_matrices(*mats)
            assert log_partition(model, attrs) == pytest.approx(
                brute_log_partition(*mats), abs=1e-8
            )

    def test_distribution_normalizes(self):
        rng = np.random.default_rng(4)
        mats = random_matrices(rng, 4, 3, scale=1.5)
        model, attrs = model_from_matrices(*mats)
        log_z = log_partition(model, attrs)
        total = sum(
            math.exp(score - log_z) for _, score in enumerate_scores(*mats)
        )
        assert total == pytest.approx(1.0, abs=1e-8)


class TestViterbi:
    def test_zero_weights_all_outside(self):
        model, attrs = zero_model(4, 5)
        assert viterbi(model, attrs) == ["O", "O", "O", "O"]

    def test_forbidden_self_transition_forces_alternation(self):
        n, n_labels = 4, 3
        e = np.zeros((n, n_labels))
        e[:, 1] = 5.0  # B-ENG dominates every position
        t = np.zeros((n_labels, n_labels))
        t[1, 1] = -1e6  # but B-ENG cannot repeat
        s = np.zeros(n_labels)
        mats = (e, t, s, s.copy())
        model, attrs = model_from_matrices(*mats)
        decoded = viterbi(model, attrs)
        # Both alternations score the same; the DP tie-break decides.
        expected = dp_best_path_min_index(*mats)
        assert decoded == [model.alphabet.tags[i] for i in expected]
        assert decoded.count("B-ENG") == 2
        _, best_score = brute_best_path(*mats)
        assert score_sequence(model, attrs, decoded) == pytest.approx(best_score)

    def test_matches_enumeration_argmax(self):
        rng = np.random.default_rng(5)
        for _ in range(15):
            n = int(rng.integers(1, 6))
            n_labels = int(rng.integers(2, 5))
            mats = random_matrices(rng, n, n_labels, scale=2.0)
            model, attrs = model_from_matrices(*mats)
            best_path, best_score = brute_best_path(*mats)
            decoded = viterbi(model, attrs)
            assert decoded == [model.alphabet.tags[i] for i in best_path]
            assert score_sequence(model, attrs, decoded) == pytest.approx(best_score)

    def test_tie_break_prefers_lower_index(self):
        # Integer weights force exact ties; compare against an
        # independent DP replica that resolves ties toward index 0.
        rng = np.random.default_rng(6)
        for _ in range(30):
            n = int(rng.integers(2, 6))
            n_labels = int(rng.integers(2, 4))
            e = rng.integers(0, 2, size=(n, n_labels)).astype(float)
            t = rng.integers(0, 2, size=(n_labels, n_labels)).astype(float)
            s = rng.integers(0, 2, size=n_labels).astype(float)
            end = rng.integers(0, 2, size=n_labels).astype(float)
            model, attrs = model_from_matrices(e, t, s, end)
            expected = dp_best_path_min_index(e, t, s, end)
            assert viterbi(model, attrs) == [
                model.alphabet.tags[i] for i in expected
            ]

    def test_viterbi_score_dominates_all_sequences(self):
        rng = np.random.default_rng(7)
        mats = random_matrices(rng, 4, 4)
        model, attrs = model_from_matrices(*mats)
        decoded_score = score_sequence(model, attrs, viterbi(model, attrs))
        for _, score in enumerate_scores(*mats):
            assert decoded_score >= score - 1e-9


def encode_small(ignore_other=False, n=12, seed=8):
    corpus = synthetic_corpus(n, seed=seed, with_other=not ignore_other)
    return encode_training_set(corpus, FeatureConfig(), ignore_other=ignore_other)


class TestObjective:
    def test_zero_weights_uniform_value(self):
        dataset, index, alphabet = encode_small()
        value, grad = dataset.nll_and_gradient(np.zeros(dataset.n_parameters), 0.0)
        expected = sum(inst.n * math.log(len(alphabet)) for inst in dataset.instances)
        assert value == pytest.approx(expected)
        assert grad.shape == (n_parameters(len(index), len(alphabet)),)

    def test_l2_penalty_is_additive(self):
        dataset, _, _ = encode_small()
        rng = np.random.default_rng(9)
        w = rng.normal(scale=0.1, size=dataset.n_parameters)
        base, base_grad = dataset.nll_and_gradient(w, 0.0)
        c2 = 0.7
        reg, reg_grad = dataset.nll_and_gradient(w, c2)
        assert reg - base == pytest.approx(0.5 * c2 * float(np.dot(w, w)), rel=1e-10)
        assert np.allclose(reg_grad - base_grad, c2 * w, atol=1e-12)

    def test_value_nonnegative_without_penalty(self):
        dataset, _, _ = encode_small()
        rng = np.random.default_rng(10)
        for _ in range(3):
            w = rng.normal(scale=0.2, size=dataset.n_parameters)
            value, _ = dataset.nll_and_gradient(w, 0.0)
            assert value >= 0.0

    @pytest.mark.parametrize("c2", [0.0, 0.5])
    def test_gradient_matches_finite_differences(self, c2):
        dataset, _, _ = encode_small(n=4, seed=11)
        rng = np.random.default_rng(12)
        w = rng.normal(scale=0.3, size=dataset.n_parameters)
        _, grad = dataset.nll_and_gradient(w, c2)
        h = 1e-4
        coords = rng.choice(dataset.n_parameters, size=60, replace=False)
        for i in coords:
            wp = w.copy()
            wp[i] += h
            wm = w.copy()
            wm[i] -= h
            fd = (
                dataset.nll_and_gradient(wp, c2)[0]
                - dataset.nll_and_gradient(wm, c2)[0]
            ) / (2 * h)
            denom = max(abs(grad[i]), abs(fd), 1e-2)
            assert abs(grad[i] - fd) / denom < 1e-5

    def test_wrong_shape_rejected(self):
        dataset, _, _ = encode_small()
        with pytest.raises(ValidationError, match="expected"):
            dataset.nll_and_gradient(np.zeros(dataset.n_parameters + 1), 0.0)

    def test_divergence_reported(self):
        dataset, _, _ = encode_small()
        w = np.full(dataset.n_parameters, 1e308)
        with np.errstate(all="ignore"), pytest.raises(DivergenceError):
            dataset.nll_and_gradient(w, 0.0)


class TestEncodeTrainingSet:
    def test_full_alphabet_and_gold_ids(self):
        h = Headline(
            id="h",
            tokens=(Token("a"), Token("b"), Token("c")),
            spans=(LabeledSpan(0, 2, "ENG"), LabeledSpan(2, 3, "OTHER")),
        )
        dataset, index, alphabet = encode_training_set(
            Corpus("c", (h,)), FeatureConfig()
        )
        assert alphabet == FULL_ALPHABET
        assert index.frozen
        gold = dataset.instances[0].gold
        assert [alphabet.tags[i] for i in gold] == ["B-ENG", "I-ENG", "B-OTHER"]

    def test_ignore_other_drops_spans_and_tags(self):
        h = Headline(
            id="h",
            tokens=(Token("a"), Token("b")),
            spans=(LabeledSpan(0, 1, "OTHER"), LabeledSpan(1, 2, "ENG")),
        )
        dataset, _, alphabet = encode_training_set(
            Corpus("c", (h,)), FeatureConfig(), ignore_other=True
        )
        assert alphabet == ENG_ALPHABET
        gold = dataset.instances[0].gold
        assert [alphabet.tags[i] for i in gold] == ["O", "B-ENG"]

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValidationError):
            encode_training_set(Corpus("c", ()), FeatureConfig())


@pytest.fixture(scope="module")
def trained(small_corpus_module):
    return train(
        small_corpus_module,
        FeatureConfig(),
        None,
        TrainConfig(c2=0.05, max_iterations=150),
    )


@pytest.fixture(scope="module")
def small_corpus_module():
    return synthetic_corpus(n_headlines=30, seed=13, name="unit-train")


class TestTrain:
    def test_learns_separable_corpus(self, trained, small_corpus_module):
        predicted = tag(trained, small_corpus_module)
        report = evaluate(small_corpus_module, predicted)
        assert report.score("ENG").f1 == pytest.approx(100.0)
        assert report.borrowing.f1 == pytest.approx(100.0)

    def test_objective_trace_non_increasing(self, trained):
        trace = trained.diagnostics.objective_trace
        assert len(trace) == trained.diagnostics.iterations + 1
        for earlier, later in zip(trace, trace[1:]):
            assert later <= earlier + 1e-12

    def test_deterministic(self, trained, small_corpus_module):
        again = train(
            small_corpus_module,
            FeatureConfig(),
            None,
            TrainConfig(c2=0.05, max_iterations=150),
        )
        assert np.array_equal(again.state, trained.state)
        assert np.array_equal(again.transition, trained.transition)
        assert again.diagnostics.objective_trace == (
            trained.diagnostics.objective_trace
        )

    def test_single_iteration_cap(self, small_corpus_module):
        model = train(
            small_corpus_module, FeatureConfig(), None, TrainConfig(max_iterations=1)
        )
        assert model.diagnostics.iterations <= 1
        assert math.isfinite(model.diagnostics.final_objective)

    def test_progress_callback(self, small_corpus_module):
        seen = []
        train(
            small_corpus_module,
            FeatureConfig(),
            None,
            TrainConfig(max_iterations=5, delta=1e-12),
            progress=lambda i, obj: seen.append(i),
        )
        assert seen == list(range(1, len(seen) + 1))
        assert seen  # at least one iteration reported

    def test_l2_shrinks_weights(self, small_corpus_module):
        light = train(
            small_corpus_module, FeatureConfig(), None,
            TrainConfig(c2=0.01, max_iterations=100),
        )
        heavy = train(
            small_corpus_module, FeatureConfig(), None,
            TrainConfig(c2=10.0, max_iterations=100),
        )
        assert np.linalg.norm(heavy.state) < np.linalg.norm(light.state)

    def test_l1_produces_exact_zeros(self, small_corpus_module):
        sparse = train(
            small_corpus_module, FeatureConfig(), None,
            TrainConfig(c1=0.5, max_iterations=100),
        )
        dense = train(
            small_corpus_module, FeatureConfig(), None,
            TrainConfig(max_iterations=100),
        )
        assert np.sum(sparse.state == 0.0) > np.sum(dense.state == 0.0)
        assert np.any(sparse.state == 0.0)

    def test_train_config_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(c1=-0.1)
        with pytest.raises(ConfigError):
            TrainConfig(delta=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(max_iterations=0)
        with pytest.raises(ConfigError):
            TrainConfig(period=0)


class TestTag:
    def test_zero_model_predicts_nothing(self, small_corpus_module):
        dataset, index, alphabet = encode_training_set(
            small_corpus_module, FeatureConfig()
        )
        model = CrfModel(
            alphabet=alphabet,
            index=index,
            state=np.zeros((len(index), len(alphabet))),
            transition=np.zeros((len(alphabet), len(alphabet))),
            start=np.zeros(len(alphabet)),
            end=np.zeros(len(alphabet)),
            feature_config=FeatureConfig(),
            train_config=TrainConfig(),
        )
        predicted = tag(model, small_corpus_module)
        assert all(h.spans == () for h in predicted)

    def test_gold_untouched_and_metadata_kept(self, trained, small_corpus_module):
        before = tuple(h.spans for h in small_corpus_module)
        predicted = tag(trained, small_corpus_module)
        assert tuple(h.spans for h in small_corpus_module) == before
        for orig, pred in zip(small_corpus_module, predicted):
            assert pred.id == orig.id
            assert pred.tokens == orig.tokens
            assert pred.section == orig.section

    def test_ignore_other_model_never_predicts_other(self, small_corpus_module):
        model = train(
            small_corpus_module,
            FeatureConfig(),
            None,
            TrainConfig(c2=0.05, max_iterations=80),
            ignore_other=True,
        )
        predicted = tag(model, small_corpus_module)
        assert all(
            span.label == "ENG" for h in predicted for span in h.spans
        )

    def test_embedding_model_requires_table(self, trained):
        import dataclasses

        needy = dataclasses.replace(
            trained, feature_config=FeatureConfig(embedding=True)
        )
        with pytest.raises(ConfigError, match="embedding table"):
            tag(needy, Corpus("c", (Headline(id="x", tokens=(Token("a"),)),)))


class TestPersistence:
    def roundtrip(self, model):
        buffer = io.StringIO()
        save_model(model, buffer)
        return buffer.getvalue(), load_model(io.StringIO(buffer.getvalue()))

    def test_exact_weight_round_trip(self, trained):
        text, loaded = self.roundtrip(trained)
        assert np.array_equal(loaded.state, trained.state)
        assert np.array_equal(loaded.transition, trained.transition)
        assert np.array_equal(loaded.start, trained.start)
        assert np.array_equal(loaded.end, trained.end)
        assert loaded.alphabet == trained.alphabet
        assert loaded.index.names() == trained.index.names()
        assert loaded.feature_config == trained.feature_config
        assert loaded.train_config == trained.train_config

    def test_resave_is_byte_identical(self, trained):
        text, loaded = self.roundtrip(trained)
        again = io.StringIO()
        save_model(loaded, again)
        assert again.getvalue() == text

    def test_tag_identical_after_round_trip(self, trained, small_corpus_module):
        _, loaded = self.roundtrip(trained)
        direct = tag(trained, small_corpus_module)
        reloaded = tag(loaded, small_corpus_module)
        assert direct == reloaded

    def test_unrecognized_header(self):
        with pytest.raises(ModelVersionError):
            load_model(io.StringIO("something else\n"))

    def test_unsupported_version(self, trained):
        text, _ = self.roundtrip(trained)
        bumped = text.replace("borrowings-crf 1", "borrowings-crf 2", 1)
        with pytest.raises(ModelVersionError, match="version"):
            load_model(io.StringIO(bumped))

    def test_truncated_file(self, trained):
        # Dropping whole trailing lines leaves every remaining line
        # intact, so the loader must report a clean early EOF.
        text, _ = self.roundtrip(trained)
        lines = text.splitlines(keepends=True)
        for keep in (2, len(lines) // 4, len(lines) // 2, len(lines) - 1):
            with pytest.raises(ModelTruncatedError):
                load_model(io.StringIO("".join(lines[:keep])))

    def test_midline_cut_is_a_format_error(self, trained):
        text, _ = self.roundtrip(trained)
        lines = text.splitlines(keepends=True)
        header_at = next(
            i for i, line in enumerate(lines) if line.startswith("state_weights\t")
        )
        half = lines[header_at + 1][: len(lines[header_at + 1]) // 2]
        with pytest.raises(ModelFormatError):
            load_model(io.StringIO("".join(lines[: header_at + 1]) + half))

    def test_missing_trailer_is_truncation(self, trained):
        text, _ = self.roundtrip(trained)
        trimmed = text[: text.rindex("end_of_model")]
        with pytest.raises(ModelTruncatedError):
            load_model(io.StringIO(trimmed))

    def test_fewer_state_weights_than_declared(self, trained):
        text, _ = self.roundtrip(trained)
        lines = text.splitlines(keepends=True)
        header_at = next(
            i for i, line in enumerate(lines) if line.startswith("state_weights\t")
        )
        del lines[header_at + 1]
        with pytest.raises(ModelDimensionError, match="fewer state weight"):
            load_model(io.StringIO("".join(lines)))

    def test_extra_state_weights_rejected(self, trained):
        text, _ = self.roundtrip(trained)
        lines = text.splitlines(keepends=True)
        header_at = next(
            i for i, line in enumerate(lines) if line.startswith("state_weights\t")
        )
        lines.insert(header_at + 1, lines[header_at + 1])
        with pytest.raises(ModelDimensionError, match="more state weight"):
            load_model(io.StringIO("".join(lines)))

    def test_transition_row_dimension_error(self, trained):
        text, _ = self.roundtrip(trained)
        lines = text.splitlines(keepends=True)
        at = lines.index("transitions\n") + 1
        lines[at] = "0.0\t0.0\n"
        with pytest.raises(ModelDimensionError, match="transition row"):
            load_model(io.StringIO("".join(lines)))

    def test_unknown_attribute_in_weights(self, trained):
        text, _ = self.roundtrip(trained)
        lines = text.splitlines(keepends=True)
        header_at = next(
            i for i, line in enumerate(lines) if line.startswith("state_weights\t")
        )
        weight = lines[header_at + 1].split("\t")
        weight[0] = "no-such-attribute"
        lines[header_at + 1] = "\t".join(weight)
        with pytest.raises(ModelDimensionError, match="unknown attribute"):
            load_model(io.StringIO("".join(lines)))

    def test_non_numeric_weight(self, trained):
        text, _ = self.roundtrip(trained)
        bad = text.replace("start\t", "start\tabc\t", 1)
        with pytest.raises(ModelFormatError):
            load_model(io.StringIO(bad))

    def test_l1_model_files_stay_small(self, small_corpus_module):
        # Sparse models persist only their nonzero weights.
        sparse = train(
            small_corpus_module, FeatureConfig(), None,
            TrainConfig(c1=1.0, max_iterations=60),
        )
        buffer = io.StringIO()
        save_model(sparse, buffer)
        declared = next(
            line for line in buffer.getvalue().splitlines()
            if line.startswith("state_weights\t")
        )
        assert int(declared.split("\t")[1]) == int(np.sum(sparse.state != 0.0))
        reloaded = load_model(io.StringIO(buffer.getvalue()))
        assert np.array_equal(reloaded.state, sparse.state)
