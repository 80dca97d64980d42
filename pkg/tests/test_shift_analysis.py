import itertools
import json

import numpy as np
import pytest
import scipy.stats
from scipy.optimize import linear_sum_assignment

from conftest import dataset_from_counts
from moralshift import synth
from moralshift.corpus import Dataset, Document
from moralshift.shift_analysis import (
    RegressionTTest,
    SimilarityMatrix,
    cosine_similarity,
    domain_topic_distribution,
    fit_lda,
    normality_test,
    performance_variation,
    regression_ttest,
    run_shift_tests,
    similarity_matrix,
    spearman_test,
)
from moralshift.shift_analysis.lda import TopicModel


def _long_docs(domain, vocab, n, length, seed, label=0):
    rng = np.random.default_rng(seed)
    return [
        Document(f"{domain}-{i:04d}", domain, tuple(rng.choice(vocab, size=length)), label)
        for i in range(n)
    ]


class TestFitLda:
    def test_disjoint_vocabularies_separate(self):
        docs = []
        for i in range(40):
            vocab = ["a", "b"] if i % 2 == 0 else ["x", "y"]
            docs.extend(_long_docs(f"d", vocab, 1, 300, seed=i))
        docs = [Document(f"doc-{i:03d}", "d", d.tokens, 0) for i, d in enumerate(docs)]
        ds = Dataset(tuple(docs))
        model = fit_lda(ds, K=2, iterations=200, seed=3, average_last=50)
        assert (model.doc_topic.max(axis=1) >= 0.9).all()

    def test_single_document_normalization(self):
        ds = Dataset((Document("only", "d", tuple("abcdefgh"), 0),))
        model = fit_lda(ds, K=2, iterations=50, seed=0)
        assert model.doc_topic.shape == (1, 2)
        assert model.doc_topic.sum() == pytest.approx(1.0, abs=1e-9)

    def test_row_normalization_invariants(self):
        bench = synth.make_benchmark(n_domains=2, docs_per_domain=100, vocab_size=200, n_topics=4, layout="disjoint", seed=0)
        ds = bench.generate(seed=1)
        model = fit_lda(ds, K=4, iterations=100, seed=5, average_last=20)
        assert np.allclose(model.doc_topic.sum(axis=1), 1.0, atol=1e-9)
        assert np.allclose(model.word_topic.sum(axis=1), 1.0, atol=1e-9)

    def test_seeded_fit_bitwise_reproducible(self):
        bench = synth.make_benchmark(n_domains=2, docs_per_domain=80, vocab_size=200, n_topics=4, layout="disjoint", seed=0)
        ds = bench.generate(seed=1)
        a = fit_lda(ds, K=4, iterations=80, seed=9)
        b = fit_lda(ds, K=4, iterations=80, seed=9)
        assert np.array_equal(a.doc_topic, b.doc_topic)
        assert np.array_equal(a.word_topic, b.word_topic)

    def test_planted_topics_recovered_with_bijective_matching(self):
        bench = synth.make_benchmark(
            n_domains=3, docs_per_domain=300, vocab_size=300, n_topics=6,
            knobs=synth.ShiftKnob(1.0, 1.0), layout="disjoint", seed=1,
            doc_length_range=(30, 60),
        )
        ds = bench.generate(seed=2)
        model = fit_lda(ds, K=6, iterations=400, seed=5, average_last=100)
        planted = bench.topics
        fitted = np.zeros_like(planted)
        fitted[:, [synth.word_index(t) for t in model.vocab]] = model.word_topic
        cost = -np.array(
            [
                [cosine_similarity(planted[i], fitted[j]) for j in range(6)]
                for i in range(6)
            ]
        )
        rows, cols = linear_sum_assignment(cost)
        assert sorted(cols.tolist()) == list(range(6))  # bijective
        match = dict(zip(rows, cols))
        specs = {s.name: s for s in bench.specs}
        mass = []
        for row, doc in zip(model.doc_topic, ds):
            mix = specs[doc.domain].label_mixture(doc.label)
            support = np.where(mix > 0.01)[0]
            mass.append(row[[match[k] for k in support]].sum())
        assert float(np.mean(mass)) > 0.5

    def test_errors(self):
        ds = Dataset((Document("a", "d", ("x", "y", "z"), 0),))
        with pytest.raises(ValueError):
            fit_lda(ds, K=1, iterations=10)
        with pytest.raises(ValueError):
            fit_lda(ds, K=5, iterations=10)  # K > vocabulary
        with pytest.raises(ValueError):
            fit_lda(Dataset(()), K=2, iterations=10)


class TestDomainTopicDistribution:
    def _fake_model(self, ds, doc_topic):
        return TopicModel(
            K=doc_topic.shape[1],
            word_topic=np.full((doc_topic.shape[1], 3), 1 / 3),
            doc_topic=doc_topic,
            alpha=1.0,
            beta=0.01,
            seed=0,
            vocab=("a", "b", "c"),
            doc_ids=tuple(d.id for d in ds),
        )

    def test_single_document_domain(self):
        ds = Dataset((Document("a", "d", ("a", "b", "c"), 0),))
        doc_topic = np.array([[0.25, 0.75]])
        model = self._fake_model(ds, doc_topic)
        assert np.array_equal(domain_topic_distribution(model, ds, "d"), doc_topic[0])

    def test_two_documents_average(self):
        ds = Dataset(
            (
                Document("a", "d", ("a", "b", "c"), 0),
                Document("b", "d", ("a", "b", "c"), 0),
            )
        )
        p = np.array([0.1, 0.9])
        q = np.array([0.5, 0.5])
        model = self._fake_model(ds, np.stack([p, q]))
        assert np.allclose(domain_topic_distribution(model, ds, "d"), (p + q) / 2)

    def test_planted_mixture_recovered(self):
        rng = np.random.default_rng(0)
        K, V = 4, 400
        topics = np.zeros((K, V))
        block = V // K
        for k in range(K):
            topics[k, k * block : (k + 1) * block] = rng.dirichlet(np.full(block, 0.8))
        specs = []
        for d in range(2):
            profiles = rng.dirichlet(np.full(K, 0.4), size=11)
            specs.append(
                synth.DomainSpec(
                    name=f"d{d}",
                    vocab_size=V,
                    topic_mixture=np.full(K, 1 / K),
                    label_prior=np.full(11, 1 / 11),
                    label_topic_affinity=profiles,
                    doc_length_range=(30, 60),
                    num_docs=2000,
                )
            )
        ds = synth.generate(specs, topics, seed=1)
        model = fit_lda(ds, K=K, iterations=600, seed=2, alpha=0.1, average_last=100)
        fitted = np.zeros_like(topics)
        fitted[:, [synth.word_index(t) for t in model.vocab]] = model.word_topic
        cost = -np.array(
            [[cosine_similarity(topics[i], fitted[j]) for j in range(K)] for i in range(K)]
        )
        rows, cols = linear_sum_assignment(cost)
        perm = np.empty(K, dtype=int)
        perm[cols] = rows
        for spec in specs:
            expected = sum(spec.label_prior[l] * spec.label_mixture(l) for l in range(11))
            est = domain_topic_distribution(model, ds, spec.name)
            aligned = np.zeros(K)
            for f in range(K):
                aligned[perm[f]] = est[f]
            assert np.abs(aligned - expected).sum() < 0.15

    def test_empty_domain_error(self):
        ds = Dataset((Document("a", "d", ("a", "b", "c"), 0),))
        model = self._fake_model(ds, np.array([[0.5, 0.5]]))
        with pytest.raises(ValueError):
            domain_topic_distribution(model, ds, "other")

    def test_wrong_dataset_error(self):
        ds = Dataset((Document("a", "d", ("a", "b", "c"), 0),))
        other = Dataset((Document("zzz", "d", ("a", "b", "c"), 0),))
        model = self._fake_model(ds, np.array([[0.5, 0.5]]))
        with pytest.raises(ValueError):
            domain_topic_distribution(model, other, "d")


class TestCosine:
    def test_self_similarity_is_one(self):
        v = np.array([0.2, 0.3, 0.5])
        assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_zero_vector_error(self):
        with pytest.raises(ValueError):
            cosine_similarity([0, 0], [1, 0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cosine_similarity([1, 0], [1, 0, 0])


class TestSimilarityMatrix:
    def test_identical_domains_fully_similar(self):
        ds = dataset_from_counts({"a": {"care": 5, "harm": 3}, "b": {"care": 5, "harm": 3}})
        sim = similarity_matrix(ds, kind="label")
        assert sim.values[0, 1] == pytest.approx(1.0, abs=1e-9)

    def test_disjoint_label_support_gives_zero(self):
        ds = dataset_from_counts({"a": {"care": 5, "harm": 5}, "b": {"loyalty": 4, "purity": 6}})
        sim = similarity_matrix(ds, kind="label")
        assert sim.values[0, 1] == 0.0

    def test_exact_symmetry_and_unit_diagonal(self, small_benchmark):
        _, ds = small_benchmark
        sim = similarity_matrix(ds, kind="label")
        assert np.array_equal(sim.values, sim.values.T)
        assert np.allclose(np.diag(sim.values), 1.0, atol=1e-9)
        assert (sim.values >= 0).all() and (sim.values <= 1 + 1e-12).all()

    def test_ten_dim_variant(self):
        ds = dataset_from_counts(
            {"a": {"care": 5, "no-moral": 100}, "b": {"care": 5, "no-moral": 1}}
        )
        full = similarity_matrix(ds, kind="label")
        moral_only = similarity_matrix(ds, kind="label", label_dims=10)
        assert moral_only.values[0, 1] == pytest.approx(1.0, abs=1e-9)
        assert full.values[0, 1] < 0.999

    def test_topic_kind_knob_zero_high_similarity(self, small_noshift_benchmark):
        _, ds = small_noshift_benchmark
        model = fit_lda(ds, K=20, iterations=300, seed=3, average_last=100)
        sim = similarity_matrix(ds, model, kind="topic")
        assert (sim.off_diagonal() > 0.95).all()

    def test_needs_model_for_topic_kind(self, small_benchmark):
        _, ds = small_benchmark
        with pytest.raises(ValueError):
            similarity_matrix(ds, None, kind="topic")

    def test_csv_round_trip_header(self, tmp_path, small_benchmark):
        _, ds = small_benchmark
        sim = similarity_matrix(ds, kind="label")
        path = tmp_path / "sim.csv"
        sim.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "," + ",".join(sim.domains)
        assert len(lines) == len(sim.domains) + 1


class TestNormality:
    def test_normal_samples_accepted(self):
        rng = np.random.default_rng(0)
        assert normality_test(rng.standard_normal(5000)) > 0.05

    def test_exponential_samples_rejected(self):
        rng = np.random.default_rng(0)
        assert normality_test(rng.exponential(1.0, size=5000)) < 0.001

    def test_constant_samples_error(self):
        with pytest.raises(ValueError):
            normality_test(np.ones(100))

    def test_minimum_sample_size(self):
        with pytest.raises(ValueError, match="20"):
            normality_test(np.arange(10))

    def test_null_calibration(self):
        rejections = 0
        for seed in range(200):
            rng = np.random.default_rng(seed)
            if normality_test(rng.standard_normal(500)) < 0.05:
                rejections += 1
        assert 0.01 <= rejections / 200 <= 0.10


class TestSpearman:
    def test_monotone_exactly_one(self):
        rho, p = spearman_test([1, 2, 3], [1, 4, 9])
        assert rho == 1.0 and p == 0.0

    def test_antitone_exactly_minus_one(self):
        rho, p = spearman_test([1, 2, 3], [3, 2, 1])
        assert rho == -1.0 and p == 0.0

    def test_matches_reference_implementation(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            x = rng.integers(0, 6, size=15).astype(float)  # ties likely
            y = x * 0.5 + rng.normal(size=15)
            if np.ptp(x) == 0 or np.ptp(y) == 0:
                continue
            rho, p = spearman_test(x, y)
            ref = scipy.stats.spearmanr(x, y)
            assert rho == pytest.approx(float(ref.statistic), abs=1e-12)
            assert p == pytest.approx(float(ref.pvalue), abs=1e-9)

    def test_invariant_under_monotone_transforms(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(0.1, 5.0, size=30)
        y = rng.uniform(0.1, 5.0, size=30)
        base = spearman_test(x, y)[0]
        assert spearman_test(np.exp(x), y)[0] == base
        assert spearman_test(x, y**3)[0] == base
        assert spearman_test(np.log(x), np.sqrt(y))[0] == base

    def test_exact_permutation_small_n(self):
        rho, p = spearman_test([1, 2, 3], [1, 2, 3], method="exact")
        assert rho == 1.0 and p == pytest.approx(2 / 6)

    def test_exact_matches_t_direction(self):
        x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0]
        rho_e, p_e = spearman_test(x, y, method="exact")
        rho_t, _ = spearman_test(x, y)
        assert rho_e == rho_t
        brute = [
            abs(1 - 6 * float(np.sum((np.array(x_rank) - np.arange(1, 7)) ** 2)) / (6 * 35))
            for x_rank in itertools.permutations(range(1, 7))
        ]
        expected = np.mean([b >= abs(rho_e) - 1e-12 for b in brute])
        assert p_e == pytest.approx(expected)

    def test_constant_error(self):
        with pytest.raises(ValueError):
            spearman_test([1, 1, 1], [1, 2, 3])

    def test_short_input_error(self):
        with pytest.raises(ValueError):
            spearman_test([1, 2], [1, 2])


class TestPerformanceVariation:
    def test_published_worked_example(self):
        assert performance_variation(0.676, 0.591) == pytest.approx(-0.085, abs=1e-12)

    def test_self_pair_is_zero(self):
        assert performance_variation(0.5, 0.5) == 0.0

    def test_bounds_checked(self):
        with pytest.raises(ValueError):
            performance_variation(1.2, 0.5)


class TestRegressionTTest:
    def test_planted_slope_recovered(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(0, 1, size=30)
        y = 2.0 * x + rng.normal(0, 0.01, size=30)
        result = regression_ttest(x, y)
        assert result.coefficients[0] == pytest.approx(2.0, abs=0.05)
        assert result.p_values[0] < 1e-6

    def test_univariate_matches_linregress(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(0, 1, size=25)
        y = 1.5 * x + rng.normal(0, 0.3, size=25)
        mine = regression_ttest(x, y)
        ref = scipy.stats.linregress(x, y)
        assert mine.coefficients[0] == pytest.approx(ref.slope, abs=1e-10)
        assert mine.intercept == pytest.approx(ref.intercept, abs=1e-10)
        assert mine.p_values[0] == pytest.approx(ref.pvalue, abs=1e-10)

    def test_null_calibration(self):
        false_positives = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            x = rng.uniform(0, 1, size=30)
            y = rng.normal(size=30)
            if regression_ttest(x, y).p_values[0] < 0.05:
                false_positives += 1
        assert false_positives <= 10

    def test_slope_within_three_stderr(self):
        rng = np.random.default_rng(21)
        x = rng.uniform(0, 1, size=60)
        y = 0.7 * x + rng.normal(0, 0.1, size=60)
        result = regression_ttest(x, y)
        assert abs(result.coefficients[0] - 0.7) < 3 * result.stderrs[0]

    def test_multivariate_fit(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(0, 1, size=(40, 2))
        y = 1.0 * X[:, 0] - 2.0 * X[:, 1] + rng.normal(0, 0.05, size=40)
        result = regression_ttest(X, y, feature_names=("a", "b"))
        assert result.coefficients[0] == pytest.approx(1.0, abs=0.1)
        assert result.coefficients[1] == pytest.approx(-2.0, abs=0.1)
        assert result.to_dict()["coefficients"]["b"] == pytest.approx(-2.0, abs=0.1)

    def test_constant_column_error(self):
        with pytest.raises(ValueError):
            regression_ttest(np.ones(10), np.arange(10.0))

    def test_rank_deficient_error(self):
        x = np.arange(10.0)
        X = np.stack([x, 2 * x], axis=1)
        with pytest.raises(ValueError):
            regression_ttest(X, x)

    def test_too_few_observations(self):
        with pytest.raises(ValueError):
            regression_ttest(np.array([1.0, 2.0]), np.array([1.0, 2.0]))


class TestRunShiftTests:
    def _sim(self, values, kind):
        n = values.shape[0]
        return SimilarityMatrix(tuple(f"d{i}" for i in range(n)), values, kind)

    def test_planted_relation_recovered(self):
        rng = np.random.default_rng(9)
        n = 7
        topic = np.eye(n)
        label = np.eye(n)
        tri = np.triu_indices(n, 1)
        topic[tri] = rng.uniform(0.2, 0.9, size=len(tri[0]))
        label[tri] = rng.uniform(0.2, 0.9, size=len(tri[0]))
        topic = np.maximum(topic, topic.T)
        label = np.maximum(label, label.T)
        np.fill_diagonal(topic, 1.0)
        np.fill_diagonal(label, 1.0)
        grid = np.zeros((n, n))
        base = 0.8
        for i in range(n):
            for j in range(n):
                variation = (1 - topic[i, j]) + (1 - label[i, j])
                grid[i, j] = np.clip(base - 0.3 * variation + rng.normal(0, 0.003), 0, 1)
        report = run_shift_tests(self._sim(topic, "topic"), self._sim(label, "label"), grid)
        assert report.normality_p_topic is not None  # 21 pairs >= 20
        combined = report.regression_combined["coefficients"]["summed_variation"]
        assert combined == pytest.approx(-0.3, abs=0.05)
        assert report.regression_combined["p_values"]["summed_variation"] < 1e-6
        assert -1.0 <= report.spearman_rho <= 1.0

    def test_few_domains_skips_normality(self, small_benchmark):
        _, ds = small_benchmark
        label_sim = similarity_matrix(ds, kind="label")
        report = run_shift_tests(label_sim, label_sim)
        assert report.normality_p_topic is None
        assert report.notes

    def test_json_export(self, tmp_path, small_benchmark):
        _, ds = small_benchmark
        label_sim = similarity_matrix(ds, kind="label")
        report = run_shift_tests(label_sim, label_sim)
        path = tmp_path / "report.json"
        report.to_json(path)
        payload = json.loads(path.read_text())
        assert "spearman_rho" in payload and "notes" in payload
