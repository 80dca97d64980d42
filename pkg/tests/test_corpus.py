import json

import numpy as np
import pytest

from conftest import dataset_from_counts, docs_from_counts
from moralshift.corpus import (
    REJECT,
    Dataset,
    Document,
    RecordError,
    aggregate_votes,
    collapse_to_single_label,
    dataset_summary,
    label_distribution,
    load_dataset,
    preprocess_text,
    save_dataset,
    virtue_vice_ratio,
)
from moralshift.labels import DEFAULT_SCHEME, LABELS


class TestPreprocess:
    def test_mention_and_url_replacement(self):
        assert preprocess_text("@john check https://t.co/x") == ["USER", "check", "URL"]

    def test_lowercase_and_punctuation_split(self):
        assert preprocess_text("ALL Lives Matter!") == ["all", "lives", "matter", "!"]

    def test_empty_input(self):
        assert preprocess_text("") == []

    def test_url_variants(self):
        assert preprocess_text("see www.example.com/x now") == ["see", "URL", "now"]
        assert preprocess_text("HTTP://Foo.Bar,baz") == ["URL"]

    def test_mention_requires_word_char(self):
        assert preprocess_text("a @ b") == ["a", "@", "b"]
        assert preprocess_text("email@host.com") == ["email", "@", "host", ".", "com"]

    def test_mention_mid_token_not_replaced(self):
        assert preprocess_text(".@john hi") == [".", "@", "john", "hi"]

    def test_sentinels_preserve_case(self):
        tokens = preprocess_text("@a @b http://x")
        assert tokens.count("USER") == 2 and tokens.count("URL") == 1

    def test_unicode_words(self):
        assert preprocess_text("Café onï¿½")[0] == "café"

    def test_idempotent_on_own_output(self):
        rng = np.random.default_rng(7)
        pieces = ["@user_One", "http://t.co/abc?q=1", "Don't", "STOP!!", "café", "a@b", "#tag", "..."]
        for _ in range(50):
            raw = " ".join(rng.choice(pieces, size=rng.integers(1, 8)))
            once = preprocess_text(raw)
            again = preprocess_text(" ".join(once))
            assert again == once


class TestAggregateVotes:
    def test_threshold_keeps_majority(self):
        assert aggregate_votes({"care": 2, "harm": 1}) == {"care"}

    def test_no_moral_override(self):
        assert aggregate_votes({"no-moral": 3, "care": 2}) == {"no-moral"}

    def test_reject_when_nothing_reaches_threshold(self):
        assert aggregate_votes({"care": 1, "harm": 1}) is REJECT

    def test_tied_no_moral_does_not_override(self):
        assert aggregate_votes({"no-moral": 2, "care": 2}) == {"no-moral", "care"}

    def test_multi_label_kept(self):
        assert aggregate_votes({"care": 2, "harm": 3}) == {"care", "harm"}

    def test_custom_threshold(self):
        assert aggregate_votes({"care": 2}, threshold=3) is REJECT

    def test_negative_count_rejected(self):
        with pytest.raises(ValueError):
            aggregate_votes({"care": -1})

    def test_unknown_label_rejected(self):
        with pytest.raises(KeyError):
            aggregate_votes({"kindness": 2})

    def test_empty_votes_rejected(self):
        with pytest.raises(ValueError):
            aggregate_votes({})

    def test_never_returns_label_below_threshold(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            votes = {name: int(rng.integers(0, 5)) for name in rng.choice(LABELS, 4, replace=False)}
            if all(v == 0 for v in votes.values()):
                continue
            kept = aggregate_votes(votes)
            if kept is not REJECT:
                assert all(votes[name] >= 2 for name in kept)


class TestCollapse:
    def test_singleton(self):
        assert collapse_to_single_label({"care"}, {"care": 2}) == DEFAULT_SCHEME.index_of("care")

    def test_max_votes_wins(self):
        kept = {"care", "harm"}
        assert collapse_to_single_label(kept, {"care": 2, "harm": 3}) == DEFAULT_SCHEME.index_of("harm")

    def test_tie_breaks_by_scheme_order(self):
        kept = {"authority", "betrayal"}
        idx = collapse_to_single_label(kept, {"authority": 2, "betrayal": 2})
        assert idx == DEFAULT_SCHEME.index_of("authority")

    def test_empty_kept_is_error(self):
        with pytest.raises(ValueError):
            collapse_to_single_label(set(), {})


def _write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


class TestLoadDataset:
    def test_length_filter(self, tmp_path):
        path = tmp_path / "in.jsonl"
        _write_jsonl(
            path,
            [
                {"id": "a", "domain": "d", "text": "one two three", "votes": {"care": 2}},
                {"id": "b", "domain": "d", "text": "too short", "votes": {"care": 2}},
                {"id": "c", "domain": "d", "text": "x y z w", "votes": {"harm": 2}},
            ],
        )
        ds = load_dataset(path)
        assert len(ds) == 2 and {d.id for d in ds} == {"a", "c"}

    def test_sentinel_tokens_from_raw(self, tmp_path):
        path = tmp_path / "in.jsonl"
        _write_jsonl(path, [{"id": "a", "domain": "d", "text": "@a @b http://x", "votes": {"care": 2}}])
        ds = load_dataset(path)
        tokens = ds.documents[0].tokens
        assert list(tokens).count("USER") == 2 and list(tokens).count("URL") == 1

    def test_rejected_votes_dropped(self, tmp_path):
        path = tmp_path / "in.jsonl"
        _write_jsonl(
            path,
            [
                {"id": "a", "domain": "d", "text": "one two three", "votes": {"care": 1, "harm": 1}},
                {"id": "b", "domain": "d", "text": "one two three", "votes": {"care": 2}},
            ],
        )
        ds = load_dataset(path)
        assert [d.id for d in ds] == ["b"]

    def test_malformed_record_reports_line(self, tmp_path):
        path = tmp_path / "in.jsonl"
        path.write_text('{"id": "a", "domain": "d", "text": "one two three", "votes": {"care": 2}}\n{"id": "b"}\n')
        with pytest.raises(RecordError, match="line 2"):
            load_dataset(path)

    def test_unknown_label_named_in_error(self, tmp_path):
        path = tmp_path / "in.jsonl"
        _write_jsonl(path, [{"id": "a", "domain": "d", "text": "one two three", "votes": {"niceness": 2}}])
        with pytest.raises(RecordError, match="niceness"):
            load_dataset(path)

    def test_tsv_format(self, tmp_path):
        path = tmp_path / "in.tsv"
        path.write_text("a\td\tcare\tone two three\nb\td\tharm\tfour five six\n")
        ds = load_dataset(path, format="tsv")
        assert len(ds) == 2
        assert ds.documents[0].label == DEFAULT_SCHEME.index_of("care")

    def test_deterministic_reload(self, tmp_path):
        path = tmp_path / "in.jsonl"
        _write_jsonl(
            path,
            [
                {"id": f"r{i}", "domain": f"d{i % 2}", "text": "alpha beta gamma delta", "votes": {"care": 2, "harm": i % 3}}
                for i in range(20)
            ],
        )
        a = load_dataset(path)
        b = load_dataset(path)
        assert a.documents == b.documents and a.domains == b.domains

    def test_sorted_iteration_order(self, tmp_path):
        path = tmp_path / "in.jsonl"
        _write_jsonl(
            path,
            [
                {"id": "z", "domain": "b", "text": "one two three", "label": "care"},
                {"id": "a", "domain": "b", "text": "one two three", "label": "care"},
                {"id": "m", "domain": "a", "text": "one two three", "label": "harm"},
            ],
        )
        ds = load_dataset(path)
        assert [(d.domain, d.id) for d in ds] == [("a", "m"), ("b", "a"), ("b", "z")]

    def test_duplicate_multilabel_flag(self, tmp_path):
        path = tmp_path / "in.jsonl"
        _write_jsonl(path, [{"id": "a", "domain": "d", "text": "one two three", "votes": {"care": 2, "harm": 2}}])
        collapsed = load_dataset(path)
        duplicated = load_dataset(path, duplicate_multilabel=True)
        assert len(collapsed) == 1 and len(duplicated) == 2
        assert {d.id for d in duplicated} == {"a::care", "a::harm"}

    def test_round_trip_via_save(self, tmp_path):
        src = tmp_path / "in.jsonl"
        _write_jsonl(
            path=src,
            records=[
                {"id": "a", "domain": "d", "text": "One TWO three!", "votes": {"care": 2}},
                {"id": "b", "domain": "e", "text": "@x look http://y.z", "votes": {"no-moral": 3}},
            ],
        )
        ds = load_dataset(src)
        out = tmp_path / "out.jsonl"
        save_dataset(ds, out)
        again = load_dataset(out)
        assert again.documents == ds.documents


class TestLabelDistribution:
    # Published per-domain label percentages (in scheme order); multiplying
    # by 100 yields exact integer document counts.
    ALM_PERCENTAGES = [6.37, 1.04, 12.07, 13.22, 3.16, 13.51, 19.03, 6.29, 2.14, 2.35, 20.82]

    def test_published_no_moral_share(self):
        counts = {name: round(p * 100) for name, p in zip(LABELS, self.ALM_PERCENTAGES)}
        ds = dataset_from_counts({"ALM": counts})
        dist = label_distribution(ds, "ALM")
        assert dist[DEFAULT_SCHEME.index_of("no-moral")] == pytest.approx(0.2082, abs=1e-9)

    def test_single_document_one_hot(self):
        ds = dataset_from_counts({"d": {"care": 1}})
        dist = label_distribution(ds, "d")
        assert dist[DEFAULT_SCHEME.index_of("care")] == 1.0 and dist.sum() == pytest.approx(1.0)

    def test_sums_to_one_and_nonnegative(self):
        rng = np.random.default_rng(5)
        counts = {name: int(rng.integers(1, 50)) for name in LABELS}
        ds = dataset_from_counts({"d": counts})
        dist = label_distribution(ds, "d")
        assert abs(dist.sum() - 1.0) < 1e-12 and (dist >= 0).all()

    def test_unknown_domain_is_error(self):
        ds = dataset_from_counts({"d": {"care": 1}})
        with pytest.raises(KeyError):
            label_distribution(ds, "other")


# Table of published virtue/vice percentages: label name -> percent, per domain,
# with the published virtue-vice ratio they must reproduce within 0.01.
PUBLISHED_VICE_VIRTUE = {
    "Sandy": (
        {"authority": 11.08, "care": 24.72, "fairness": 4.31, "loyalty": 10.30, "purity": 1.68,
         "betrayal": 3.58, "cheating": 11.43, "degradation": 2.23, "harm": 19.43, "subversion": 11.23},
        1.09,
    ),
    "Election": (
        {"authority": 5.03, "care": 11.88, "fairness": 16.67, "loyalty": 6.21, "purity": 12.12,
         "betrayal": 3.79, "cheating": 18.06, "degradation": 3.97, "harm": 17.42, "subversion": 4.85},
        1.08,
    ),
    "ALM": (
        {"authority": 8.04, "care": 15.24, "fairness": 17.07, "loyalty": 7.94, "purity": 2.70,
         "betrayal": 1.32, "cheating": 16.69, "degradation": 3.99, "harm": 24.03, "subversion": 2.97},
        1.04,
    ),
    "BLM": (
        {"authority": 6.87, "care": 7.88, "fairness": 10.99, "loyalty": 10.01, "purity": 3.67,
         "betrayal": 3.63, "cheating": 18.19, "degradation": 5.58, "harm": 25.54, "subversion": 7.64},
        0.65,
    ),
    "MeToo": (
        {"authority": 9.10, "care": 4.48, "fairness": 8.31, "loyalty": 6.88, "purity": 3.91,
         "betrayal": 6.72, "cheating": 13.88, "degradation": 18.83, "harm": 8.98, "subversion": 18.91},
        0.49,
    ),
    "Baltimore": (
        {"authority": 0.88, "care": 7.21, "fairness": 5.74, "loyalty": 15.15, "purity": 1.54,
         "betrayal": 24.78, "cheating": 20.85, "degradation": 1.21, "harm": 10.81, "subversion": 11.84},
        0.44,
    ),
    "Davidson": (
        {"authority": 5.25, "care": 2.36, "fairness": 1.05, "loyalty": 9.97, "purity": 1.05,
         "betrayal": 10.50, "cheating": 16.01, "degradation": 17.32, "harm": 34.91, "subversion": 1.57},
        0.25,
    ),
}


def dataset_from_published_percentages() -> Dataset:
    per_domain = {
        domain: {name: round(pct * 100) for name, pct in row.items()}
        for domain, (row, _) in PUBLISHED_VICE_VIRTUE.items()
    }
    return dataset_from_counts(per_domain)


class TestVirtueViceRatio:
    def test_published_ratios(self):
        ds = dataset_from_published_percentages()
        for domain, (_, expected) in PUBLISHED_VICE_VIRTUE.items():
            assert virtue_vice_ratio(ds, domain) == pytest.approx(expected, abs=0.01)

    def test_equal_counts_give_one(self):
        ds = dataset_from_counts({"d": {"care": 5, "harm": 5}})
        assert virtue_vice_ratio(ds, "d") == 1.0

    def test_no_moral_excluded(self):
        ds = dataset_from_counts({"d": {"care": 4, "harm": 2, "no-moral": 50}})
        assert virtue_vice_ratio(ds, "d") == 2.0

    def test_zero_vice_is_error(self):
        ds = dataset_from_counts({"d": {"care": 4, "no-moral": 2}})
        with pytest.raises(ValueError):
            virtue_vice_ratio(ds, "d")


class TestDatasetViews:
    def test_document_min_tokens_enforced(self):
        with pytest.raises(ValueError):
            Document("x", "d", ("a", "b"), 0)

    def test_subset(self):
        ds = dataset_from_counts({"a": {"care": 2}, "b": {"harm": 3}})
        sub = ds.subset(["a"])
        assert sub.domains == ("a",) and len(sub) == 2

    def test_summary_matches_hand_count(self):
        ds = dataset_from_counts({"d": {"care": 3, "harm": 1}})
        summary = dataset_summary(ds)
        assert summary["d"]["documents"] == 4
        assert summary["d"]["mean_tokens"] == 3.0
        assert summary["d"]["label_percent"]["care"] == 75.0
        assert summary["overall"]["documents"] == 4
