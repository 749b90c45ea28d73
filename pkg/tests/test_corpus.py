import collections

import numpy as np
import pytest

from gem.corpus import (
    GENDERS,
    SYMPTOMS,
    CorpusSplit,
    GeneratorSpec,
    LabeledItem,
    RawItem,
    anonymize,
    anonymize_items,
    filter_cvd,
    generate_synthetic_corpus,
    largest_remainder,
    load_corpus,
    plan_labels,
    quality_filter,
    save_corpus,
    split,
    weak_label_gender,
)
from gem.errors import ConfigurationError, StratificationError, ValidationError
from gem.knowledge import Lexicon, LexiconEntry, load_bundled_lexicon


def make_item(i=0, text="some words here", upvotes=5, kind="post"):
    return RawItem(
        id=f"id-{i}",
        author_id="u-1",
        kind=kind,
        source="r/test",
        text=text,
        upvotes=upvotes,
        created_at=1_600_000_000 + i,
    )


def cvd_lex(*surfaces):
    return Lexicon(
        entries=tuple(LexiconEntry(s, "<cvd>", "cvd") for s in surfaces),
        category="cvd",
    )


class TestItems:
    def test_empty_text_rejected(self):
        with pytest.raises(ValidationError):
            make_item(text="   ")

    def test_negative_upvotes_rejected(self):
        with pytest.raises(ValidationError):
            make_item(upvotes=-1)

    def test_provenance_invariants(self):
        raw = make_item()
        with pytest.raises(ValidationError):
            LabeledItem(item=raw, provenance="channel_label")
        with pytest.raises(ValidationError):
            LabeledItem(item=raw, symptom="anxiety", provenance="synthetic")
        LabeledItem(item=raw, symptom="anxiety", gender="man", provenance="synthetic")


class TestGenerator:
    def test_deterministic_byte_identical(self, tmp_path):
        spec = GeneratorSpec(n_items=60, seed=7)
        a = generate_synthetic_corpus(spec)
        b = generate_synthetic_corpus(GeneratorSpec(n_items=60, seed=7))
        pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_corpus(a, pa)
        save_corpus(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_class_counts_match_label_stream(self):
        spec = GeneratorSpec(n_items=1000, seed=3)
        planned = collections.Counter(s for s, _ in plan_labels(spec))
        items = generate_synthetic_corpus(spec)
        emitted = collections.Counter(it.symptom for it in items)
        assert planned == emitted
        for s in SYMPTOMS:
            assert 240 <= emitted[s] <= 260

    def test_full_cue_density_plants_symptom_cues(self):
        slex = load_bundled_lexicon("symptom")
        items = generate_synthetic_corpus(GeneratorSpec(n_items=120, seed=5))
        for it in items:
            assert slex._pattern.search(it.item.text), it.item.text

    def test_all_items_pass_cvd_filter(self):
        lex = load_bundled_lexicon("cvd")
        items = generate_synthetic_corpus(GeneratorSpec(n_items=150, seed=9))
        assert len(filter_cvd(items, lex)) == len(items)

    def test_label_distribution_within_two_percent(self):
        spec = GeneratorSpec(n_items=5000, seed=11)
        items = generate_synthetic_corpus(spec)
        counts = collections.Counter(it.symptom for it in items)
        for s in SYMPTOMS:
            assert abs(counts[s] / 5000 - 0.25) <= 0.02
        gcounts = collections.Counter(it.gender for it in items)
        for g in GENDERS:
            assert abs(gcounts[g] / 5000 - 0.5) <= 0.02

    def test_interaction_mode_pools_are_rotated(self):
        slex = load_bundled_lexicon("symptom")
        pools = {c: set() for c in SYMPTOMS}
        for e in slex.entries:
            pools[e.concept[1:-1]].add(e.surface)
        items = generate_synthetic_corpus(
            GeneratorSpec(n_items=200, seed=13, interaction_mode=True)
        )
        rot = {s: SYMPTOMS[(SYMPTOMS.index(s) + 1) % 4] for s in SYMPTOMS}
        for it in items:
            text = it.item.text
            matched = {
                c for c in SYMPTOMS if any(f" {s} " in f" {text} " for s in pools[c])
            }
            expected_pool = (
                it.symptom if it.gender == "man" else
                next(s for s in SYMPTOMS if rot[s] == it.symptom)
            )
            assert expected_pool in matched

    def test_bad_balance_rejected(self):
        spec = GeneratorSpec(n_items=10, symptom_balance={"depression": 1.0})
        with pytest.raises(ConfigurationError):
            spec.validate()
        spec = GeneratorSpec(
            n_items=10,
            symptom_balance={s: (0.3 if s == "ptsd" else 0.25) for s in SYMPTOMS},
        )
        with pytest.raises(ConfigurationError):
            spec.validate()

    def test_texts_are_long_enough_for_quality_filter(self):
        items = generate_synthetic_corpus(GeneratorSpec(n_items=100, seed=17))
        assert all(len(it.item.text.split()) >= 50 for it in items)


class TestFilterCvd:
    def test_paper_abbreviation_retained(self):
        lex = cvd_lex("cabg")
        kept = filter_cvd([make_item(text="had a CABG last month")], lex)
        assert len(kept) == 1

    def test_no_match_dropped(self):
        lex = cvd_lex("cabg")
        assert filter_cvd([make_item(text="nice weather today")], lex) == []

    def test_word_boundary(self):
        lex = cvd_lex("cabg")
        assert filter_cvd([make_item(text="ate cabbage soup")], lex) == []

    def test_idempotent_and_order_preserving(self):
        lex = cvd_lex("stent", "angina")
        items = [
            make_item(0, text="the stent went in"),
            make_item(1, text="totally unrelated"),
            make_item(2, text="angina acting up"),
        ]
        once = filter_cvd(items, lex)
        assert [it.id for it in once] == ["id-0", "id-2"]
        assert filter_cvd(once, lex) == once

    def test_empty_lexicon_rejected(self):
        with pytest.raises(ConfigurationError):
            filter_cvd([make_item()], cvd_lex())


class TestQualityFilter:
    def test_boundary_grid(self):
        # exhaustive boundary grid: upvotes in {9,10,11} x tokens in {49,50,51}
        for upvotes in (9, 10, 11):
            for tokens in (49, 50, 51):
                item = make_item(text=" ".join(["w"] * tokens), upvotes=upvotes)
                kept = quality_filter([item])
                expected = upvotes > 10 and tokens >= 50
                assert bool(kept) == expected, (upvotes, tokens)

    def test_monotone_in_thresholds(self):
        rng = np.random.default_rng(0)
        items = [
            make_item(i, text=" ".join(["w"] * int(rng.integers(30, 80))),
                      upvotes=int(rng.integers(0, 30)))
            for i in range(50)
        ]
        base = {it.id for it in quality_filter(items, 10, 50)}
        assert {it.id for it in quality_filter(items, 12, 50)} <= base
        assert {it.id for it in quality_filter(items, 10, 60)} <= base

    def test_per_kind_override(self):
        post = make_item(0, text=" ".join(["w"] * 50), upvotes=5, kind="post")
        comment = make_item(1, text=" ".join(["w"] * 50), upvotes=5, kind="comment")
        kept = quality_filter([post, comment], per_kind_min_upvotes={"comment": 0})
        assert [it.id for it in kept] == ["id-1"]


class TestAnonymize:
    def test_url(self):
        assert anonymize("see https://example.com/x now") == "see <url> now"

    def test_reddit_mention(self):
        assert anonymize("thanks u/heartdoc!") == "thanks <user>!"

    def test_at_mention_and_www(self):
        assert anonymize("ping @nurse_jan via www.example.org ok") == "ping <user> via <url> ok"

    def test_idempotent_on_generated_texts(self):
        items = generate_synthetic_corpus(GeneratorSpec(n_items=1000, seed=23))
        for it in items:
            once = anonymize(it.item.text)
            assert anonymize(once) == once

    def test_anonymize_items_wraps(self):
        items = [make_item(0, text="mail u/someone " + "w " * 48)]
        out = anonymize_items(items)
        assert "<user>" in out[0].text


class TestSplit:
    def test_unlabeled_100_gives_75_5_20(self):
        items = [make_item(i) for i in range(100)]
        s = split(items, seed=1)
        assert (len(s.train), len(s.dev), len(s.test)) == (75, 5, 20)

    def test_same_seed_identical(self):
        items = generate_synthetic_corpus(GeneratorSpec(n_items=200, seed=29))
        a = split(items, seed=4)
        b = split(items, seed=4)
        assert [x.item.id for x in a.train] == [x.item.id for x in b.train]
        assert [x.item.id for x in a.test] == [x.item.id for x in b.test]

    def test_40_per_class_gives_30_in_train(self):
        items = []
        k = 0
        for s in SYMPTOMS:
            for _ in range(40):
                items.append(
                    LabeledItem(item=make_item(k), symptom=s, provenance="channel_label")
                )
                k += 1
        sp = split(items, seed=2, stratify_by=("symptom",))
        counts = collections.Counter(it.symptom for it in sp.train)
        assert all(counts[s] == 30 for s in SYMPTOMS)

    def test_disjoint_and_exhaustive(self):
        items = generate_synthetic_corpus(GeneratorSpec(n_items=321, seed=31))
        sp = split(items, seed=5)
        ids = [x.item.id for part in (sp.train, sp.dev, sp.test) for x in part]
        assert len(ids) == 321
        assert len(set(ids)) == 321
        assert set(ids) == {x.item.id for x in items}

    def test_small_stratum_named_in_error(self):
        items = [
            LabeledItem(item=make_item(0), symptom="ptsd", provenance="channel_label"),
            LabeledItem(item=make_item(1), symptom="ptsd", provenance="channel_label"),
        ]
        with pytest.raises(StratificationError, match="ptsd"):
            split(items, stratify_by=("symptom",))

    def test_bad_ratios_rejected(self):
        with pytest.raises(ConfigurationError):
            split([make_item(i) for i in range(10)], ratios=(0.5, 0.2, 0.2))


class TestLargestRemainder:
    def test_exact_when_divisible(self):
        assert largest_remainder(100, (0.75, 0.05, 0.20)) == [75, 5, 20]

    def test_sums_and_deviation(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            n = int(rng.integers(1, 500))
            raw = rng.random(4) + 0.01
            fr = raw / raw.sum()
            alloc = largest_remainder(n, fr)
            assert sum(alloc) == n
            assert all(abs(a - n * f) < 1.0 for a, f in zip(alloc, fr))


class TestWeakLabel:
    class ConstantLabeler:
        def predict_gender(self, texts):
            return ["man"] * len(texts)

    def test_constant_labeler(self):
        items = generate_synthetic_corpus(GeneratorSpec(n_items=20, seed=37))
        stripped = [LabeledItem(item=it.item, symptom=it.symptom) for it in items]
        out = weak_label_gender(self.ConstantLabeler(), stripped)
        assert all(it.gender == "man" for it in out)
        assert all(it.provenance == "weak_labeler" for it in out)
        assert all(it.symptom is not None for it in out)

    def test_applying_twice_identical(self):
        items = [LabeledItem(item=make_item(i)) for i in range(5)]
        lab = self.ConstantLabeler()
        a = weak_label_gender(lab, items)
        b = weak_label_gender(lab, a)
        assert [x.gender for x in a] == [x.gender for x in b]


class TestPersistence:
    def test_round_trip_byte_identical(self, tmp_path):
        items = generate_synthetic_corpus(GeneratorSpec(n_items=80, seed=41))
        p1 = tmp_path / "c1.jsonl"
        p2 = tmp_path / "c2.jsonl"
        save_corpus(items, p1)
        save_corpus(load_corpus(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_header_rejected(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"format": "other", "version": 1}\n')
        with pytest.raises(ValidationError):
            load_corpus(p)

    def test_duplicate_id_rejected(self, tmp_path):
        items = [make_item(0), make_item(0)]
        p = tmp_path / "dups.jsonl"
        save_corpus(items, p)
        with pytest.raises(ValidationError, match="duplicate id"):
            load_corpus(p)
