import re

import numpy as np
import pytest

from gem.errors import ConfigurationError, ValidationError
from gem.knowledge import (
    CONCEPT_TOKENS,
    Lexicon,
    LexiconEntry,
    build_views,
    find_matches,
    gender_spans,
    load_bundled_lexicon,
    load_lexicon,
    mask_gender,
    mask_symptoms,
    merge_spans,
    replace_spans,
)

WORDCHARS = set("0123456789abcdefghijklmnopqrstuvwxyz_ABCDEFGHIJKLMNOPQRSTUVWXYZ")


def brute_force_matches(text, lexicon):
    """Independent span oracle: enumerate every surface occurrence at every
    offset (case-insensitive, word boundaries, outside concept tokens), then
    keep spans greedily by (start, longest-first)."""
    lower = text.lower()
    protected = []
    for tok in CONCEPT_TOKENS:
        start = 0
        while True:
            i = lower.find(tok, start)
            if i < 0:
                break
            protected.append((i, i + len(tok)))
            start = i + 1
    candidates = []
    for entry in lexicon.entries:
        s = entry.surface
        start = 0
        while True:
            i = lower.find(s, start)
            if i < 0:
                break
            j = i + len(s)
            left_ok = i == 0 or lower[i - 1] not in WORDCHARS
            right_ok = j == len(lower) or lower[j] not in WORDCHARS
            clear = all(not (i < pe and ps < j) for ps, pe in protected)
            if left_ok and right_ok and clear:
                candidates.append((i, j, entry.concept))
            start = i + 1
    candidates.sort(key=lambda c: (c[0], -(c[1] - c[0]), c[2]))
    picked = []
    last_end = -1
    for c in candidates:
        if c[0] >= last_end:
            picked.append(c)
            last_end = c[1]
    return picked


def make_lexicon(pairs, category):
    return Lexicon(
        entries=tuple(LexiconEntry(s, c, category) for s, c in pairs),
        category=category,
    )


@pytest.fixture(scope="module")
def slex():
    return load_bundled_lexicon("symptom")


@pytest.fixture(scope="module")
def glex():
    return load_bundled_lexicon("gender")


class TestLoadLexicon:
    def test_bundled_cvd_has_about_250_entries(self):
        lex = load_bundled_lexicon("cvd")
        assert 240 <= len(lex) <= 260
        surfaces = {e.surface for e in lex.entries}
        assert {"cabg", "cad", "chd", "chf"} <= surfaces

    def test_bundled_symptom_and_gender(self, slex, glex):
        assert len(slex) >= 120
        assert ("bachelorette", "<woman>") in {
            (e.surface, e.concept) for e in glex.entries
        }

    def test_duplicate_surface_reports_both_lines(self, tmp_path):
        p = tmp_path / "lex.tsv"
        p.write_text(
            "chest pain\t<cvd>\tcvd\nangina\t<cvd>\tcvd\nchest pain\t<cvd>\tcvd\n"
        )
        with pytest.raises(ValidationError, match=r"lines 1 and 3"):
            load_lexicon(p, "cvd")

    def test_unknown_concept_rejected(self, tmp_path):
        p = tmp_path / "lex.tsv"
        p.write_text("sadness\t<sad>\tsymptom\n")
        with pytest.raises(ValidationError, match="<sad>"):
            load_lexicon(p, "symptom")

    def test_surfaces_lowercased(self, tmp_path):
        p = tmp_path / "lex.tsv"
        p.write_text("CABG\t<cvd>\tcvd\n")
        lex = load_lexicon(p, "cvd")
        assert lex.entries[0].surface == "cabg"

    def test_comments_and_blanks_skipped(self, tmp_path):
        p = tmp_path / "lex.tsv"
        p.write_text("# header\n\nangina\t<cvd>\tcvd\n")
        assert len(load_lexicon(p, "cvd")) == 1


class TestFindMatches:
    def test_worked_example(self):
        lex = make_lexicon(
            [("panic attack", "<anxiety>"), ("panic", "<anxiety>")], "symptom"
        )
        got = find_matches("Panic attack and panic", lex)
        assert got == [(0, 12, "<anxiety>"), (17, 22, "<anxiety>")]

    def test_no_match(self, slex):
        assert find_matches("nice weather today", slex) == []

    def test_case_insensitive(self, slex):
        got = find_matches("PANIC ATTACK", slex)
        assert got == [(0, 12, "<anxiety>")]

    def test_word_boundaries(self):
        lex = make_lexicon([("cabg", "<cvd>")], "cvd")
        assert find_matches("ate cabbage soup", lex) == []
        assert find_matches("had a CABG last month", lex) == [(6, 10, "<cvd>")]

    def test_empty_lexicon_rejected(self):
        lex = make_lexicon([], "cvd")
        with pytest.raises(ConfigurationError):
            find_matches("anything", lex)

    def test_randomized_against_brute_force(self, ):
        rng = np.random.default_rng(1234)
        words = [f"w{k}" for k in range(12)] + ["alpha", "beta", "gamma", "delta"]
        concepts = ["<depression>", "<anxiety>", "<bipolar>", "<ptsd>"]
        n_agree = 0
        for case in range(600):
            n_surf = int(rng.integers(2, 7))
            surfaces = set()
            while len(surfaces) < n_surf:
                k = int(rng.integers(1, 4))
                surfaces.add(" ".join(rng.choice(words, size=k)))
            lex = make_lexicon(
                [(s, concepts[int(rng.integers(0, 4))]) for s in sorted(surfaces)],
                "symptom",
            )
            n_tok = int(rng.integers(3, 30))
            toks = list(rng.choice(words + [",", "."], size=n_tok))
            if rng.random() < 0.3:
                toks.insert(int(rng.integers(0, len(toks))), "<anxiety>")
            text = " ".join(toks)
            got = find_matches(text, lex)
            want = brute_force_matches(text, lex)
            assert got == want, f"case {case}: {text!r}"
            n_agree += 1
        assert n_agree == 600


class TestMasking:
    def test_symptom_literal_example(self, slex):
        assert (
            mask_symptoms("suffering from panic attacks", slex)
            == "suffering from <anxiety>"
        )

    def test_ptsd_terms_masked(self, slex):
        out = mask_symptoms("flashbacks and nightmares every night", slex)
        assert out == "<ptsd> and <ptsd> every night"

    def test_no_symptom_terms_unchanged(self, slex):
        text = "the stent operation went fine"
        assert mask_symptoms(text, slex) == text

    def test_gender_literal_examples(self, glex):
        assert mask_gender("bachelorette", glex) == "<woman>"
        assert mask_gender("bachelor", glex) == "<man>"
        assert mask_gender("he told his doctor", glex) == "<man> told <man> doctor"

    def test_age_shorthand(self, glex):
        assert mask_gender("I am 29F", glex) == "I am 29<woman>"
        assert mask_gender("M42 here", glex) == "<man>42 here"
        assert mask_gender("[29F] checking in", glex) == "[29<woman>] checking in"

    def test_shorthand_needs_digits(self, glex):
        assert mask_gender("f stop and m division", glex) == "f stop and m division"

    def test_idempotent_on_generated_texts(self, slex, glex):
        rng = np.random.default_rng(7)
        s_surf = [e.surface for e in slex.entries]
        g_surf = [e.surface for e in glex.entries]
        filler = ["the", "care", "plan", "after", "visit", "42f", "ok.", "really"]
        for _ in range(1000):
            parts = (
                list(rng.choice(s_surf, size=2))
                + list(rng.choice(g_surf, size=2))
                + list(rng.choice(filler, size=4))
            )
            rng.shuffle(parts)
            text = " ".join(parts)
            ms = mask_symptoms(text, slex)
            assert mask_symptoms(ms, slex) == ms
            mg = mask_gender(text, glex)
            assert mask_gender(mg, glex) == mg

    def test_masking_commutes_when_spans_disjoint(self, slex, glex):
        text = "my wife has panic attacks since the surgery"
        a = mask_gender(mask_symptoms(text, slex), glex)
        b = mask_symptoms(mask_gender(text, glex), slex)
        assert a == b == "my <woman> has <anxiety> since the surgery"


class TestViews:
    def test_both_views_differ_when_cues_present(self, slex, glex):
        text = "my wife has panic attacks after her heart attack"
        v = build_views(text, slex, glex)
        assert v.symptom_view != text
        assert v.gender_view != text
        assert v.original == text

    def test_cue_free_text_views_equal_original(self, slex, glex):
        text = "the weather was fine and the food was good"
        v = build_views(text, slex, glex)
        assert v.symptom_view == text
        assert v.gender_view == text
        assert v.symptom_spans == () and v.gender_spans == ()

    def test_span_replacement_reconstructs_views(self, slex, glex):
        rng = np.random.default_rng(11)
        s_surf = [e.surface for e in slex.entries]
        g_surf = [e.surface for e in glex.entries]
        filler = ["and", "then", "clinic", "said", "32m", "waiting"]
        for _ in range(1000):
            parts = (
                list(rng.choice(s_surf, size=2))
                + list(rng.choice(g_surf, size=2))
                + list(rng.choice(filler, size=3))
            )
            rng.shuffle(parts)
            text = " ".join(parts)
            v = build_views(text, slex, glex)
            assert replace_spans(text, v.symptom_spans) == v.symptom_view
            assert replace_spans(text, v.gender_spans) == v.gender_view

    def test_bytes_outside_spans_untouched(self, slex, glex):
        text = "Grandma had CHEST PAIN; panic attacks followed?!"
        v = build_views(text, slex, glex)
        for spans, view in (
            (v.symptom_spans, v.symptom_view),
            (v.gender_spans, v.gender_view),
        ):
            # walk both strings outside the spans and compare byte-for-byte
            src, dst = 0, 0
            for start, end, concept in spans:
                assert text[src:start] == view[dst : dst + (start - src)]
                dst += (start - src) + len(concept)
                src = end
            assert text[src:] == view[dst:]

    def test_none_lexicon_gives_raw_view(self, slex):
        text = "my wife has panic attacks"
        v = build_views(text, slex, None)
        assert v.gender_view == text
        assert v.symptom_view == "my wife has <anxiety>"


class TestSpanHelpers:
    def test_merge_prefers_leftmost_longest(self):
        a = [(0, 5, "<man>")]
        b = [(0, 3, "<woman>"), (6, 9, "<woman>")]
        assert merge_spans(a, b) == [(0, 5, "<man>"), (6, 9, "<woman>")]

    def test_gender_spans_include_shorthand(self, glex):
        spans = gender_spans("sister 29f", glex)
        assert spans == [(0, 6, "<woman>"), (9, 10, "<woman>")]
