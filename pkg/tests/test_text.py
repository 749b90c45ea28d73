import numpy as np
import pytest

from gem.errors import ConfigurationError, ValidationError
from gem.text import (
    CLS_ID,
    PAD_ID,
    SEP_ID,
    UNK_ID,
    Vocabulary,
    build_vocab,
    decode,
    encode,
    make_batch,
    make_paired_batch,
    tokenize,
    unbatch,
)


class TestTokenize:
    def test_words_and_punct(self):
        assert tokenize("Hello, world.") == ["hello", ",", "world", "."]

    def test_concept_tokens_atomic(self):
        assert tokenize("saw <anxiety> and <woman> today") == [
            "saw", "<anxiety>", "and", "<woman>", "today",
        ]

    def test_age_shorthand_fragment(self):
        assert tokenize("29<woman> update") == ["29", "<woman>", "update"]

    def test_special_tokens_canonical(self):
        assert tokenize("[MASK] it") == ["[MASK]", "it"]


class TestBuildVocab:
    def test_min_freq_threshold(self):
        vocab = build_vocab(["a a b"], min_freq=2)
        content = vocab.tokens[vocab.n_reserved :]
        assert content == ["a"]

    def test_concepts_present_even_if_absent_from_corpus(self):
        vocab = build_vocab(["plain text only here"], min_freq=1)
        assert vocab.id_of("<anxiety>") != UNK_ID

    def test_deterministic_over_shuffled_corpora(self):
        rng = np.random.default_rng(0)
        texts = [f"tok{i} tok{i} shared shared" for i in range(30)]
        ref = build_vocab(texts).tokens
        for _ in range(10):
            shuffled = list(texts)
            rng.shuffle(shuffled)
            assert build_vocab(shuffled).tokens == ref

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValidationError):
            build_vocab([])

    def test_frequency_then_lexicographic_order(self):
        vocab = build_vocab(["b b b a a c c"], min_freq=2)
        content = vocab.tokens[vocab.n_reserved :]
        assert content == ["b", "a", "c"]


class TestEncode:
    @pytest.fixture()
    def vocab(self):
        return build_vocab(["hello there hello there general stent"], min_freq=1)

    def test_simple(self, vocab):
        ids = encode("hello", vocab)
        assert ids[0] == CLS_ID and ids[-1] == SEP_ID and len(ids) == 3
        assert decode(ids, vocab) == "hello"

    def test_oov_becomes_unk(self, vocab):
        ids = encode("hello zzzz", vocab)
        assert ids[2] == UNK_ID

    def test_truncation_keeps_sep_last(self, vocab):
        text = " ".join(["hello"] * 100)
        ids = encode(text, vocab, max_len=16)
        assert len(ids) == 16
        assert ids[-1] == SEP_ID
        assert ids[0] == CLS_ID

    def test_max_len_too_small(self, vocab):
        with pytest.raises(ConfigurationError):
            encode("hello", vocab, max_len=2)

    def test_encode_decode_identity(self, vocab):
        text = "hello there general stent"
        ids = encode(text, vocab)
        again = encode(decode(ids, vocab), vocab)
        np.testing.assert_array_equal(ids, again)


class TestBatch:
    def test_padding_and_mask(self):
        b = make_batch([np.arange(3), np.arange(5)])
        assert b.ids.shape == (2, 5)
        assert b.pad_mask[0].tolist() == [True, True, True, False, False]
        assert (b.ids[0, 3:] == PAD_ID).all()

    def test_single_sequence_all_true(self):
        b = make_batch([np.arange(4)])
        assert b.pad_mask.all()

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        seqs = [rng.integers(0, 50, size=int(rng.integers(1, 9))) for _ in range(20)]
        out = unbatch(make_batch(seqs))
        assert all(np.array_equal(a, b) for a, b in zip(seqs, out))

    def test_too_long_rejected(self):
        with pytest.raises(ValidationError):
            make_batch([np.arange(6)], pad_to=4)

    def test_paired_share_width(self):
        pb = make_paired_batch([np.arange(3)], [np.arange(7)])
        assert pb.symptom.ids.shape == pb.gender.ids.shape == (1, 7)


class TestVocabularyIO:
    def test_save_load_equal(self, tmp_path):
        vocab = build_vocab(["alpha beta beta gamma gamma gamma"], min_freq=1)
        p = tmp_path / "vocab.txt"
        vocab.save(p)
        again = Vocabulary.load(p)
        assert again == vocab
        assert again.sha256() == vocab.sha256()

    def test_line_number_is_id(self, tmp_path):
        vocab = build_vocab(["x x y y"], min_freq=2)
        p = tmp_path / "vocab.txt"
        vocab.save(p)
        lines = p.read_text().splitlines()
        for i, tok in enumerate(lines):
            assert vocab.id_of(tok) == i
