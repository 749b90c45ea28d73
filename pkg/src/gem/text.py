"""Word-level vocabulary, tokenization and batching for both encoders.

Tokenization is lower-cased word splitting with punctuation kept as single
tokens; concept tokens like <anxiety> stay atomic so masking survives
encoding. Ids 0..4 are the special tokens, concept tokens follow at fixed
positions, content tokens are ordered by (frequency desc, lexicographic).
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ValidationError
from .knowledge import CONCEPT_TOKENS

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)

_TOKEN_RE = re.compile(r"<[a-z_]+>|\[(?:pad|unk|cls|sep|mask)\]|[0-9a-z_']+|[^\s0-9a-z_]")
_CANON = {t.lower(): t for t in SPECIAL_TOKENS}


def tokenize(text):
    """Lower-cased tokens: angle/bracket tokens atomic, words, single punctuation."""
    return [_CANON.get(t, t) for t in _TOKEN_RE.findall(text.lower())]


class Vocabulary:
    def __init__(self, tokens):
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValidationError("vocabulary contains duplicate tokens")
        for i, t in enumerate(SPECIAL_TOKENS):
            if self.tokens[i] != t:
                raise ValidationError(f"token id {i} must be {t}")
        for off, t in enumerate(CONCEPT_TOKENS):
            if self.tokens[len(SPECIAL_TOKENS) + off] != t:
                raise ValidationError(f"concept token {t} missing or misplaced")

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id_of(self, token):
        return self.index.get(token, UNK_ID)

    def token_of(self, idx):
        return self.tokens[idx]

    @property
    def n_reserved(self):
        return len(SPECIAL_TOKENS) + len(CONCEPT_TOKENS)

    def content_ids(self):
        """Ids eligible as random MLM replacements (not special, not concept)."""
        return np.arange(self.n_reserved, len(self.tokens))

    def sha256(self):
        h = hashlib.sha256()
        for t in self.tokens:
            h.update(t.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def save(self, path):
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        text = Path(path).read_text(encoding="utf-8")
        return cls(text.splitlines())


def build_vocab(texts, min_freq=2):
    """Vocabulary over `texts`: specials, concepts, then tokens with
    frequency >= min_freq ordered by (frequency desc, lexicographic)."""
    counts = Counter()
    n_texts = 0
    for text in texts:
        counts.update(tokenize(text))
        n_texts += 1
    if n_texts == 0:
        raise ValidationError("cannot build a vocabulary from an empty corpus")
    reserved = set(SPECIAL_TOKENS) | set(CONCEPT_TOKENS)
    content = sorted(
        (t for t, c in counts.items() if c >= min_freq and t not in reserved),
        key=lambda t: (-counts[t], t),
    )
    return Vocabulary(list(SPECIAL_TOKENS) + list(CONCEPT_TOKENS) + content)


def encode(text, vocab, max_len=64):
    """[CLS] + token ids + [SEP], truncated so [SEP] is always last."""
    if max_len < 3:
        raise ConfigurationError("max_len must be at least 3")
    ids = [CLS_ID]
    for tok in tokenize(text)[: max_len - 2]:
        ids.append(vocab.id_of(tok))
    ids.append(SEP_ID)
    return np.asarray(ids, dtype=np.int64)


def decode(ids, vocab):
    """Space-joined tokens, skipping [CLS]/[SEP]/[PAD]."""
    skip = {PAD_ID, CLS_ID, SEP_ID}
    return " ".join(vocab.token_of(int(i)) for i in ids if int(i) not in skip)


@dataclass
class Batch:
    ids: np.ndarray          # (B, T) int64
    pad_mask: np.ndarray     # (B, T) bool, True = real token
    symptom_labels: np.ndarray | None = None
    gender_labels: np.ndarray | None = None

    @property
    def size(self):
        return self.ids.shape[0]


def make_batch(sequences, pad_to=None, symptom_labels=None, gender_labels=None):
    sequences = list(sequences)
    if not sequences:
        raise ValidationError("cannot batch zero sequences")
    longest = max(len(s) for s in sequences)
    width = pad_to if pad_to is not None else longest
    if longest > width:
        raise ValidationError(f"sequence of length {longest} exceeds pad_to={width}")
    ids = np.full((len(sequences), width), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(sequences), width), dtype=bool)
    for r, seq in enumerate(sequences):
        ids[r, : len(seq)] = seq
        mask[r, : len(seq)] = True
    return Batch(
        ids=ids,
        pad_mask=mask,
        symptom_labels=None if symptom_labels is None else np.asarray(symptom_labels),
        gender_labels=None if gender_labels is None else np.asarray(gender_labels),
    )


def unbatch(batch):
    return [batch.ids[r][batch.pad_mask[r]].copy() for r in range(batch.size)]


@dataclass
class PairedBatch:
    """Symptom-view and gender-view batches padded to one shared width."""

    symptom: Batch
    gender: Batch

    @property
    def size(self):
        return self.symptom.size


def make_paired_batch(symptom_seqs, gender_seqs, symptom_labels=None, gender_labels=None):
    symptom_seqs = list(symptom_seqs)
    gender_seqs = list(gender_seqs)
    if len(symptom_seqs) != len(gender_seqs):
        raise ValidationError("paired views must have equal batch sizes")
    width = max(
        max(len(s) for s in symptom_seqs), max(len(s) for s in gender_seqs)
    )
    return PairedBatch(
        symptom=make_batch(symptom_seqs, pad_to=width, symptom_labels=symptom_labels),
        gender=make_batch(gender_seqs, pad_to=width, gender_labels=gender_labels),
    )


@dataclass
class PairDataset:
    """Pre-encoded masked views for a list of items, ready to batch."""

    s_seqs: list
    g_seqs: list
    symptom_ids: np.ndarray | None
    gender_ids: np.ndarray | None
    item_ids: tuple

    def __len__(self):
        return len(self.s_seqs)

    def batch(self, indices):
        idx = list(indices)
        return make_paired_batch(
            [self.s_seqs[i] for i in idx],
            [self.g_seqs[i] for i in idx],
            symptom_labels=None if self.symptom_ids is None else self.symptom_ids[idx],
            gender_labels=None if self.gender_ids is None else self.gender_ids[idx],
        )


def make_pair_dataset(items, vocab, slex, glex, max_len=64, require_labels=True):
    """Build both masked views for every item and encode them.

    Either lexicon may be None to feed that encoder the raw text. Label id
    vectors are included when every item carries that label; with
    require_labels=True at least one label family must be complete.
    """
    from .corpus import GENDERS, SYMPTOMS  # local to avoid heavier import at module load
    from .knowledge import build_views

    items = list(items)
    if not items:
        raise ValidationError("cannot build a dataset from zero items")
    s_seqs, g_seqs = [], []
    for it in items:
        views = build_views(it.item.text, slex, glex)
        s_seqs.append(encode(views.symptom_view, vocab, max_len))
        g_seqs.append(encode(views.gender_view, vocab, max_len))
    symptom_ids = None
    if all(it.symptom is not None for it in items):
        symptom_ids = np.array([SYMPTOMS.index(it.symptom) for it in items])
    gender_ids = None
    if all(it.gender is not None for it in items):
        gender_ids = np.array([GENDERS.index(it.gender) for it in items])
    if require_labels and symptom_ids is None and gender_ids is None:
        raise ValidationError("no complete label family present in the items")
    return PairDataset(
        s_seqs=s_seqs,
        g_seqs=g_seqs,
        symptom_ids=symptom_ids,
        gender_ids=gender_ids,
        item_ids=tuple(it.item.id for it in items),
    )
