"""Corpus data model, deterministic synthetic generation, filters, splits.

The generator is a stand-in for a crawled corpus: every item plants a
cardiovascular term (so it survives the relevance filter), a symptom cue
phrase and gendered words drawn from the bundled lexicons, plus filler noise.
In interaction mode the symptom label is a function of the *pair*
(symptom-cue pool, subject gender): cue pools are rotated one class forward
for women, so no model can recover the symptom label without also resolving
the gender signal. Masking collapses each cue pool to one concept token,
which is what gives the knowledge-assisted configurations their edge over
raw-text training on this corpus.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, StratificationError, ValidationError
from .knowledge import load_bundled_lexicon

SYMPTOMS = ("depression", "anxiety", "bipolar", "ptsd")
GENDERS = ("man", "woman")
KINDS = ("post", "comment")
PROVENANCES = ("channel_label", "weak_labeler", "synthetic")

CORPUS_FORMAT = "gem-corpus"
CORPUS_VERSION = 1
_FIELD_ORDER = (
    "id", "author_id", "kind", "source", "text", "upvotes", "created_at",
    "symptom", "gender", "provenance",
)


@dataclass(frozen=True)
class RawItem:
    id: str
    author_id: str
    kind: str
    source: str
    text: str
    upvotes: int
    created_at: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown kind {self.kind!r}")
        if not self.text.strip():
            raise ValidationError(f"item {self.id}: empty text")
        if self.upvotes < 0:
            raise ValidationError(f"item {self.id}: negative upvotes")


@dataclass(frozen=True)
class LabeledItem:
    item: RawItem
    symptom: str | None = None
    gender: str | None = None
    provenance: str | None = None

    def __post_init__(self):
        if self.symptom is not None and self.symptom not in SYMPTOMS:
            raise ValidationError(f"unknown symptom label {self.symptom!r}")
        if self.gender is not None and self.gender not in GENDERS:
            raise ValidationError(f"unknown gender label {self.gender!r}")
        if self.provenance is not None and self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        if self.provenance == "channel_label" and self.symptom is None:
            raise ValidationError("channel_label items must carry a symptom label")
        if self.provenance == "weak_labeler" and self.gender is None:
            raise ValidationError("weak_labeler items must carry a gender label")
        if self.provenance == "synthetic" and (
            self.symptom is None or self.gender is None
        ):
            raise ValidationError("synthetic items must carry both labels")


def _uniform(names):
    return {n: 1.0 / len(names) for n in names}


@dataclass
class GeneratorSpec:
    n_items: int
    symptom_balance: dict = field(default_factory=lambda: _uniform(SYMPTOMS))
    gender_balance: dict = field(default_factory=lambda: _uniform(GENDERS))
    cue_density: float = 1.0
    interaction_mode: bool = False
    noise_vocab_size: int = 120
    seed: int = 0

    def validate(self):
        if self.n_items <= 0:
            raise ConfigurationError("n_items must be positive")
        for name, balance, labels in (
            ("symptom_balance", self.symptom_balance, SYMPTOMS),
            ("gender_balance", self.gender_balance, GENDERS),
        ):
            if set(balance) != set(labels):
                raise ConfigurationError(f"{name} must cover exactly {labels}")
            if any(v < 0 for v in balance.values()):
                raise ConfigurationError(f"{name} fractions must be non-negative")
            if abs(sum(balance.values()) - 1.0) > 1e-9:
                raise ConfigurationError(f"{name} fractions must sum to 1")
        if not 0.0 <= self.cue_density <= 1.0:
            raise ConfigurationError("cue_density must be in [0, 1]")
        if self.noise_vocab_size < 5:
            raise ConfigurationError("noise_vocab_size must be at least 5")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")


@dataclass
class CorpusSplit:
    train: tuple
    dev: tuple
    test: tuple
    ratios: tuple

    def parts(self):
        return {"train": self.train, "dev": self.dev, "test": self.test}


# ---- synthetic generation -------------------------------------------------

# Subject-position nouns per gender; all of them are gender-lexicon surfaces.
SUBJECT_WORDS = {
    "woman": (
        "wife", "mother", "mom", "sister", "daughter", "grandma", "grandmother",
        "aunt", "girlfriend", "niece", "stepmom", "mother in law", "daughter in law",
    ),
    "man": (
        "husband", "father", "dad", "brother", "son", "grandpa", "grandfather",
        "uncle", "boyfriend", "nephew", "stepdad", "father in law", "son in law",
    ),
}
NEUTRAL_SUBJECTS = ("friend", "neighbor", "coworker", "cousin", "roommate", "partner")
PRONOUNS = {"woman": "she", "man": "he"}

_GLUE = (
    "the", "a", "my", "our", "this", "that", "was", "is", "been", "with",
    "without", "since", "after", "before", "about", "again", "also", "really",
    "quite", "still", "then", "now", "today", "yesterday", "week", "month",
    "daily", "clinic", "visit", "appointment", "nurse", "team", "care", "plan",
    "notes", "update", "routine", "checkup", "said", "told", "asked",
    "mentioned", "thinks", "seems", "started", "stopped", "trying", "manage",
    "cope", "rest", "walk", "walking", "water", "coffee", "work", "home",
)

_SUBJECT_VERBS = (
    "keeps having", "has been having", "is dealing with", "keeps mentioning",
    "has", "kept describing", "talked about", "struggles with",
)


def _rot(symptom, gender):
    """Interaction rule: women's cue pools are rotated one class forward."""
    if gender == "man":
        return symptom
    return SYMPTOMS[(SYMPTOMS.index(symptom) + 1) % len(SYMPTOMS)]


def _unrot(symptom, gender):
    if gender == "man":
        return symptom
    return SYMPTOMS[(SYMPTOMS.index(symptom) - 1) % len(SYMPTOMS)]


def largest_remainder(n, fractions):
    """Integer allocation of n by fractions; deviates < 1 from n*f per cell."""
    base = [int(np.floor(n * f)) for f in fractions]
    rem = n - sum(base)
    fracs = sorted(
        range(len(fractions)),
        key=lambda i: (-(n * fractions[i] - base[i]), i),
    )
    for i in fracs[:rem]:
        base[i] += 1
    return base


def plan_labels(spec):
    """The generator's label stream: exact-quota (symptom, gender) pairs,
    shuffled deterministically. Exposed so tests can count it directly."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    sy_counts = largest_remainder(
        spec.n_items, [spec.symptom_balance[s] for s in SYMPTOMS]
    )
    labels = []
    for s, n_s in zip(SYMPTOMS, sy_counts):
        g_counts = largest_remainder(n_s, [spec.gender_balance[g] for g in GENDERS])
        for g, n_g in zip(GENDERS, g_counts):
            labels.extend([(s, g)] * n_g)
    order = rng.permutation(len(labels))
    return [labels[i] for i in order]


def _sentence_tokens(words):
    return list(words) + ["."]


def generate_synthetic_corpus(spec):
    """Deterministic synthetic corpus; see the module docstring for the task
    structure. Returns LabeledItems with provenance 'synthetic'."""
    spec.validate()
    labels = plan_labels(spec)
    rng = np.random.default_rng([spec.seed, 1])

    slex = load_bundled_lexicon("symptom")
    cvd_lex = load_bundled_lexicon("cvd")
    pools = {c: [] for c in SYMPTOMS}
    for e in slex.entries:
        pools[e.concept[1:-1]].append(e.surface)
    # cue surfaces follow a Zipf-like law: a handful of common phrasings and a
    # long tail of rare ones, as in real symptom talk; raw-text models only
    # ever see the tail a few times, masked views collapse it to one token
    pool_weights = {}
    for c, pool in pools.items():
        w = np.empty(len(pool))
        n_head = max(1, len(pool) // 7)
        w[:n_head] = 0.88 / n_head
        w[n_head:] = 0.12 / max(1, len(pool) - n_head)
        pool_weights[c] = w / w.sum()
    cvd_terms = [e.surface for e in cvd_lex.entries]
    noise = [f"w{k:03d}" for k in range(spec.noise_vocab_size)]
    n_authors = max(20, spec.n_items // 3)

    items = []
    for i, (symptom, gender) in enumerate(labels):
        has_symptom_cue = rng.random() < spec.cue_density
        has_gender_cue = rng.random() < spec.cue_density

        pool_class = _unrot(symptom, gender) if spec.interaction_mode else symptom
        phrase = pools[pool_class][int(rng.choice(len(pools[pool_class]), p=pool_weights[pool_class]))]
        if has_gender_cue:
            subj_pool = SUBJECT_WORDS[gender]
            subject = subj_pool[int(rng.integers(0, len(subj_pool)))]
        else:
            subject = NEUTRAL_SUBJECTS[int(rng.integers(0, len(NEUTRAL_SUBJECTS)))]

        verb = _SUBJECT_VERBS[int(rng.integers(0, len(_SUBJECT_VERBS)))]
        tail = list(rng.choice(_GLUE, size=int(rng.integers(0, 3))))
        if has_symptom_cue:
            core = f"my {subject} {verb} {phrase}".split() + tail
        else:
            core = f"my {subject} {verb}".split() + list(rng.choice(_GLUE, size=2)) + tail
        sentences = [_sentence_tokens(core)]

        cvd_term = cvd_terms[int(rng.integers(0, len(cvd_terms)))]
        lead = list(rng.choice(_GLUE, size=2))
        sentences.append(_sentence_tokens(lead + f"the {cvd_term}".split() + ["was", "discussed"]))

        if has_gender_cue and (spec.interaction_mode or rng.random() < 0.5):
            pron = PRONOUNS[gender]
            if spec.interaction_mode:
                # short fixed echo: keeps the informative span within a
                # 30-token truncation window and gives the symptom view a
                # low-variety gendered token (she/he stay raw there)
                sentences.append(_sentence_tokens([pron, "was", "there"]))
            else:
                extra = list(rng.choice(_GLUE, size=2))
                sentences.append(_sentence_tokens([pron, "was", "at", "the"] + extra))

        # informative sentences are permuted among themselves but stay at the
        # front so head-truncating encoders still see every cue
        order = rng.permutation(len(sentences))
        tokens = [t for j in order for t in sentences[j]]
        tokens.extend(_sentence_tokens(list(rng.choice(noise, size=int(rng.integers(3, 6))))))

        if rng.random() < 0.04:
            tokens.extend(["thanks", f"u/{noise[int(rng.integers(0, len(noise)))]}", "."])
        if rng.random() < 0.04:
            tokens.extend(["see", f"https://example.com/{noise[int(rng.integers(0, len(noise)))]}", "."])

        target_len = int(rng.integers(52, 68))
        while len(tokens) < target_len:
            filler = list(rng.choice(noise, size=int(rng.integers(4, 9))))
            tokens.extend(_sentence_tokens(filler))

        kind = KINDS[int(rng.integers(0, 2))]
        item = RawItem(
            id=f"itm-{i:06d}",
            author_id=f"user-{int(rng.integers(0, n_authors)):05d}",
            kind=kind,
            source=f"r/{symptom}",
            text=" ".join(tokens),
            upvotes=int(rng.integers(0, 120)),
            created_at=1_600_000_000 + i * 60,
        )
        items.append(
            LabeledItem(item=item, symptom=symptom, gender=gender, provenance="synthetic")
        )
    return items


# ---- filtering ------------------------------------------------------------


def _raw(entry):
    return entry.item if isinstance(entry, LabeledItem) else entry


def filter_cvd(items, lexicon):
    """Keep items whose text matches at least one lexicon surface."""
    if lexicon.category != "cvd":
        raise ConfigurationError("filter_cvd requires a cvd-category lexicon")
    if len(lexicon) == 0:
        raise ConfigurationError("cannot filter with an empty lexicon")
    return [it for it in items if lexicon._pattern.search(_raw(it).text)]


def quality_filter(items, min_upvotes=10, min_tokens=50, per_kind_min_upvotes=None):
    """Keep items with upvotes strictly greater than min_upvotes and at least
    min_tokens whitespace tokens. per_kind_min_upvotes optionally overrides
    the upvote threshold for 'post' or 'comment'."""
    if min_upvotes < 0 or min_tokens < 0:
        raise ConfigurationError("thresholds must be non-negative")
    per_kind = per_kind_min_upvotes or {}
    out = []
    for it in items:
        raw = _raw(it)
        threshold = per_kind.get(raw.kind, min_upvotes)
        if raw.upvotes > threshold and len(raw.text.split()) >= min_tokens:
            out.append(it)
    return out


_URL_RE = re.compile(r"\b(?:https?://|www\.)\S+", re.IGNORECASE)
_USER_RE = re.compile(r"(?:\b/?u/[0-9A-Za-z_-]+|(?<![0-9A-Za-z_])@[0-9A-Za-z_]+)")


def anonymize(text):
    """Replace URLs with <url> and user mentions (u/name, @name) with <user>."""
    text = _URL_RE.sub("<url>", text)
    return _USER_RE.sub("<user>", text)


def anonymize_items(items):
    out = []
    for it in items:
        raw = _raw(it)
        clean = anonymize(raw.text)
        if clean == raw.text:
            out.append(it)
            continue
        new_raw = replace(raw, text=clean)
        if isinstance(it, LabeledItem):
            out.append(replace(it, item=new_raw))
        else:
            out.append(new_raw)
    return out


# ---- splitting --------------------------------------------------------------


def _stratum_key(entry, families):
    key = []
    for fam in families:
        if isinstance(entry, LabeledItem):
            key.append(getattr(entry, fam))
        else:
            key.append(None)
    return tuple(key)


def split(items, ratios=(0.75, 0.05, 0.20), seed=0, stratify_by=("symptom", "gender")):
    """Deterministic stratified split; strata are the cross-product of the
    requested label families (items missing a label fall in a None stratum)."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError("split ratios must sum to 1")
    if len(ratios) != 3:
        raise ConfigurationError("expected exactly three ratios (train, dev, test)")
    if isinstance(stratify_by, str):
        stratify_by = (stratify_by,)
    strata = {}
    for it in items:
        strata.setdefault(_stratum_key(it, stratify_by), []).append(it)
    parts = {"train": [], "dev": [], "test": []}
    for idx, key in enumerate(sorted(strata, key=str)):
        members = strata[key]
        if len(members) < 3:
            raise StratificationError(
                f"stratum {key} has only {len(members)} item(s); need at least 3"
            )
        rng = np.random.default_rng([seed, idx])
        order = rng.permutation(len(members))
        shuffled = [members[i] for i in order]
        n_train, n_dev, n_test = largest_remainder(len(members), ratios)
        parts["train"].extend(shuffled[:n_train])
        parts["dev"].extend(shuffled[n_train : n_train + n_dev])
        parts["test"].extend(shuffled[n_train + n_dev :])
    return CorpusSplit(
        train=tuple(parts["train"]),
        dev=tuple(parts["dev"]),
        test=tuple(parts["test"]),
        ratios=tuple(ratios),
    )


# ---- weak labeling -----------------------------------------------------------


def weak_label_gender(labeler, items):
    """Assign gender labels with a trained classifier handle.

    The handle must expose predict_gender(texts) -> list of 'man'/'woman'.
    Output items keep their symptom label and get provenance 'weak_labeler'.
    """
    texts = [_raw(it).text for it in items]
    predicted = labeler.predict_gender(texts)
    if len(predicted) != len(items):
        raise ValidationError("labeler returned the wrong number of labels")
    out = []
    for it, gender in zip(items, predicted):
        raw = _raw(it)
        symptom = it.symptom if isinstance(it, LabeledItem) else None
        out.append(
            LabeledItem(item=raw, symptom=symptom, gender=gender, provenance="weak_labeler")
        )
    return out


# ---- persistence --------------------------------------------------------------


def save_corpus(items, path):
    """Newline-delimited records; first line is the format header."""
    path = Path(path)
    lines = [json.dumps({"format": CORPUS_FORMAT, "version": CORPUS_VERSION})]
    for it in items:
        raw = _raw(it)
        rec = {
            "id": raw.id,
            "author_id": raw.author_id,
            "kind": raw.kind,
            "source": raw.source,
            "text": raw.text,
            "upvotes": raw.upvotes,
            "created_at": raw.created_at,
        }
        if isinstance(it, LabeledItem):
            if it.symptom is not None:
                rec["symptom"] = it.symptom
            if it.gender is not None:
                rec["gender"] = it.gender
            if it.provenance is not None:
                rec["provenance"] = it.provenance
        lines.append(json.dumps(rec, ensure_ascii=False))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_corpus(path):
    path = Path(path)
    items = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        try:
            meta = json.loads(header)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: bad corpus header: {exc}") from exc
        if meta.get("format") != CORPUS_FORMAT:
            raise ValidationError(f"{path}: not a {CORPUS_FORMAT} file")
        if meta.get("version") != CORPUS_VERSION:
            raise ValidationError(f"{path}: unsupported version {meta.get('version')}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: bad record: {exc}") from exc
            unknown = set(rec) - set(_FIELD_ORDER)
            if unknown:
                raise ValidationError(f"{path}:{lineno}: unknown fields {sorted(unknown)}")
            if rec["id"] in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate id {rec['id']!r}")
            seen.add(rec["id"])
            raw = RawItem(
                id=rec["id"],
                author_id=rec["author_id"],
                kind=rec["kind"],
                source=rec["source"],
                text=rec["text"],
                upvotes=int(rec["upvotes"]),
                created_at=int(rec["created_at"]),
            )
            items.append(
                LabeledItem(
                    item=raw,
                    symptom=rec.get("symptom"),
                    gender=rec.get("gender"),
                    provenance=rec.get("provenance"),
                )
            )
    return items
