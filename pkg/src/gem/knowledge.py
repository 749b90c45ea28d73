"""Lexicon loading and the two-view entity-masking engine.

A lexicon maps surface forms to canonical concept tokens. Masking rewrites a
text twice: once with symptom surfaces collapsed to their concept tokens
(the symptom view) and once with gendered words collapsed to <man>/<woman>
(the gender view). Each view keeps the *other* signal untouched, so each
encoder still sees the raw words of the other task.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError, ValidationError

SYMPTOM_CONCEPTS = ("<depression>", "<anxiety>", "<bipolar>", "<ptsd>")
GENDER_CONCEPTS = ("<man>", "<woman>")
CVD_CONCEPT = "<cvd>"
ANON_TOKENS = ("<url>", "<user>")
CONCEPT_TOKENS = SYMPTOM_CONCEPTS + GENDER_CONCEPTS + (CVD_CONCEPT,) + ANON_TOKENS

CATEGORIES = ("cvd", "symptom", "gender")
_ALLOWED_CONCEPTS = {
    "cvd": {CVD_CONCEPT},
    "symptom": set(SYMPTOM_CONCEPTS),
    "gender": set(GENDER_CONCEPTS),
}

_WORD = "0-9A-Za-z_"
_LBOUND = f"(?<![{_WORD}])"
_RBOUND = f"(?![{_WORD}])"

# Regions already holding a concept token are never re-matched; this is what
# makes every masking operation idempotent.
_PROTECTED_RE = re.compile("|".join(re.escape(t) for t in CONCEPT_TOKENS))

# Age-gender shorthand: "29f", "f29", "[29F]" -> the letter is the span, the
# digits stay in place so age survives masking. Two or three digits only, so
# dosage-style strings ("5m") are left alone.
_SHORTHAND_RE = re.compile(
    f"{_LBOUND}(?:[0-9]{{2,3}}(?P<after>[fm])|(?P<before>[fm])[0-9]{{2,3}}){_RBOUND}",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class LexiconEntry:
    surface: str
    concept: str
    category: str


@dataclass
class Lexicon:
    """Validated surface->concept table for one category.

    Matching policy is fixed: case-insensitive, word-boundary, leftmost-longest
    non-overlapping. Multi-word surfaces match across single spaces only.
    """

    entries: tuple[LexiconEntry, ...]
    category: str

    def __len__(self):
        return len(self.entries)

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValidationError(f"unknown lexicon category {self.category!r}")
        seen = set()
        for e in self.entries:
            if e.surface in seen:
                raise ValidationError(
                    f"duplicate surface {e.surface!r} in category {self.category!r}"
                )
            seen.add(e.surface)
        surfaces = sorted((e.surface for e in self.entries), key=len, reverse=True)
        if surfaces:
            alt = "|".join(re.escape(s) for s in surfaces)
            self._pattern = re.compile(f"{_LBOUND}(?:{alt}){_RBOUND}", re.IGNORECASE)
        else:
            self._pattern = None
        self._concept_by_surface = {e.surface: e.concept for e in self.entries}


def load_lexicon(path, category):
    """Load and validate a tab-separated lexicon file for one category.

    Format: `surface<TAB>concept<TAB>category`, UTF-8, `#` starts a comment.
    Surfaces are lower-cased at load.
    """
    path = Path(path)
    seen = {}
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValidationError(
                    f"{path}:{lineno}: expected 3 tab-separated columns, got {len(parts)}"
                )
            surface, concept, cat = (p.strip() for p in parts)
            if cat != category:
                continue
            surface = surface.lower()
            if not surface:
                raise ValidationError(f"{path}:{lineno}: empty surface")
            if not 1 <= len(surface.split()) <= 6:
                raise ValidationError(
                    f"{path}:{lineno}: surface must be 1..6 words: {surface!r}"
                )
            if concept not in _ALLOWED_CONCEPTS[category]:
                raise ValidationError(
                    f"{path}:{lineno}: concept {concept!r} not allowed for "
                    f"category {category!r}"
                )
            if surface in CONCEPT_TOKENS:
                raise ValidationError(
                    f"{path}:{lineno}: surface may not equal a concept token"
                )
            if surface in seen:
                raise ValidationError(
                    f"{path}: duplicate surface {surface!r} in category {category!r} "
                    f"on lines {seen[surface]} and {lineno}"
                )
            seen[surface] = lineno
            entries.append(LexiconEntry(surface, concept, category))
    return Lexicon(entries=tuple(entries), category=category)


def bundled_lexicon_path(category):
    if category not in CATEGORIES:
        raise ValidationError(f"unknown lexicon category {category!r}")
    name = {"cvd": "cvd.tsv", "symptom": "symptoms.tsv", "gender": "gender.tsv"}
    return Path(__file__).parent / "data" / name[category]


def load_bundled_lexicon(category):
    return load_lexicon(bundled_lexicon_path(category), category)


def _protected_zones(text):
    return [(m.start(), m.end()) for m in _PROTECTED_RE.finditer(text)]


def _overlaps_any(start, end, zones):
    for zs, ze in zones:
        if start < ze and zs < end:
            return True
    return False


def find_matches(text, lexicon):
    """All leftmost-longest non-overlapping lexicon matches in `text`.

    Returns (start, end, concept) triples over the original string, sorted by
    start. Spans inside existing concept tokens are skipped.
    """
    if lexicon._pattern is None:
        raise ConfigurationError("cannot match against an empty lexicon")
    zones = _protected_zones(text)
    out = []
    pos = 0
    n = len(text)
    while pos <= n:
        m = lexicon._pattern.search(text, pos)
        if m is None:
            break
        if _overlaps_any(m.start(), m.end(), zones):
            pos = m.start() + 1
            continue
        concept = lexicon._concept_by_surface[m.group(0).lower()]
        out.append((m.start(), m.end(), concept))
        pos = m.end()
    return out


def _shorthand_spans(text):
    """Gender spans for digit-adjacent shorthand; the span covers the letter only."""
    spans = []
    for m in _SHORTHAND_RE.finditer(text):
        letter = m.group("after") or m.group("before")
        grp = "after" if m.group("after") else "before"
        start, end = m.span(grp)
        concept = "<woman>" if letter.lower() == "f" else "<man>"
        spans.append((start, end, concept))
    zones = _protected_zones(text)
    return [s for s in spans if not _overlaps_any(s[0], s[1], zones)]


def merge_spans(*span_lists):
    """Resolve overlaps across span lists: leftmost-longest wins."""
    candidates = sorted(
        (s for lst in span_lists for s in lst), key=lambda s: (s[0], -(s[1] - s[0]))
    )
    out = []
    last_end = -1
    for s in candidates:
        if s[0] >= last_end:
            out.append(s)
            last_end = s[1]
    return out


def replace_spans(text, spans):
    """Substitute each (start, end, concept) span; spans must be sorted, disjoint."""
    parts = []
    cursor = 0
    for start, end, concept in spans:
        parts.append(text[cursor:start])
        parts.append(concept)
        cursor = end
    parts.append(text[cursor:])
    return "".join(parts)


def symptom_spans(text, symptom_lexicon):
    if symptom_lexicon.category != "symptom":
        raise ConfigurationError("symptom masking requires a symptom-category lexicon")
    return find_matches(text, symptom_lexicon)


def gender_spans(text, gender_lexicon):
    """Lexicon matches plus age-gender shorthand, overlap-resolved."""
    if gender_lexicon.category != "gender":
        raise ConfigurationError("gender masking requires a gender-category lexicon")
    return merge_spans(find_matches(text, gender_lexicon), _shorthand_spans(text))


def mask_symptoms(text, symptom_lexicon):
    return replace_spans(text, symptom_spans(text, symptom_lexicon))


def mask_gender(text, gender_lexicon):
    return replace_spans(text, gender_spans(text, gender_lexicon))


@dataclass(frozen=True)
class MaskedViews:
    """The two masked renderings of one text plus the spans that produced them."""

    original: str
    symptom_view: str
    gender_view: str
    symptom_spans: tuple
    gender_spans: tuple


def build_views(text, symptom_lexicon, gender_lexicon):
    """Produce both encoder inputs for one text.

    Either lexicon may be None, in which case that view is the raw text (used
    by the no-masking ablation).
    """
    if symptom_lexicon is not None:
        s_spans = tuple(symptom_spans(text, symptom_lexicon))
    else:
        s_spans = ()
    if gender_lexicon is not None:
        g_spans = tuple(gender_spans(text, gender_lexicon))
    else:
        g_spans = ()
    return MaskedViews(
        original=text,
        symptom_view=replace_spans(text, s_spans),
        gender_view=replace_spans(text, g_spans),
        symptom_spans=s_spans,
        gender_spans=g_spans,
    )
