"""Sentence templates: rendering, seeded selection, and the inverse parser.

Five fixed sentence patterns share four slots (quantity, change type,
category, location). Slot words come from closed vocabularies, which is
what makes the grammar invertible: every rendered sentence parses back to
its slot values and template id.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

from .core_types import Direction, Quantity, SemanticQuadruple, TextDescription
from .errors import ParseFailure

TEMPLATE_IDS = (1, 2, 3, 4, 5)
FIXED_TEMPLATE_ID = 0

# Fixed sentences outside the slot grammar: an empty quadruple list renders
# the first; rendering with no attributes selected renders the second.
SENTENCE_NO_CHANGE = "The scene shows no change."
SENTENCE_UNATTRIBUTED = "The scene shows changes."

DEFAULT_CATEGORIES = ("buildings", "building", "refugee camp", "agricultural land", "greenhouse")
DEFAULT_CHANGE_TYPES = ("destroyed", "newly built", "newly established")

_QUANTITY_WORDS = tuple(q.value for q in Quantity)
# Compound words first so "northeast" never half-matches as "north".
_DIRECTION_WORDS = ("northeast", "northwest", "southeast", "southwest",
                    "north", "south", "east", "west", "center")

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Vocabulary:
    """Closed word lists for the category and change-type slots."""

    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    change_types: tuple[str, ...] = DEFAULT_CHANGE_TYPES

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "change_types", tuple(self.change_types))
        if not self.categories or not self.change_types:
            raise ValueError("vocabularies must be non-empty")


DEFAULT_VOCABULARY = Vocabulary()


@dataclass(frozen=True)
class AttributeSelection:
    """Which slots to render; at least one must stay enabled."""

    use_quantity: bool = True
    use_type: bool = True
    use_category: bool = True
    use_location: bool = True

    def __post_init__(self):
        if not (self.use_quantity or self.use_type or self.use_category or self.use_location):
            raise ValueError("at least one attribute must be selected")

    @classmethod
    def from_names(cls, names) -> "AttributeSelection":
        known = {"quantity", "type", "category", "location"}
        chosen = set(names)
        unknown = chosen - known
        if unknown:
            raise ValueError(f"unknown attribute names: {sorted(unknown)}")
        return cls(
            use_quantity="quantity" in chosen,
            use_type="type" in chosen,
            use_category="category" in chosen,
            use_location="location" in chosen,
        )

    def names(self) -> list[str]:
        pairs = (("quantity", self.use_quantity), ("type", self.use_type),
                 ("category", self.use_category), ("location", self.use_location))
        return [name for name, used in pairs if used]


ALL_ATTRIBUTES = AttributeSelection()


def _verb(quantity_word: str | None) -> str:
    # "a single" is the only singular quantity; a dropped quantity defaults
    # to plural agreement.
    return "is" if quantity_word == Quantity.SINGLE.value else "are"


def render(
    quadruple: SemanticQuadruple,
    template_id: int,
    attrs: AttributeSelection = ALL_ATTRIBUTES,
    rng_seed_used: int = 0,
) -> TextDescription:
    """Fill one template with the quadruple's enabled attributes.

    Omitted attributes take their adjacent filler words with them, so every
    subset renders a well-formed sentence of the same grammar. Sentences
    are emitted verbatim from the pattern (template 3 starts lowercase,
    template 5 carries no final period, matching the pattern table).
    """
    q = quadruple.quantity.value if attrs.use_quantity else None
    t = quadruple.change_type if attrs.use_type else None
    c = quadruple.category if attrs.use_category else None
    loc = quadruple.location.value if attrs.use_location else None
    subject = [word for word in (q, t, c) if word is not None]

    if template_id == 1:
        # For loc == "center" this coincides with the neutral center wording.
        chunks = ["The scene shows", *subject]
        if loc:
            chunks.append(f"in the {loc}")
        sentence = " ".join(chunks) + "."
    elif template_id == 2:
        chunks = ["Observing", *subject]
        if loc:
            chunks.append(f"towards the {loc}")
        sentence = " ".join(chunks) + "."
    elif template_id == 3:
        chunks = list(subject)
        if loc:
            chunks.append(f"located in the {loc}")
        sentence = " ".join(chunks) + "."
    elif template_id == 4:
        chunks = [f"In the {loc},"] if loc else []
        chunks.extend(subject)
        chunks.append(f"{_verb(q)} visible")
        sentence = " ".join(chunks) + "."
    elif template_id == 5:
        chunks = ["There", _verb(q), *subject]
        if loc:
            chunks.append(f"in the {loc} region")
        sentence = " ".join(chunks)
    else:
        raise ValueError(f"template_id must be in 1..5, got {template_id}")

    return TextDescription(sentence=sentence, template_id=template_id,
                           quadruple=quadruple, rng_seed_used=rng_seed_used)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def select_template(seed: int, image_id: str, class_index: int) -> int:
    """Deterministic template draw for one (image, class) pair.

    The inputs are xor-folded and pushed through a splitmix64 finalizer, so
    the draw is reproducible across platforms and languages while staying
    uniform over the five templates.
    """
    mixed = _splitmix64((seed ^ _fnv1a64(image_id) ^ class_index) & _MASK64)
    return 1 + mixed % 5


@dataclass(frozen=True)
class ParsedDescription:
    """Slot values recovered from a sentence; absent slots are None."""

    template_id: int
    quantity: Quantity | None = None
    change_type: str | None = None
    category: str | None = None
    location: Direction | None = None
    kind: str = "templated"  # templated | no_change | unattributed


def _alt(words) -> str:
    # Longest alternative first = greedy multi-word matching.
    return "|".join(re.escape(w) for w in sorted(words, key=len, reverse=True))


@lru_cache(maxsize=1)
def _patterns() -> dict[int, re.Pattern]:
    loc = f"(?P<l>{_alt(_DIRECTION_WORDS)})"
    subj = r"(?P<subj>.*?)"
    return {
        1: re.compile(rf"^The scene shows{subj}(?: in the {loc})?\.$"),
        2: re.compile(rf"^Observing{subj}(?: towards the {loc})?\.$"),
        3: re.compile(rf"^{subj}(?: ?located in the {loc})?\.$"),
        4: re.compile(rf"^(?:In the {loc}, )?{subj} ?(?P<verb>is|are) visible\.$"),
        5: re.compile(rf"^There (?P<verb>is|are){subj}(?: in the {loc} region)?$"),
    }


def _parse_subject(text: str, vocabulary: Vocabulary):
    """Split '[quantity] [type] [category]' greedily; every part optional."""
    q = t = c = None
    rest = text.strip()
    for word in sorted(_QUANTITY_WORDS, key=len, reverse=True):
        if rest == word or rest.startswith(word + " "):
            q, rest = word, rest[len(word):].lstrip()
            break
    for word in sorted(vocabulary.change_types, key=len, reverse=True):
        if rest == word or rest.startswith(word + " "):
            t, rest = word, rest[len(word):].lstrip()
            break
    for word in sorted(vocabulary.categories, key=len, reverse=True):
        if rest == word:
            c, rest = word, ""
            break
    if rest:
        return None
    return q, t, c


def parse_description(sentence: str, vocabulary: Vocabulary = DEFAULT_VOCABULARY) -> ParsedDescription:
    """Invert :func:`render`: recover slot values and the template id.

    Raises ParseFailure (with a best-effort character position) when the
    sentence matches no template over the given vocabularies.
    """
    if sentence == SENTENCE_NO_CHANGE:
        return ParsedDescription(template_id=FIXED_TEMPLATE_ID, kind="no_change")
    if sentence == SENTENCE_UNATTRIBUTED:
        return ParsedDescription(template_id=FIXED_TEMPLATE_ID, kind="unattributed")

    for template_id, pattern in _patterns().items():
        match = pattern.match(sentence)
        if not match:
            continue
        groups = match.groupdict()
        parsed_subject = _parse_subject(groups.get("subj") or "", vocabulary)
        if parsed_subject is None:
            continue
        q, t, c = parsed_subject
        loc = groups.get("l")
        if q is None and t is None and c is None and loc is None:
            continue
        if "verb" in groups and groups["verb"] != _verb(q):
            continue
        return ParsedDescription(
            template_id=template_id,
            quantity=Quantity(q) if q else None,
            change_type=t,
            category=c,
            location=Direction(loc) if loc else None,
        )

    leads = {1: "The scene shows", 2: "Observing", 4: "In the", 5: "There"}
    position = 0
    for lead in leads.values():
        common = 0
        for a, b in zip(sentence, lead):
            if a != b:
                break
            common += 1
        position = max(position, common)
    raise ParseFailure(f"sentence matches no template: {sentence!r}", position=position)


def render_description(
    pairs: list[tuple[int, SemanticQuadruple]],
    image_id: str,
    seed: int,
    attrs: AttributeSelection | None = ALL_ATTRIBUTES,
) -> tuple[str, list[TextDescription]]:
    """Render one sentence per (class_index, quadruple) pair and join them.

    Sentences keep class-table order and are joined with single spaces.
    With no pairs the fixed "no change" sentence is emitted; with
    ``attrs=None`` every pair renders the fixed attribute-free sentence.
    """
    if not pairs:
        text = TextDescription(SENTENCE_NO_CHANGE, FIXED_TEMPLATE_ID, None, seed)
        return SENTENCE_NO_CHANGE, [text]
    texts = []
    for class_index, quadruple in pairs:
        if attrs is None:
            texts.append(TextDescription(SENTENCE_UNATTRIBUTED, FIXED_TEMPLATE_ID, quadruple, seed))
        else:
            template_id = select_template(seed, image_id, class_index)
            texts.append(render(quadruple, template_id, attrs, rng_seed_used=seed))
    return " ".join(t.sentence for t in texts), texts
