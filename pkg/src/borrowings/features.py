"""Token attribute extraction and the windowed feature representation.

An attribute vector is an ordered mapping from attribute name to a
finite value, realized as a dict.  Ten independently switchable
families contribute attributes; a position's final vector is the union
of its neighbors' attributes within a symmetric window, each name
prefixed with the originating offset (`[-2]`, `[-1]`, `[0]`, `[+1]`,
`[+2]`).  Offsets outside the headline contribute a single `[o]BOS` or
`[o]EOS` attribute.  Embedding attributes are emitted at offset 0 only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

from .corpus import Corpus, Headline
from .embeddings import EmbeddingTable
from .errors import ConfigError

AttributeVector = dict[str, float]

FAMILIES = (
    "bias",
    "token",
    "uppercase",
    "titlecase",
    "char_trigram",
    "quotation",
    "suffix3",
    "pos",
    "shape",
    "embedding",
)


@dataclass(frozen=True)
class FeatureConfig:
    """Which attribute families are active, plus window and scaling knobs."""

    bias: bool = True
    token: bool = True
    uppercase: bool = True
    titlecase: bool = True
    char_trigram: bool = True
    quotation: bool = True
    suffix3: bool = True
    pos: bool = True
    shape: bool = True
    embedding: bool = False
    window_radius: int = 2
    embedding_scaling: float = 1.0

    def __post_init__(self) -> None:
        if self.window_radius < 0:
            raise ConfigError("window_radius must be >= 0")
        if not self.embedding_scaling > 0:
            raise ConfigError("embedding_scaling must be positive")
        if not self.enabled_families():
            raise ConfigError("at least one attribute family must be enabled")

    def enabled_families(self) -> tuple[str, ...]:
        return tuple(f for f in FAMILIES if getattr(self, f))

    def without(self, family: str) -> "FeatureConfig":
        """Copy of this config with one family switched off."""
        if family not in FAMILIES:
            raise ConfigError(f"unknown attribute family {family!r}")
        return replace(self, **{family: False})


def word_shape(text: str) -> str:
    """Collapse the token to a character-class sketch.

    Uppercase letters map to X, lowercase to x, digits to d, everything
    else stays verbatim; runs of more than four identical output
    characters are truncated to four.
    """
    out: list[str] = []
    last = ""
    run = 0
    for ch in text:
        if ch.isupper():
            mapped = "X"
        elif ch.islower():
            mapped = "x"
        elif ch.isdigit():
            mapped = "d"
        else:
            mapped = ch
        run = run + 1 if mapped == last else 1
        last = mapped
        if run <= 4:
            out.append(mapped)
    return "".join(out)


def char_trigrams(text: str) -> list[str]:
    """All character trigrams of the token padded with ^ and $."""
    padded = f"^{text}$"
    return [padded[i : i + 3] for i in range(len(padded) - 2)]


# Quote characters that open a quotation region, with their closers.
_QUOTE_PAIRS = {
    "«": "»",  # « »
    "“": "”",  # " "
    "‘": "’",  # ' '
    '"': '"',
    "'": "'",
}
_QUOTE_CHARS = set(_QUOTE_PAIRS) | set(_QUOTE_PAIRS.values())


def quotation_flags(headline: Headline) -> list[bool]:
    """Per-token flags marking tokens strictly inside a quotation.

    An opening quote starts a region closed by its matching closer; an
    unmatched opener extends to the end of the headline.  The quote
    tokens themselves are not flagged.
    """
    flags = [False] * len(headline)
    closer: str | None = None
    for i, token in enumerate(headline.tokens):
        text = token.text
        if closer is not None and text == closer:
            closer = None
            continue
        if closer is None and text in _QUOTE_PAIRS:
            closer = _QUOTE_PAIRS[text]
            continue
        if closer is not None:
            flags[i] = True
    return flags


def quotation_flag(headline: Headline, t: int) -> bool:
    return quotation_flags(headline)[t]


def _is_upper(text: str) -> bool:
    cased = [ch for ch in text if ch.isalpha()]
    return bool(cased) and all(not ch.islower() for ch in cased)


def _is_title(text: str) -> bool:
    if not text[0].isupper():
        return False
    return all(not ch.isupper() for ch in text[1:])


def _extract(
    headline: Headline,
    t: int,
    config: FeatureConfig,
    embeddings: EmbeddingTable | None,
    emit_embedding: bool,
) -> AttributeVector:
    token = headline.tokens[t]
    text = token.text
    attrs: AttributeVector = {}
    if config.bias:
        attrs["bias"] = 1.0
    if config.token:
        attrs[f"w={text}"] = 1.0
    if config.uppercase and _is_upper(text):
        attrs["upper=1"] = 1.0
    if config.titlecase and _is_title(text):
        attrs["title=1"] = 1.0
    if config.char_trigram:
        for gram in char_trigrams(text):
            attrs[f"tri={gram}"] = 1.0
    if config.quotation and quotation_flag(headline, t):
        attrs["quot=1"] = 1.0
    if config.suffix3:
        attrs[f"suf3={text[-3:]}"] = 1.0
    if config.pos and token.pos is not None:
        attrs[f"pos={token.pos}"] = 1.0
    if config.shape:
        attrs[f"shape={word_shape(text)}"] = 1.0
    if config.embedding and emit_embedding:
        if embeddings is None:
            raise ConfigError(
                "embedding family is enabled but no embedding table was given"
            )
        vec = embeddings.lookup(text)
        scale = config.embedding_scaling
        for i, component in enumerate(vec):
            attrs[f"emb{i}"] = float(component) * scale
    return attrs


def extract_token_attributes(
    headline: Headline,
    t: int,
    config: FeatureConfig,
    embeddings: EmbeddingTable | None = None,
) -> AttributeVector:
    """Attribute vector of a single token, before windowing."""
    return _extract(headline, t, config, embeddings, emit_embedding=True)


def _offset_prefix(offset: int) -> str:
    return "[0]" if offset == 0 else f"[{offset:+d}]"


def windowed_attributes(
    headline: Headline,
    config: FeatureConfig,
    embeddings: EmbeddingTable | None = None,
) -> list[AttributeVector]:
    """Window-expanded attribute vectors for every position."""
    n = len(headline)
    radius = config.window_radius
    center = [
        _extract(headline, t, config, embeddings, emit_embedding=True)
        for t in range(n)
    ]
    if config.embedding:
        neighbor = [
            _extract(headline, t, config, embeddings, emit_embedding=False)
            for t in range(n)
        ]
    else:
        neighbor = center
    out: list[AttributeVector] = []
    for t in range(n):
        vec: AttributeVector = {}
        for offset in range(-radius, radius + 1):
            prefix = _offset_prefix(offset)
            j = t + offset
            if j < 0:
                vec[f"{prefix}BOS"] = 1.0
            elif j >= n:
                vec[f"{prefix}EOS"] = 1.0
            else:
                source = center[j] if offset == 0 else neighbor[j]
                for name, value in source.items():
                    vec[f"{prefix}{name}"] = value
        out.append(vec)
    return out


class FeatureIndex:
    """Dense attribute-name-to-id mapping, frozen before training."""

    def __init__(self) -> None:
        self._ids: dict[str, int] = {}
        self._names: list[str] = []
        self._frozen = False

    def __len__(self) -> int:
        return len(self._names)

    @property
    def frozen(self) -> bool:
        return self._frozen

    def add(self, name: str) -> int:
        """Id for `name`, assigning the next id on first sight."""
        existing = self._ids.get(name)
        if existing is not None:
            return existing
        if self._frozen:
            raise ConfigError("cannot add attributes to a frozen index")
        self._ids[name] = len(self._names)
        self._names.append(name)
        return self._ids[name]

    def get(self, name: str) -> int | None:
        """Id for `name`, or None if it was never indexed."""
        return self._ids.get(name)

    def name(self, i: int) -> str:
        return self._names[i]

    def names(self) -> tuple[str, ...]:
        return tuple(self._names)

    def freeze(self) -> "FeatureIndex":
        self._frozen = True
        return self

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "FeatureIndex":
        index = cls()
        for name in names:
            index.add(name)
        return index.freeze()


def build_index(
    corpus: Corpus,
    config: FeatureConfig,
    embeddings: EmbeddingTable | None = None,
) -> FeatureIndex:
    """Frozen index over every attribute the corpus produces."""
    index = FeatureIndex()
    for headline in corpus:
        for vec in windowed_attributes(headline, config, embeddings):
            for name in vec:
                index.add(name)
    return index.freeze()
