"""Headline corpus model: tokens, labeled spans, the BIO codec, TSV
serialization, and corpus statistics.

A corpus is a list of tokenized headlines.  Each headline may carry
labeled spans marking unassimilated lexical borrowings, either English
(ENG) or from another donor language (OTHER).  Spans are stored as
half-open token intervals and converted to per-token BIO tags only at
serialization and training time.
"""

from __future__ import annotations

import datetime
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .errors import ValidationError
from .rounding import fmt2

LABELS = ("ENG", "OTHER")


@dataclass(frozen=True)
class TagAlphabet:
    """Ordered BIO tag set; tag ids are positions in `tags`."""

    tags: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.tags or self.tags[0] != "O":
            raise ValidationError("tag alphabet must start with O")
        if len(set(self.tags)) != len(self.tags):
            raise ValidationError("tag alphabet contains duplicates")

    def __len__(self) -> int:
        return len(self.tags)

    def __contains__(self, tag: str) -> bool:
        return tag in self.tags

    def index(self, tag: str) -> int:
        try:
            return self.tags.index(tag)
        except ValueError:
            raise ValidationError(f"unknown tag {tag!r}") from None

    def labels(self) -> tuple[str, ...]:
        """Span labels covered by this alphabet, in first-seen order."""
        seen = []
        for tag in self.tags:
            if tag != "O" and tag[2:] not in seen:
                seen.append(tag[2:])
        return tuple(seen)


FULL_ALPHABET = TagAlphabet(("O", "B-ENG", "I-ENG", "B-OTHER", "I-OTHER"))
ENG_ALPHABET = TagAlphabet(("O", "B-ENG", "I-ENG"))


def alphabet_for(ignore_other: bool) -> TagAlphabet:
    """Tag alphabet for a training run; dropping OTHER halves the B/I tags."""
    return ENG_ALPHABET if ignore_other else FULL_ALPHABET


def _check_token_field(value: str, what: str) -> None:
    if not value:
        raise ValidationError(f"{what} must be non-empty")
    if any(ch.isspace() for ch in value):
        raise ValidationError(f"{what} {value!r} contains whitespace")


@dataclass(frozen=True)
class Token:
    """Single token: surface text plus an optional part-of-speech tag."""

    text: str
    pos: str | None = None

    def __post_init__(self) -> None:
        _check_token_field(self.text, "token text")
        if self.pos is not None:
            _check_token_field(self.pos, "pos tag")


@dataclass(frozen=True, order=True)
class LabeledSpan:
    """Half-open token interval [start, end) with a borrowing label."""

    start: int
    end: int
    label: str

    def __post_init__(self) -> None:
        if self.start < 0 or self.end <= self.start:
            raise ValidationError(
                f"span ({self.start}, {self.end}) is empty or negative"
            )
        if self.label not in LABELS:
            raise ValidationError(f"unknown span label {self.label!r}")


def validate_spans(spans: Iterable[LabeledSpan], length: int) -> tuple[LabeledSpan, ...]:
    """Sort spans by start and reject out-of-range or overlapping ones."""
    ordered = tuple(sorted(spans))
    prev = None
    for span in ordered:
        if span.end > length:
            raise ValidationError(
                f"span ({span.start}, {span.end}, {span.label}) exceeds "
                f"headline length {length}"
            )
        if prev is not None and span.start < prev.end:
            raise ValidationError(
                f"span ({span.start}, {span.end}, {span.label}) overlaps "
                f"({prev.start}, {prev.end}, {prev.label})"
            )
        prev = span
    return ordered


@dataclass(frozen=True)
class Headline:
    """One tokenized headline with its labeled spans and metadata.

    `spans` holds gold annotations in an annotated corpus and model
    predictions in a tagger output corpus; the two never share one
    Headline object.
    """

    id: str
    tokens: tuple[Token, ...]
    spans: tuple[LabeledSpan, ...] = ()
    date: datetime.date | None = None
    section: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("headline id must be non-empty")
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValidationError(f"headline {self.id!r} has no tokens")
        ordered = validate_spans(self.spans, len(self.tokens))
        object.__setattr__(self, "spans", ordered)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Corpus:
    """Named collection of headlines with unique ids."""

    name: str = field(compare=False)
    headlines: tuple[Headline, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "headlines", tuple(self.headlines))
        seen = set()
        for headline in self.headlines:
            if headline.id in seen:
                raise ValidationError(f"duplicate headline id {headline.id!r}")
            seen.add(headline.id)

    def __len__(self) -> int:
        return len(self.headlines)

    def __iter__(self) -> Iterator[Headline]:
        return iter(self.headlines)

    def ids(self) -> tuple[str, ...]:
        return tuple(h.id for h in self.headlines)


# Punctuation characters split into their own tokens.  The straight
# apostrophe stays attached only between two alphanumerics; hyphens are
# never split.
_PUNCT = set(".,;:¡!¿?«»“”\"'()[]—…")


def _split_chunk(chunk: str) -> list[str]:
    pieces: list[str] = []
    current: list[str] = []
    for i, ch in enumerate(chunk):
        internal = (
            ch == "'"
            and 0 < i < len(chunk) - 1
            and chunk[i - 1].isalnum()
            and chunk[i + 1].isalnum()
        )
        if ch in _PUNCT and not internal:
            if current:
                pieces.append("".join(current))
                current = []
            pieces.append(ch)
        else:
            current.append(ch)
    if current:
        pieces.append("".join(current))
    return pieces


def tokenize(text: str) -> list[Token]:
    """Split headline text on whitespace, then peel punctuation off chunks."""
    tokens: list[Token] = []
    for chunk in text.split():
        tokens.extend(Token(piece) for piece in _split_chunk(chunk))
    return tokens


def spans_to_bio(spans: Iterable[LabeledSpan], length: int) -> list[str]:
    """Encode labeled spans as one BIO tag per token position."""
    ordered = validate_spans(spans, length)
    tags = ["O"] * length
    for span in ordered:
        tags[span.start] = f"B-{span.label}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{span.label}"
    return tags


def repair_bio(tags: Iterable[str]) -> list[str]:
    """Rewrite I-X tags lacking a compatible predecessor as B-X."""
    repaired: list[str] = []
    prev_label = None
    for tag in tags:
        if tag not in FULL_ALPHABET:
            raise ValidationError(f"unknown tag {tag!r}")
        if tag.startswith("I-") and prev_label != tag[2:]:
            tag = "B-" + tag[2:]
        prev_label = None if tag == "O" else tag[2:]
        repaired.append(tag)
    return repaired


def bio_to_spans(tags: Iterable[str]) -> list[LabeledSpan]:
    """Decode BIO tags into labeled spans, repairing stray I tags first."""
    spans: list[LabeledSpan] = []
    start = None
    label = None
    for i, tag in enumerate(repair_bio(tags)):
        if start is not None and (tag == "O" or tag.startswith("B-")):
            spans.append(LabeledSpan(start, i, label))
            start = None
        if tag.startswith("B-"):
            start = i
            label = tag[2:]
    if start is not None:
        spans.append(LabeledSpan(start, i + 1, label))
    return spans


_META_KEYS = ("id", "date", "section")


class _Block:
    """Mutable accumulator for the headline block being parsed."""

    def __init__(self) -> None:
        self.meta: dict[str, str] = {}
        self.tokens: list[Token] = []
        self.tags: list[str] = []
        self.first_line = 0

    def empty(self) -> bool:
        return not self.meta and not self.tokens


def _fail(lineno: int, message: str) -> None:
    raise ValidationError(f"line {lineno}: {message}")


def _finish_block(block: _Block, lineno: int) -> Headline:
    if "id" not in block.meta:
        _fail(block.first_line, "headline block is missing an id")
    if not block.tokens:
        _fail(block.first_line, "headline block has no token lines")
    date = None
    if "date" in block.meta:
        try:
            date = datetime.date.fromisoformat(block.meta["date"])
        except ValueError:
            _fail(block.first_line, f"bad date {block.meta['date']!r}")
    try:
        spans = bio_to_spans(block.tags)
        return Headline(
            id=block.meta["id"],
            tokens=tuple(block.tokens),
            spans=tuple(spans),
            date=date,
            section=block.meta.get("section"),
        )
    except ValidationError as exc:
        _fail(block.first_line, str(exc))


_META_RE = re.compile(r"#\s*([^=\s]+)\s*=\s*(.*\S)\s*$")


def read_corpus(stream: IO[str], name: str = "corpus") -> Corpus:
    """Parse the tab-separated corpus format into a Corpus.

    Blocks of TOKEN<TAB>POS<TAB>TAG lines are separated by blank lines
    and preceded by `# key = value` metadata comments; `_` marks an
    absent POS tag.  Every format violation raises ValidationError with
    the offending line number.
    """
    headlines: list[Headline] = []
    block = _Block()
    lineno = 0
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            if not block.empty():
                headlines.append(_finish_block(block, lineno))
                block = _Block()
            continue
        if block.empty():
            block.first_line = lineno
        if line.startswith("#"):
            if block.tokens:
                _fail(lineno, "metadata comment after token lines")
            match = _META_RE.match(line)
            if not match:
                _fail(lineno, f"malformed metadata comment {line!r}")
            key, value = match.group(1), match.group(2)
            if key not in _META_KEYS:
                _fail(lineno, f"unknown metadata key {key!r}")
            if key in block.meta:
                _fail(lineno, f"duplicate metadata key {key!r}")
            block.meta[key] = value
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            _fail(lineno, f"expected 3 tab-separated fields, got {len(fields)}")
        text, pos, tag = fields
        if tag not in FULL_ALPHABET:
            _fail(lineno, f"unknown tag {tag!r}")
        try:
            block.tokens.append(Token(text, None if pos == "_" else pos))
        except ValidationError as exc:
            _fail(lineno, str(exc))
        block.tags.append(tag)
    if not block.empty():
        headlines.append(_finish_block(block, lineno + 1))
    return Corpus(name, tuple(headlines))


def write_corpus(corpus: Corpus, stream: IO[str]) -> None:
    """Serialize a corpus in the format accepted by read_corpus."""
    for headline in corpus:
        stream.write(f"# id = {headline.id}\n")
        if headline.date is not None:
            stream.write(f"# date = {headline.date.isoformat()}\n")
        if headline.section is not None:
            stream.write(f"# section = {headline.section}\n")
        tags = spans_to_bio(headline.spans, len(headline))
        for token, tag in zip(headline.tokens, tags):
            pos = token.pos if token.pos is not None else "_"
            stream.write(f"{token.text}\t{pos}\t{tag}\n")
        stream.write("\n")


@dataclass(frozen=True)
class SectionStats:
    """Per-section headline counts and anglicism share."""

    section: str
    headlines: int
    with_anglicisms: int

    @property
    def percent(self) -> float:
        return 100.0 * self.with_anglicisms / self.headlines


@dataclass(frozen=True)
class CorpusStats:
    """Corpus-level counts mirroring the per-section summary table."""

    headlines: int
    tokens: int
    with_anglicisms: int
    eng_spans: int
    other_spans: int
    sections: tuple[SectionStats, ...]


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Count headlines, tokens, spans, and per-section anglicism shares.

    A headline counts as containing anglicisms when it has at least one
    ENG span.  Section rows are sorted by (percentage, name) ascending.
    """
    tokens = 0
    with_eng = 0
    label_counts: Counter[str] = Counter()
    section_total: Counter[str] = Counter()
    section_eng: Counter[str] = Counter()
    for headline in corpus:
        tokens += len(headline)
        has_eng = any(span.label == "ENG" for span in headline.spans)
        with_eng += has_eng
        for span in headline.spans:
            label_counts[span.label] += 1
        if headline.section is not None:
            section_total[headline.section] += 1
            section_eng[headline.section] += has_eng
    sections = tuple(
        sorted(
            (
                SectionStats(name, section_total[name], section_eng[name])
                for name in section_total
            ),
            key=lambda s: (s.percent, s.section),
        )
    )
    return CorpusStats(
        headlines=len(corpus),
        tokens=tokens,
        with_anglicisms=with_eng,
        eng_spans=label_counts["ENG"],
        other_spans=label_counts["OTHER"],
        sections=sections,
    )


def render_stats(stats: CorpusStats, name: str) -> str:
    """Aligned plain-text rendering of corpus statistics."""
    lines = [
        f"Corpus: {name}",
        f"  headlines             {stats.headlines}",
        f"  tokens                {stats.tokens}",
        f"  with anglicisms       {stats.with_anglicisms}",
        f"  ENG spans             {stats.eng_spans}",
        f"  OTHER spans           {stats.other_spans}",
    ]
    if stats.sections:
        width = max(len(s.section) for s in stats.sections)
        width = max(width, len("section"))
        lines.append("")
        lines.append(
            f"  {'section':<{width}}  headlines  with-anglicisms  percent"
        )
        for s in stats.sections:
            lines.append(
                f"  {s.section:<{width}}  {s.headlines:>9}  "
                f"{s.with_anglicisms:>15}  {fmt2(s.percent):>7}"
            )
    return "\n".join(lines) + "\n"
