"""Shared generators and brute-force oracles for the test suite.

The synthetic corpus is deterministic given a seed and perfectly
separable: every borrowing-initial token ends in the sentinel suffix
`zzq`, every continuation token in `qzz`, and every OTHER-borrowing
token in `vvk`, while filler tokens never do.
"""

from __future__ import annotations

import itertools
import random

import numpy as np
import pytest

from borrowings.corpus import Corpus, Headline, LabeledSpan, TagAlphabet, Token
from borrowings.crf import CrfModel, TrainConfig
from borrowings.embeddings import EmbeddingTable
from borrowings.features import FeatureConfig, FeatureIndex

FILLERS = (
    "casa", "mercado", "gobierno", "serie", "nueva", "temporada",
    "empresa", "acuerdo", "festival", "premio", "lanza", "estreno",
    "banca", "papel", "siglo", "verano", "semana", "plataforma",
)
BORROW_STEMS = (
    "strea", "pod", "market", "influ", "rank", "cast", "blog", "trend",
)
OTHER_STEMS = ("premi", "tourn", "atel")
POS_TAGS = ("NOUN", "VERB", "ADJ", "DET", "ADP")
SECTIONS = ("technology", "tv", "music", "economy")


def synthetic_corpus(
    n_headlines: int = 200,
    seed: int = 7,
    with_other: bool = True,
    name: str = "synthetic",
) -> Corpus:
    """Separable sentinel-suffix corpus for learnability tests."""
    rng = random.Random(seed)
    headlines = []
    for i in range(n_headlines):
        words = [rng.choice(FILLERS) for _ in range(rng.randint(4, 9))]
        pos = [rng.choice(POS_TAGS) for _ in words]
        spans: list[tuple[int, int, str]] = []
        if rng.random() < 0.75:
            at = rng.randrange(len(words) + 1)
            stem = rng.choice(BORROW_STEMS)
            if rng.random() < 0.3:
                words[at:at] = [stem + "zzq", rng.choice(BORROW_STEMS) + "qzz"]
                pos[at:at] = ["X", "X"]
                spans.append((at, at + 2, "ENG"))
            else:
                words.insert(at, stem + "zzq")
                pos.insert(at, "X")
                spans.append((at, at + 1, "ENG"))
            if rng.random() < 0.3:
                start, end, _ = spans[-1]
                words.insert(end, "'")
                words.insert(start, "'")
                pos.insert(end, "PUNCT")
                pos.insert(start, "PUNCT")
                spans[-1] = (start + 1, end + 1, "ENG")
        if with_other and rng.random() < 0.15:
            free = [
                j
                for j in range(len(words) + 1)
                if all(j <= s or j >= e for s, e, _ in spans)
            ]
            at = rng.choice(free)
            words.insert(at, rng.choice(OTHER_STEMS) + "vvk")
            pos.insert(at, "X")
            spans = [
                (s + (1 if s >= at else 0), e + (1 if s >= at else 0), lab)
                for s, e, lab in spans
            ]
            spans.append((at, at + 1, "OTHER"))
        if rng.random() < 0.3:
            words[0] = words[0].capitalize()
        tokens = tuple(Token(w, p) for w, p in zip(words, pos))
        headlines.append(
            Headline(
                id=f"syn-{i:04d}",
                tokens=tokens,
                spans=tuple(LabeledSpan(s, e, lab) for s, e, lab in spans),
                section=SECTIONS[i % len(SECTIONS)],
            )
        )
    return Corpus(name, tuple(headlines))


def synthetic_vocabulary(corpus: Corpus) -> list[str]:
    seen: dict[str, None] = {}
    for headline in corpus:
        for token in headline.tokens:
            seen.setdefault(token.text, None)
    return list(seen)


def synthetic_embeddings(corpus: Corpus, dim: int = 4, seed: int = 11) -> EmbeddingTable:
    """Random table covering most of the corpus vocabulary."""
    rng = np.random.default_rng(seed)
    vectors: dict[str, np.ndarray] = {}
    for word in synthetic_vocabulary(corpus):
        if rng.random() < 0.85:
            vec = rng.uniform(-1.0, 1.0, size=dim)
            vec.flags.writeable = False
            vectors[word] = vec
    return EmbeddingTable(name="synthetic-vectors", dim=dim, vectors=vectors)


def write_embeddings_file(table: EmbeddingTable, path) -> None:
    with open(path, "w", encoding="utf-8") as stream:
        stream.write(f"{len(table.vectors)} {table.dim}\n")
        for word, vec in table.vectors.items():
            stream.write(word + " " + " ".join(repr(float(v)) for v in vec) + "\n")


# --- brute-force inference oracles ----------------------------------------

def alphabet_of_size(n_labels: int) -> TagAlphabet:
    tags = ("O", "B-ENG", "I-ENG", "B-OTHER", "I-OTHER")[:n_labels]
    return TagAlphabet(tags)


def enumerate_scores(e, transition, start, end):
    """(sequence, score) for every possible tag sequence."""
    n, n_labels = e.shape
    for path in itertools.product(range(n_labels), repeat=n):
        score = start[path[0]] + end[path[-1]]
        for t, label in enumerate(path):
            score += e[t, label]
        for t in range(1, n):
            score += transition[path[t - 1], path[t]]
        yield path, float(score)


def brute_log_partition(e, transition, start, end) -> float:
    scores = np.array([s for _, s in enumerate_scores(e, transition, start, end)])
    m = scores.max()
    return float(m + np.log(np.exp(scores - m).sum()))


def brute_best_path(e, transition, start, end) -> tuple[tuple[int, ...], float]:
    best_path, best_score = None, -np.inf
    for path, score in enumerate_scores(e, transition, start, end):
        if score > best_score:
            best_path, best_score = path, score
    return best_path, best_score


def dp_best_path_min_index(e, transition, start, end) -> list[int]:
    """Independent Viterbi replica breaking ties toward the lower index."""
    n, n_labels = e.shape
    delta = [start[j] + e[0, j] for j in range(n_labels)]
    back: list[list[int]] = []
    for t in range(1, n):
        new = []
        pointers = []
        for j in range(n_labels):
            best_i, best_v = 0, delta[0] + transition[0, j]
            for i in range(1, n_labels):
                v = delta[i] + transition[i, j]
                if v > best_v:
                    best_i, best_v = i, v
            pointers.append(best_i)
            new.append(best_v + e[t, j])
        back.append(pointers)
        delta = new
    best_j, best_v = 0, delta[0] + end[0]
    for j in range(1, n_labels):
        v = delta[j] + end[j]
        if v > best_v:
            best_j, best_v = j, v
    path = [best_j]
    for pointers in reversed(back):
        path.append(pointers[path[-1]])
    return path[::-1]


def model_from_matrices(e, transition, start, end) -> tuple[CrfModel, list[dict]]:
    """Model whose emissions for the returned attrs equal `e` exactly."""
    n, n_labels = e.shape
    index = FeatureIndex.from_names([f"p{t}" for t in range(n)])
    model = CrfModel(
        alphabet=alphabet_of_size(n_labels),
        index=index,
        state=np.array(e, dtype=float),
        transition=np.array(transition, dtype=float),
        start=np.array(start, dtype=float),
        end=np.array(end, dtype=float),
        feature_config=FeatureConfig(),
        train_config=TrainConfig(),
    )
    attrs = [{f"p{t}": 1.0} for t in range(n)]
    return model, attrs


@pytest.fixture(scope="session")
def small_corpus() -> Corpus:
    return synthetic_corpus(n_headlines=40, seed=3, name="small")


@pytest.fixture(scope="session")
def small_dev_corpus() -> Corpus:
    return synthetic_corpus(n_headlines=20, seed=5, name="small-dev")
