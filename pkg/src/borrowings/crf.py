"""Linear-chain CRF over windowed token attributes.

Parameters are state weights W (one row per indexed attribute, one
column per tag), tag-pair transition weights T, and explicit start/end
weights S and E.  A tag sequence scores

    S[y_0] + sum_t sum_(a,v) v * W[a, y_t] + sum_t T[y_{t-1}, y_t] + E[y_{n-1}]

and all inference (partition function, marginals, decoding) runs in log
space.  Training minimizes the negative conditional log-likelihood plus
c1*||w||_1 + (c2/2)*||w||_2^2 with the quasi-Newton routines in
`optim`; the L1 term is handled exactly by the orthant-wise variant.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import IO, Callable, Sequence

import numpy as np

from . import optim
from .corpus import (
    Corpus,
    Headline,
    TagAlphabet,
    alphabet_for,
    bio_to_spans,
    spans_to_bio,
)
from .embeddings import EmbeddingTable
from .errors import ConfigError, ValidationError
from .features import AttributeVector, FeatureConfig, FeatureIndex, windowed_attributes

DivergenceError = optim.DivergenceError

_FORMAT_MAGIC = "borrowings-crf"
_FORMAT_VERSION = 1


class ModelFormatError(ValidationError):
    """The model file is not in the expected format."""


class ModelVersionError(ModelFormatError):
    """The model file header announces an unsupported format version."""


class ModelTruncatedError(ModelFormatError):
    """The model file ends before all declared sections are present."""


class ModelDimensionError(ModelFormatError):
    """A section's size disagrees with the declared dimensions."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings for one training run."""

    c1: float = 0.0
    c2: float = 0.0
    delta: float = 1e-3
    period: int = 10
    max_iterations: int = 1000
    lbfgs_memory: int = 6

    def __post_init__(self) -> None:
        if self.c1 < 0 or self.c2 < 0:
            raise ConfigError("c1 and c2 must be >= 0")
        if not self.delta > 0:
            raise ConfigError("delta must be > 0")
        if self.period < 1:
            raise ConfigError("period must be >= 1")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.lbfgs_memory < 1:
            raise ConfigError("lbfgs_memory must be >= 1")


@dataclass(frozen=True)
class TrainDiagnostics:
    """Optimizer outcome attached to a freshly trained model."""

    iterations: int
    converged: bool
    line_search_failed: bool
    final_objective: float
    objective_trace: tuple[float, ...]


@dataclass(eq=False)
class CrfModel:
    """Trained weights plus everything needed to reapply them."""

    alphabet: TagAlphabet
    index: FeatureIndex
    state: np.ndarray  # (K, L)
    transition: np.ndarray  # (L, L)
    start: np.ndarray  # (L,)
    end: np.ndarray  # (L,)
    feature_config: FeatureConfig
    train_config: TrainConfig
    diagnostics: TrainDiagnostics | None = None

    @property
    def n_labels(self) -> int:
        return len(self.alphabet)

    @property
    def n_features(self) -> int:
        return len(self.index)


# --- parameter vector layout -------------------------------------------------

def _pack(
    state: np.ndarray, transition: np.ndarray, start: np.ndarray, end: np.ndarray
) -> np.ndarray:
    return np.concatenate([state.ravel(), transition.ravel(), start, end])


def _unpack(
    weights: np.ndarray, n_features: int, n_labels: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    k, l = n_features, n_labels
    state = weights[: k * l].reshape(k, l)
    transition = weights[k * l : k * l + l * l].reshape(l, l)
    start = weights[k * l + l * l : k * l + l * l + l]
    end = weights[k * l + l * l + l :]
    return state, transition, start, end


def n_parameters(n_features: int, n_labels: int) -> int:
    return n_features * n_labels + n_labels * n_labels + 2 * n_labels


# --- encoded instances -------------------------------------------------------

@dataclass
class EncodedInstance:
    """One headline as (attribute id, value, position) triples.

    `pos` maps each triple to its token position; `gold` holds tag ids
    when the instance is used for training.
    """

    ids: np.ndarray
    vals: np.ndarray
    pos: np.ndarray
    n: int
    gold: np.ndarray | None = None


def _encode_attrs(
    vecs: Sequence[AttributeVector], index: FeatureIndex
) -> EncodedInstance:
    ids: list[int] = []
    vals: list[float] = []
    pos: list[int] = []
    for t, vec in enumerate(vecs):
        for name, value in vec.items():
            i = index.get(name)
            if i is not None:
                ids.append(i)
                vals.append(value)
                pos.append(t)
    return EncodedInstance(
        ids=np.array(ids, dtype=np.int64),
        vals=np.array(vals, dtype=float),
        pos=np.array(pos, dtype=np.int64),
        n=len(vecs),
    )


def _emissions(inst: EncodedInstance, state: np.ndarray) -> np.ndarray:
    e = np.zeros((inst.n, state.shape[1]))
    if inst.ids.size:
        np.add.at(e, inst.pos, inst.vals[:, None] * state[inst.ids])
    return e


# --- log-space inference -----------------------------------------------------

def _logsumexp(a: np.ndarray) -> float:
    m = np.max(a)
    return float(m + np.log(np.sum(np.exp(a - m))))


def _forward(
    e: np.ndarray, transition: np.ndarray, start: np.ndarray, end: np.ndarray
) -> tuple[np.ndarray, float]:
    n, _ = e.shape
    alpha = np.empty_like(e)
    alpha[0] = start + e[0]
    for t in range(1, n):
        scores = alpha[t - 1][:, None] + transition
        m = scores.max(axis=0)
        alpha[t] = e[t] + m + np.log(np.exp(scores - m).sum(axis=0))
    log_z = _logsumexp(alpha[n - 1] + end)
    return alpha, log_z


def _backward(
    e: np.ndarray, transition: np.ndarray, end: np.ndarray
) -> np.ndarray:
    n, _ = e.shape
    beta = np.empty_like(e)
    beta[n - 1] = end
    for t in range(n - 2, -1, -1):
        scores = transition + (e[t + 1] + beta[t + 1])[None, :]
        m = scores.max(axis=1)
        beta[t] = m + np.log(np.exp(scores - m[:, None]).sum(axis=1))
    return beta


def _gold_score(
    inst_e: np.ndarray,
    gold: np.ndarray,
    transition: np.ndarray,
    start: np.ndarray,
    end: np.ndarray,
) -> float:
    n = inst_e.shape[0]
    score = start[gold[0]] + end[gold[n - 1]]
    score += inst_e[np.arange(n), gold].sum()
    score += transition[gold[:-1], gold[1:]].sum()
    return float(score)


def _viterbi_ids(
    e: np.ndarray, transition: np.ndarray, start: np.ndarray, end: np.ndarray
) -> np.ndarray:
    n, n_labels = e.shape
    delta = start + e[0]
    backpointers = np.empty((n, n_labels), dtype=np.int64)
    for t in range(1, n):
        scores = delta[:, None] + transition
        # argmax returns the first (lowest-index) maximizer, which is
        # exactly the documented tie-break.
        best_prev = scores.argmax(axis=0)
        backpointers[t] = best_prev
        delta = scores[best_prev, np.arange(n_labels)] + e[t]
    path = np.empty(n, dtype=np.int64)
    path[n - 1] = int(np.argmax(delta + end))
    for t in range(n - 1, 0, -1):
        path[t - 1] = backpointers[t, path[t]]
    return path


# --- model-level operations --------------------------------------------------

def _model_emissions(model: CrfModel, attrs: Sequence[AttributeVector]) -> np.ndarray:
    if not attrs:
        raise ValidationError("attribute sequence must be non-empty")
    return _emissions(_encode_attrs(attrs, model.index), model.state)


def score_sequence(
    model: CrfModel, attrs: Sequence[AttributeVector], y: Sequence[str]
) -> float:
    """Unnormalized score of tag sequence `y`; unknown attributes add 0."""
    if len(attrs) != len(y):
        raise ValidationError(
            f"{len(attrs)} attribute vectors but {len(y)} tags"
        )
    e = _model_emissions(model, attrs)
    gold = np.array([model.alphabet.index(tag) for tag in y], dtype=np.int64)
    return _gold_score(e, gold, model.transition, model.start, model.end)


def log_partition(model: CrfModel, attrs: Sequence[AttributeVector]) -> float:
    """log of the summed exponentiated scores of all tag sequences."""
    e = _model_emissions(model, attrs)
    _, log_z = _forward(e, model.transition, model.start, model.end)
    return log_z


def viterbi(model: CrfModel, attrs: Sequence[AttributeVector]) -> list[str]:
    """Highest-scoring tag sequence, lower tag index winning ties."""
    e = _model_emissions(model, attrs)
    path = _viterbi_ids(e, model.transition, model.start, model.end)
    return [model.alphabet.tags[i] for i in path]


# --- training objective ------------------------------------------------------

class TrainingSet:
    """Encoded instances plus the parameter layout they train against."""

    def __init__(
        self,
        instances: Sequence[EncodedInstance],
        n_features: int,
        n_labels: int,
    ) -> None:
        if not instances:
            raise ValidationError("training set must contain at least one instance")
        for inst in instances:
            if inst.gold is None:
                raise ValidationError("training instances need gold tags")
        self.instances = list(instances)
        self.n_features = n_features
        self.n_labels = n_labels

    @property
    def n_parameters(self) -> int:
        return n_parameters(self.n_features, self.n_labels)

    def nll_and_gradient(self, weights: np.ndarray, c2: float) -> tuple[float, np.ndarray]:
        """Negative log-likelihood plus (c2/2)||w||^2, with its gradient.

        The gradient is expected feature counts under the model minus
        empirical counts, plus c2*w.  Instances are accumulated in list
        order so results are bit-reproducible.
        """
        if weights.shape != (self.n_parameters,):
            raise ValidationError(
                f"expected {self.n_parameters} weights, got {weights.shape}"
            )
        state, transition, start, end = _unpack(
            weights, self.n_features, self.n_labels
        )
        grad = np.zeros_like(weights)
        g_state, g_transition, g_start, g_end = _unpack(
            grad, self.n_features, self.n_labels
        )
        value = 0.0
        for inst in self.instances:
            value += self._accumulate(
                inst, state, transition, start, end,
                g_state, g_transition, g_start, g_end,
            )
        if c2 > 0:
            value += 0.5 * c2 * float(np.dot(weights, weights))
            grad += c2 * weights
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise DivergenceError("objective diverged to a non-finite value")
        return value, grad

    def _accumulate(
        self,
        inst: EncodedInstance,
        state: np.ndarray,
        transition: np.ndarray,
        start: np.ndarray,
        end: np.ndarray,
        g_state: np.ndarray,
        g_transition: np.ndarray,
        g_start: np.ndarray,
        g_end: np.ndarray,
    ) -> float:
        e = _emissions(inst, state)
        alpha, log_z = _forward(e, transition, start, end)
        beta = _backward(e, transition, end)
        gold = inst.gold
        # Unary marginals with the empirical one-hot already subtracted.
        residual = np.exp(alpha + beta - log_z)
        residual[np.arange(inst.n), gold] -= 1.0
        if inst.ids.size:
            np.add.at(g_state, inst.ids, inst.vals[:, None] * residual[inst.pos])
        if inst.n > 1:
            pair = np.exp(
                alpha[:-1, :, None]
                + transition[None, :, :]
                + (e[1:] + beta[1:])[:, None, :]
                - log_z
            ).sum(axis=0)
            g_transition += pair
            np.subtract.at(g_transition, (gold[:-1], gold[1:]), 1.0)
        g_start += residual[0]
        g_end += residual[inst.n - 1]
        return log_z - _gold_score(e, gold, transition, start, end)


def nll_and_gradient(
    weights: np.ndarray, data: TrainingSet, c2: float
) -> tuple[float, np.ndarray]:
    """Smooth part of the training objective; see TrainingSet.nll_and_gradient."""
    return data.nll_and_gradient(weights, c2)


def encode_training_set(
    corpus: Corpus,
    config: FeatureConfig,
    embeddings: EmbeddingTable | None = None,
    ignore_other: bool = False,
) -> tuple[TrainingSet, FeatureIndex, TagAlphabet]:
    """Extract, index, and encode a corpus for training.

    With ignore_other the OTHER spans are dropped from the gold tags and
    the three-tag alphabet is used.
    """
    alphabet = alphabet_for(ignore_other)
    index = FeatureIndex()
    instances: list[EncodedInstance] = []
    for headline in corpus:
        vecs = windowed_attributes(headline, config, embeddings)
        for vec in vecs:
            for name in vec:
                index.add(name)
        inst = _encode_attrs(vecs, index)
        spans = headline.spans
        if ignore_other:
            spans = tuple(s for s in spans if s.label == "ENG")
        tags = spans_to_bio(spans, len(headline))
        inst.gold = np.array([alphabet.index(t) for t in tags], dtype=np.int64)
        instances.append(inst)
    index.freeze()
    return TrainingSet(instances, len(index), len(alphabet)), index, alphabet


def train(
    corpus: Corpus,
    config: FeatureConfig,
    embeddings: EmbeddingTable | None,
    train_config: TrainConfig,
    ignore_other: bool = False,
    progress: Callable[[int, float], None] | None = None,
) -> CrfModel:
    """Fit a CRF to the corpus by regularized maximum likelihood.

    Optimization starts from all-zero weights and is deterministic for
    identical inputs.  `progress` receives (iteration, objective) after
    every accepted optimizer step.
    """
    dataset, index, alphabet = encode_training_set(
        corpus, config, embeddings, ignore_other
    )
    result = optim.minimize(
        lambda w: dataset.nll_and_gradient(w, train_config.c2),
        np.zeros(dataset.n_parameters),
        l1=train_config.c1,
        memory=train_config.lbfgs_memory,
        max_iterations=train_config.max_iterations,
        delta=train_config.delta,
        period=train_config.period,
        callback=progress,
    )
    state, transition, start, end = _unpack(
        result.x, dataset.n_features, dataset.n_labels
    )
    return CrfModel(
        alphabet=alphabet,
        index=index,
        state=state.copy(),
        transition=transition.copy(),
        start=start.copy(),
        end=end.copy(),
        feature_config=config,
        train_config=train_config,
        diagnostics=TrainDiagnostics(
            iterations=result.iterations,
            converged=result.converged,
            line_search_failed=result.line_search_failed,
            final_objective=result.value,
            objective_trace=result.trace,
        ),
    )


def tag(
    model: CrfModel,
    corpus: Corpus,
    embeddings: EmbeddingTable | None = None,
) -> Corpus:
    """Corpus with each headline's spans replaced by model predictions.

    The input corpus is immutable and untouched; gold annotations live
    only there.  An embedding table must be supplied when the model's
    feature configuration uses the embedding family.
    """
    if model.feature_config.embedding and embeddings is None:
        raise ConfigError(
            "model uses the embedding family; an embedding table is required"
        )
    tagged: list[Headline] = []
    for headline in corpus:
        vecs = windowed_attributes(headline, model.feature_config, embeddings)
        e = _emissions(_encode_attrs(vecs, model.index), model.state)
        path = _viterbi_ids(e, model.transition, model.start, model.end)
        tags = [model.alphabet.tags[i] for i in path]
        spans = tuple(bio_to_spans(tags))
        tagged.append(dataclasses.replace(headline, spans=spans))
    return Corpus(corpus.name, tuple(tagged))


# --- persistence ---------------------------------------------------------

def _format_float(x: float) -> str:
    return repr(float(x))


def _config_echo(config: object) -> str:
    parts = []
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            parts.append(f"{f.name}={'true' if value else 'false'}")
        elif isinstance(value, float):
            parts.append(f"{f.name}={_format_float(value)}")
        else:
            parts.append(f"{f.name}={value}")
    return "\t".join(parts)


def save_model(model: CrfModel, stream: IO[str]) -> None:
    """Write the model losslessly as versioned UTF-8 text."""
    n_labels = model.n_labels
    n_features = model.n_features
    stream.write(f"{_FORMAT_MAGIC} {_FORMAT_VERSION}\n")
    stream.write("labels\t" + "\t".join(model.alphabet.tags) + "\n")
    stream.write(f"attributes\t{n_features}\n")
    stream.write("feature_config\t" + _config_echo(model.feature_config) + "\n")
    stream.write("train_config\t" + _config_echo(model.train_config) + "\n")
    stream.write(
        "start\t" + "\t".join(_format_float(x) for x in model.start) + "\n"
    )
    stream.write("end\t" + "\t".join(_format_float(x) for x in model.end) + "\n")
    stream.write("transitions\n")
    for row in model.transition:
        stream.write("\t".join(_format_float(x) for x in row) + "\n")
    stream.write("attribute_names\n")
    for i in range(n_features):
        stream.write(model.index.name(i) + "\n")
    rows, cols = np.nonzero(model.state)
    stream.write(f"state_weights\t{len(rows)}\n")
    for r, c in zip(rows, cols):
        stream.write(
            f"{model.index.name(int(r))}\t{model.alphabet.tags[int(c)]}\t"
            f"{_format_float(model.state[r, c])}\n"
        )
    stream.write("end_of_model\n")


class _Reader:
    """Sequential line reader that reports truncation with context."""

    def __init__(self, stream: IO[str]) -> None:
        self.lines = stream.read().split("\n")
        self.pos = 0

    def next_line(self, context: str) -> str:
        if self.pos >= len(self.lines):
            raise ModelTruncatedError(f"model file ends inside {context}")
        line = self.lines[self.pos]
        self.pos += 1
        if self.pos == len(self.lines) and line == "":
            # A trailing newline yields one final empty chunk, not a line.
            raise ModelTruncatedError(f"model file ends inside {context}")
        return line


def _parse_floats(
    line: str, expect: int, context: str, prefix: str | None = None
) -> np.ndarray:
    parts = line.split("\t")
    if prefix is not None:
        if parts[0] != prefix:
            raise ModelFormatError(f"expected {prefix} line, got {line!r}")
        parts = parts[1:]
    if len(parts) != expect:
        raise ModelDimensionError(
            f"{context}: expected {expect} values, got {len(parts)}"
        )
    try:
        return np.array([float(v) for v in parts], dtype=float)
    except ValueError:
        raise ModelFormatError(f"{context}: non-numeric weight") from None


def _parse_config_echo(line: str, prefix: str, cls: type) -> object:
    parts = line.split("\t")
    if not parts or parts[0] != prefix:
        raise ModelFormatError(f"expected {prefix} line, got {line!r}")
    field_types = {f.name: f.type for f in dataclasses.fields(cls)}
    kwargs: dict[str, object] = {}
    for part in parts[1:]:
        name, _, raw = part.partition("=")
        if name not in field_types:
            raise ModelFormatError(f"unknown {prefix} field {name!r}")
        kind = field_types[name]
        if kind == "bool":
            if raw not in ("true", "false"):
                raise ModelFormatError(f"bad boolean {raw!r} for {name}")
            kwargs[name] = raw == "true"
        elif kind == "int":
            kwargs[name] = int(raw)
        else:
            kwargs[name] = float(raw)
    try:
        return cls(**kwargs)
    except (TypeError, ConfigError) as exc:
        raise ModelFormatError(f"bad {prefix}: {exc}") from None


def load_model(stream: IO[str]) -> CrfModel:
    """Parse a model file written by save_model.

    Raises ModelVersionError on a bad header, ModelTruncatedError when
    the file ends early, and ModelDimensionError when any section
    disagrees with the declared label or attribute counts.
    """
    reader = _Reader(stream)
    header = reader.next_line("header").split(" ")
    if len(header) != 2 or header[0] != _FORMAT_MAGIC:
        raise ModelVersionError("not a recognized model file")
    if header[1] != str(_FORMAT_VERSION):
        raise ModelVersionError(f"unsupported model format version {header[1]!r}")
    label_parts = reader.next_line("label list").split("\t")
    if label_parts[0] != "labels" or len(label_parts) < 2:
        raise ModelFormatError("missing label list")
    alphabet = TagAlphabet(tuple(label_parts[1:]))
    n_labels = len(alphabet)
    attr_parts = reader.next_line("attribute count").split("\t")
    if attr_parts[0] != "attributes" or len(attr_parts) != 2:
        raise ModelFormatError("missing attribute count")
    try:
        n_features = int(attr_parts[1])
    except ValueError:
        raise ModelFormatError("attribute count is not an integer") from None
    if n_features < 0:
        raise ModelDimensionError("attribute count must be >= 0")
    feature_config = _parse_config_echo(
        reader.next_line("feature config"), "feature_config", FeatureConfig
    )
    train_config = _parse_config_echo(
        reader.next_line("train config"), "train_config", TrainConfig
    )
    start = _parse_floats(
        reader.next_line("start weights"), n_labels, "start weights", prefix="start"
    )
    end = _parse_floats(
        reader.next_line("end weights"), n_labels, "end weights", prefix="end"
    )
    if reader.next_line("transitions") != "transitions":
        raise ModelFormatError("missing transitions section")
    transition = np.empty((n_labels, n_labels))
    for i in range(n_labels):
        transition[i] = _parse_floats(
            reader.next_line("transitions"), n_labels, f"transition row {i}"
        )
    if reader.next_line("attribute names") != "attribute_names":
        raise ModelFormatError("missing attribute_names section")
    names = [reader.next_line("attribute names") for _ in range(n_features)]
    if len(set(names)) != len(names):
        raise ModelFormatError("duplicate attribute names")
    index = FeatureIndex.from_names(names)
    sw_parts = reader.next_line("state weight count").split("\t")
    if sw_parts[0] != "state_weights" or len(sw_parts) != 2:
        raise ModelFormatError("missing state_weights section")
    try:
        declared = int(sw_parts[1])
    except ValueError:
        raise ModelFormatError("state weight count is not an integer") from None
    if declared < 0 or declared > n_features * n_labels:
        raise ModelDimensionError(
            f"declared {declared} state weights for a "
            f"{n_features}x{n_labels} weight matrix"
        )
    state = np.zeros((n_features, n_labels))
    for _ in range(declared):
        line = reader.next_line("state weights")
        if line == "end_of_model":
            raise ModelDimensionError(
                f"fewer state weight lines than the declared {declared}"
            )
        fields = line.split("\t")
        if len(fields) != 3:
            raise ModelFormatError("state weight line needs name, tag, weight")
        name, tag_name, raw = fields
        row = index.get(name)
        if row is None:
            raise ModelDimensionError(f"state weight for unknown attribute {name!r}")
        if tag_name not in alphabet:
            raise ModelDimensionError(f"state weight for unknown tag {tag_name!r}")
        try:
            state[row, alphabet.index(tag_name)] = float(raw)
        except ValueError:
            raise ModelFormatError("non-numeric state weight") from None
    trailer = reader.next_line("trailer")
    if trailer != "end_of_model":
        if len(trailer.split("\t")) == 3:
            raise ModelDimensionError(
                f"more state weight lines than the declared {declared}"
            )
        raise ModelFormatError(f"expected end_of_model, got {trailer!r}")
    return CrfModel(
        alphabet=alphabet,
        index=index,
        state=state,
        transition=transition,
        start=start,
        end=end,
        feature_config=feature_config,
        train_config=train_config,
    )
