"""
Windowed feed-forward sequence tagger.

Each token is classified from the concatenated embeddings of the tokens
within `window` positions of it (PAD beyond the sentence edges), passed
through one tanh hidden layer and a softmax output layer. The same model
class plays the teacher (source language) and the student (target language).
"""

import logging
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .corpus import LabeledSentence
from .errors import EmptyCorpus, ModelFormatError, NonFiniteLoss
from .losses import LossKind, logit_gradients, softmax, token_losses
from .spans import OUTSIDE, to_iob2

logger = logging.getLogger(__name__)

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"

MAGIC = b"XNFT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIqII")

PARAMETER_NAMES = ("embeddings", "hidden_w", "hidden_b", "output_w", "output_b")


class Vocab:
    """Word -> id table with PAD=0 and UNK=1 reserved."""

    def __init__(self, words: Iterable[str] = (), min_count: int = 1):
        self.min_count = min_count
        self._words: List[str] = [PAD_TOKEN, UNK_TOKEN]
        self._ids: Dict[str, int] = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        for word in words:
            if word not in self._ids:
                self._ids[word] = len(self._words)
                self._words.append(word)

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, word: object) -> bool:
        return word in self._ids

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self._words == other._words

    def id(self, word: str) -> int:
        return self._ids.get(word, UNK)

    def word(self, index: int) -> str:
        return self._words[index]

    @property
    def words(self) -> List[str]:
        return list(self._words)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.id(token) for token in tokens], dtype=np.int64)


def _tokens_of(item: Union[LabeledSentence, Sequence[str]]) -> Sequence[str]:
    return item.tokens if isinstance(item, LabeledSentence) else item


def build_vocab(
    corpus: Sequence[Union[LabeledSentence, Sequence[str]]], min_count: int = 1
) -> Vocab:
    """
    Build a vocabulary; ids follow (count descending, word ascending).

    Args:
        corpus: Sentences (or bare token sequences)
        min_count: Words seen fewer times map to UNK

    Raises:
        EmptyCorpus: If the corpus has no sentence
    """
    if not corpus:
        raise EmptyCorpus()
    counts = Counter(token for item in corpus for token in _tokens_of(item))
    for reserved in (PAD_TOKEN, UNK_TOKEN):
        counts.pop(reserved, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocab((word for word, count in ranked if count >= min_count), min_count)


def labels_for_types(types: Sequence[str]) -> Tuple[str, ...]:
    """Label set with "O" first (index 0), then B-/I- per type."""
    labels = [OUTSIDE]
    for etype in types:
        labels += [f"B-{etype}", f"I-{etype}"]
    return tuple(labels)


@dataclass(frozen=True)
class TaggerConfig:
    embed_dim: int = 32
    window: int = 2
    hidden_dim: int = 64
    labels: Tuple[str, ...] = labels_for_types(("PER", "ORG", "LOC"))
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))
        if min(self.embed_dim, self.hidden_dim) < 1 or self.window < 0:
            raise ValueError("embed_dim and hidden_dim must be >= 1, window >= 0")
        if OUTSIDE not in self.labels:
            raise ValueError('label set must include "O"')
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be unique")

    @property
    def width(self) -> int:
        return 2 * self.window + 1

    @property
    def n_features(self) -> int:
        return self.width * self.embed_dim


@dataclass(frozen=True)
class TrainConfig:
    """
    SGD settings. freeze_embeddings keeps the lowest layer fixed;
    freeze_hidden additionally fixes the hidden layer. The first
    warmup_epochs epochs train with cross entropy before `loss` takes over.
    """

    lr: float = 0.1
    epochs: int = 5
    batch_size: int = 1
    loss: LossKind = field(default_factory=LossKind.cross_entropy)
    freeze_embeddings: bool = False
    freeze_hidden: bool = False
    warmup_epochs: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ValueError("warmup_epochs must lie in [0, epochs]")
        if self.freeze_hidden and not self.freeze_embeddings:
            raise ValueError("freeze_hidden requires freeze_embeddings")

    @property
    def frozen_layers(self) -> int:
        return int(self.freeze_embeddings) + int(self.freeze_hidden)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lr": self.lr,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "loss": self.loss.to_dict(),
            "freeze_embeddings": self.freeze_embeddings,
            "freeze_hidden": self.freeze_hidden,
            "warmup_epochs": self.warmup_epochs,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        values = dict(data)
        if "loss" in values:
            values["loss"] = LossKind.from_dict(values["loss"])
        return cls(**values)


@dataclass
class TaggerModel:
    config: TaggerConfig
    vocab: Vocab
    embeddings: np.ndarray
    hidden_w: np.ndarray
    hidden_b: np.ndarray
    output_w: np.ndarray
    output_b: np.ndarray

    def __post_init__(self) -> None:
        expected = {
            "embeddings": (len(self.vocab), self.config.embed_dim),
            "hidden_w": (self.config.n_features, self.config.hidden_dim),
            "hidden_b": (self.config.hidden_dim,),
            "output_w": (self.config.hidden_dim, len(self.config.labels)),
            "output_b": (len(self.config.labels),),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}"
                )

    @property
    def labels(self) -> Tuple[str, ...]:
        return self.config.labels

    def parameters(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAMETER_NAMES}

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def copy(self) -> "TaggerModel":
        arrays = {name: p.copy() for name, p in self.parameters().items()}
        return TaggerModel(self.config, self.vocab, **arrays)

    def predict(self, tokens: Sequence[str]) -> LabeledSentence:
        return predict(self, tokens)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(config: TaggerConfig, vocab: Vocab) -> TaggerModel:
    """Seeded random initialisation; the PAD embedding starts at zero."""
    rng = np.random.default_rng(config.seed)
    embeddings = rng.uniform(-0.5, 0.5, size=(len(vocab), config.embed_dim))
    embeddings[PAD] = 0.0
    n_labels = len(config.labels)
    return TaggerModel(
        config,
        vocab,
        embeddings,
        _glorot(rng, config.n_features, config.hidden_dim),
        np.zeros(config.hidden_dim),
        _glorot(rng, config.hidden_dim, n_labels),
        np.zeros(n_labels),
    )


def zero_model(config: TaggerConfig, vocab: Vocab) -> TaggerModel:
    n_labels = len(config.labels)
    return TaggerModel(
        config,
        vocab,
        np.zeros((len(vocab), config.embed_dim)),
        np.zeros((config.n_features, config.hidden_dim)),
        np.zeros(config.hidden_dim),
        np.zeros((config.hidden_dim, n_labels)),
        np.zeros(n_labels),
    )


def remap_vocab(model: TaggerModel, vocab: Vocab, seed: int) -> TaggerModel:
    """
    Move a model onto a new vocabulary.

    Rows of words both vocabularies share are copied; new words start from
    seeded uniform [-0.1, 0.1]. Every other parameter is copied.
    """
    rng = np.random.default_rng(seed)
    embeddings = rng.uniform(-0.1, 0.1, size=(len(vocab), model.config.embed_dim))
    shared = 0
    for index, word in enumerate(vocab.words):
        if word in model.vocab:
            embeddings[index] = model.embeddings[model.vocab.id(word)]
            shared += 1
    logger.debug("remapped vocabulary: %d of %d entries shared", shared, len(vocab))
    return TaggerModel(
        model.config,
        vocab,
        embeddings,
        model.hidden_w.copy(),
        model.hidden_b.copy(),
        model.output_w.copy(),
        model.output_b.copy(),
    )


def _sentence_windows(model: TaggerModel, tokens: Sequence[str]) -> np.ndarray:
    w = model.config.window
    ids = model.vocab.encode(tokens)
    padded = np.concatenate([np.full(w, PAD), ids, np.full(w, PAD)])
    offsets = np.arange(len(ids))[:, None] + np.arange(model.config.width)[None, :]
    return np.asarray(padded[offsets], dtype=np.int64)


def _windows(model: TaggerModel, sentences: Sequence[Sequence[str]]) -> np.ndarray:
    if not sentences:
        return np.zeros((0, model.config.width), dtype=np.int64)
    return np.concatenate([_sentence_windows(model, s) for s in sentences])


def _forward(
    model: TaggerModel, windows: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    features = model.embeddings[windows].reshape(len(windows), -1)
    hidden = np.tanh(features @ model.hidden_w + model.hidden_b)
    logits = hidden @ model.output_w + model.output_b
    return features, hidden, logits


def forward(
    model: TaggerModel, sentence: Union[LabeledSentence, Sequence[str]]
) -> np.ndarray:
    """
    Label distributions for every token.

    Returns:
        (n_tokens, n_labels) array whose rows sum to 1
    """
    _, _, logits = _forward(model, _sentence_windows(model, _tokens_of(sentence)))
    return softmax(logits)


def _encode_labels(model: TaggerModel, tags: Sequence[str]) -> np.ndarray:
    index = {label: i for i, label in enumerate(model.labels)}
    try:
        return np.array([index[tag] for tag in tags], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"tag {exc.args[0]!r} is not in the model's label set")


def loss_and_gradients(
    model: TaggerModel,
    windows: np.ndarray,
    labels: np.ndarray,
    kind: LossKind,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Mean token loss of a batch and its gradient for every parameter block.

    The embedding gradient is returned per window slot as "window_grads"
    ((N, width, embed_dim)) instead of a dense |V| x E matrix.
    """
    features, hidden, logits = _forward(model, windows)
    losses = token_losses(softmax(logits), labels, kind)
    n = len(labels)
    d_logits = logit_gradients(logits, labels, kind) / n
    d_hidden = (d_logits @ model.output_w.T) * (1.0 - hidden**2)
    d_features = d_hidden @ model.hidden_w.T
    grads = {
        "output_w": hidden.T @ d_logits,
        "output_b": d_logits.sum(axis=0),
        "hidden_w": features.T @ d_hidden,
        "hidden_b": d_hidden.sum(axis=0),
        "window_grads": d_features.reshape(n, model.config.width, -1),
    }
    return float(losses.mean()), grads


def _dense_embedding_grad(
    model: TaggerModel, windows: np.ndarray, window_grads: np.ndarray
) -> np.ndarray:
    dense = np.zeros_like(model.embeddings)
    np.add.at(dense, windows, window_grads)
    return dense


def train(
    model: TaggerModel, dataset: Sequence[LabeledSentence], cfg: TrainConfig
) -> Tuple[TaggerModel, List[float]]:
    """
    Train with plain SGD on the mean token loss of each batch.

    The input model is not modified.

    Args:
        model: Initial parameters
        dataset: Training sentences (tags must be in the model's label set)
        cfg: Training settings

    Returns:
        Trained copy of the model and the mean batch loss of every epoch

    Raises:
        EmptyCorpus: If the dataset is empty
        NonFiniteLoss: If a batch loss or gradient stops being finite
    """
    if not dataset:
        raise EmptyCorpus()
    model = model.copy()
    windows = [_sentence_windows(model, s.tokens) for s in dataset]
    labels = [_encode_labels(model, s.tags) for s in dataset]
    rng = np.random.default_rng(cfg.seed)
    history: List[float] = []

    for epoch in range(cfg.epochs):
        warm = epoch < cfg.warmup_epochs
        loss_kind = LossKind.cross_entropy() if warm else cfg.loss
        order = rng.permutation(len(dataset))
        batch_losses = []
        for batch, start in enumerate(range(0, len(order), cfg.batch_size)):
            picked = order[start : start + cfg.batch_size]
            batch_windows = np.concatenate([windows[i] for i in picked])
            batch_labels = np.concatenate([labels[i] for i in picked])
            loss, grads = loss_and_gradients(
                model, batch_windows, batch_labels, loss_kind
            )
            if not np.isfinite(loss) or not all(
                np.isfinite(g).all() for g in grads.values()
            ):
                raise NonFiniteLoss(epoch, batch)
            batch_losses.append(loss)

            model.output_w -= cfg.lr * grads["output_w"]
            model.output_b -= cfg.lr * grads["output_b"]
            if not cfg.freeze_hidden:
                model.hidden_w -= cfg.lr * grads["hidden_w"]
                model.hidden_b -= cfg.lr * grads["hidden_b"]
            if not cfg.freeze_embeddings:
                step = -cfg.lr * grads["window_grads"]
                np.add.at(model.embeddings, batch_windows, step)

        history.append(float(np.mean(batch_losses)))
        logger.info(
            "epoch %d/%d: loss %.4f (%s)",
            epoch + 1,
            cfg.epochs,
            history[-1],
            loss_kind.name,
        )
    return model, history


def predict(
    model: TaggerModel, sentence: Union[LabeledSentence, Sequence[str]]
) -> LabeledSentence:
    """
    Tag a sentence: per-token argmax (ties go to the lowest label id),
    then IOB2 repair.
    """
    tokens = _tokens_of(sentence)
    if not len(tokens):
        return LabeledSentence((), ())
    best = forward(model, tokens).argmax(axis=1)
    tags = to_iob2([model.labels[i] for i in best])
    return LabeledSentence(tuple(tokens), tuple(tags))


def predict_batch(
    model: TaggerModel, sentences: Sequence[Union[LabeledSentence, Sequence[str]]]
) -> List[LabeledSentence]:
    """predict() over many sentences with one forward pass."""
    token_lists = [tuple(_tokens_of(s)) for s in sentences]
    token_lists_nonempty = [t for t in token_lists if t]
    if not token_lists_nonempty:
        return [LabeledSentence((), ()) for _ in token_lists]
    _, _, logits = _forward(model, _windows(model, token_lists_nonempty))
    best = logits.argmax(axis=1)
    results, offset = [], 0
    for tokens in token_lists:
        chunk = best[offset : offset + len(tokens)]
        offset += len(tokens)
        tags = to_iob2([model.labels[i] for i in chunk])
        results.append(LabeledSentence(tokens, tuple(tags)))
    return results


def gradient_check(
    model: TaggerModel, example: LabeledSentence, kind: LossKind, h: float = 1e-5
) -> float:
    """
    Compare backprop gradients with central finite differences.

    Relative error per component is |a - n| / max(|a| + |n|, 1e-5); the
    floor keeps components that are zero up to rounding from dominating.

    Returns:
        Largest relative error over every parameter
    """
    model = model.copy()
    windows = _sentence_windows(model, example.tokens)
    labels = _encode_labels(model, example.tags)
    _, grads = loss_and_gradients(model, windows, labels, kind)
    analytic = {name: grads[name] for name in PARAMETER_NAMES if name in grads}
    analytic["embeddings"] = _dense_embedding_grad(
        model, windows, grads["window_grads"]
    )

    def loss_at() -> float:
        _, _, logits = _forward(model, windows)
        return float(token_losses(softmax(logits), labels, kind).mean())

    worst = 0.0
    for name in PARAMETER_NAMES:
        block = getattr(model, name)
        flat = block.reshape(-1)
        expected = analytic[name].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = loss_at()
            flat[i] = original - h
            minus = loss_at()
            flat[i] = original
            numeric = (plus - minus) / (2 * h)
            scale = max(abs(expected[i]) + abs(numeric), 1e-5)
            error = abs(expected[i] - numeric) / scale
            worst = max(worst, error)
    return worst


# Serialization


def _vocab_path(path: Path) -> Path:
    return path.with_name(path.name + ".vocab")


def save_model(model: TaggerModel, path: Union[str, Path]) -> None:
    """
    Write the XNFT container plus a "<path>.vocab" sidecar.

    Layout: magic "XNFT", u32 version, u32 embed_dim, u32 window,
    u32 hidden_dim, i64 seed, u32 label count, u32 vocab size, then each label
    as u32 byte length + UTF-8 bytes, then little-endian float64 parameter
    blocks in PARAMETER_NAMES order.
    """
    path = Path(path)
    cfg = model.config
    chunks = [
        _HEADER.pack(
            MAGIC,
            FORMAT_VERSION,
            cfg.embed_dim,
            cfg.window,
            cfg.hidden_dim,
            cfg.seed,
            len(cfg.labels),
            len(model.vocab),
        )
    ]
    for label in cfg.labels:
        encoded = label.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)) + encoded)
    for name in PARAMETER_NAMES:
        chunks.append(np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes())
    path.write_bytes(b"".join(chunks))
    _vocab_path(path).write_text(
        "".join(f"{word}\t{i}\n" for i, word in enumerate(model.vocab.words)),
        encoding="utf-8",
        newline="\n",
    )


def _read_vocab(path: Path) -> Vocab:
    entries = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        word, _, index = line.partition("\t")
        if not index.isdigit():
            raise ModelFormatError(f"{path}: bad vocab line {line_no}")
        entries.append((int(index), word))
    entries.sort()
    if [i for i, _ in entries] != list(range(len(entries))) or entries[:2] != [
        (PAD, PAD_TOKEN),
        (UNK, UNK_TOKEN),
    ]:
        raise ModelFormatError(f"{path}: ids must be dense and start with PAD, UNK")
    return Vocab(word for _, word in entries[2:])


def load_model(path: Union[str, Path]) -> TaggerModel:
    """
    Read a model written by save_model.

    Raises:
        ModelFormatError: On a bad magic number, version or truncated data
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise ModelFormatError(f"{path}: file too short")
    magic, version, embed_dim, window, hidden_dim, seed, n_labels, n_vocab = (
        _HEADER.unpack_from(data, 0)
    )
    if magic != MAGIC:
        raise ModelFormatError(f"{path}: not a model file")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")

    offset = _HEADER.size
    labels = []
    for _ in range(n_labels):
        if offset + 4 > len(data):
            raise ModelFormatError(f"{path}: truncated label table")
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        try:
            labels.append(data[offset : offset + length].decode("utf-8"))
        except UnicodeDecodeError:
            raise ModelFormatError(f"{path}: label is not UTF-8") from None
        offset += length

    try:
        config = TaggerConfig(embed_dim, window, hidden_dim, tuple(labels), seed)
    except ValueError as exc:
        raise ModelFormatError(f"{path}: bad model config: {exc}") from None
    vocab = _read_vocab(_vocab_path(path))
    if len(vocab) != n_vocab:
        raise ModelFormatError(f"{path}: vocab sidecar has {len(vocab)} entries")

    shapes = {
        "embeddings": (n_vocab, embed_dim),
        "hidden_w": (config.n_features, hidden_dim),
        "hidden_b": (hidden_dim,),
        "output_w": (hidden_dim, n_labels),
        "output_b": (n_labels,),
    }
    arrays = {}
    for name in PARAMETER_NAMES:
        count = int(np.prod(shapes[name]))
        if offset + 8 * count > len(data):
            raise ModelFormatError(f"{path}: truncated parameter block {name}")
        block = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        arrays[name] = block.astype(np.float64).reshape(shapes[name])
        offset += 8 * count
    if offset != len(data):
        raise ModelFormatError(f"{path}: trailing bytes after parameters")
    return TaggerModel(config, vocab, **arrays)
