import math
import pickle
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import torch
import torch.nn as nn

from config import DOC_HIDDEN, EMBED_DIM, EXT_HIDDEN, FILTERS_PER_WIDTH, HARD_FEEDBACK, KERNEL_WIDTHS, MAX_SENTENCE_LEN
from errors import CheckpointError, ConfigError, GradientError, VocabularyMismatchError
from logger import logger
from textprep import PAD_ID, EncodedDocument, EncodedSentence

DTYPE = torch.float64
CHECKPOINT_VERSION = 1
EMBED_INIT_RANGE = 0.05


@dataclass(frozen=True)
class NetworkConfig:
    embed_dim: int = EMBED_DIM
    filters_per_width: int = FILTERS_PER_WIDTH
    kernel_widths: tuple = KERNEL_WIDTHS
    doc_hidden: int = DOC_HIDDEN
    ext_hidden: int = EXT_HIDDEN
    max_sentence_len: int = MAX_SENTENCE_LEN
    hard_feedback: bool = HARD_FEEDBACK

    def __post_init__(self):
        object.__setattr__(self, "kernel_widths", tuple(int(w) for w in self.kernel_widths))
        sizes = (self.embed_dim, self.filters_per_width, self.doc_hidden, self.ext_hidden, self.max_sentence_len)
        if min(sizes) < 1 or not self.kernel_widths:
            raise ConfigError(f"NetworkConfig: sizes must be positive: {self}")
        for width in self.kernel_widths:
            if width < 1 or width > self.max_sentence_len:
                raise ConfigError(f"NetworkConfig: kernel width {width} outside [1, {self.max_sentence_len}]")

    @property
    def sentence_dim(self) -> int:
        return self.filters_per_width * len(self.kernel_widths)

    @classmethod
    def from_settings(cls, settings) -> "NetworkConfig":
        return cls(
            embed_dim=settings.embed_dim,
            filters_per_width=settings.filters_per_width,
            kernel_widths=settings.kernel_widths,
            doc_hidden=settings.doc_hidden,
            ext_hidden=settings.ext_hidden,
            max_sentence_len=settings.max_sentence_len,
            hard_feedback=settings.hard_feedback,
        )


def _uniform(generator: torch.Generator, bound: float, *shape) -> torch.Tensor:
    return (torch.rand(*shape, generator=generator, dtype=DTYPE) * 2 - 1) * bound


class ModelParams(nn.Module):
    """
    Every trainable tensor of the ranker. Registration order is the
    declared order used by checkpoints and gradient dictionaries.
    """

    def __init__(self, cfg: NetworkConfig, vocab_size: int, vocab_hash: str = "", seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.vocab_hash = vocab_hash
        g = torch.Generator().manual_seed(seed)

        # Word embeddings, pad row pinned at zero
        embeddings = _uniform(g, EMBED_INIT_RANGE, vocab_size, cfg.embed_dim)
        embeddings[PAD_ID] = 0.0
        self.embeddings = nn.Parameter(embeddings)

        # One filter bank per kernel width
        for width in cfg.kernel_widths:
            fan_in = width * cfg.embed_dim
            bound = 1.0 / math.sqrt(fan_in)
            self.register_parameter(f"conv_weight_{width}",
                                    nn.Parameter(_uniform(g, bound, cfg.filters_per_width, fan_in)))
            self.register_parameter(f"conv_bias_{width}",
                                    nn.Parameter(_uniform(g, bound, cfg.filters_per_width)))

        # Document and extractor LSTMs
        self.doc_weight, self.doc_bias = self._lstm_params(g, cfg.sentence_dim, cfg.doc_hidden)
        self.ext_weight, self.ext_bias = self._lstm_params(g, cfg.sentence_dim + cfg.doc_hidden, cfg.ext_hidden)

        # Projection of the document state when the hidden sizes differ
        if cfg.doc_hidden != cfg.ext_hidden:
            bound = 1.0 / math.sqrt(cfg.doc_hidden)
            self.init_weight = nn.Parameter(_uniform(g, bound, cfg.ext_hidden, cfg.doc_hidden))
            self.init_bias = nn.Parameter(_uniform(g, bound, cfg.ext_hidden))
        else:
            self.init_weight = None
            self.init_bias = None

        # Two-class output layer
        bound = 1.0 / math.sqrt(cfg.ext_hidden)
        self.out_weight = nn.Parameter(_uniform(g, bound, 2, cfg.ext_hidden))
        self.out_bias = nn.Parameter(_uniform(g, bound, 2))

    @staticmethod
    def _lstm_params(g: torch.Generator, input_dim: int, hidden: int):
        bound = 1.0 / math.sqrt(hidden)
        weight = _uniform(g, bound, 4 * hidden, input_dim + hidden)
        bias = _uniform(g, bound, 4 * hidden)
        # Gate order: input, forget, output, candidate
        bias[hidden:2 * hidden] = 1.0
        return nn.Parameter(weight), nn.Parameter(bias)

    def conv(self, width: int):
        return getattr(self, f"conv_weight_{width}"), getattr(self, f"conv_bias_{width}")

    def zero_pad_row(self):
        with torch.no_grad():
            self.embeddings[PAD_ID].zero_()


@dataclass
class DocumentEncoding:
    representation: torch.Tensor  # final hidden state after s_1
    states: torch.Tensor          # row j: hidden state right after consuming s_j


@dataclass
class ScoredDocument:
    """Per-sentence two-class logits; column 1 is 'include in summary'."""
    logits: torch.Tensor

    @classmethod
    def from_probabilities(cls, scores: Sequence[float]) -> "ScoredDocument":
        p = torch.tensor(list(scores), dtype=DTYPE)
        return cls(logits=torch.stack([torch.log1p(-p), torch.log(p)], dim=1))

    def __len__(self) -> int:
        return self.logits.shape[0]

    @property
    def probabilities(self) -> torch.Tensor:
        return torch.softmax(self.logits.detach(), dim=1)

    @property
    def log_probabilities(self) -> torch.Tensor:
        return torch.log_softmax(self.logits.detach(), dim=1)

    @property
    def scores(self) -> List[float]:
        return self.probabilities[:, 1].tolist()


def _embed(sentences: Sequence[EncodedSentence], params: ModelParams):
    ids = torch.tensor([s.ids for s in sentences], dtype=torch.long)
    lengths = torch.tensor([s.true_len for s in sentences], dtype=torch.long)
    positions = torch.arange(ids.shape[1])
    mask = (positions[None, :] < lengths[:, None]).to(DTYPE)
    return params.embeddings[ids] * mask[:, :, None], lengths


def feature_map_length(true_len: int, width: int) -> int:
    return max(true_len - width + 1, 1)


def encode_sentences(sentences: Sequence[EncodedSentence], params: ModelParams) -> torch.Tensor:
    """Convolution + tanh + max-over-time for every sentence; n x sentence_dim."""
    cfg = params.cfg
    x, lengths = _embed(sentences, params)
    n, max_len, embed_dim = x.shape
    pooled = []
    for width in cfg.kernel_widths:
        weight, bias = params.conv(width)
        # Slide each filter over every window of `width` tokens
        steps = max_len - width + 1
        # n x steps x embed x width -> n x steps x (width * embed), position-major
        windows = x.unfold(1, width, 1).transpose(2, 3).reshape(n, steps, width * embed_dim)
        feats = torch.tanh(windows @ weight.T + bias)
        # Windows past the sentence end never win the max
        valid = torch.clamp(lengths - width + 1, min=1)
        live = torch.arange(steps)[None, :] < valid[:, None]
        feats = feats.masked_fill(~live[:, :, None], float("-inf"))
        pooled.append(feats.max(dim=1).values)
    return torch.cat(pooled, dim=1)


def encode_sentence(s: EncodedSentence, params: ModelParams) -> torch.Tensor:
    return encode_sentences([s], params)[0]


def _lstm_step(x, h, c, weight, bias):
    z = weight @ torch.cat([x, h]) + bias
    i, f, o, g = z.chunk(4)
    c_next = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
    h_next = torch.sigmoid(o) * torch.tanh(c_next)
    return h_next, c_next


def encode_document(sentence_embeddings: torch.Tensor, params: ModelParams) -> DocumentEncoding:
    n = sentence_embeddings.shape[0]
    hidden = params.cfg.doc_hidden
    h = torch.zeros(hidden, dtype=DTYPE)
    c = torch.zeros(hidden, dtype=DTYPE)
    states: List[Optional[torch.Tensor]] = [None] * n
    # Last sentence first, so the opening sentences are freshest in the final state
    for j in reversed(range(n)):
        h, c = _lstm_step(sentence_embeddings[j], h, c, params.doc_weight, params.doc_bias)
        states[j] = h
    return DocumentEncoding(representation=h, states=torch.stack(states))


def extract_scores(sentence_embeddings: torch.Tensor, encoding: DocumentEncoding,
                   params: ModelParams) -> ScoredDocument:
    cfg = params.cfg
    # Extractor starts from the document representation
    if params.init_weight is not None:
        h = params.init_weight @ encoding.representation + params.init_bias
    else:
        h = encoding.representation
    c = torch.zeros(cfg.ext_hidden, dtype=DTYPE)
    feedback = torch.zeros(cfg.doc_hidden, dtype=DTYPE)
    logits = []
    for i in range(sentence_embeddings.shape[0]):
        h, c = _lstm_step(torch.cat([sentence_embeddings[i], feedback]), h, c, params.ext_weight, params.ext_bias)
        step_logits = params.out_weight @ h + params.out_bias
        logits.append(step_logits)
        # Feed back this sentence's document state, weighted by its inclusion probability
        include = torch.softmax(step_logits, dim=0)[1]
        if cfg.hard_feedback:
            include = (include > 0.5).to(DTYPE).detach()
        feedback = include * encoding.states[i]
    return ScoredDocument(logits=torch.stack(logits))


def score_document(doc: EncodedDocument, params: ModelParams) -> ScoredDocument:
    """Full forward pass; the returned logits keep the graph for `backward`."""
    embeddings = encode_sentences(doc.sentences, params)
    encoding = encode_document(embeddings, params)
    return extract_scores(embeddings, encoding, params)


def backward(grad_logits: torch.Tensor, scored: ScoredDocument, params: ModelParams) -> Dict[str, torch.Tensor]:
    """Reverse pass from d(loss)/d(logits) to every parameter, in declared order."""
    if not scored.logits.requires_grad:
        raise GradientError("logits (forward pass was not recorded)")
    names, tensors = zip(*params.named_parameters())
    grads = torch.autograd.grad(scored.logits, tensors, grad_outputs=grad_logits.to(DTYPE), allow_unused=True)
    out = OrderedDict()
    for name, tensor, grad in zip(names, tensors, grads):
        if grad is None:
            grad = torch.zeros_like(tensor)
        if name == "embeddings":
            grad = grad.clone()
            grad[PAD_ID] = 0.0
        if not torch.isfinite(grad).all():
            raise GradientError(name)
        out[name] = grad
    return out


def save_checkpoint(params: ModelParams, path: str, extra: Optional[dict] = None):
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(params.cfg),
        "vocab_size": params.vocab_size,
        "vocab_hash": params.vocab_hash,
        "parameter_order": [name for name, _ in params.named_parameters()],
        "state": OrderedDict((name, t.detach().clone()) for name, t in params.named_parameters()),
        "extra": extra or {},
    }
    torch.save(payload, path)
    logger.debug(f"Neural: Saved checkpoint to {path}")


def load_checkpoint(path: str, vocab_hash: Optional[str] = None) -> ModelParams:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except (OSError, RuntimeError, EOFError, pickle.UnpicklingError) as e:
        raise CheckpointError(f"Neural: cannot load checkpoint {path}: {e}") from e
    if not isinstance(payload, dict):
        raise CheckpointError(f"Neural: {path} does not hold a checkpoint payload")
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"Neural: {path} has unsupported format version {payload.get('format_version')}")
    try:
        if vocab_hash is not None and payload["vocab_hash"] != vocab_hash:
            raise VocabularyMismatchError(f"Neural: checkpoint {path} was trained with a different vocabulary")
        cfg = NetworkConfig(**payload["config"])
        params = ModelParams(cfg, payload["vocab_size"], payload["vocab_hash"])
        declared = [name for name, _ in params.named_parameters()]
        if declared != payload["parameter_order"]:
            raise CheckpointError(f"Neural: parameter layout in {path} does not match the network config")
        with torch.no_grad():
            for name, tensor in params.named_parameters():
                stored = payload["state"][name]
                if stored.shape != tensor.shape:
                    raise CheckpointError(f"Neural: {name} has shape {tuple(stored.shape)}, expected {tuple(tensor.shape)}")
                tensor.copy_(stored)
    except (KeyError, TypeError, AttributeError) as e:
        raise CheckpointError(f"Neural: checkpoint {path} is incomplete or malformed: {e!r}") from e
    logger.info(f"Neural: Loaded checkpoint {path}")
    return params
