import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

from config import MAX_DOC_SENTENCES, MAX_SENTENCE_LEN
from errors import EncodingError, VocabularyError
from logger import logger

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1

_BREAKS = {"!", "?", ";", "\n"}
# Stripped from token edges; '%', '$', '&', '+', '#' survive so "100%" stays one token
_EDGE_PUNCT = "!\"'(),.:;?[]{}<>`*_~|/\\-"


def segment(text: str) -> List[str]:
    """
    Splits free text into sentences on '.', '!', '?', ';' and newlines.
    A period followed by a lowercase letter or a digit (after spaces) is an
    abbreviation or a decimal point and is kept inside the sentence.
    """
    sentences = []
    current = []
    length = len(text)
    for i, ch in enumerate(text):
        if ch in _BREAKS:
            sentences.append("".join(current))
            current = []
            continue
        if ch == ".":
            j = i + 1
            while j < length and text[j] in " \t":
                j += 1
            if j < length and (text[j].islower() or text[j].isdigit()):
                current.append(ch)
                continue
            sentences.append("".join(current))
            current = []
            continue
        current.append(ch)
    sentences.append("".join(current))
    return [s.strip() for s in sentences if s.strip()]


def tokenize(sentence: str) -> List[str]:
    tokens = []
    for raw in sentence.lower().split():
        token = raw.strip(_EDGE_PUNCT)
        if token:
            tokens.append(token)
    return tokens


def sku_sentences(description: str, bullets: Sequence[str]) -> List[List[str]]:
    """Description sentences, then one sentence per bullet; empty ones dropped."""
    segments = segment(description)
    segments.extend(bullet.replace("\n", " ") for bullet in bullets)
    token_lists = (tokenize(s) for s in segments)
    return [tokens for tokens in token_lists if tokens]


class Vocabulary:
    def __init__(self, tokens: Sequence[str], max_size: int):
        if max_size < 3:
            raise VocabularyError(f"Vocabulary: max_size must be at least 3, got {max_size}")
        if len(tokens) > max_size - 2:
            raise VocabularyError(f"Vocabulary: {len(tokens)} tokens exceed max_size {max_size}")
        self.max_size = max_size
        self.pad_id = PAD_ID
        self.unk_id = UNK_ID
        self.id_to_token = [PAD_TOKEN, UNK_TOKEN] + list(tokens)
        self.token_to_id = {}
        for idx, token in enumerate(self.id_to_token):
            if token in self.token_to_id:
                raise VocabularyError(f"Vocabulary: duplicate token {token!r}")
            self.token_to_id[token] = idx
        self._fingerprint = None

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        if token in (PAD_TOKEN, UNK_TOKEN):
            return self.unk_id
        return self.token_to_id.get(token, self.unk_id)

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.id_to_token[i] for i in ids]

    def fingerprint(self) -> str:
        if self._fingerprint is None:
            digest = hashlib.sha256()
            for token in self.id_to_token:
                digest.update(b"\x00")
                digest.update(token.encode("utf-8"))
            self._fingerprint = digest.hexdigest()
        return self._fingerprint

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            for token in self.id_to_token[2:]:
                f.write(token + "\n")
        logger.info(f"Vocabulary: Saved {len(self)} ids to {path}")

    @classmethod
    def load(cls, path: str, max_size: Optional[int] = None) -> "Vocabulary":
        """One token per line; the token on line i (0-based) gets id i + 2."""
        try:
            with open(path, "r", encoding="utf-8") as f:
                lines = f.read().split("\n")
        except OSError as e:
            raise VocabularyError(f"Vocabulary: cannot read {path}: {e}") from e
        if lines and lines[-1] == "":
            lines.pop()
        if max_size is None:
            max_size = len(lines) + 2
        return cls(lines, max_size)


def build_vocab(documents: Iterable[Iterable[Sequence[str]]], max_size: int, min_freq: int) -> Vocabulary:
    """
    documents: one entry per document, each a sequence of token lists.
    Tokens are ranked by frequency (descending), ties lexicographically.
    """
    if max_size < 3:
        raise VocabularyError(f"Vocabulary: max_size must be at least 3, got {max_size}")
    counts = Counter()
    for doc in documents:
        for sentence in doc:
            counts.update(sentence)
    counts.pop(PAD_TOKEN, None)
    counts.pop(UNK_TOKEN, None)
    if not counts:
        raise VocabularyError("Vocabulary: cannot build from an empty corpus")
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    admitted = [token for token, freq in ranked if freq >= min_freq][: max_size - 2]
    logger.info(f"Vocabulary: {len(counts)} distinct tokens, admitted {len(admitted)} "
                f"(max_size={max_size}, min_freq={min_freq})")
    return Vocabulary(admitted, max_size)


@dataclass(frozen=True)
class EncodedSentence:
    ids: Tuple[int, ...]
    true_len: int


@dataclass(frozen=True)
class EncodedDocument:
    sku_id: str
    sentences: Tuple[EncodedSentence, ...]
    reference: Tuple[EncodedSentence, ...]
    # Truncated token lists aligned with the encodings, for ROUGE and display
    sentence_tokens: Tuple[Tuple[str, ...], ...]
    reference_tokens: Tuple[Tuple[str, ...], ...]
    relevance_labels: Optional[Tuple[bool, ...]] = None

    def __len__(self) -> int:
        return len(self.sentences)


def encode(tokens: Sequence[str], vocab: Vocabulary, max_sentence_len: int = MAX_SENTENCE_LEN) -> EncodedSentence:
    if not tokens:
        raise EncodingError("Encoder: cannot encode an empty sentence")
    kept = tokens[:max_sentence_len]
    ids = [vocab.lookup(t) for t in kept]
    ids.extend([vocab.pad_id] * (max_sentence_len - len(ids)))
    return EncodedSentence(ids=tuple(ids), true_len=len(kept))


def encode_document(doc, vocab: Vocabulary, max_sentence_len: int = MAX_SENTENCE_LEN,
                    max_doc_sentences: int = MAX_DOC_SENTENCES) -> EncodedDocument:
    """Encodes a corpus.Document; sentences past max_doc_sentences are dropped."""
    sentences = list(doc.sentences[:max_doc_sentences])
    if len(doc.sentences) > max_doc_sentences:
        logger.debug(f"Encoder: {doc.sku_id} truncated from {len(doc.sentences)} to {max_doc_sentences} sentences")
    labels = None
    if doc.relevance_labels is not None:
        labels = tuple(doc.relevance_labels[:max_doc_sentences])
    reference = list(doc.reference.sentences)
    return EncodedDocument(
        sku_id=doc.sku_id,
        sentences=tuple(encode(s, vocab, max_sentence_len) for s in sentences),
        reference=tuple(encode(r, vocab, max_sentence_len) for r in reference),
        sentence_tokens=tuple(tuple(s[:max_sentence_len]) for s in sentences),
        reference_tokens=tuple(tuple(r[:max_sentence_len]) for r in reference),
        relevance_labels=labels,
    )
