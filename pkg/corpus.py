import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import (
    MIN_QUERY_CLICKS,
    QUERY_LIMIT,
    REFERENCE_TITLE_ONLY,
    REFERENCE_TITLE_PLUS_QUERIES,
    SYNTH_BULLETS_PER_DOC,
    SYNTH_DISTRACTOR_VOCAB,
    SYNTH_FILLER_VOCAB,
    SYNTH_PLANTED_PER_DOC,
    SYNTH_QUERIES_PER_DOC,
    SYNTH_SENTENCES_PER_DOC,
    SYNTH_TOPIC_VOCAB,
)
from errors import CatalogError
from logger import logger
from textprep import sku_sentences, tokenize

REFERENCE_MODES = (REFERENCE_TITLE_ONLY, REFERENCE_TITLE_PLUS_QUERIES)


@dataclass(frozen=True)
class RawSku:
    sku_id: str
    title: str
    description: str
    bullets: Tuple[str, ...] = ()
    queries: Tuple[Tuple[str, int], ...] = ()
    relevance_labels: Optional[Tuple[bool, ...]] = None

    def to_json(self) -> dict:
        record = {
            "sku_id": self.sku_id,
            "title": self.title,
            "description": self.description,
            "bullets": list(self.bullets),
            "queries": [{"text": text, "clicks": clicks} for text, clicks in self.queries],
        }
        if self.relevance_labels is not None:
            record["relevance_labels"] = list(self.relevance_labels)
        return record


@dataclass(frozen=True)
class ReferenceSummary:
    sentences: Tuple[Tuple[str, ...], ...]


@dataclass(frozen=True)
class Document:
    sku_id: str
    sentences: Tuple[Tuple[str, ...], ...]
    reference: ReferenceSummary
    relevance_labels: Optional[Tuple[bool, ...]] = None
    title: Tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.sentences)


def _parse_record(obj, line_number: int) -> RawSku:
    if not isinstance(obj, dict):
        raise CatalogError("record is not a JSON object", line_number=line_number)
    sku_id = obj.get("sku_id")
    if not isinstance(sku_id, str) or not sku_id:
        raise CatalogError("sku_id must be a nonempty string", line_number=line_number)
    title = obj.get("title", "")
    description = obj.get("description", "")
    bullets = obj.get("bullets", [])
    if not isinstance(title, str) or not isinstance(description, str):
        raise CatalogError("title and description must be strings", line_number=line_number, sku_id=sku_id)
    if not isinstance(bullets, list) or not all(isinstance(b, str) for b in bullets):
        raise CatalogError("bullets must be a list of strings", line_number=line_number, sku_id=sku_id)
    queries = []
    for q in obj.get("queries", []):
        if not isinstance(q, dict) or not isinstance(q.get("text"), str):
            raise CatalogError("each query needs a text field", line_number=line_number, sku_id=sku_id)
        clicks = q.get("clicks", 0)
        if isinstance(clicks, bool) or not isinstance(clicks, int) or clicks < 0:
            raise CatalogError(f"query {q['text']!r} has invalid clicks {clicks!r}",
                               line_number=line_number, sku_id=sku_id)
        queries.append((q["text"], clicks))
    labels = obj.get("relevance_labels")
    if labels is not None:
        if not isinstance(labels, list) or not all(isinstance(x, bool) for x in labels):
            raise CatalogError("relevance_labels must be a list of booleans",
                               line_number=line_number, sku_id=sku_id)
        labels = tuple(labels)
    return RawSku(
        sku_id=sku_id,
        title=title,
        description=description,
        bullets=tuple(bullets),
        queries=tuple(queries),
        relevance_labels=labels,
    )


def read_catalog(path: str) -> List[RawSku]:
    """Parses a JSON Lines catalog, checking record shape and sku_id uniqueness."""
    skus = []
    seen = {}
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as e:
        raise CatalogError(f"cannot open catalog {path}: {e}") from e
    with f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CatalogError(f"malformed JSON: {e.msg}", line_number=line_number) from e
            raw = _parse_record(obj, line_number)
            if raw.sku_id in seen:
                raise CatalogError(f"duplicate sku_id {raw.sku_id} (first seen on line {seen[raw.sku_id]})",
                                   line_number=line_number, sku_id=raw.sku_id)
            seen[raw.sku_id] = line_number
            skus.append(raw)
    logger.debug(f"Corpus: Read {len(skus)} records from {path}")
    return skus


def write_catalog(skus: Sequence[RawSku], path: str):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for raw in skus:
            f.write(json.dumps(raw.to_json(), ensure_ascii=False) + "\n")
    logger.info(f"Corpus: Wrote {len(skus)} records to {path}")


def select_top_queries(queries: Sequence[Tuple[str, int]], limit: int) -> List[str]:
    """
    Merges queries that normalize to the same text (summing clicks), then
    orders by clicks descending with ties broken by text ascending.
    """
    merged: Dict[str, int] = {}
    for text, clicks in queries:
        key = " ".join(tokenize(text))
        if not key:
            continue
        merged[key] = merged.get(key, 0) + clicks
    ranked = sorted(merged.items(), key=lambda item: (-item[1], item[0]))
    return [text for text, _ in ranked[:limit]]


def qualifies_for_queries(raw: RawSku, min_clicks: int = MIN_QUERY_CLICKS) -> bool:
    return any(clicks >= min_clicks for _, clicks in raw.queries)


def build_reference(raw: RawSku, mode: str, query_limit: int = QUERY_LIMIT,
                    min_clicks: int = MIN_QUERY_CLICKS) -> ReferenceSummary:
    title = tuple(tokenize(raw.title))
    sentences = [title]
    if mode == REFERENCE_TITLE_PLUS_QUERIES:
        clicked = [(text, clicks) for text, clicks in raw.queries if clicks >= min_clicks]
        for text in select_top_queries(clicked, query_limit):
            sentences.append(tuple(text.split(" ")))
    return ReferenceSummary(sentences=tuple(sentences))


def to_document(raw: RawSku, mode: str, query_limit: int = QUERY_LIMIT,
                min_clicks: int = MIN_QUERY_CLICKS) -> Document:
    sentences = tuple(tuple(s) for s in sku_sentences(raw.description, raw.bullets))
    if not sentences:
        raise CatalogError("no sentences in description or bullets", sku_id=raw.sku_id)
    if raw.relevance_labels is not None and len(raw.relevance_labels) != len(sentences):
        raise CatalogError(f"{len(raw.relevance_labels)} relevance labels for {len(sentences)} sentences",
                           sku_id=raw.sku_id)
    reference = build_reference(raw, mode, query_limit, min_clicks)
    return Document(
        sku_id=raw.sku_id,
        sentences=sentences,
        reference=reference,
        relevance_labels=raw.relevance_labels,
        title=reference.sentences[0],
    )


def load_catalog(path: str, mode: str = REFERENCE_TITLE_ONLY, query_limit: int = QUERY_LIMIT,
                 min_clicks: int = MIN_QUERY_CLICKS) -> List[Document]:
    if mode not in REFERENCE_MODES:
        raise CatalogError(f"unknown reference mode {mode!r}; expected one of {REFERENCE_MODES}")
    documents = []
    skipped_title = 0
    skipped_empty = 0
    skipped_engagement = 0
    for raw in read_catalog(path):
        if not tokenize(raw.title):
            skipped_title += 1
            logger.debug(f"Corpus: Skipping {raw.sku_id}, empty title")
            continue
        if not sku_sentences(raw.description, raw.bullets):
            skipped_empty += 1
            logger.debug(f"Corpus: Skipping {raw.sku_id}, no sentences in description or bullets")
            continue
        if mode == REFERENCE_TITLE_PLUS_QUERIES and not qualifies_for_queries(raw, min_clicks):
            skipped_engagement += 1
            logger.debug(f"Corpus: Skipping {raw.sku_id}, no query with {min_clicks}+ clicks")
            continue
        documents.append(to_document(raw, mode, query_limit, min_clicks))
    if skipped_title:
        logger.warning(f"Corpus: Skipped {skipped_title} records with an empty title in {path}")
    if skipped_empty:
        logger.warning(f"Corpus: Skipped {skipped_empty} records with no description sentences in {path}")
    if skipped_engagement:
        logger.warning(f"Corpus: Skipped {skipped_engagement} records below the engagement threshold in {path}")
    logger.info(f"Corpus: Loaded {len(documents)} documents from {path} ({mode})")
    return documents


def split_corpus(documents: Sequence, held_out: int, seed: int) -> Tuple[list, list]:
    """Deterministic split into (train, held_out)."""
    if held_out < 0 or held_out >= len(documents):
        raise CatalogError(f"cannot hold out {held_out} of {len(documents)} documents")
    order = np.random.default_rng(seed).permutation(len(documents))
    held = set(order[:held_out].tolist())
    train = [d for i, d in enumerate(documents) if i not in held]
    test = [d for i, d in enumerate(documents) if i in held]
    return train, test


@dataclass(frozen=True)
class SyntheticSpec:
    sentences_per_doc: int = SYNTH_SENTENCES_PER_DOC
    planted_per_doc: int = SYNTH_PLANTED_PER_DOC
    bullets_per_doc: int = SYNTH_BULLETS_PER_DOC
    topic_vocab: int = SYNTH_TOPIC_VOCAB
    filler_vocab: int = SYNTH_FILLER_VOCAB
    distractor_vocab: int = SYNTH_DISTRACTOR_VOCAB
    queries_per_doc: int = SYNTH_QUERIES_PER_DOC
    title_len: int = 4

    @classmethod
    def from_settings(cls, settings) -> "SyntheticSpec":
        return cls(
            sentences_per_doc=settings.synth_sentences_per_doc,
            planted_per_doc=settings.synth_planted_per_doc,
            bullets_per_doc=settings.synth_bullets_per_doc,
            topic_vocab=settings.synth_topic_vocab,
            filler_vocab=settings.synth_filler_vocab,
            distractor_vocab=settings.synth_distractor_vocab,
            queries_per_doc=settings.synth_queries_per_doc,
        )


_SYLLABLES = ("ba", "ko", "mi", "ru", "te", "sa", "no", "li", "da", "ve", "po", "ga")


def _word(prefix: str, index: int) -> str:
    # Pronounceable, lowercase, collision-free across prefixes
    parts = []
    value = index
    while True:
        parts.append(_SYLLABLES[value % len(_SYLLABLES)])
        value //= len(_SYLLABLES)
        if value == 0:
            break
    return prefix + "".join(parts)


def _sentence_text(words: Sequence[str]) -> str:
    text = " ".join(words)
    return text[0].upper() + text[1:]


def generate_synthetic_corpus(seed: int, num_docs: int, spec: SyntheticSpec = SyntheticSpec()) -> List[RawSku]:
    """
    Builds labeled SKUs whose planted sentences share words with the title
    and queries while distractors draw from a disjoint vocabulary, so a
    planted sentence always out-scores every distractor under ROUGE.
    """
    if num_docs < 1:
        raise CatalogError(f"num_docs must be positive, got {num_docs}")
    if spec.planted_per_doc > spec.sentences_per_doc:
        raise CatalogError(f"planted count {spec.planted_per_doc} exceeds "
                           f"sentences per doc {spec.sentences_per_doc}")
    if spec.planted_per_doc < 0 or spec.sentences_per_doc < 1:
        raise CatalogError("sentence counts must be positive")
    if spec.topic_vocab < spec.title_len + spec.queries_per_doc:
        raise CatalogError("topic vocabulary too small for title and queries")
    rng = np.random.default_rng(seed)
    # Disjoint word pools
    topic = [_word("t", i) for i in range(spec.topic_vocab)]
    filler = [_word("f", i) for i in range(spec.filler_vocab)]
    distractor = [_word("d", i) for i in range(spec.distractor_vocab)]
    bullets_per_doc = min(spec.bullets_per_doc, spec.sentences_per_doc - 1)

    skus = []
    for doc_index in range(num_docs):
        # Title and query words come from the topic pool
        picked = rng.choice(len(topic), size=spec.title_len + spec.queries_per_doc, replace=False)
        title_words = [topic[i] for i in picked[:spec.title_len]]
        query_words = [topic[i] for i in picked[spec.title_len:]]

        # Each query pairs one title word with one query word
        queries = []
        for word in query_words:
            partner = title_words[int(rng.integers(len(title_words)))]
            queries.append((f"{partner} {word}", int(rng.integers(1, 50))))

        planted_slots = set(rng.choice(spec.sentences_per_doc, size=spec.planted_per_doc, replace=False).tolist())
        sentences = []
        labels = []
        for slot in range(spec.sentences_per_doc):
            if slot in planted_slots:
                # Planted sentences mix title and query words with filler
                anchors = rng.choice(len(title_words), size=2, replace=False)
                words = [title_words[i] for i in anchors]
                if query_words:
                    words.append(query_words[int(rng.integers(len(query_words)))])
                n_filler = int(rng.integers(2, 5))
                words.extend(filler[i] for i in rng.integers(len(filler), size=n_filler))
                order = rng.permutation(len(words))
                words = [words[i] for i in order]
                labels.append(True)
            else:
                # Distractor: long, with at most one shared filler word
                n_words = int(rng.integers(7, 13))
                words = [distractor[i] for i in rng.integers(len(distractor), size=n_words)]
                if filler:
                    words.insert(int(rng.integers(len(words) + 1)), filler[int(rng.integers(len(filler)))])
                labels.append(False)
            sentences.append(_sentence_text(words))

        split = spec.sentences_per_doc - bullets_per_doc
        skus.append(RawSku(
            sku_id=f"synth-{seed}-{doc_index:06d}",
            title=_sentence_text(title_words),
            description=". ".join(sentences[:split]) + ".",
            bullets=tuple(sentences[split:]),
            queries=tuple(queries),
            relevance_labels=tuple(labels),
        ))
    logger.info(f"Corpus: Generated {len(skus)} synthetic SKUs (seed={seed})")
    return skus
