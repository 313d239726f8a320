import json
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch

from config import TOP_K
from errors import SkuRankError, VocabularyMismatchError
from logger import logger
from neural import ModelParams, score_document
from textprep import EncodedDocument, Vocabulary


@dataclass(frozen=True)
class RankedSummary:
    sku_id: str
    ranked_indices: Tuple[int, ...]
    top_k_indices: Tuple[int, ...]
    scores: Tuple[float, ...]  # aligned with ranked_indices


def rank_scores(scores: Sequence[float], K: int) -> Tuple[List[int], List[int]]:
    """Stable descending order (earlier sentence wins ties) and its top-K prefix."""
    if K < 1:
        raise SkuRankError(f"Ranker: K must be at least 1, got {K}")
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return ranked, ranked[:min(K, len(ranked))]


def rank_document(doc: EncodedDocument, params: ModelParams, K: int = TOP_K,
                  vocab: Optional[Vocabulary] = None) -> RankedSummary:
    if vocab is not None and vocab.fingerprint() != params.vocab_hash:
        raise VocabularyMismatchError(f"Ranker: {doc.sku_id} encoded with a vocabulary the model was not trained on")
    with torch.no_grad():
        scores = score_document(doc, params).scores
    ranked, top = rank_scores(scores, K)
    return RankedSummary(
        sku_id=doc.sku_id,
        ranked_indices=tuple(ranked),
        top_k_indices=tuple(top),
        scores=tuple(scores[i] for i in ranked),
    )


def write_rankings(summaries: Sequence[RankedSummary], docs: Sequence, path: str):
    """docs: EncodedDocument or corpus.Document values, used for the sentence text."""
    by_id = {d.sku_id: d for d in docs}
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for summary in summaries:
            doc = by_id[summary.sku_id]
            sentences = doc.sentence_tokens if isinstance(doc, EncodedDocument) else doc.sentences
            record = {
                "sku_id": summary.sku_id,
                "ranked_indices": list(summary.ranked_indices),
                "top_k_indices": list(summary.top_k_indices),
                "scores": list(summary.scores),
                "sentences": [" ".join(sentences[i]) for i in summary.ranked_indices],
            }
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    logger.info(f"Ranker: Wrote {len(summaries)} rankings to {path}")
