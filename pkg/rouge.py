from collections import Counter
from dataclasses import dataclass
from typing import Hashable, List, Sequence, Tuple

from errors import RougeError


@dataclass(frozen=True)
class RougeScores:
    rouge1_f1: float
    rouge2_f1: float
    rougeL_f1: float
    mean_f1: float


def _f1(overlap: int, candidate_total: int, reference_total: int) -> float:
    if overlap == 0 or candidate_total == 0 or reference_total == 0:
        return 0.0
    precision = overlap / candidate_total
    recall = overlap / reference_total
    return 2.0 * precision * recall / (precision + recall)


def _ngrams(tokens: Sequence[Hashable], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def ngram_overlap(candidate: Sequence[Hashable], reference: Sequence[Hashable], n: int) -> Tuple[int, int, int]:
    """(clipped overlap, candidate n-gram count, reference n-gram count)"""
    if n not in (1, 2):
        raise RougeError(f"ROUGE: n must be 1 or 2, got {n}")
    cand = _ngrams(candidate, n)
    ref = _ngrams(reference, n)
    overlap = sum((cand & ref).values())
    return overlap, sum(cand.values()), sum(ref.values())


def ngram_f1(candidate: Sequence[Hashable], reference: Sequence[Hashable], n: int) -> float:
    return _f1(*ngram_overlap(candidate, reference, n))


def lcs_length(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    if not a or not b:
        return 0
    # Single rolling row over b
    prev = [0] * (len(b) + 1)
    for x in a:
        row = [0]
        for j, y in enumerate(b):
            if x == y:
                row.append(prev[j] + 1)
            else:
                row.append(max(prev[j + 1], row[j]))
        prev = row
    return prev[-1]


def lcs_f1(candidate: Sequence[Hashable], reference: Sequence[Hashable]) -> float:
    return _f1(lcs_length(candidate, reference), len(candidate), len(reference))


def detail(candidate: Sequence[Hashable], reference: Sequence[Hashable]) -> dict:
    """Precision / recall / F1 for each metric, keyed rouge1, rouge2, rougeL."""
    out = {}
    for name, (overlap, cand_total, ref_total) in (
        ("rouge1", ngram_overlap(candidate, reference, 1)),
        ("rouge2", ngram_overlap(candidate, reference, 2)),
        ("rougeL", (lcs_length(candidate, reference), len(candidate), len(reference))),
    ):
        out[name] = {
            "precision": overlap / cand_total if cand_total else 0.0,
            "recall": overlap / ref_total if ref_total else 0.0,
            "f1": _f1(overlap, cand_total, ref_total),
        }
    return out


def _concat(sentences: Sequence[Sequence[Hashable]]) -> List[Hashable]:
    joined = []
    for sentence in sentences:
        joined.extend(sentence)
    return joined


def reward(extract_sentences: Sequence[Sequence[Hashable]],
           reference_sentences: Sequence[Sequence[Hashable]]) -> RougeScores:
    """
    Summary-level ROUGE of an extract against the reference summary.
    Both sides are concatenated in the order given; mean_f1 is the RL reward.
    """
    if not extract_sentences:
        raise RougeError("ROUGE: extract has no sentences")
    if not reference_sentences:
        raise RougeError("ROUGE: reference has no sentences")
    candidate = _concat(extract_sentences)
    reference = _concat(reference_sentences)
    r1 = ngram_f1(candidate, reference, 1)
    r2 = ngram_f1(candidate, reference, 2)
    rl = lcs_f1(candidate, reference)
    return RougeScores(rouge1_f1=r1, rouge2_f1=r2, rougeL_f1=rl, mean_f1=(r1 + r2 + rl) / 3)
