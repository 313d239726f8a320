import itertools
import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

from tqdm import tqdm

from config import ORACLE_K, ORACLE_M, ORACLE_P
from errors import OracleError
from logger import logger
from rouge import reward
from textprep import EncodedDocument


@dataclass(frozen=True)
class OracleConfig:
    p: int = ORACLE_P
    m: int = ORACLE_M
    k: int = ORACLE_K

    def __post_init__(self):
        if self.p < 1 or self.m < 1 or self.k < 1:
            raise OracleError(f"Oracle: p, m, k must be positive, got p={self.p} m={self.m} k={self.k}")
        if self.m > self.p:
            raise OracleError(f"Oracle: m={self.m} cannot exceed p={self.p}")


@dataclass(frozen=True)
class CandidateExtract:
    sentence_indices: Tuple[int, ...]
    reward: float


@dataclass(frozen=True)
class CandidateSet:
    doc_id: str
    candidates: Tuple[CandidateExtract, ...]

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def best(self) -> CandidateExtract:
        return self.candidates[0]


def extract_reward(doc: EncodedDocument, indices: Iterable[int]) -> float:
    """Mean ROUGE F1 of the given sentences, taken in document order."""
    ordered = sorted(indices)
    return reward([doc.sentence_tokens[i] for i in ordered], doc.reference_tokens).mean_f1


def _rank_key(candidate: CandidateExtract):
    # Higher reward first, then fewer sentences, then the smaller index tuple
    return (-candidate.reward, len(candidate.sentence_indices), candidate.sentence_indices)


def shortlist(doc: EncodedDocument, p: int) -> List[int]:
    if len(doc) == 0:
        raise OracleError(f"Oracle: document {doc.sku_id} has no sentences")
    # Each sentence scored on its own, earlier sentence wins ties
    scored = [(extract_reward(doc, [i]), i) for i in range(len(doc))]
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [i for _, i in scored[:min(p, len(doc))]]


def build_candidate_set(doc: EncodedDocument, cfg: OracleConfig = OracleConfig()) -> CandidateSet:
    # Only the best single sentences enter the enumeration
    pool = sorted(shortlist(doc, cfg.p))
    # Every non-empty subset of the shortlist up to m sentences
    candidates = []
    for size in range(1, min(cfg.m, len(pool)) + 1):
        for combo in itertools.combinations(pool, size):
            candidates.append(CandidateExtract(sentence_indices=combo, reward=extract_reward(doc, combo)))
    candidates.sort(key=_rank_key)
    logger.debug(f"Oracle: {doc.sku_id} enumerated {len(candidates)} extracts, "
                 f"best {candidates[0].sentence_indices} reward {candidates[0].reward:.4f}")
    return CandidateSet(doc_id=doc.sku_id, candidates=tuple(candidates[:cfg.k]))


def build_candidate_sets(docs: Sequence[EncodedDocument], cfg: OracleConfig = OracleConfig(),
                         progress: bool = False) -> Dict[str, CandidateSet]:
    logger.info(f"Oracle: Building candidate sets for {len(docs)} documents (p={cfg.p}, m={cfg.m}, k={cfg.k})")
    sets = {}
    for doc in tqdm(docs, desc="Oracle", disable=not progress):
        sets[doc.sku_id] = build_candidate_set(doc, cfg)
    return sets


def best_extract_labels(cs: CandidateSet, n: int) -> List[int]:
    chosen = set(cs.best.sentence_indices)
    if chosen and max(chosen) >= n:
        raise OracleError(f"Oracle: best extract of {cs.doc_id} indexes past {n} sentences")
    return [1 if i in chosen else 0 for i in range(n)]


def save_candidate_sets(sets: Dict[str, CandidateSet], path: str):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for sku_id in sorted(sets):
            cs = sets[sku_id]
            record = {
                "sku_id": sku_id,
                "candidates": [
                    {"indices": list(c.sentence_indices), "reward": c.reward} for c in cs.candidates
                ],
            }
            f.write(json.dumps(record) + "\n")
    logger.info(f"Oracle: Saved {len(sets)} candidate sets to {path}")


def load_candidate_sets(path: str) -> Dict[str, CandidateSet]:
    sets = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    candidates = tuple(
                        CandidateExtract(sentence_indices=tuple(c["indices"]), reward=float(c["reward"]))
                        for c in record["candidates"]
                    )
                    sku_id = record["sku_id"]
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise OracleError(f"Oracle: bad candidate record on line {line_number} of {path}: {e}") from e
                if not candidates:
                    raise OracleError(f"Oracle: empty candidate set for {sku_id} on line {line_number}")
                sets[sku_id] = CandidateSet(doc_id=sku_id, candidates=candidates)
    except OSError as e:
        raise OracleError(f"Oracle: cannot read {path}: {e}") from e
    logger.info(f"Oracle: Loaded {len(sets)} candidate sets from {path}")
    return sets
