from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Sequence

from config import TITLE_WEIGHT
from errors import BaselineError
from logger import logger

BASELINE_MODES = ("unweighted", "weighted", "filtered")


@dataclass(frozen=True)
class IdfTable:
    doc_freq: Dict[str, int]
    num_docs: int

    def idf(self, token: str) -> float:
        # Ratio form without a logarithm, +1 in the denominator
        return self.num_docs / (1 + self.doc_freq.get(token, 0))

    def save(self, path: str):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"N\t{self.num_docs}\n")
            for token in sorted(self.doc_freq):
                f.write(f"{token}\t{self.doc_freq[token]}\n")
        logger.info(f"Baseline: Saved idf table ({len(self.doc_freq)} tokens, N={self.num_docs}) to {path}")

    @classmethod
    def load(cls, path: str) -> "IdfTable":
        try:
            with open(path, "r", encoding="utf-8") as f:
                lines = [line.rstrip("\n") for line in f if line.strip()]
        except OSError as e:
            raise BaselineError(f"Baseline: cannot read idf table {path}: {e}") from e
        if not lines or not lines[0].startswith("N\t"):
            raise BaselineError(f"Baseline: {path} is missing the N header line")
        try:
            num_docs = int(lines[0].split("\t", 1)[1])
            doc_freq = {}
            for line in lines[1:]:
                token, count = line.rsplit("\t", 1)
                doc_freq[token] = int(count)
        except ValueError as e:
            raise BaselineError(f"Baseline: malformed idf table {path}: {e}") from e
        return cls(doc_freq=doc_freq, num_docs=num_docs)


@dataclass(frozen=True)
class BaselineConfig:
    mode: str = "weighted"
    title_weight: float = TITLE_WEIGHT

    def __post_init__(self):
        if self.mode not in BASELINE_MODES:
            raise BaselineError(f"Baseline: unknown mode {self.mode!r}; expected one of {BASELINE_MODES}")
        if self.mode == "weighted" and self.title_weight < 1:
            raise BaselineError(f"Baseline: title weight must be at least 1, got {self.title_weight}")


def build_idf(corpus: Sequence) -> IdfTable:
    """corpus: corpus.Document values; a token counts once per SKU."""
    if not corpus:
        raise BaselineError("Baseline: cannot build idf from an empty corpus")
    doc_freq = Counter()
    for doc in corpus:
        doc_freq.update({token for sentence in doc.sentences for token in sentence})
    logger.info(f"Baseline: Built idf over {len(corpus)} SKUs, {len(doc_freq)} distinct tokens")
    return IdfTable(doc_freq=dict(doc_freq), num_docs=len(corpus))


def score_sentence(sentence: Sequence[str], title: Sequence[str], idf: IdfTable, cfg: BaselineConfig) -> float:
    title_tokens = set(title)
    score = 0.0
    for token, tf in Counter(sentence).items():
        tfidf = tf * idf.idf(token)
        if cfg.mode == "unweighted":
            score += tfidf
        elif cfg.mode == "weighted":
            score += tfidf * cfg.title_weight if token in title_tokens else tfidf
        elif token in title_tokens:
            score += tfidf
    return score


def baseline_scores(doc, idf: IdfTable, cfg: BaselineConfig) -> List[float]:
    return [score_sentence(s, doc.title, idf, cfg) for s in doc.sentences]


def baseline_rank(doc, idf: IdfTable, cfg: BaselineConfig, K: int) -> List[int]:
    if K < 1:
        raise BaselineError(f"Baseline: K must be at least 1, got {K}")
    scores = baseline_scores(doc, idf, cfg)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[:min(K, len(order))]
