from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from baseline import BaselineConfig, IdfTable, baseline_scores, build_idf
from errors import EvaluationError
from logger import logger
from rank import rank_document
from textprep import encode_document

EVAL_KS = (1, 2, 3)

# A system maps a corpus.Document to a full ranking of its sentence indices
Ranker = Callable[[object], Sequence[int]]


def precision_at_k(ranked_indices: Sequence[int], labels: Sequence[bool], k: int) -> float:
    if k < 1:
        raise EvaluationError(f"k must be at least 1, got {k}")
    if not labels:
        raise EvaluationError("no relevance labels")
    cutoff = min(k, len(ranked_indices))
    if cutoff == 0:
        raise EvaluationError("empty ranking")
    top = ranked_indices[:cutoff]
    return sum(1 for i in top if labels[i]) / cutoff


@dataclass
class EvalReport:
    rows: Dict[str, Dict[int, float]]
    num_docs: int
    ks: Tuple[int, ...] = EVAL_KS
    # (system, other, k) -> (system - other) / other
    deltas: Dict[Tuple[str, str, int], float] = field(default_factory=dict)

    def relative_delta(self, system: str, other: str, k: int) -> float:
        base = self.rows[other][k]
        if base == 0:
            return float("nan")
        return (self.rows[system][k] - base) / base

    def to_frame(self) -> pd.DataFrame:
        records = [
            {"system": name, "k": k, "precision": values[k], "num_docs": self.num_docs}
            for name, values in self.rows.items()
            for k in self.ks
        ]
        return pd.DataFrame.from_records(records, columns=["system", "k", "precision", "num_docs"])

    def to_csv(self, path: str):
        self.to_frame().to_csv(path, index=False)
        logger.info(f"Evaluator: Report written to {path}")

    def format_table(self, reference: Optional[str] = None) -> str:
        table = pd.DataFrame(
            {f"p@{k}": [self.rows[name][k] for name in self.rows] for k in self.ks},
            index=list(self.rows),
        )
        if reference is not None and reference in self.rows:
            for k in self.ks:
                table[f"Δ@{k} vs {reference}"] = [self.relative_delta(name, reference, k) for name in self.rows]
        return f"{table.to_string(float_format=lambda v: f'{v:.4f}')}\n(documents: {self.num_docs})"


def _labels(doc) -> Sequence[bool]:
    labels = doc.relevance_labels
    if labels is None:
        raise EvaluationError("document has no relevance labels", sku_id=doc.sku_id)
    if len(labels) != len(doc.sentences):
        raise EvaluationError(f"{len(labels)} labels for {len(doc.sentences)} sentences", sku_id=doc.sku_id)
    return labels


def evaluate_systems(corpus: Sequence, systems: Mapping[str, Ranker], ks: Sequence[int] = EVAL_KS) -> EvalReport:
    """Macro-averaged precision@k of every system over the same documents."""
    if not corpus:
        raise EvaluationError("empty evaluation corpus")
    if not systems:
        raise EvaluationError("no systems to evaluate")
    per_system = {name: {k: [] for k in ks} for name in systems}
    for doc in corpus:
        labels = _labels(doc)
        for name, ranker in systems.items():
            ranked = list(ranker(doc))
            if not ranked or any(i < 0 or i >= len(labels) for i in ranked):
                raise EvaluationError(f"system {name} returned an invalid ranking", sku_id=doc.sku_id)
            for k in ks:
                per_system[name][k].append(precision_at_k(ranked, labels, k))
    rows = {name: {k: float(np.mean(values[k])) for k in ks} for name, values in per_system.items()}
    report = EvalReport(rows=rows, num_docs=len(corpus), ks=tuple(ks))
    for a in rows:
        for b in rows:
            if a != b:
                for k in ks:
                    report.deltas[(a, b, k)] = report.relative_delta(a, b, k)
    logger.info(f"Evaluator: Evaluated {len(systems)} systems on {len(corpus)} documents")
    return report


def baseline_system(idf: IdfTable, cfg: BaselineConfig) -> Ranker:
    def ranker(doc):
        scores = baseline_scores(doc, idf, cfg)
        return sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return ranker


def neural_system(params, vocab, max_sentence_len: int, max_doc_sentences: int) -> Ranker:
    def ranker(doc):
        encoded = encode_document(doc, vocab, max_sentence_len, max_doc_sentences)
        return rank_document(encoded, params, len(encoded), vocab).ranked_indices
    return ranker


@dataclass
class SweepResult:
    table: pd.DataFrame              # one row per weight, columns p@k
    best_weight: Dict[int, float]    # argmax per k, smallest weight on ties

    def format_table(self) -> str:
        marked = self.table.copy()
        for k, weight in self.best_weight.items():
            marked[f"best@{k}"] = ["*" if w == weight else "" for w in marked["weight"]]
        return marked.to_string(index=False, float_format=lambda v: f"{v:.4f}")


def sweep_title_weight(corpus: Sequence, weights: Sequence[float], idf: Optional[IdfTable] = None,
                       ks: Sequence[int] = EVAL_KS) -> SweepResult:
    """Grid search over the weighted baseline's title weight."""
    if not weights:
        raise EvaluationError("no weights to sweep")
    idf = idf or build_idf(corpus)
    systems = {f"w={w:g}": baseline_system(idf, BaselineConfig(mode="weighted", title_weight=w)) for w in weights}
    report = evaluate_systems(corpus, systems, ks)
    records: List[dict] = []
    for w, name in zip(weights, systems):
        row = {"weight": float(w)}
        row.update({f"p@{k}": report.rows[name][k] for k in ks})
        records.append(row)
    table = pd.DataFrame.from_records(records)
    best = {}
    for k in ks:
        column = table[f"p@{k}"]
        candidates = table.loc[column == column.max(), "weight"]
        best[k] = float(candidates.min())
    logger.info(f"Evaluator: Title weight sweep best per k: {best}")
    return SweepResult(table=table, best_weight=best)
