import math
import os
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from config import BATCH_SIZE, EPOCHS, GRAD_CLIP, LEARNING_RATE, OPTIMIZER, REWARD_BASELINE, SEED, TOP_K, WARMSTART_EPOCHS
from errors import TrainingError
from evaluate import precision_at_k
from logger import logger
from neural import DTYPE, ModelParams, NetworkConfig, ScoredDocument, backward, save_checkpoint, score_document
from oracle import CandidateExtract, CandidateSet, best_extract_labels, extract_reward
from rank import rank_scores
from textprep import EncodedDocument

OPTIMIZERS = ("sgd_momentum", "adaptive_moments")
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = EPOCHS
    warmstart_epochs: int = WARMSTART_EPOCHS
    batch_size: int = BATCH_SIZE
    learning_rate: float = LEARNING_RATE
    optimizer: str = OPTIMIZER
    grad_clip: float = GRAD_CLIP
    seed: int = SEED
    reward_baseline: bool = REWARD_BASELINE

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise TrainingError("epochs and batch_size must be positive")
        if not 0 <= self.warmstart_epochs <= self.epochs:
            raise TrainingError(f"warmstart_epochs {self.warmstart_epochs} must lie in [0, epochs]")
        if self.learning_rate < 0:
            raise TrainingError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if self.grad_clip <= 0:
            raise TrainingError(f"grad_clip must be positive, got {self.grad_clip}")
        if self.optimizer not in OPTIMIZERS:
            raise TrainingError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")

    @classmethod
    def from_settings(cls, settings) -> "TrainConfig":
        return cls(
            epochs=settings.epochs,
            warmstart_epochs=settings.warmstart_epochs,
            batch_size=settings.batch_size,
            learning_rate=settings.learning_rate,
            optimizer=settings.optimizer,
            grad_clip=settings.grad_clip,
            seed=settings.seed,
            reward_baseline=settings.reward_baseline,
        )


@dataclass
class TrainStats:
    # Reward of the model's own top extract (scored before each update)
    mean_reward: List[float] = field(default_factory=list)
    mean_loss: List[float] = field(default_factory=list)
    val_precision_at_3: List[Optional[float]] = field(default_factory=list)
    # Reward of the extracts sampled from the candidate sets (RL epochs only)
    mean_sampled_reward: List[Optional[float]] = field(default_factory=list)
    epoch_seconds: List[float] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "epoch": range(1, len(self.mean_reward) + 1),
            "mean_reward": self.mean_reward,
            "mean_loss": self.mean_loss,
            "val_precision@3": self.val_precision_at_3,
        })


def sample_extract(cs: CandidateSet, rng: np.random.Generator) -> CandidateExtract:
    """Uniform draw from the candidate set."""
    return cs.candidates[int(rng.integers(len(cs.candidates)))]


def _targets(n: int, indices) -> torch.Tensor:
    onehot = torch.zeros(n, 2, dtype=DTYPE)
    chosen = set(indices)
    for i in range(n):
        onehot[i, 1 if i in chosen else 0] = 1.0
    return onehot


def _log_likelihood_terms(scores: ScoredDocument, targets: torch.Tensor):
    probs = scores.probabilities
    log_probs = torch.log(torch.clamp(probs, min=PROB_FLOOR))
    picked = (log_probs * targets).sum(dim=1)
    # Rows whose target probability sits on the floor have a constant loss term
    active = ((probs * targets).sum(dim=1) >= PROB_FLOOR).to(DTYPE).unsqueeze(1)
    return probs, picked, active


def rl_loss(scores: ScoredDocument, extract: CandidateExtract, baseline: float = 0.0) -> Tuple[float, torch.Tensor]:
    """
    -(r - baseline) * sum_i log p(y_i = yhat_i); returns the loss and its
    gradient with respect to the logits.
    """
    if not 0.0 <= extract.reward <= 1.0 + 1e-12:
        raise TrainingError(f"reward {extract.reward} outside [0, 1]")
    weight = extract.reward - baseline
    targets = _targets(len(scores), extract.sentence_indices)
    probs, picked, active = _log_likelihood_terms(scores, targets)
    loss = -weight * picked.sum().item()
    grad = -weight * (targets - probs) * active
    return loss, grad


def xe_loss(scores: ScoredDocument, labels: Sequence[int]) -> Tuple[float, torch.Tensor]:
    n = len(scores)
    if len(labels) != n:
        raise TrainingError(f"{len(labels)} labels for {n} sentences")
    targets = _targets(n, [i for i, label in enumerate(labels) if label])
    probs, picked, active = _log_likelihood_terms(scores, targets)
    loss = -picked.mean().item()
    grad = -(targets - probs) * active / n
    return loss, grad


def merge_gradients(total: Optional[Dict[str, torch.Tensor]], grads: Mapping[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
    if total is None:
        return OrderedDict((name, g.clone()) for name, g in grads.items())
    for name, g in grads.items():
        total[name] += g
    return total


def document_gradient(doc: EncodedDocument, params: ModelParams, extract: Optional[CandidateExtract] = None,
                      labels: Optional[Sequence[int]] = None, baseline: float = 0.0):
    """
    One forward/backward pass. With `extract` the REINFORCE loss is used,
    otherwise cross-entropy on `labels`. Returns (loss, scores, grads).
    """
    scored = score_document(doc, params)
    if extract is not None:
        loss, grad_logits = rl_loss(scored, extract, baseline)
    else:
        loss, grad_logits = xe_loss(scored, labels)
    return loss, scored, backward(grad_logits, scored, params)


def accumulate_gradients(params: ModelParams, docs: Sequence[EncodedDocument],
                         extracts: Sequence[CandidateExtract]) -> Dict[str, torch.Tensor]:
    """Summed REINFORCE gradients of several documents against fixed extracts."""
    total = None
    for doc, extract in zip(docs, extracts):
        _, _, grads = document_gradient(doc, params, extract=extract)
        total = merge_gradients(total, grads)
    return total


def global_norm(grads: Mapping[str, torch.Tensor]) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads.values()))


def clip_gradients(params: ModelParams, max_norm: float) -> float:
    """Rescales the .grad tensors to global norm <= max_norm; returns the norm before clipping."""
    return float(torch.nn.utils.clip_grad_norm_(list(params.parameters()), max_norm))


class Trainer:
    def __init__(self, params: ModelParams, cfg: TrainConfig, out_dir: Optional[str] = None,
                 validation: Optional[Sequence[EncodedDocument]] = None, top_k: int = TOP_K,
                 progress: bool = False):
        logger.info(f"Trainer: Initializing ({cfg.optimizer}, lr={cfg.learning_rate}, "
                    f"epochs={cfg.epochs}, warm start={cfg.warmstart_epochs})")
        self.params = params
        self.cfg = cfg
        self.out_dir = out_dir
        self.validation = [d for d in (validation or []) if d.relevance_labels is not None]
        self.top_k = top_k
        self.progress = progress
        self.rng = np.random.default_rng(cfg.seed)
        if cfg.optimizer == "sgd_momentum":
            self.optimizer = torch.optim.SGD(params.parameters(), lr=cfg.learning_rate, momentum=0.9)
        else:
            self.optimizer = torch.optim.Adam(params.parameters(), lr=cfg.learning_rate)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)

    def _step(self, total: Dict[str, torch.Tensor]):
        for name, p in self.params.named_parameters():
            p.grad = total[name]
        clip_gradients(self.params, self.cfg.grad_clip)
        self.optimizer.step()
        self.optimizer.zero_grad(set_to_none=True)
        self.params.zero_pad_row()

    def validate(self) -> Optional[float]:
        if not self.validation:
            return None
        precisions = []
        with torch.no_grad():
            for doc in self.validation:
                ranked = rank_scores(score_document(doc, self.params).scores, self.top_k)[0]
                precisions.append(precision_at_k(ranked, doc.relevance_labels, 3))
        return float(np.mean(precisions))

    def run_epoch(self, epoch: int, docs: Sequence[EncodedDocument], candidate_sets: Mapping[str, CandidateSet]):
        warm = epoch <= self.cfg.warmstart_epochs
        phase = "warm start" if warm else "reinforce"
        order = self.rng.permutation(len(docs))
        losses, rewards, sampled = [], [], []
        total = None
        pending = 0
        for position in tqdm(order, desc=f"Epoch {epoch}/{self.cfg.epochs} ({phase})", disable=not self.progress):
            doc = docs[int(position)]
            cs = candidate_sets[doc.sku_id]
            if warm:
                # Cross-entropy on the best candidate extract
                loss, scored, grads = document_gradient(doc, self.params, labels=best_extract_labels(cs, len(doc)))
            else:
                # Reinforce against one uniformly sampled candidate
                extract = sample_extract(cs, self.rng)
                baseline = float(np.mean([c.reward for c in cs.candidates])) if self.cfg.reward_baseline else 0.0
                loss, scored, grads = document_gradient(doc, self.params, extract=extract, baseline=baseline)
                sampled.append(extract.reward)
            if not math.isfinite(loss):
                raise TrainingError("non-finite loss", epoch=epoch, sku_id=doc.sku_id)
            # Track the reward of the model's own top extract
            top = rank_scores(scored.scores, min(self.top_k, len(doc)))[1]
            rewards.append(extract_reward(doc, top))
            losses.append(loss)
            # Accumulate, then step once per batch
            total = merge_gradients(total, grads)
            pending += 1
            if pending == self.cfg.batch_size:
                self._step(total)
                total, pending = None, 0
        # Partial final batch
        if pending:
            self._step(total)
        return float(np.mean(losses)), float(np.mean(rewards)), (float(np.mean(sampled)) if sampled else None)

    def fit(self, docs: Sequence[EncodedDocument], candidate_sets: Mapping[str, CandidateSet]) -> TrainStats:
        missing = [d.sku_id for d in docs if d.sku_id not in candidate_sets]
        if missing:
            raise TrainingError(f"{len(missing)} documents have no candidate set, e.g. {missing[0]}")
        if not docs:
            raise TrainingError("no training documents")
        stats = TrainStats()
        for epoch in range(1, self.cfg.epochs + 1):
            started = time.time()
            mean_loss, mean_reward, mean_sampled = self.run_epoch(epoch, docs, candidate_sets)
            val = self.validate()
            stats.mean_loss.append(mean_loss)
            stats.mean_reward.append(mean_reward)
            stats.mean_sampled_reward.append(mean_sampled)
            stats.val_precision_at_3.append(val)
            stats.epoch_seconds.append(time.time() - started)
            val_text = f", val p@3 {val:.4f}" if val is not None else ""
            logger.info(f"Trainer: Epoch {epoch}/{self.cfg.epochs} loss {mean_loss:.4f}, "
                        f"reward {mean_reward:.4f}{val_text} ({stats.epoch_seconds[-1]:.1f}s)")
            if self.out_dir:
                save_checkpoint(self.params, os.path.join(self.out_dir, f"checkpoint_epoch_{epoch:03d}.pt"),
                                extra={"epoch": epoch})
                stats.to_frame().to_csv(os.path.join(self.out_dir, "training_log.csv"), index=False)
        if self.out_dir:
            save_checkpoint(self.params, os.path.join(self.out_dir, "model.pt"), extra={"epoch": self.cfg.epochs})
            logger.info(f"Trainer: Final model written to {os.path.join(self.out_dir, 'model.pt')}")
        return stats


def train(corpus: Sequence[EncodedDocument], candidate_sets: Mapping[str, CandidateSet], cfg: TrainConfig,
          net_cfg: NetworkConfig, vocab_size: int, vocab_hash: str = "", out_dir: Optional[str] = None,
          validation: Optional[Sequence[EncodedDocument]] = None, progress: bool = False) -> Tuple[ModelParams, TrainStats]:
    torch.manual_seed(cfg.seed)
    params = ModelParams(net_cfg, vocab_size, vocab_hash, seed=cfg.seed)
    trainer = Trainer(params, cfg, out_dir=out_dir, validation=validation, progress=progress)
    stats = trainer.fit(corpus, candidate_sets)
    return params, stats
