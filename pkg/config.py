import dataclasses
import os
from dataclasses import dataclass
from typing import Optional

from dotenv import dotenv_values

from errors import ConfigError

# Text preprocessing
MAX_SENTENCE_LEN = 50     # tokens kept per sentence (truncate / pad to this)
MAX_DOC_SENTENCES = 30    # sentences kept per SKU, first ones win
VOCAB_MAX_SIZE = 30000    # includes the two reserved ids
VOCAB_MIN_FREQ = 2        # tokens seen fewer times map to <unk>

# Reference summaries
REFERENCE_TITLE_ONLY = "title_only"
REFERENCE_TITLE_PLUS_QUERIES = "title_plus_queries"
REFERENCE_MODE = REFERENCE_TITLE_ONLY  # or REFERENCE_TITLE_PLUS_QUERIES
QUERY_LIMIT = 5           # queries appended to the title in title_plus_queries mode
MIN_QUERY_CLICKS = 1      # engagement threshold a SKU needs for title_plus_queries mode

# Candidate extracts
ORACLE_P = 8              # sentences shortlisted by their own ROUGE
ORACLE_M = 3              # largest extract size
ORACLE_K = 10             # candidates kept per document

# Ranking
TOP_K = 3                 # sentences in the final summary

# tf-idf baselines
BASELINE_MODE = "weighted"  # unweighted | weighted | filtered
TITLE_WEIGHT = 2.0
SWEEP_WEIGHTS = (1.0, 1.5, 2.0, 2.5, 3.0)

# Network
EMBED_DIM = 50
FILTERS_PER_WIDTH = 50
KERNEL_WIDTHS = (2, 4)
DOC_HIDDEN = 128
EXT_HIDDEN = 128
HARD_FEEDBACK = False     # feed back thresholded labels instead of probabilities

# Training
EPOCHS = 30
WARMSTART_EPOCHS = 2      # cross-entropy epochs on oracle labels before REINFORCE
BATCH_SIZE = 8            # documents whose gradients are summed per optimizer step
LEARNING_RATE = 1e-3
OPTIMIZER = "adaptive_moments"  # or sgd_momentum
GRAD_CLIP = 5.0
REWARD_BASELINE = False   # subtract the candidate set's mean reward from r
SEED = 13

# Synthetic corpus
SYNTH_NUM_DOCS = 2200
SYNTH_SENTENCES_PER_DOC = 10
SYNTH_PLANTED_PER_DOC = 3
SYNTH_BULLETS_PER_DOC = 4
SYNTH_TOPIC_VOCAB = 300       # words titles, queries and planted sentences draw from
SYNTH_FILLER_VOCAB = 40       # common words shared by every sentence kind
SYNTH_DISTRACTOR_VOCAB = 5000 # words only distractor sentences use
SYNTH_QUERIES_PER_DOC = 4

# Logging
LOG_DIR = "logs"


@dataclass(frozen=True)
class Settings:
    max_sentence_len: int = MAX_SENTENCE_LEN
    max_doc_sentences: int = MAX_DOC_SENTENCES
    vocab_max_size: int = VOCAB_MAX_SIZE
    vocab_min_freq: int = VOCAB_MIN_FREQ
    reference_mode: str = REFERENCE_MODE
    query_limit: int = QUERY_LIMIT
    min_query_clicks: int = MIN_QUERY_CLICKS
    oracle_p: int = ORACLE_P
    oracle_m: int = ORACLE_M
    oracle_k: int = ORACLE_K
    top_k: int = TOP_K
    baseline_mode: str = BASELINE_MODE
    title_weight: float = TITLE_WEIGHT
    sweep_weights: tuple = SWEEP_WEIGHTS
    embed_dim: int = EMBED_DIM
    filters_per_width: int = FILTERS_PER_WIDTH
    kernel_widths: tuple = KERNEL_WIDTHS
    doc_hidden: int = DOC_HIDDEN
    ext_hidden: int = EXT_HIDDEN
    hard_feedback: bool = HARD_FEEDBACK
    epochs: int = EPOCHS
    warmstart_epochs: int = WARMSTART_EPOCHS
    batch_size: int = BATCH_SIZE
    learning_rate: float = LEARNING_RATE
    optimizer: str = OPTIMIZER
    grad_clip: float = GRAD_CLIP
    reward_baseline: bool = REWARD_BASELINE
    seed: int = SEED
    synth_num_docs: int = SYNTH_NUM_DOCS
    synth_sentences_per_doc: int = SYNTH_SENTENCES_PER_DOC
    synth_planted_per_doc: int = SYNTH_PLANTED_PER_DOC
    synth_bullets_per_doc: int = SYNTH_BULLETS_PER_DOC
    synth_topic_vocab: int = SYNTH_TOPIC_VOCAB
    synth_filler_vocab: int = SYNTH_FILLER_VOCAB
    synth_distractor_vocab: int = SYNTH_DISTRACTOR_VOCAB
    synth_queries_per_doc: int = SYNTH_QUERIES_PER_DOC
    log_dir: str = LOG_DIR


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, raw: str, default):
    text = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            item_type = type(default[0]) if default else str
            return tuple(item_type(part.strip()) for part in text.split(",") if part.strip())
        return text
    except ValueError as e:
        raise ConfigError(f"Config: bad value for {key.upper()}: {e}") from e


def load_settings(path: Optional[str] = None, seed: Optional[int] = None) -> Settings:
    """
    Overlays a flat KEY=VALUE file on the module defaults.
    Keys are the constant names above (case-insensitive).
    """
    settings = Settings()
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f"Config: {path} does not exist")
        try:
            values = dotenv_values(path)
        except OSError as e:
            raise ConfigError(f"Config: cannot read {path}: {e}") from e
        fields = {f.name: f for f in dataclasses.fields(Settings)}
        overrides = {}
        for key, raw in values.items():
            name = key.lower()
            if name not in fields:
                raise ConfigError(f"Config: unknown key {key}")
            if raw is None:
                raise ConfigError(f"Config: key {key} has no value")
            overrides[name] = _coerce(key, raw, getattr(settings, name))
        settings = dataclasses.replace(settings, **overrides)
    if seed is not None:
        settings = dataclasses.replace(settings, seed=seed)
    return settings
