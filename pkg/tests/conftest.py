import os
import tempfile

# Keep test runs out of the working tree's log directory
os.environ.setdefault("SKURANK_LOG_DIR", tempfile.mkdtemp(prefix="skurank-logs-"))

import pytest

from corpus import Document, ReferenceSummary, generate_synthetic_corpus, to_document
from neural import ModelParams, NetworkConfig
from textprep import Vocabulary, encode_document

TOY_TOKENS = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]


def _split(text):
    return tuple(text.split())


@pytest.fixture
def make_document():
    """Builds a corpus.Document from whitespace-separated sentences."""
    def factory(sentences, title, queries=(), labels=None, sku_id="sku-1"):
        reference = (_split(title),) + tuple(_split(q) for q in queries)
        return Document(
            sku_id=sku_id,
            sentences=tuple(_split(s) for s in sentences),
            reference=ReferenceSummary(sentences=reference),
            relevance_labels=tuple(labels) if labels is not None else None,
            title=_split(title),
        )
    return factory


@pytest.fixture
def toy_vocab():
    return Vocabulary(TOY_TOKENS, max_size=len(TOY_TOKENS) + 2)


@pytest.fixture
def make_encoded(make_document, toy_vocab):
    def factory(sentences, title, queries=(), labels=None, sku_id="sku-1", vocab=None, max_sentence_len=6):
        doc = make_document(sentences, title, queries, labels, sku_id)
        return encode_document(doc, vocab or toy_vocab, max_sentence_len, max_doc_sentences=30)
    return factory


@pytest.fixture
def toy_config():
    return NetworkConfig(embed_dim=4, filters_per_width=3, kernel_widths=(2, 4), doc_hidden=5,
                         ext_hidden=5, max_sentence_len=6)


@pytest.fixture
def toy_params(toy_config, toy_vocab):
    return ModelParams(toy_config, len(toy_vocab), toy_vocab.fingerprint(), seed=3)


@pytest.fixture
def toy_document(make_encoded):
    # Four sentences of six tokens each
    return make_encoded(
        ["a b c d e f", "b c d e f g", "c d e f g h", "d e f g h i"],
        title="a c e",
        labels=[True, False, True, False],
        sku_id="toy",
    )


@pytest.fixture(scope="session")
def synthetic_skus():
    return generate_synthetic_corpus(seed=7, num_docs=40)


@pytest.fixture(scope="session")
def synthetic_docs(synthetic_skus):
    return [to_document(raw, "title_only") for raw in synthetic_skus]
