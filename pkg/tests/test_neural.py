import dataclasses

import pytest
import torch

from errors import CheckpointError, ConfigError, GradientError, VocabularyMismatchError
from neural import (
    CHECKPOINT_VERSION,
    DTYPE,
    ModelParams,
    NetworkConfig,
    ScoredDocument,
    _lstm_step,
    backward,
    encode_document,
    encode_sentence,
    encode_sentences,
    extract_scores,
    feature_map_length,
    load_checkpoint,
    save_checkpoint,
    score_document,
)
from oracle import CandidateExtract
from textprep import PAD_ID, EncodedDocument
from train import rl_loss, xe_loss

EPS = 1e-4


def _reordered(doc: EncodedDocument, order) -> EncodedDocument:
    return dataclasses.replace(
        doc,
        sentences=tuple(doc.sentences[i] for i in order),
        sentence_tokens=tuple(doc.sentence_tokens[i] for i in order),
    )


def _numeric_gradient(loss_fn, tensor):
    grad = torch.zeros_like(tensor)
    flat = tensor.data.view(-1)
    out = grad.view(-1)
    for idx in range(flat.numel()):
        original = flat[idx].item()
        flat[idx] = original + EPS
        plus = loss_fn()
        flat[idx] = original - EPS
        minus = loss_fn()
        flat[idx] = original
        out[idx] = (plus - minus) / (2 * EPS)
    return grad


def _check_gradients(doc, params, loss_of_scores):
    scored = score_document(doc, params)
    _, grad_logits = loss_of_scores(scored)
    analytic = backward(grad_logits, scored, params)

    def loss_fn():
        with torch.no_grad():
            return loss_of_scores(score_document(doc, params))[0]

    for name, tensor in params.named_parameters():
        numeric = _numeric_gradient(loss_fn, tensor)
        diff = (analytic[name] - numeric).norm().item()
        scale = max(analytic[name].norm().item() + numeric.norm().item(), 1e-12)
        assert diff / scale <= 1e-4, f"{name}: relative error {diff / scale:.2e}"


def test_feature_map_lengths():
    assert feature_map_length(20, 2) == 19
    assert feature_map_length(20, 4) == 17
    assert feature_map_length(1, 4) == 1


def test_default_sentence_dim():
    assert NetworkConfig().sentence_dim == 100


def test_config_rejects_wide_kernels():
    with pytest.raises(ConfigError):
        NetworkConfig(kernel_widths=(2, 8), max_sentence_len=6)
    with pytest.raises(ConfigError):
        NetworkConfig(embed_dim=0)


def test_parameter_shapes(toy_params, toy_config, toy_vocab):
    assert toy_params.embeddings.shape == (len(toy_vocab), 4)
    assert toy_params.conv_weight_2.shape == (3, 8)
    assert toy_params.conv_weight_4.shape == (3, 16)
    assert toy_params.doc_weight.shape == (20, toy_config.sentence_dim + 5)
    assert toy_params.ext_weight.shape == (20, toy_config.sentence_dim + 5 + 5)
    assert toy_params.init_weight is None
    assert toy_params.out_weight.shape == (2, 5)
    assert torch.all(toy_params.embeddings[PAD_ID] == 0)


def test_sentence_embeddings(toy_document, toy_params):
    batch = encode_sentences(toy_document.sentences, toy_params)
    assert batch.shape == (4, 6)
    single = encode_sentence(toy_document.sentences[2], toy_params)
    assert torch.equal(single, batch[2])


def test_short_sentence_pads_up_to_kernel_width(make_encoded, toy_params):
    doc = make_encoded(["a", "b c"], title="a")
    embeddings = encode_sentences(doc.sentences, toy_params)
    assert torch.isfinite(embeddings).all()


def test_single_sentence_document_is_one_step(toy_document, toy_params):
    embeddings = encode_sentences(toy_document.sentences[:1], toy_params)
    encoding = encode_document(embeddings, toy_params)
    zeros = torch.zeros(5, dtype=DTYPE)
    h, _ = _lstm_step(embeddings[0], zeros, zeros, toy_params.doc_weight, toy_params.doc_bias)
    assert torch.allclose(encoding.representation, h)


def test_zero_parameters_give_zero_state(toy_document, toy_params):
    with torch.no_grad():
        for tensor in toy_params.parameters():
            tensor.zero_()
    encoding = encode_document(encode_sentences(toy_document.sentences, toy_params), toy_params)
    assert torch.all(encoding.representation == 0)
    assert torch.all(encoding.states == 0)


def test_document_encoding_depends_on_order(toy_document, toy_params):
    forward = encode_document(encode_sentences(toy_document.sentences, toy_params), toy_params)
    shuffled = _reordered(toy_document, [2, 0, 3, 1])
    other = encode_document(encode_sentences(shuffled.sentences, toy_params), toy_params)
    assert not torch.allclose(forward.representation, other.representation)


def test_scores_depend_on_order(toy_document, toy_params):
    forward = score_document(toy_document, toy_params).scores
    reverse = score_document(_reordered(toy_document, [3, 2, 1, 0]), toy_params).scores
    assert not torch.allclose(torch.tensor(forward), torch.tensor(list(reversed(reverse))))


def test_probability_rows_sum_to_one(toy_document, toy_config, toy_vocab):
    for seed in range(100):
        params = ModelParams(toy_config, len(toy_vocab), seed=seed)
        with torch.no_grad():
            probs = score_document(toy_document, params).probabilities
        assert probs.shape == (4, 2)
        assert torch.all((probs.sum(dim=1) - 1).abs() <= 1e-9)
        assert torch.all((probs > 0) & (probs < 1))


def test_zero_output_projection_scores_one_half(toy_document, toy_params):
    with torch.no_grad():
        toy_params.out_weight.zero_()
        toy_params.out_bias.zero_()
    assert score_document(toy_document, toy_params).scores == [0.5] * 4


def test_forward_is_deterministic(toy_document, toy_params):
    first = score_document(toy_document, toy_params).logits
    second = score_document(toy_document, toy_params).logits
    assert torch.equal(first, second)


def test_hard_feedback_scores_are_probabilities(toy_document, toy_config, toy_vocab):
    cfg = dataclasses.replace(toy_config, hard_feedback=True)
    params = ModelParams(cfg, len(toy_vocab), seed=1)
    probs = score_document(toy_document, params).probabilities
    assert torch.allclose(probs.sum(dim=1), torch.ones(4, dtype=DTYPE))


def test_projected_extractor_state(toy_document, toy_config, toy_vocab):
    cfg = dataclasses.replace(toy_config, ext_hidden=7)
    params = ModelParams(cfg, len(toy_vocab), seed=2)
    assert params.init_weight.shape == (7, 5)
    assert len(score_document(toy_document, params)) == 4


def test_zero_upstream_gradient(toy_document, toy_params):
    scored = score_document(toy_document, toy_params)
    grads = backward(torch.zeros(4, 2, dtype=DTYPE), scored, toy_params)
    assert list(grads) == [name for name, _ in toy_params.named_parameters()]
    assert all(torch.all(g == 0) for g in grads.values())


def test_non_finite_gradient_names_parameter(toy_document, toy_params):
    scored = score_document(toy_document, toy_params)
    with pytest.raises(GradientError) as info:
        backward(torch.full((4, 2), float("nan"), dtype=DTYPE), scored, toy_params)
    assert info.value.parameter == "embeddings"


def test_padding_row_gets_no_gradient(make_encoded, toy_params):
    doc = make_encoded(["a b", "c d e", "f"], title="a")
    scored = score_document(doc, toy_params)
    _, grad_logits = xe_loss(scored, [1, 0, 1])
    grads = backward(grad_logits, scored, toy_params)
    assert torch.all(grads["embeddings"][PAD_ID] == 0)
    assert grads["embeddings"].abs().sum() > 0


def test_cross_entropy_gradients_match_finite_differences(toy_document, toy_params):
    _check_gradients(toy_document, toy_params, lambda scored: xe_loss(scored, [1, 0, 1, 0]))


def test_reinforce_gradients_match_finite_differences(toy_document, toy_params):
    extract = CandidateExtract(sentence_indices=(0, 2), reward=0.4)
    _check_gradients(toy_document, toy_params, lambda scored: rl_loss(scored, extract))


def test_logit_gradient_of_reinforce_loss():
    logits = torch.tensor([[0.3, -0.2], [-1.1, 0.4], [0.0, 0.9]], dtype=DTYPE)
    extract = CandidateExtract(sentence_indices=(1,), reward=0.7)
    _, analytic = rl_loss(ScoredDocument(logits=logits), extract)
    numeric = _numeric_gradient(lambda: rl_loss(ScoredDocument(logits=logits), extract)[0], logits)
    assert torch.allclose(analytic, numeric, rtol=1e-4, atol=1e-9)


def test_checkpoint_round_trip(tmp_path, toy_params, toy_document):
    path = str(tmp_path / "model.pt")
    save_checkpoint(toy_params, path, extra={"epoch": 1})
    loaded = load_checkpoint(path, toy_params.vocab_hash)
    for (name, original), (_, restored) in zip(toy_params.named_parameters(), loaded.named_parameters()):
        assert torch.equal(original, restored), name
    assert score_document(toy_document, loaded).scores == score_document(toy_document, toy_params).scores


def test_checkpoint_rejects_other_vocabulary(tmp_path, toy_params):
    path = str(tmp_path / "model.pt")
    save_checkpoint(toy_params, path)
    with pytest.raises(VocabularyMismatchError):
        load_checkpoint(path, "0" * 64)


def test_unreadable_checkpoints_raise_checkpoint_error(tmp_path, toy_params):
    garbage = tmp_path / "garbage.pt"
    garbage.write_text("not a torch file\n", encoding="utf-8")
    partial = str(tmp_path / "partial.pt")
    torch.save({"format_version": CHECKPOINT_VERSION, "vocab_hash": toy_params.vocab_hash}, partial)
    listed = str(tmp_path / "listed.pt")
    torch.save([1, 2, 3], listed)
    for path in (str(garbage), partial, listed, str(tmp_path / "absent.pt")):
        with pytest.raises(CheckpointError):
            load_checkpoint(path, toy_params.vocab_hash)


def test_extract_scores_length_matches_document(toy_document, toy_params):
    embeddings = encode_sentences(toy_document.sentences, toy_params)
    scored = extract_scores(embeddings, encode_document(embeddings, toy_params), toy_params)
    assert len(scored) == len(toy_document)
